"""Per-pod CPI deviation detection for flagged applications.

For each pod of a flagged application, a boosted-tree model predicts the CPI
the pod should exhibit under current co-location conditions.  The deviation
between recent predictions and the rolling mean of the measured CPI is
compared against an adaptive threshold built from the CPI's rolling spread
plus a load-dependent floor; the ratio of the two is the contention severity
index (CSI) that drives mitigation, and an application's verdict is the worst
(max-CSI) verdict among its pods.

Models are trained lazily, once per flagging episode, from the application's
own metric history; with less than min_history rows the decision is deferred
rather than guessed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import NodeMetrics, PodMetrics, PodSpec, SystemMetrics
from .gbdt import FEATURE_COUNT, Ensemble, TrainConfig, train_ensemble
from .telemetry import TimeSeries, rolling_mean, rolling_std

POD_RATIO_CLAMP = 2.0  # request-normalized pod ratios saturate here


@dataclass(frozen=True)
class LoadFactorWeights:
    cpu: float = 0.5
    mem: float = 0.3
    miss: float = 0.2

    def __post_init__(self) -> None:
        for name in ("cpu", "mem", "miss"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} weight must be non-negative")
        total = self.cpu + self.mem + self.miss
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"load factor weights sum to {total}, expected 1")


@dataclass(frozen=True)
class ThresholdParams:
    k1: float = 3.0  # scales the rolling std of measured CPI
    k2: float = 0.1  # scales the load factor floor

    def __post_init__(self) -> None:
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("k1 and k2 must be non-negative")
        if self.k1 == 0 and self.k2 == 0:
            raise ValueError("k1 and k2 cannot both be zero")


@dataclass(frozen=True)
class PredictorConfig:
    window: int = 60
    params: ThresholdParams = field(default_factory=ThresholdParams)
    load_weights: LoadFactorWeights = field(default_factory=LoadFactorWeights)
    delta_mode: str = "signed"       # "signed": |mean of differences|; "absolute": mean of |differences|
    min_history_windows: int = 2     # training deferred below min_history_windows * window rows
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.delta_mode not in ("signed", "absolute"):
            raise ValueError(f"delta_mode must be 'signed' or 'absolute', got {self.delta_mode!r}")
        if self.min_history_windows < 1:
            raise ValueError("min_history_windows must be >= 1")

    @property
    def min_history_rows(self) -> int:
        return self.min_history_windows * self.window


@dataclass(frozen=True)
class DetectionVerdict:
    app_id: str
    delta_cpi: float
    threshold: float
    detected: bool
    csi: float | None  # None unless detected; math.inf when threshold is 0 and delta > 0


def build_feature_vector(
    spec: PodSpec, pod: PodMetrics, node: NodeMetrics, system: SystemMetrics
) -> np.ndarray:
    """Assemble the frozen 9-slot model input for one pod."""
    cpu_ratio = min(POD_RATIO_CLAMP, pod.cpu_util / spec.cpu_request)
    mem_ratio = min(POD_RATIO_CLAMP, pod.mem_util / spec.mem_request)
    return np.array(
        [
            cpu_ratio,
            mem_ratio,
            node.cpu_total,
            node.cpu_offline,
            node.cpu_shared,
            node.cpu_online,
            pod.l3_miss_rate,
            system.cpu_total_sys,
            system.mem_total_sys,
        ],
        dtype=np.float64,
    )


def load_factor(
    spec: PodSpec,
    pod: PodMetrics,
    n_max: float,
    weights: LoadFactorWeights | None = None,
) -> float:
    """Weighted saturation of a pod against its requests; always in [0, 1]."""
    w = weights or LoadFactorWeights()
    if spec.cpu_request <= 0 or spec.mem_request <= 0:
        raise ValueError("pod requests must be positive")
    if n_max <= 0:
        raise ValueError("n_max must be positive")
    cpu_ratio = min(1.0, pod.cpu_util / spec.cpu_request)
    mem_ratio = min(1.0, pod.mem_util / spec.mem_request)
    miss_ratio = min(1.0, pod.l3_miss_rate / n_max)
    return w.cpu * cpu_ratio + w.mem * mem_ratio + w.miss * miss_ratio


def cpi_threshold(
    actual: TimeSeries, window: int, params: ThresholdParams, load: float
) -> float:
    """Adaptive detection threshold: k1 * rolling std + k2 * load factor.

    The load factor is already normalized to [0, 1] (its maximum is 1 by
    construction), so k2 scales it directly.
    """
    if not 0.0 <= load <= 1.0 + 1e-9:
        raise ValueError(f"load factor {load} outside [0, 1]")
    return params.k1 * rolling_std(actual, window) + params.k2 * load


def delta_cpi(
    predictions: list[float], actual: TimeSeries, window: int, mode: str = "signed"
) -> float:
    """Deviation between recent predictions and the smoothed measured CPI.

    Each prediction i is compared against the rolling mean of the measured
    series ending at the same interval; predictions are aligned to the most
    recent len(predictions) samples of ``actual``.  'signed' (default)
    averages the differences first and takes the absolute value, so
    alternating over/under-shoot cancels; 'absolute' averages magnitudes.
    """
    if not predictions:
        raise ValueError("no predictions")
    if len(actual) < len(predictions):
        raise ValueError(
            f"actual series has {len(actual)} samples, fewer than "
            f"{len(predictions)} predictions"
        )
    values = [s.value for s in actual.samples]
    diffs = []
    for j, pred in enumerate(predictions):
        end = len(values) - len(predictions) + j + 1  # series position of prediction j
        tail = values[max(0, end - window):end]
        rm = sum(tail) / len(tail)
        diffs.append(pred - rm)
    if mode == "signed":
        return abs(sum(diffs) / len(diffs))
    if mode == "absolute":
        return sum(abs(d) for d in diffs) / len(diffs)
    raise ValueError(f"mode must be 'signed' or 'absolute', got {mode!r}")


def classify(delta: float, threshold: float, app_id: str = "") -> DetectionVerdict:
    """Strict comparison: detected iff delta > threshold; CSI = delta/threshold."""
    if delta < 0 or threshold < 0:
        raise ValueError("delta and threshold must be non-negative")
    detected = delta > threshold
    if not detected:
        return DetectionVerdict(app_id, delta, threshold, False, None)
    csi = delta / threshold if threshold > 0 else math.inf
    return DetectionVerdict(app_id, delta, threshold, True, csi)


def verdict_rank(v: DetectionVerdict) -> float:
    """Severity ordering key: CSI when detected, sub-1 ratio otherwise."""
    if v.detected:
        return v.csi if v.csi is not None else math.inf
    if v.threshold > 0:
        return v.delta_cpi / v.threshold
    return 0.0


def worst_verdict(verdicts: list[DetectionVerdict]) -> DetectionVerdict:
    """Application verdict: the pod verdict with the highest severity rank."""
    if not verdicts:
        raise ValueError("no verdicts to aggregate")
    return max(verdicts, key=verdict_rank)


@dataclass
class ModelCache:
    """One model per application per flagging episode.

    get_or_train returns None (deferral) while the application's history is
    shorter than the configured minimum; invalidate() ends an episode so the
    next flag retrains from fresh history.
    """

    cfg: PredictorConfig
    models: dict[str, Ensemble] = field(default_factory=dict)

    def get_or_train(
        self, app_id: str, features: np.ndarray, targets: np.ndarray
    ) -> Ensemble | None:
        model = self.models.get(app_id)
        if model is not None:
            return model
        if features.shape[0] < self.cfg.min_history_rows:
            return None
        if features.shape[1] != FEATURE_COUNT:
            raise ValueError(f"expected {FEATURE_COUNT} features, got {features.shape[1]}")
        model = train_ensemble(features, targets, self.cfg.train)
        self.models[app_id] = model
        return model

    def invalidate(self, app_id: str) -> None:
        self.models.pop(app_id, None)
