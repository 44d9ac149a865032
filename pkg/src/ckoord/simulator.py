"""Synthetic co-located cluster with a known interference oracle.

Discrete fixed-length intervals; per interval the engine generates demand,
injects any active interference, allocates node CPU across QoS classes,
derives the ground-truth CPI and latency samples from calibration constants
(all of which live in the scenario config), then hands observations to the
control loop and enforces whatever it planned.

Determinism: one root seed; each (stream kind, pod) pair derives its own
generator, consumed in pod-id order once per interval the pod is present.
Latency-critical pods never change cadence under mitigation (only BE pods
are evicted), so mitigated and baseline runs of the same seed stay sample-
aligned where it matters.  Same config + seed reproduces reports and traces
byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cluster import (
    ClusterState,
    NodeMetrics,
    NodeState,
    PodEntry,
    PodMetrics,
    PodSpec,
    QosClass,
    SystemMetrics,
)
from .detector import DetectorConfig, UtilizationWeights
from .gbdt import TrainConfig
from .loop import ControlLoop, NodeObservation, PlannedAction, PodObservation
from .mitigator import Evict, MitigationConfig, NoOp, Suppress
from .mitigator import apply as apply_action
from .predictor import LoadFactorWeights, PredictorConfig, ThresholdParams
from .scenario import node_ids as scenario_node_ids
from .scenario import validate_config
from .trace import TraceRow

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AppProfile:
    app_id: str
    qos: QosClass
    replicas: int
    cpu_request: float
    mem_request: float
    base_rps: float
    diurnal_amplitude: float
    demand_noise_std: float
    cpu_per_request: float
    mem_footprint: float
    latency_base_ms: float
    cpi_base: float
    base_miss_rate: float
    phase_offset: float


@dataclass(frozen=True)
class WorkloadParams:
    period_intervals: int
    batches_per_interval: int
    latency_jitter_sigma: float
    rho_max: float
    latency_cpi_exponent: float
    mem_demand_coupling: float


@dataclass(frozen=True)
class KindParams:
    cpi_boost: float
    cpu_fraction: float
    miss_gain: float
    mem_fraction: float


@dataclass(frozen=True)
class TruthParams:
    contention_gain: float
    cache_gain: float
    cpi_noise_std: float
    cpi_floor_fraction: float
    miss_load_gain: float
    miss_noise_std: float
    miss_scale: float
    kinds: dict[str, KindParams]


@dataclass(frozen=True)
class InjectionSpec:
    target_node: str
    kind: str
    start_interval: int
    duration: int
    intensity: float

    def active(self, interval: int) -> bool:
        return self.start_interval <= interval < self.start_interval + self.duration


def diurnal_demand(
    profile: AppProfile, interval: int, period: int, rng: np.random.Generator | None
) -> float:
    """Requests/s for one pod of the profile at one interval; never negative."""
    angle = 2.0 * math.pi * (interval / period + profile.phase_offset)
    demand = profile.base_rps * (1.0 + profile.diurnal_amplitude * math.sin(angle))
    if rng is not None and profile.demand_noise_std > 0:
        demand *= 1.0 + profile.demand_noise_std * rng.standard_normal()
    return max(0.0, demand)


def ground_truth_cpi(
    cpi_base: float,
    node_cpu_total: float,
    miss_rate: float,
    interference_boost: float,
    truth: TruthParams,
    rng: np.random.Generator | None,
) -> float:
    """The oracle the prediction models are asked to learn.

    Quadratic node contention plus a normalized cache-miss term are fully
    visible through model features; the injected boost rides on top of them.
    """
    value = cpi_base * (
        1.0
        + truth.contention_gain * node_cpu_total**2
        + truth.cache_gain * (miss_rate / truth.miss_scale)
        + interference_boost
    )
    if rng is not None and truth.cpi_noise_std > 0:
        value *= 1.0 + truth.cpi_noise_std * rng.standard_normal()
    return max(truth.cpi_floor_fraction * cpi_base, value)


def utilization_rho(
    demand_rps: float, cpu_per_request: float, allocated_cpu: float, rho_max: float
) -> float:
    want = demand_rps * cpu_per_request
    if want <= 0:
        return 0.0
    if allocated_cpu <= 0:
        return rho_max
    return min(rho_max, want / allocated_cpu)


def latency_model(
    base_ms: float,
    cpi_act: float,
    cpi_base: float,
    rho: float,
    exponent: float,
    jitter_sigma: float = 0.0,
    batches: int = 1,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One latency sample per request batch.

    Central value: base * (CPI/CPI_base)^exponent / (1 - rho); multiplicative
    lognormal jitter gives the batch-to-batch spread (none without an rng).
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho {rho} outside [0, 1)")
    central = base_ms * (cpi_act / cpi_base) ** exponent / (1.0 - rho)
    if rng is None or jitter_sigma <= 0:
        return np.full(batches, central)
    return central * np.exp(jitter_sigma * rng.standard_normal(batches))


def allocate_cpu(
    pods: list[tuple[str, QosClass, float, float]],
    avail: float,
    be_cap: float | None,
    qos_weights: dict[str, float],
) -> tuple[dict[str, float], dict[str, float]]:
    """Weighted fair shares with water-filling.

    pods: (pod_id, qos, want_cores, request_cores).  Returns (usage, potential)
    in cores; sum(usage) <= avail, BE usage in aggregate <= be_cap when set.
    potential >= usage is the headroom used for queueing delay.
    """
    usage: dict[str, float] = {}
    potential: dict[str, float] = {}
    if not pods:
        return usage, potential
    avail = max(0.0, avail)
    weights = {pid: qos_weights[qos.value] * req for pid, qos, _, req in pods}
    total_w = sum(weights.values())
    share = {pid: avail * weights[pid] / total_w for pid in weights}

    be_ids = [pid for pid, qos, _, _ in pods if qos.best_effort]
    if be_cap is not None and be_ids:
        be_share = sum(share[pid] for pid in be_ids)
        if be_share > be_cap:
            scale = be_cap / be_share if be_share > 0 else 0.0
            freed = 0.0
            for pid in be_ids:
                freed += share[pid] * (1.0 - scale)
                share[pid] *= scale
            other = [pid for pid, qos, _, _ in pods if not qos.best_effort]
            other_w = sum(weights[pid] for pid in other)
            if other_w > 0:
                for pid in other:
                    share[pid] += freed * weights[pid] / other_w

    wants = {pid: want for pid, _, want, _ in pods}
    for pid in wants:
        usage[pid] = min(wants[pid], share[pid])

    def be_headroom() -> float:
        if be_cap is None:
            return math.inf
        return be_cap - sum(usage[pid] for pid in be_ids)

    extra = {pid: 0.0 for pid in wants}
    for _ in range(3):
        leftover = avail - sum(usage.values())
        if leftover <= 1e-12:
            break
        hungry = [
            (pid, qos)
            for pid, qos, _, _ in pods
            if wants[pid] - usage[pid] > 1e-12 and (not qos.best_effort or be_headroom() > 1e-12)
        ]
        if not hungry:
            break
        hungry_w = sum(weights[pid] for pid, _ in hungry)
        headroom = be_headroom()
        for pid, qos in hungry:
            grant = leftover * weights[pid] / hungry_w
            if qos.best_effort:
                grant = min(grant, max(0.0, headroom))
            before = usage[pid]
            usage[pid] = min(wants[pid], usage[pid] + grant)
            granted = usage[pid] - before
            extra[pid] += granted
            if qos.best_effort:
                headroom -= granted

    idle = max(0.0, avail - sum(usage.values()))
    for pid, qos, _, _ in pods:
        base = max(usage[pid], share[pid] + extra[pid])
        bonus = idle * weights[pid] / total_w
        if qos.best_effort and be_cap is not None:
            base = min(max(usage[pid], base), max(usage[pid], be_cap))
            bonus = 0.0
        potential[pid] = base + bonus
    return usage, potential


def nearest_rank_percentile(samples: list[float], k: float) -> float:
    """Nearest-rank percentile: the ceil(k/100 * N)-th smallest sample."""
    if not samples:
        raise ValueError("no samples")
    if not 0 < k <= 100:
        raise ValueError(f"percentile {k} outside (0, 100]")
    ordered = sorted(samples)
    rank = math.ceil(k / 100.0 * len(ordered))
    return ordered[max(0, rank - 1)]


def _profiles(cfg: dict) -> list[AppProfile]:
    out = []
    for app in cfg["apps"]:
        out.append(
            AppProfile(
                app_id=app["app_id"],
                qos=QosClass(app["qos"]),
                replicas=int(app["replicas"]),
                cpu_request=float(app["cpu_request"]),
                mem_request=float(app["mem_request"]),
                base_rps=float(app["base_rps"]),
                diurnal_amplitude=float(app["diurnal_amplitude"]),
                demand_noise_std=float(app["demand_noise_std"]),
                cpu_per_request=float(app["cpu_per_request"]),
                mem_footprint=float(app["mem_footprint"]),
                latency_base_ms=float(app["latency_base_ms"]),
                cpi_base=float(app["cpi_base"]),
                base_miss_rate=float(app["base_miss_rate"]),
                phase_offset=float(app["phase_offset"]),
            )
        )
    return out


def _workload(cfg: dict) -> WorkloadParams:
    w = cfg["workload"]
    return WorkloadParams(
        period_intervals=int(w["period_intervals"]),
        batches_per_interval=int(w["batches_per_interval"]),
        latency_jitter_sigma=float(w["latency_jitter_sigma"]),
        rho_max=float(w["rho_max"]),
        latency_cpi_exponent=float(w["latency_cpi_exponent"]),
        mem_demand_coupling=float(w["mem_demand_coupling"]),
    )


def _truth(cfg: dict) -> TruthParams:
    t = cfg["ground_truth"]
    kinds = {
        kind: KindParams(
            cpi_boost=float(spec["cpi_boost"]),
            cpu_fraction=float(spec["cpu_fraction"]),
            miss_gain=float(spec["miss_gain"]),
            mem_fraction=float(spec["mem_fraction"]),
        )
        for kind, spec in t["interference"].items()
    }
    return TruthParams(
        contention_gain=float(t["contention_gain"]),
        cache_gain=float(t["cache_gain"]),
        cpi_noise_std=float(t["cpi_noise_std"]),
        cpi_floor_fraction=float(t["cpi_floor_fraction"]),
        miss_load_gain=float(t["miss_load_gain"]),
        miss_noise_std=float(t["miss_noise_std"]),
        miss_scale=float(t["miss_scale"]),
        kinds=kinds,
    )


def _injections(cfg: dict) -> list[InjectionSpec]:
    return [
        InjectionSpec(
            target_node=inj["target_node"],
            kind=inj["kind"],
            start_interval=int(inj["start_interval"]),
            duration=int(inj["duration"]),
            intensity=float(inj["intensity"]),
        )
        for inj in cfg["interference"]
    ]


def control_configs(cfg: dict) -> tuple[DetectorConfig, PredictorConfig, MitigationConfig]:
    d = cfg["detector"]
    weight_map = {
        name: UtilizationWeights(*(float(x) for x in triple))
        for name, triple in d["weights"].items()
    }
    detector_cfg = DetectorConfig(
        k=float(d["k"]),
        deviation=d["deviation"],
        hysteresis_intervals=int(d["hysteresis_intervals"]),
        default_weights=weight_map["default"],
        node_weights={name: w for name, w in weight_map.items() if name != "default"},
    )
    p = cfg["predictor"]
    lw_cpu, lw_mem, lw_miss = (float(x) for x in p["load_weights"])
    t = p["train"]
    predictor_cfg = PredictorConfig(
        window=int(p["window"]),
        params=ThresholdParams(k1=float(p["k1"]), k2=float(p["k2"])),
        load_weights=LoadFactorWeights(lw_cpu, lw_mem, lw_miss),
        delta_mode=p["delta_mode"],
        min_history_windows=int(p["min_history_windows"]),
        train=TrainConfig(
            learning_rate=float(t["learning_rate"]),
            lam=float(t["lam"]),
            tau=float(t["tau"]),
            max_depth=int(t["max_depth"]),
            num_rounds=int(t["num_rounds"]),
            min_samples_leaf=int(t["min_samples_leaf"]),
            base_score=float(t["base_score"]),
        ),
    )
    m = cfg["mitigator"]
    mitigator_cfg = MitigationConfig(
        severity_boundary=float(m["severity_boundary"]),
        cpu_reserve_fraction=float(m["cpu_reserve_fraction"]),
        eviction_ratio=float(m["mu"]),
        cooldown_intervals=int(m["cooldown_intervals"]),
    )
    return detector_cfg, predictor_cfg, mitigator_cfg


@dataclass
class RunResult:
    report: dict
    trace_rows: list[TraceRow]
    action_log: list[str] = field(default_factory=list)


class Simulator:
    def __init__(self, cfg: dict, seed: int) -> None:
        validate_config(cfg)
        self.cfg = cfg
        self.seed = int(seed)
        self.profiles = {p.app_id: p for p in _profiles(cfg)}
        self.workload = _workload(cfg)
        self.truth = _truth(cfg)
        self.injections = _injections(cfg)
        self.horizon = int(cfg["horizon"])
        self.period_s = int(cfg["sampling_period_s"])
        self.qos_weights = {k: float(v) for k, v in cfg["qos_weights"].items()}
        self.controllers_enabled = bool(cfg["controllers"]["enabled"])
        self.reschedule_delay = int(cfg["controllers"]["reschedule_delay_intervals"])
        detector_cfg, predictor_cfg, mitigator_cfg = control_configs(cfg)
        self.loop = ControlLoop(detector_cfg, predictor_cfg, mitigator_cfg, self.period_s)
        self.mitigator_cfg = mitigator_cfg

        self.state = self._initial_state()
        self._streams: dict[tuple[str, str], np.random.Generator] = {}
        self._pending: deque = deque()  # (due_interval, PodSpec)
        self._last_rps: dict[str, float] = {}

    # -- construction ----------------------------------------------------

    def _initial_state(self) -> ClusterState:
        topo = self.cfg["topology"]
        state = ClusterState(interval=-1)
        names = scenario_node_ids(self.cfg)
        for name in names:
            state.nodes[name] = NodeState(
                node_id=name,
                cpu_capacity=float(topo["cpu_capacity"]),
                mem_capacity=float(topo["mem_capacity"]),
            )
        for profile in self.profiles.values():
            for i in range(profile.replicas):
                node_id = names[i % len(names)]
                spec = PodSpec(
                    pod_id=f"{profile.app_id}-{i}",
                    app_id=profile.app_id,
                    node_id=node_id,
                    qos=profile.qos,
                    cpu_request=profile.cpu_request,
                    mem_request=profile.mem_request,
                )
                state.pods[spec.pod_id] = PodEntry(spec)
                state.nodes[node_id].pod_ids.append(spec.pod_id)
        return state

    def _rng(self, kind: str, entity: str) -> np.random.Generator:
        key = (kind, entity)
        rng = self._streams.get(key)
        if rng is None:
            digest = hashlib.sha256(f"{kind}:{entity}".encode()).digest()
            rng = np.random.default_rng(
                np.random.SeedSequence([self.seed, int.from_bytes(digest[:8], "big")])
            )
            self._streams[key] = rng
        return rng

    # -- per-interval machinery -------------------------------------------

    def _interference_effects(self, interval: int) -> dict[str, dict[str, float]]:
        effects: dict[str, dict[str, float]] = {}
        for inj in self.injections:
            if not inj.active(interval):
                continue
            kind = self.truth.kinds[inj.kind]
            node = effects.setdefault(
                inj.target_node,
                {"cpu": 0.0, "mem_fraction": 0.0, "miss_gain": 0.0, "cpi_boost": 0.0},
            )
            capacity = self.state.nodes[inj.target_node].cpu_capacity
            node["cpu"] += inj.intensity * kind.cpu_fraction * capacity
            node["mem_fraction"] += inj.intensity * kind.mem_fraction
            node["miss_gain"] += inj.intensity * kind.miss_gain
            node["cpi_boost"] += inj.intensity * kind.cpi_boost
        return effects

    def _reschedule_due(self, interval: int) -> int:
        count = 0
        while self._pending and self._pending[0][0] <= interval:
            _, spec = self._pending.popleft()
            target = min(
                self.state.nodes.values(),
                key=lambda n: (n.metrics.cpu_total, n.node_id),
            )
            new_spec = PodSpec(
                pod_id=spec.pod_id,
                app_id=spec.app_id,
                node_id=target.node_id,
                qos=spec.qos,
                cpu_request=spec.cpu_request,
                mem_request=spec.mem_request,
            )
            self.state.pods[new_spec.pod_id] = PodEntry(new_spec)
            target.pod_ids.append(new_spec.pod_id)
            count += 1
        return count

    def step(self, interval: int) -> tuple[list[PodObservation], list[NodeObservation], dict]:
        """Advance one interval; returns observations plus interval stats."""
        state = self.state
        state.interval = interval
        rescheduled = self._reschedule_due(interval)
        effects = self._interference_effects(interval)

        demand: dict[str, float] = {}
        for pod_id in sorted(state.pods):
            entry = state.pods[pod_id]
            profile = self.profiles[entry.spec.app_id]
            rng = self._rng("demand", pod_id) if profile.demand_noise_std > 0 else None
            rps = diurnal_demand(profile, interval, self.workload.period_intervals, rng)
            demand[pod_id] = rps
        self._last_rps = demand

        usage_all: dict[str, float] = {}
        potential_all: dict[str, float] = {}
        hog_cores: dict[str, float] = {}
        for node_id in sorted(state.nodes):
            node = state.nodes[node_id]
            effect = effects.get(node_id)
            hog = effect["cpu"] if effect else 0.0
            hog = min(hog, node.cpu_capacity)
            hog_cores[node_id] = hog
            pods = [
                (
                    pid,
                    state.pods[pid].spec.qos,
                    demand[pid] * self.profiles[state.pods[pid].spec.app_id].cpu_per_request,
                    state.pods[pid].spec.cpu_request,
                )
                for pid in sorted(node.pod_ids)
            ]
            usage, potential = allocate_cpu(
                pods, node.cpu_capacity - hog, node.be_cpu_cap, self.qos_weights
            )
            usage_all.update(usage)
            potential_all.update(potential)

        # metrics pass: pods, nodes, system
        total_capacity = sum(n.cpu_capacity for n in state.nodes.values())
        total_mem_capacity = sum(n.mem_capacity for n in state.nodes.values())
        used_cores_sys = 0.0
        used_mem_sys = 0.0
        miss_values: list[float] = []
        for node_id in sorted(state.nodes):
            node = state.nodes[node_id]
            effect = effects.get(node_id)
            hog = hog_cores[node_id]
            be_used = ls_used = sys_used = mem_used = 0.0
            for pid in node.pod_ids:
                entry = state.pods[pid]
                profile = self.profiles[entry.spec.app_id]
                cores = usage_all[pid]
                entry.metrics.cpu_util = cores
                rel = demand[pid] / profile.base_rps - 1.0 if profile.base_rps > 0 else 0.0
                mem = profile.mem_footprint * (1.0 + self.workload.mem_demand_coupling * rel)
                entry.metrics.mem_util = max(0.2 * profile.mem_footprint, mem)
                mem_used += entry.metrics.mem_util
                if entry.spec.qos.best_effort:
                    be_used += cores
                elif entry.spec.qos is QosClass.SYSTEM:
                    sys_used += cores
                else:
                    ls_used += cores
            hog_mem = (effect["mem_fraction"] if effect else 0.0) * node.mem_capacity
            m = node.metrics
            m.cpu_total = min(1.0, (be_used + ls_used + sys_used + hog) / node.cpu_capacity)
            m.cpu_offline = min(1.0, be_used / node.cpu_capacity)
            m.cpu_online = min(1.0, (ls_used + sys_used) / node.cpu_capacity)
            m.cpu_shared = min(1.0, (be_used + hog) / node.cpu_capacity)
            m.mem_util = min(1.0, (mem_used + hog_mem) / node.mem_capacity)
            used_cores_sys += be_used + ls_used + sys_used + hog
            used_mem_sys += mem_used + hog_mem

            miss_boost = effect["miss_gain"] if effect else 0.0
            for pid in sorted(node.pod_ids):
                entry = state.pods[pid]
                profile = self.profiles[entry.spec.app_id]
                factor = 1.0 + self.truth.miss_load_gain * m.cpu_total + miss_boost
                miss = profile.base_miss_rate * factor
                if self.truth.miss_noise_std > 0:
                    rng = self._rng("miss", pid)
                    miss *= 1.0 + self.truth.miss_noise_std * rng.standard_normal()
                entry.metrics.l3_miss_rate = max(0.0, miss)
                miss_values.append(entry.metrics.l3_miss_rate)

        state.system.cpu_total_sys = min(1.0, used_cores_sys / total_capacity)
        state.system.mem_total_sys = min(1.0, used_mem_sys / total_mem_capacity)
        state.system.l3_miss_rate_sys = (
            sum(miss_values) / len(miss_values) if miss_values else 0.0
        )
        if miss_values:
            state.system.n_max = max(state.system.n_max, max(miss_values))

        pod_obs: list[PodObservation] = []
        for node_id in sorted(state.nodes):
            node = state.nodes[node_id]
            effect = effects.get(node_id)
            boost = effect["cpi_boost"] if effect else 0.0
            for pid in sorted(node.pod_ids):
                entry = state.pods[pid]
                profile = self.profiles[entry.spec.app_id]
                rng = self._rng("cpi", pid) if self.truth.cpi_noise_std > 0 else None
                cpi = ground_truth_cpi(
                    profile.cpi_base,
                    node.metrics.cpu_total,
                    entry.metrics.l3_miss_rate,
                    boost,
                    self.truth,
                    rng,
                )
                entry.metrics.cpi_actual = cpi
                ratio_cpu = min(2.0, entry.metrics.cpu_util / entry.spec.cpu_request)
                ratio_mem = min(2.0, entry.metrics.mem_util / entry.spec.mem_request)
                features = np.array(
                    [
                        ratio_cpu,
                        ratio_mem,
                        node.metrics.cpu_total,
                        node.metrics.cpu_offline,
                        node.metrics.cpu_shared,
                        node.metrics.cpu_online,
                        entry.metrics.l3_miss_rate,
                        state.system.cpu_total_sys,
                        state.system.mem_total_sys,
                    ],
                    dtype=np.float64,
                )
                pod_obs.append(
                    PodObservation(
                        pod_id=pid,
                        app_id=entry.spec.app_id,
                        node_id=node_id,
                        qos=entry.spec.qos,
                        features=features,
                        cpi=cpi,
                        cpu_cores=entry.metrics.cpu_util,
                        cpu_request=entry.spec.cpu_request,
                        mem_request=entry.spec.mem_request,
                    )
                )

        node_obs = [
            NodeObservation(
                node_id=node_id,
                cpu_capacity=state.nodes[node_id].cpu_capacity,
                metrics=state.nodes[node_id].metrics,
            )
            for node_id in sorted(state.nodes)
        ]
        stats = {
            "rescheduled": rescheduled,
            "interference_active": bool(effects),
            "potential": potential_all,
        }
        return pod_obs, node_obs, stats

    def _enforce(self, interval: int, actions: list[PlannedAction]) -> tuple[int, int]:
        evicted = suppressed = 0
        for planned in actions:
            action = planned.action
            if isinstance(action, Suppress):
                apply_action(action, self.state)
                suppressed += 1
            elif isinstance(action, Evict):
                for pod_id in action.pod_ids:
                    if pod_id not in self.state.pods:
                        continue
                    spec = self.state.pods[pod_id].spec
                    apply_action(Evict(planned.node_id, (pod_id,)), self.state)
                    self.loop.forget_pod(pod_id)
                    self._pending.append((interval + self.reschedule_delay, spec))
                    evicted += 1
        return evicted, suppressed

    def _clear_stale_caps(self) -> None:
        flagged = set(self.loop.flagged.entries)
        for node in self.state.nodes.values():
            if node.be_cpu_cap is None:
                continue
            hosted_apps = {self.state.pods[pid].spec.app_id for pid in node.pod_ids}
            if not hosted_apps & flagged:
                node.be_cpu_cap = None

    # -- full run ----------------------------------------------------------

    def run(self) -> RunResult:
        wl = self.workload
        latency: dict[str, dict[str, list[float]]] = {
            app: {"normal": [], "interference": []} for app in self.profiles
        }
        cpi_sum: dict[str, dict[str, list[float]]] = {
            app: {"normal": [], "interference": []} for app in self.profiles
        }
        trace_rows: list[TraceRow] = []
        action_log: list[str] = []
        detections: list[dict] = []
        flag_events: list[dict] = []
        actions_report: list[dict] = []
        interval_records: list[dict] = []
        injection_starts = sorted(inj.start_interval for inj in self.injections)
        verdicts_evaluated = 0
        deferrals = 0
        evictions = 0
        reschedules = 0
        suppressions = 0
        node_cpu_running: dict[str, float] = {n: 0.0 for n in self.state.nodes}
        phase_counts = {"normal": 0, "interference": 0}

        for interval in range(self.horizon):
            pod_obs, node_obs, stats = self.step(interval)
            reschedules += stats["rescheduled"]
            phase = "interference" if stats["interference_active"] else "normal"
            phase_counts[phase] += 1

            for ob in pod_obs:
                profile = self.profiles[ob.app_id]
                if profile.latency_base_ms > 0:
                    rho = utilization_rho(
                        self._last_rps[ob.pod_id],
                        profile.cpu_per_request,
                        stats["potential"][ob.pod_id],
                        wl.rho_max,
                    )
                    samples = latency_model(
                        profile.latency_base_ms,
                        ob.cpi,
                        profile.cpi_base,
                        rho,
                        wl.latency_cpi_exponent,
                        wl.latency_jitter_sigma,
                        wl.batches_per_interval,
                        self._rng("latency", ob.pod_id),
                    )
                    latency[ob.app_id][phase].extend(float(s) for s in samples)
                cpi_sum[ob.app_id][phase].append(ob.cpi)
                node = self.state.nodes[ob.node_id]
                trace_rows.append(
                    TraceRow(
                        interval=interval,
                        node_id=ob.node_id,
                        pod_id=ob.pod_id,
                        app_id=ob.app_id,
                        qos=ob.qos.value,
                        pod_cpu_util=float(ob.features[0]),
                        pod_mem_util=float(ob.features[1]),
                        node_cpu_total=node.metrics.cpu_total,
                        node_cpu_offline=node.metrics.cpu_offline,
                        node_cpu_online=node.metrics.cpu_online,
                        node_cpu_shared=node.metrics.cpu_shared,
                        node_mem_util=node.metrics.mem_util,
                        sys_cpu_total=self.state.system.cpu_total_sys,
                        sys_mem_total=self.state.system.mem_total_sys,
                        l3_miss_rate=float(ob.features[6]),
                        cpi=ob.cpi,
                    )
                )

            outcome = self.loop.observe(interval, pod_obs, node_obs, self.controllers_enabled)
            verdicts_evaluated += len(outcome.verdicts)
            deferrals += len(outcome.deferred_apps)
            for app_id in outcome.newly_flagged:
                flag_events.append({"interval": interval, "app_id": app_id, "event": "flag"})
            for app_id in outcome.newly_unflagged:
                flag_events.append({"interval": interval, "app_id": app_id, "event": "unflag"})
            for verdict in outcome.verdicts:
                if verdict.detected:
                    csi = "inf" if verdict.csi == math.inf else verdict.csi
                    started = [s for s in injection_starts if s <= interval]
                    detections.append(
                        {
                            "interval": interval,
                            "app_id": verdict.app_id,
                            "delta_cpi": verdict.delta_cpi,
                            "threshold": verdict.threshold,
                            "csi": csi,
                            "lag_intervals": interval - started[-1] if started else None,
                        }
                    )
            if self.controllers_enabled:
                step_evicted, step_suppressed = self._enforce(interval, outcome.actions)
                evictions += step_evicted
                suppressions += step_suppressed
                self._clear_stale_caps()
                for planned in outcome.actions:
                    detail: dict = {"interval": interval, "app_id": planned.app_id,
                                    "node_id": planned.node_id, "severity": planned.severity.value}
                    if isinstance(planned.action, Suppress):
                        detail["type"] = "suppress"
                        detail["cpu_restriction"] = planned.action.cpu_restriction
                    elif isinstance(planned.action, Evict):
                        detail["type"] = "evict"
                        detail["pod_ids"] = list(planned.action.pod_ids)
                    else:
                        detail["type"] = "noop"
                    actions_report.append(detail)
                    action_log.append(
                        f"interval={interval} node={planned.node_id} app={planned.app_id} "
                        f"severity={planned.severity.value} action={detail['type']}"
                        + (
                            f" pods={','.join(planned.action.pod_ids)}"
                            if isinstance(planned.action, Evict)
                            else ""
                        )
                        + (
                            f" cap={planned.action.cpu_restriction:.6g}"
                            if isinstance(planned.action, Suppress)
                            else ""
                        )
                    )
            interval_records.append(
                {
                    "interval": interval,
                    "phase": phase,
                    "sys_cpu_total": self.state.system.cpu_total_sys,
                    "sys_mem_total": self.state.system.mem_total_sys,
                    "flagged_apps": outcome.flagged_apps,
                    "verdicts": len(outcome.verdicts),
                    "detections": sum(1 for v in outcome.verdicts if v.detected),
                    "actions": len(outcome.actions) if self.controllers_enabled else 0,
                }
            )
            for node_id in self.state.nodes:
                node_cpu_running[node_id] += self.state.nodes[node_id].metrics.cpu_total

        report = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "seed": self.seed,
            "horizon": self.horizon,
            "sampling_period_s": self.period_s,
            "controllers_enabled": self.controllers_enabled,
            "config": self.cfg,
            "phases": phase_counts,
            "intervals": interval_records,
            "latency_ms": {
                app: {
                    phase: _percentile_block(samples)
                    for phase, samples in by_phase.items()
                }
                for app, by_phase in latency.items()
            },
            "cpi_mean": {
                app: {
                    phase: (sum(vals) / len(vals) if vals else None)
                    for phase, vals in by_phase.items()
                }
                for app, by_phase in cpi_sum.items()
            },
            "detections": detections,
            "flag_events": flag_events,
            "actions": actions_report,
            "verdicts_evaluated": verdicts_evaluated,
            "deferrals": deferrals,
            "evictions": evictions,
            "reschedules": reschedules,
            "suppressions": suppressions,
            "models": self.loop.models_trained,
            "node_cpu_mean": {
                node_id: total / self.horizon for node_id, total in node_cpu_running.items()
            },
            "interference_windows": [
                {
                    "target_node": inj.target_node,
                    "kind": inj.kind,
                    "start_interval": inj.start_interval,
                    "end_interval": inj.start_interval + inj.duration,
                    "intensity": inj.intensity,
                }
                for inj in self.injections
            ],
        }
        return RunResult(report=report, trace_rows=trace_rows, action_log=action_log)


def _percentile_block(samples: list[float]) -> dict | None:
    if not samples:
        return None
    return {
        "count": len(samples),
        "p50": nearest_rank_percentile(samples, 50),
        "p90": nearest_rank_percentile(samples, 90),
        "p99": nearest_rank_percentile(samples, 99),
    }


def run_scenario(cfg: dict, seed: int) -> RunResult:
    return Simulator(cfg, seed).run()


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
