"""Command line front end.

Subcommands: simulate, train, predict, replay, report.  Exit codes: 0 on
success, 1 on runtime failure, 2 on configuration or usage errors.  Set
CKOORD_LOG=DEBUG (or any logging level name) for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .cluster import NodeMetrics, QosClass
from .gbdt import (
    ModelSchemaError,
    TrainConfig,
    ensemble_from_json,
    ensemble_to_json,
    regression_metrics,
    train_ensemble,
)
from .loop import ControlLoop, NodeObservation, PodObservation
from .mitigator import Evict, Suppress
from .scenario import (
    ConfigError,
    apply_overrides,
    default_config,
    load_config,
    node_ids,
)
from .simulator import Simulator, control_configs, report_to_json
from .trace import (
    TRACE_COLUMNS,
    TraceFormatError,
    feature_matrix,
    format_value,
    read_trace,
    rows_by_interval,
    write_trace,
)

log = logging.getLogger("ckoord")


def _write_text_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckoord-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_scenario(args: argparse.Namespace) -> dict:
    cfg = load_config(args.config) if args.config else default_config()
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    return cfg


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_scenario(args)
    os.makedirs(args.out, exist_ok=True)
    result = Simulator(cfg, args.seed).run()
    if args.set:
        result.report["overrides"] = sorted(args.set)
    report_path = os.path.join(args.out, "report.json")
    trace_path = os.path.join(args.out, "trace.csv")
    actions_path = os.path.join(args.out, "actions.log")
    _write_text_atomic(report_path, report_to_json(result.report))
    write_trace(trace_path, result.trace_rows)
    _write_text_atomic(actions_path, "".join(line + "\n" for line in result.action_log))
    report = result.report
    print(
        f"simulated {report['horizon']} intervals seed={report['seed']}"
        f" detections={len(report['detections'])} evictions={report['evictions']}"
        f" suppressions={report['suppressions']}"
    )
    print(f"report: {report_path}")
    print(f"trace: {trace_path}")
    print(f"actions: {actions_path}")
    return 0


def _metrics_line(tag: str, count: int, metrics: dict[str, float]) -> str:
    return (
        f"{tag} rows={count} mse={metrics['mse']:.6g} mae={metrics['mae']:.6g}"
        f" r2={metrics['r2']:.6g} acc={metrics['acc']:.6g}"
    )


def _cmd_train(args: argparse.Namespace) -> int:
    rows = read_trace(args.trace)
    if args.app is not None:
        rows = [r for r in rows if r.app_id == args.app]
    minimum = 2 * args.window
    if len(rows) < minimum:
        scope = f"app {args.app!r}" if args.app else "trace"
        raise ConfigError(
            f"{args.trace}: {scope} has {len(rows)} rows; at least {minimum}"
            f" (2 x window {args.window}) required"
        )
    X, y = feature_matrix(rows)
    cfg = TrainConfig(
        learning_rate=args.learning_rate,
        lam=args.lam,
        tau=args.tau,
        max_depth=args.max_depth,
        num_rounds=args.rounds,
        min_samples_leaf=args.min_samples_leaf,
        base_score=args.base_score,
    )
    split = int(len(rows) * args.split_fraction)
    if split < 1 or split >= len(rows):
        split = len(rows)
    model = train_ensemble(X[:split], y[:split], cfg)
    print(_metrics_line("train", split, regression_metrics(y[:split], model.predict(X[:split]))))
    if split < len(rows):
        holdout = regression_metrics(y[split:], model.predict(X[split:]))
        print(_metrics_line("holdout", len(rows) - split, holdout))
    _write_text_atomic(args.model_out, ensemble_to_json(model) + "\n")
    print(f"model: {args.model_out}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    rows = read_trace(args.trace)
    if not rows:
        raise TraceFormatError(f"{args.trace}: no data rows")
    with open(args.model, encoding="utf-8") as handle:
        model = ensemble_from_json(handle.read())
    X, _ = feature_matrix(rows)
    preds = model.predict(X)
    out = sys.stdout if args.out is None else open(args.out, "w", encoding="utf-8", newline="")
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(list(TRACE_COLUMNS) + ["cpi_pred"])
        for row, pred in zip(rows, preds):
            record = []
            for column in TRACE_COLUMNS:
                value = getattr(row, column)
                record.append(format_value(value) if isinstance(value, float) else str(value))
            record.append(format_value(float(pred)))
            writer.writerow(record)
    finally:
        if out is not sys.stdout:
            out.close()
    if args.out is not None:
        print(f"predictions: {args.out}")
    return 0


def _replay_observations(
    rows: list, cfg: dict
) -> tuple[list[PodObservation], list[NodeObservation]]:
    topo = cfg["topology"]
    requests = {
        app["app_id"]: (float(app["cpu_request"]), float(app["mem_request"]), app["qos"])
        for app in cfg["apps"]
    }
    known_nodes = set(node_ids(cfg))
    pod_obs: list[PodObservation] = []
    node_rows: dict[str, object] = {}
    for row in rows:
        if row.app_id not in requests:
            raise ConfigError(f"trace app {row.app_id!r} not present in scenario config")
        if row.node_id not in known_nodes:
            raise ConfigError(f"trace node {row.node_id!r} not present in scenario config")
        cpu_request, mem_request, qos = requests[row.app_id]
        features = np.array(
            [
                row.pod_cpu_util,
                row.pod_mem_util,
                row.node_cpu_total,
                row.node_cpu_offline,
                row.node_cpu_shared,
                row.node_cpu_online,
                row.l3_miss_rate,
                row.sys_cpu_total,
                row.sys_mem_total,
            ],
            dtype=np.float64,
        )
        pod_obs.append(
            PodObservation(
                pod_id=row.pod_id,
                app_id=row.app_id,
                node_id=row.node_id,
                qos=QosClass(row.qos),
                features=features,
                cpi=row.cpi,
                cpu_cores=row.pod_cpu_util * cpu_request,
                cpu_request=cpu_request,
                mem_request=mem_request,
            )
        )
        node_rows[row.node_id] = row
    node_obs = []
    for node_id in sorted(node_rows):
        row = node_rows[node_id]
        node_obs.append(
            NodeObservation(
                node_id=node_id,
                cpu_capacity=float(topo["cpu_capacity"]),
                metrics=NodeMetrics(
                    cpu_total=row.node_cpu_total,
                    cpu_offline=row.node_cpu_offline,
                    cpu_online=row.node_cpu_online,
                    cpu_shared=row.node_cpu_shared,
                    mem_util=row.node_mem_util,
                ),
            )
        )
    return pod_obs, node_obs


def _cmd_replay(args: argparse.Namespace) -> int:
    cfg = _load_scenario(args)
    rows = read_trace(args.trace)
    if not rows:
        raise TraceFormatError(f"{args.trace}: no data rows")
    detector_cfg, predictor_cfg, mitigator_cfg = control_configs(cfg)
    loop = ControlLoop(detector_cfg, predictor_cfg, mitigator_cfg, cfg["sampling_period_s"])
    detections: list[dict] = []
    flag_events: list[dict] = []
    actions: list[dict] = []
    verdicts_evaluated = 0
    deferrals = 0
    intervals = 0
    for interval, group in rows_by_interval(rows):
        pod_obs, node_obs = _replay_observations(group, cfg)
        outcome = loop.observe(interval, pod_obs, node_obs, True)
        intervals += 1
        verdicts_evaluated += len(outcome.verdicts)
        deferrals += len(outcome.deferred_apps)
        for app_id in outcome.newly_flagged:
            flag_events.append({"interval": interval, "app_id": app_id, "event": "flag"})
        for app_id in outcome.newly_unflagged:
            flag_events.append({"interval": interval, "app_id": app_id, "event": "unflag"})
        for verdict in outcome.verdicts:
            if verdict.detected:
                csi = "inf" if verdict.csi == float("inf") else verdict.csi
                detections.append(
                    {
                        "interval": interval,
                        "app_id": verdict.app_id,
                        "delta_cpi": verdict.delta_cpi,
                        "threshold": verdict.threshold,
                        "csi": csi,
                    }
                )
        for planned in outcome.actions:
            detail = {
                "interval": interval,
                "app_id": planned.app_id,
                "node_id": planned.node_id,
                "severity": planned.severity.value,
            }
            if isinstance(planned.action, Suppress):
                detail["type"] = "suppress"
                detail["cpu_restriction"] = planned.action.cpu_restriction
            elif isinstance(planned.action, Evict):
                detail["type"] = "evict"
                detail["pod_ids"] = list(planned.action.pod_ids)
            else:
                detail["type"] = "noop"
            actions.append(detail)
    replay_report = {
        "schema_version": 1,
        "trace": os.path.basename(args.trace),
        "intervals": intervals,
        "detections": detections,
        "flag_events": flag_events,
        "actions": actions,
        "verdicts_evaluated": verdicts_evaluated,
        "deferrals": deferrals,
        "models": loop.models_trained,
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        out_path = os.path.join(args.out, "replay.json")
        _write_text_atomic(out_path, json.dumps(replay_report, sort_keys=True, indent=2) + "\n")
        print(f"replay report: {out_path}")
    print(
        f"replayed {intervals} intervals flags={len(flag_events)}"
        f" detections={len(detections)} actions={len(actions)}"
    )
    return 0


def _latency_cell(report: dict, app: str, phase: str, key: str) -> float | None:
    block = report.get("latency_ms", {}).get(app, {}).get(phase)
    if block is None:
        return None
    return block.get(key)


def _cmd_report(args: argparse.Namespace) -> int:
    reports: list[tuple[str, dict]] = []
    for run_dir in args.run_dirs:
        path = os.path.join(run_dir, "report.json")
        if not os.path.isfile(path):
            raise ConfigError(f"{run_dir}: no report.json found")
        with open(path, encoding="utf-8") as handle:
            reports.append((run_dir.rstrip("/"), json.load(handle)))
    apps = sorted({app for _, rep in reports for app in rep.get("latency_ms", {})})
    names = [name for name, _ in reports]
    header = f"{'app':<10} {'phase':<13} {'metric':<7}"
    for name in names:
        header += f" {os.path.basename(name) or name:>14}"
    for name in names[1:]:
        header += f" {'delta% ' + (os.path.basename(name) or name):>20}"
    print(header)
    print("-" * len(header))
    csv_rows = [
        ["app", "phase", "metric"]
        + names
        + [f"delta_pct_{os.path.basename(n) or n}" for n in names[1:]]
    ]
    for app in apps:
        for phase in ("normal", "interference"):
            for key in ("p50", "p90", "p99"):
                cells = [_latency_cell(rep, app, phase, key) for _, rep in reports]
                if all(c is None for c in cells):
                    continue
                line = f"{app:<10} {phase:<13} {key:<7}"
                csv_row = [app, phase, key]
                for cell in cells:
                    line += f" {cell:>14.4g}" if cell is not None else f" {'-':>14}"
                    csv_row.append("" if cell is None else format_value(cell))
                base = cells[0]
                for cell in cells[1:]:
                    # positive delta = this run improved on the baseline
                    if base not in (None, 0) and cell is not None:
                        delta = 100.0 * (base - cell) / base
                        line += f" {delta:>+20.1f}"
                        csv_row.append(f"{delta:.4f}")
                    else:
                        line += f" {'-':>20}"
                        csv_row.append("")
                print(line)
                csv_rows.append(csv_row)
    for counter in ("detections", "actions"):
        parts = " ".join(
            f"{os.path.basename(name) or name}={len(rep.get(counter, []))}"
            for name, rep in reports
        )
        print(f"{counter}: {parts}")
    parts = " ".join(
        f"{os.path.basename(name) or name}={rep.get('evictions', 0)}" for name, rep in reports
    )
    print(f"evictions: {parts}")
    if args.csv:
        buf = "\n".join(",".join(str(cell) for cell in row) for row in csv_rows) + "\n"
        _write_text_atomic(args.csv, buf)
        print(f"csv: {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ckoord",
        description="Cluster interference control plane simulator and tooling.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write report/trace/actions")
    sim.add_argument("--config", help="scenario config JSON (default: built-in scenario)")
    sim.add_argument("--seed", type=int, default=0, help="root RNG seed (default 0)")
    sim.add_argument("--out", default=".", help="output directory (default .)")
    sim.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config entry, dotted path (repeatable)",
    )
    sim.set_defaults(func=_cmd_simulate)

    train = sub.add_parser("train", help="fit a CPI model from a trace CSV")
    train.add_argument("--trace", required=True, help="input trace CSV")
    train.add_argument("--app", help="train on this app's rows only (default: whole trace)")
    train.add_argument("--model-out", required=True, help="output model JSON path")
    train.add_argument(
        "--window",
        type=int,
        default=60,
        help="rolling window used for the minimum-rows check, 2 x window (default 60)",
    )
    train.add_argument("--learning-rate", type=float, default=0.1)
    train.add_argument("--rounds", type=int, default=100)
    train.add_argument("--max-depth", type=int, default=4)
    train.add_argument("--lam", type=float, default=1.0)
    train.add_argument("--tau", type=float, default=0.0)
    train.add_argument("--min-samples-leaf", type=int, default=2)
    train.add_argument("--base-score", type=float, default=0.0)
    train.add_argument(
        "--split-fraction",
        type=float,
        default=0.8,
        help="chronological train fraction; remainder is the holdout (default 0.8)",
    )
    train.set_defaults(func=_cmd_train)

    predict = sub.add_parser("predict", help="append model predictions to a trace")
    predict.add_argument("--trace", required=True, help="input trace CSV")
    predict.add_argument("--model", required=True, help="model JSON from `ckoord train`")
    predict.add_argument("--out", help="output CSV (default: stdout)")
    predict.set_defaults(func=_cmd_predict)

    replay = sub.add_parser("replay", help="re-run detection offline over a recorded trace")
    replay.add_argument("--trace", required=True, help="trace CSV produced by simulate")
    replay.add_argument(
        "--config",
        help="scenario config the trace was produced with (default: built-in scenario)",
    )
    replay.add_argument("--out", help="directory for replay.json (default: summary only)")
    replay.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override a config entry"
    )
    replay.set_defaults(func=_cmd_replay)

    report = sub.add_parser("report", help="tabulate one or more simulate run directories")
    report.add_argument(
        "run_dirs",
        nargs="+",
        metavar="RUN_DIR",
        help="simulate output directories; the first is the delta baseline",
    )
    report.add_argument("--csv", help="also write the comparison table as CSV")
    report.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("CKOORD_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError, ModelSchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc.filename or exc}: no such file", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("unhandled failure")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
