#!/usr/bin/env python3
"""Interval-by-interval view of one detected interference episode.

Runs the packaged scenario (a cpu_hog lands on node-02 partway through)
and prints every flag event, detection verdict, and mitigation action in
order, so the flag -> verdict -> action pipeline is visible end to end.
"""

from collections import defaultdict

from ckoord.scenario import default_config
from ckoord.simulator import run_scenario

SEED = 1


def main() -> None:
    cfg = default_config()
    result = run_scenario(cfg, seed=SEED)
    report = result.report

    window = report["interference_windows"][0]
    print(
        f"injection: {window['kind']} on {window['target_node']}"
        f" intervals [{window['start_interval']}, {window['end_interval']})"
        f" intensity {window['intensity']}"
    )

    events: dict[int, list[str]] = defaultdict(list)
    for ev in report["flag_events"]:
        events[ev["interval"]].append(f"{ev['event']} {ev['app_id']}")
    for det in report["detections"]:
        lag = det["lag_intervals"]
        events[det["interval"]].append(
            f"DETECT {det['app_id']}: delta_cpi={det['delta_cpi']:.3f}"
            f" threshold={det['threshold']:.3f} csi={det['csi']:.2f}"
            + (f" (lag {lag})" if lag is not None else "")
        )
    for act in report["actions"]:
        what = act["type"]
        if what == "evict":
            what = f"evict {','.join(act['pod_ids'])}"
        elif what == "suppress":
            what = f"suppress BE to {act['cpu_restriction']:.2f} cores"
        events[act["interval"]].append(f"ACTION [{act['severity']}] {what} on {act['node_id']}")

    print("\ntimeline (intervals with no events omitted):")
    for interval in sorted(events):
        for line in events[interval]:
            print(f"  t={interval:3d}  {line}")

    lags = [d["lag_intervals"] for d in report["detections"] if d["lag_intervals"] is not None]
    print("\ntotals:")
    print(f"  verdicts evaluated: {report['verdicts_evaluated']}")
    print(f"  detections: {len(report['detections'])}"
          + (f" (first lag {min(lags)} intervals after onset)" if lags else ""))
    print(f"  evictions: {report['evictions']}  suppressions: {report['suppressions']}")


if __name__ == "__main__":
    main()
