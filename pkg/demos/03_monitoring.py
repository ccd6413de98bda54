"""Plausibility monitor on pos: three redundant branches, one goes bad."""

import numpy as np

from shsa.config import bundled, parse_kb_file
from shsa.knowledge_base import Itom, ItomRegistry
from shsa.monitoring import Monitor, majority_vote, report_rows, setup_monitor

kb, _ = parse_kb_file(bundled("highway.kb"))
reg = ItomRegistry([
    Itom("radar", "pos", "radar", 0.0, [0.0, 0.0, 30.0]),
    Itom("gps", "pos", "gps", 0.0, [0.0, 0.0, 30.0]),
    Itom("radar_pre_prev", "pos_prev", "radar_pre", 0.0, [0.0, 0.0, 30.0]),
    Itom("radar_pre_t", "t_prev", "radar_pre", 0.0, [0.0]),
    Itom("clock", "t", "clock", 0.0, [0.0]),
])
spec = setup_monitor(kb, reg, "pos", epsilon=2.0, theta=0.3, hold=3)
print("branches:", spec.branch_ids)
mon = Monitor(spec)

rng = np.random.default_rng(1)
print("time,branch,value,confidence,status")
for tick in range(8):
    t = tick * 0.1
    x = 100.0 + 30.0 * t
    snap = {
        "radar": [x + rng.normal(0, 0.2), 0.0, 30.0],
        "gps": [x + rng.normal(0, 0.2), 0.0, 30.0],
        "radar_pre_prev": [100.0, 0.0, 30.0],
        "radar_pre_t": [0.0],
        "clock": [t],
    }
    if tick >= 3:
        snap["radar"] = [130.0, 130.0, 130.0]  # stuck
    for line in report_rows(mon.step(snap, t)):
        print(line)
print("failed:", mon.failed())

print("\nvoting over the three values at the last tick:")
values = [np.asarray(v) for v in mon.step(snap, 0.8).values.values()]
print("  majority:", majority_vote(values, 2.0))
