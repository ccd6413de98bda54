"""Enumerate substitutions of pos and pick the best one for a few failure cases."""

from shsa.config import bundled, parse_kb_file
from shsa.knowledge_base import Itom, ItomRegistry, ItomStatus, provided_variables
from shsa.substitution import (
    SearchConfig,
    best_substitution,
    enumerate_substitutions,
    format_report,
    instantiate_substitute,
    substitution_cost,
)

kb, _ = parse_kb_file(bundled("highway.kb"))

for depth in (1, 2, 3):
    subs = enumerate_substitutions(kb, "pos", depth)
    print(f"max depth {depth}: {len(subs)} substitutions")
    for s in subs:
        print(f"   depth {s.depth}, sources {sorted(s.sources)}: {s}")

# street radar failed; the previous radar still reports the vehicle, a clock is
# always around, and the vehicle behind has lidar
reg = ItomRegistry([
    Itom("radar", "pos", "radar", 10.0, [130.0, 3.5, 30.0], ItomStatus.FAILED),
    Itom("radar_pre_prev", "pos_prev", "radar_pre", 9.0, [100.0, 3.5, 30.0]),
    Itom("radar_pre_t", "t_prev", "radar_pre", 9.0, [9.0]),
    Itom("clock", "t", "clock", 10.0, [10.0]),
    Itom("gps_behind", "pos_behind", "gps_behind", 10.0, [90.0, 3.5, 29.0]),
    Itom("lidar", "D", "lidar", 10.0, [1, 40.0, 0, 0, 0, 0, 0, 0, 0]),
])
provided = provided_variables(kb, reg)
print("\nprovided:", sorted(provided))
cfg = SearchConfig(staleness_weight=0.1)
best = best_substitution(kb, "pos", provided, reg, cfg, now=10.0)
print("best:", best, "cost", substitution_cost(best, reg, cfg, now=10.0))

sub = instantiate_substitute(best, reg, period=0.1, output_itom="pos_sub")
print(format_report(best, sub.selected, substitution_cost(best, reg, cfg, now=10.0)), end="")
print("substitute output at t=10:", sub.step(reg, 10.0).tolist())

# without the predecessor radar the lidar chain is the only way left; the
# first substitute is retired so its output does not count as a source
reg.remove("pos_sub")
reg.set_status("radar_pre_prev", ItomStatus.FAILED)
best = best_substitution(kb, "pos", provided_variables(kb, reg), reg, cfg, now=10.0)
print("\nwithout radar_pre:", best)
sub = instantiate_substitute(best, reg, 0.1, "pos_sub2")
print("substitute output:", sub.step(reg, 10.0).tolist())
