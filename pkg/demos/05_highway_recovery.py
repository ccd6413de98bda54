"""Run the reference highway scenario and compare it with a fault-free run."""

import time

from shsa.config import bundled
from shsa.harness import parse_scenario_file, run_scenario

sc = parse_scenario_file(bundled("highway.scn"))
t0 = time.perf_counter()
res = run_scenario(sc)
print(f"{sc.duration} ticks in {time.perf_counter() - t0:.2f} s")

for kind in ("fault", "detect", "isolate", "substitute", "degraded", "restore"):
    for e in res.events(kind)[:6]:
        print(f"  {e.tick:5d} {kind:10s} {e.subject:14s} {e.payload}")

print()
print(res.metrics.to_csv(), end="")

clean = run_scenario(sc.without_faults())
sub_tick = sc.faults[0].start + int(res.metrics.recovery_latency)
print(f"\nRMSE from tick {sub_tick}: {res.rmse(sub_tick):.4f} m with the fault, "
      f"{clean.rmse(sub_tick):.4f} m without")

print("\nchannels:")
for stats, cls in res.channel_report():
    if cls.value != "normal":
        print(f"  {stats.channel}: in {stats.packets_in}, out {stats.packets_out} -> {cls.value}")
