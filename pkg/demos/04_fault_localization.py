"""Turn monitor comparisons into a spectrum and rank components; classify channels."""

from shsa.diagnosis import ChannelStats, build_spectrum, comm_behavior_classify, sfl_rank
from shsa.monitoring import monitor_trace

# branch values already mapped to the common domain (x only)
rows = []
for step in range(5):
    rows += [(step, "radar", [150.0]), (step, "gps", [130.1]), (step, "r_int", [129.8])]
trace = monitor_trace(rows, epsilon=2.0)

components = {"radar": ["radar"], "gps": ["gps"], "r_int": ["radar_pre", "clock", "fog1"]}
spectrum = build_spectrum(trace, components, epsilon=2.0)
print(spectrum.to_text(), end="")
for formula in ("ochiai", "tarantula"):
    print(f"\n{formula}:")
    print(sfl_rank(spectrum, formula).format(), end="")

print("\nchannel checks (delta 0.2):")
for name, n_in, n_out in (("radar2->fog1", 100, 60), ("radar1->fog1", 100, 100), ("gw->fog2", 100, 150)):
    cls = comm_behavior_classify(ChannelStats(name, 100, n_in, n_out), 0.2)
    print(f"  {name}: in {n_in}, out {n_out} -> {cls.value}")
