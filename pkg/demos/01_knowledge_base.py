"""Load the bundled highway knowledge base and look at what it provides."""

from shsa.config import bundled, parse_kb_file, serialize_kb
from shsa.knowledge_base import Itom, ItomStatus, eval_relation, provided_variables, validate_kb

kb, reg = parse_kb_file(bundled("highway.kb"))
print(f"{len(kb.variables)} variables, {len(kb.relations)} relations, {len(reg)} itoms")
print("violations:", validate_kb(kb) or "none")

for r in kb.relations:
    print(f"  {r.id}: {r.output} <- {', '.join(r.inputs)}   [{r.expr}]")

print("provided:", sorted(provided_variables(kb, reg)))

# a failed itom no longer provides its variable
for itom_id in ("gps", "radar", "radar_pre"):
    reg.set_status(itom_id, ItomStatus.FAILED)
print("provided with every pos itom failed:", sorted(provided_variables(kb, reg)))

# relations are executable: project an older observation forward by 1.5 s
r_int = kb.rel["r_int"]
out = eval_relation(r_int, {"pos_prev": [100.0, 3.5, 30.0], "t_prev": [8.5], "t": [10.0]})
print("r_int(pos_prev=(100, 3.5, 30), dt=1.5) =", out.tolist())

# normalized text form, as written by `shsa check-kb --echo`
reg.add(Itom("clock", "t", "clock"))
print()
print(serialize_kb(kb, reg), end="")
