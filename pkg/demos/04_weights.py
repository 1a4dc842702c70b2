"""The weight language: parse, pretty-print, type-check and evaluate."""
import numpy as np

from bgqt.beables import BeableConfiguration, Trajectory
from bgqt.weightlang import builtin_weight, evaluate, parse, to_source, typecheck

src = "exp(-supt(sep2(1,2))/(a*a))"
expr = parse(src)
print("source   :", src)
print("printed  :", to_source(expr))
print("round-trip equal:", parse(to_source(expr)) == expr)

# a pair of particles approaching and separating again
t = np.linspace(0.0, 1.0, 11)
pos = np.stack([-1 - t * (1 - t) * 2, 1 + t * (1 - t) * 2], axis=1)
config = BeableConfiguration(kind="bohm", seed=0, horizon=1.0, index=0,
                             trajectory=Trajectory(t, pos))
for name in ("bohm_limsup", "bohm_timeavg"):
    checked = typecheck(builtin_weight(name), "bohm")
    value = evaluate(checked, {"a": 2.0, "T": 1.0}, config).value
    print(f"{name:14s} w = {value:.6f}")

for bad in ("exp(", "supt(sep2(1,2)", "sep2(1,2)", "frob(1)"):
    try:
        typecheck(parse(bad), "bohm")
    except Exception as exc:  # each is one of the documented error classes
        print(f"{bad!r:18s} -> {type(exc).__name__}: {exc}")
