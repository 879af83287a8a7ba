"""Moments of the gradient noise stay bounded after the right rescaling.

H is the per-sample loss minus the population loss.  At a fixed point
(m, r2) = (0, 1) we sample its gradient at three dimensions and print the
normalised moments.  The first and third columns should stay roughly flat
in N.  The middle one decays like 1/N^2, which is stronger than needed.
"""

from sgd_limits import RandomStream, SimConfig, localizability_diagnostics, make_activation

table = localizability_diagnostics(SimConfig(N=128, noise_var=0.25), make_activation("purified"),
                                   [128, 256, 512, 1024], 100_000, RandomStream(0))
print("      N  " + "  ".join(f"{c:>22s}" for c in table.columns))
for N, row, se in zip(table.N, table.values, table.std_err):
    print(f"{N:>7d}  " + "  ".join(f"{v:12.4e} +- {e:7.1e}" for v, e in zip(row, se)))
for c in table.columns:
    print(f"{c}: max/min over N exceeds 4? {table.flags[c]}")
