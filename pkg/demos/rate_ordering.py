"""Sum rate of the five schedulers on the two-group DFT scenario.

A reduced-trial version of the ``fig4`` preset. For each user count the best
parameter of every scheme is reported, which shows the usual ordering: the
dirty-paper bound on top, then SUS with quasi-SINR, then cone selection, then
random beamforming.
"""
from dataclasses import replace

from redos import harness

spec = replace(harness.load_scenario("fig4"), trials=40)
rows = harness.run_scenario(spec)
best = harness.best_rows(rows)

schemes = ("dpc", "sus_quasi_sinr", "sus_norm", "redos", "rbf")
print(f"{'K':>6} " + " ".join(f"{s:>15}" for s in schemes))
for K in spec.K_grid:
    rates = [best[(spec.name, K, s)].mean_sum_rate_bits for s in schemes]
    print(f"{K:>6} " + " ".join(f"{r:15.2f}" for r in rates))
print("(bits/s/Hz, best parameter per scheme)")
