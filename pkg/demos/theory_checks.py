"""Monte Carlo checks of the cone geometry and extreme-value tails.

Two unit vectors in the cones of different beams are nearly orthogonal, with
a cross correlation bounded by 2a*sqrt(1 - a^2) for threshold a. The largest
of K exponential gains exceeds log K minus log log K with probability close
to one.
"""
import numpy as np

from redos import theory

rng = np.random.default_rng(0)

print("cone pair cross correlation")
for a in (0.75, 0.9, 0.96):
    res = theory.cone_pair_bound_check(a, 4, 50_000, rng)
    print(f"  a = {a:.2f}: bound {res.bound:.4f}, largest seen {res.max_observed:.4f}")

print("maximum of K unit exponentials")
for K in (100, 1000, 10_000):
    res = theory.evt_tail_check(theory.TailBoundSpec((1.0,), 1.0, K, z_tau=0.0), 20_000, rng)
    print(f"  K = {K:>6}: exceedance {res.freq:.4f}, closed form {theory.exponential_exceedance(K):.4f}")
