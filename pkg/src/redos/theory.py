"""Monte Carlo checks of the analytical results behind cone selection.

These are executable companions to the analysis: the cone-threshold floor,
the inner-product bound between users of distinct cones, the extreme-value
tail of the best quasi-SINR and the log log K growth of the sum rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import GenChiSquare, GroupProfile, sample_channels
from .scheduling import best_beam, quasi_sinr

__all__ = [
    "ConePairResult",
    "TailBoundSpec",
    "TailResult",
    "SlopeFit",
    "alpha_min_probe",
    "alpha_bar_lower",
    "cone_pair_bound",
    "sample_cone",
    "cone_pair_bound_check",
    "evt_tail_check",
    "evt_constant_stability",
    "exponential_exceedance",
    "fit_loglog_slope",
    "scaling_slope_fit",
    "ccdf_sandwich_check",
]


def _unit_sphere(rng: np.random.Generator, n: int, r: int) -> np.ndarray:
    z = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def alpha_min_probe(r_star: int, alpha: float, n: int, rng: np.random.Generator) -> int:
    """Number of isotropic users, out of `n`, that fall in no cone at `alpha`."""
    _, top = best_beam(_unit_sphere(rng, n, r_star))
    return int(np.sum(top < alpha))


def alpha_bar_lower(r_star: int) -> float:
    """Lower end of the threshold range that makes the gain bound useful.

    ``sqrt((1 + sqrt((r - 2) / (r - 1))) / 2)``; equals ``1/sqrt(2)`` at ``r = 2``.
    """
    if r_star < 2:
        raise ValueError("range is defined for r_star >= 2")
    return float(np.sqrt((1.0 + np.sqrt((r_star - 2) / (r_star - 1))) / 2.0))


def cone_pair_bound(alpha: float) -> float:
    """``2 alpha sqrt(1 - alpha^2)``, the largest coherence across distinct cones."""
    return 2.0 * alpha * np.sqrt(max(0.0, 1.0 - alpha * alpha))


def sample_cone(rng: np.random.Generator, n: int, r_star: int, beam: int, alpha: float) -> np.ndarray:
    """Uniform unit vectors in ``C^r`` conditioned on ``|u_beam| >= alpha``.

    For a uniform vector ``|u_beam|^2`` is Beta(1, r - 1), so the conditioned
    magnitude is drawn by inversion and the remaining coordinates uniformly
    on the sphere of the complement.
    """
    if r_star == 1:
        return np.exp(2j * np.pi * rng.random((n, 1)))
    tail = (1.0 - alpha * alpha) * rng.random(n) ** (1.0 / (r_star - 1))
    u = np.empty((n, r_star), dtype=complex)
    u[:, beam] = np.sqrt(1.0 - tail) * np.exp(2j * np.pi * rng.random(n))
    rest = [j for j in range(r_star) if j != beam]
    u[:, rest] = _unit_sphere(rng, n, r_star - 1) * np.sqrt(tail)[:, None]
    return u


def _rejection_cone(rng, n, r_star, beam, alpha, budget):
    out, used = [], 0
    while sum(len(o) for o in out) < n and used < budget:
        m = min(max(4 * n, 10_000), budget - used)
        u = _unit_sphere(rng, m, r_star)
        used += m
        b, top = best_beam(u)
        out.append(u[(b == beam) & (top >= alpha)])
    got = np.concatenate(out) if out else np.zeros((0, r_star), dtype=complex)
    return got[:n], used


@dataclass(frozen=True)
class ConePairResult:
    """Largest coherence between unit vectors taken from distinct cones.

    ``max_independent`` is over `n_pairs` independent pairs; ``max_cross``
    also takes every cross pair of the first ``n_cross`` samples per cone.
    """

    alpha: float
    r_star: int
    bound: float
    max_independent: float
    max_cross: float
    n_pairs: int
    passed: bool
    inconclusive: bool = False

    @property
    def max_observed(self) -> float:
        return max(self.max_independent, self.max_cross)

    @property
    def sharpness(self) -> float:
        return self.max_observed / self.bound if self.bound > 0 else np.nan


def cone_pair_bound_check(alpha: float, r_star: int, trials: int, rng: np.random.Generator,
                          method: str = "conditional", n_cross: int = 2000,
                          max_draws: int = 10**7, atol: float = 1e-12) -> ConePairResult:
    """Sample pairs from distinct cones and test the coherence bound.

    Parameters
    ----------
    alpha : float
        Cone threshold, at least ``1/sqrt(2)``.
    r_star : int
        Dimension; at least 2.
    trials : int
        Number of independent pairs, each from a random ordered pair of cones.
    method : {"conditional", "rejection"}
        ``conditional`` draws directly from the cone; ``rejection`` filters
        isotropic draws and gives up after `max_draws`.
    n_cross : int
        Samples per cone whose cross pairs are also checked, which probes the
        bound's sharpness far better than independent pairs.
    """
    if alpha < 1.0 / np.sqrt(2.0) - 1e-15:
        raise ValueError("bound needs alpha >= 1/sqrt(2)")
    if r_star < 2:
        raise ValueError("need at least two cones")
    bound = cone_pair_bound(alpha)
    i = rng.integers(0, r_star, trials)
    j = (i + rng.integers(1, r_star, trials)) % r_star
    u = np.empty((trials, r_star), dtype=complex)
    v = np.empty_like(u)
    pools = {}
    inconclusive = False
    draws = 0
    for beam in range(r_star):
        need = int(np.sum(i == beam) + np.sum(j == beam))
        need = max(need, n_cross)
        if method == "conditional":
            pools[beam] = sample_cone(rng, need, r_star, beam, alpha)
        elif method == "rejection":
            got, used = _rejection_cone(rng, need, r_star, beam, alpha, max_draws - draws)
            draws += used
            pools[beam] = got
            inconclusive |= len(got) < need
        else:
            raise ValueError(f"unknown method {method!r}")
    if inconclusive:
        return ConePairResult(alpha, r_star, bound, np.nan, np.nan, 0, False, True)
    for beam in range(r_star):
        pool = pools[beam]
        a, b = np.flatnonzero(i == beam), np.flatnonzero(j == beam)
        u[a] = pool[: a.size]
        v[b] = pool[a.size : a.size + b.size]
    ind = float(np.max(np.abs(np.sum(u.conj() * v, axis=1)), initial=0.0))
    cross = 0.0
    for p in range(r_star):
        for q in range(p + 1, r_star):
            cross = max(cross, float(np.max(np.abs(pools[p][:n_cross].conj() @ pools[q][:n_cross].T))))
    passed = max(ind, cross) <= bound + atol
    return ConePairResult(alpha, r_star, bound, ind, cross, trials, passed)


# --------------------------------------------------------------------------
# Extreme-value tail
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class TailBoundSpec:
    """Truncated generalised chi-square law and its exceedance threshold.

    Above ``z_tau`` the CDF is ``1 - zeta sum_i exp(-z / lam_i) / xi_i``;
    below it the CDF is the straight line from the origin to its value at
    ``z_tau``.  ``z_tau`` defaults to ``lam_1``.

    Attributes
    ----------
    eps : float
        Interference cap of the quasi-SINR argument.
    a_i : float
        Additive constant of the per-beam threshold ``u_g^i``.
    """

    lambdas: tuple
    zeta: float
    K: int
    z_tau: float | None = None
    eps: float = 1.0
    a_i: float = 0.0
    dist: GenChiSquare = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        dist = GenChiSquare(np.asarray(self.lambdas, dtype=float))
        object.__setattr__(self, "dist", dist)
        if not 0.0 < self.zeta <= 1.0:
            raise ValueError("zeta must lie in (0, 1]")
        if self.z_tau is None:
            object.__setattr__(self, "z_tau", float(dist.lambdas[0]))
        if not np.isfinite(self.z_tau) or self.z_tau < 0:
            raise ValueError("z_tau must be finite and non-negative")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0.0 <= self._upper_cdf(self.z_tau) <= 1.0:
            raise ValueError("z_tau too small: CDF leaves [0, 1]")

    @property
    def a_K(self) -> float:
        return float(self.dist.lambdas[0])

    @property
    def b_K(self) -> float:
        lam1, xi1 = self.dist.lambdas[0], self.dist.xi[0]
        return float(lam1 * (np.log(self.K) + np.log(self.zeta / xi1)))

    @property
    def u_K(self) -> float:
        """``lam_1 log K - lam_1 log log K + lam_1 log(zeta / xi_1)``."""
        return self.b_K - self.a_K * np.log(np.log(self.K))

    def u_gi(self, rho: float) -> float:
        """Per-beam quasi-SINR threshold ``(lam_1 log K - lam_1 log log K + a_i) / (1/rho + eps)``."""
        lam1 = self.dist.lambdas[0]
        return float((lam1 * np.log(self.K) - lam1 * np.log(np.log(self.K)) + self.a_i) / (1.0 / rho + self.eps))

    def _upper_cdf(self, z):
        return 1.0 - self.zeta * self.dist.ccdf(z)

    def cdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        lower = self._upper_cdf(self.z_tau) * np.clip(z, 0.0, None) / self.z_tau if self.z_tau > 0 else 0.0
        return np.where(z >= self.z_tau, self._upper_cdf(np.maximum(z, self.z_tau)), lower)

    def ppf(self, p, iters: int = 200) -> np.ndarray:
        """Inverse CDF; linear below ``z_tau``, bisection above."""
        p = np.asarray(p, dtype=float)
        F_tau = self._upper_cdf(self.z_tau)
        out = np.where(F_tau > 0, p / max(F_tau, 1e-300) * self.z_tau, self.z_tau)
        up = p > F_tau
        if np.any(up):
            q = p[up]
            lo = np.full(q.shape, self.z_tau)
            # ccdf <= zeta * sum |1/xi| exp(-z/lam1) bounds the bracket
            c = self.zeta * np.sum(np.abs(1.0 / self.dist.xi))
            hi = np.maximum(lo, self.dist.lambdas[0] * np.log(c / np.maximum(1.0 - q, 1e-300))) + 1.0
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                below = self._upper_cdf(mid) < q
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
                if np.all(hi - lo <= 1e-12 * np.maximum(1.0, hi)):
                    break
            out = out.copy()
            out[up] = 0.5 * (lo + hi)
        return out

    def sample_max(self, rng: np.random.Generator, trials: int) -> np.ndarray:
        """Draw the maximum of `K` i.i.d. samples, `trials` times.

        Uses ``max = F^{-1}(U^{1/K})``, which is exact for i.i.d. draws.
        """
        return self.ppf(rng.random(trials) ** (1.0 / self.K))


@dataclass(frozen=True)
class TailResult:
    K: int
    u_K: float
    trials: int
    exceed: int
    freq: float
    stderr: float
    c_hat: float
    inconclusive: bool = False


def evt_tail_check(spec: TailBoundSpec, trials: int, rng: np.random.Generator) -> TailResult:
    """Empirical ``Pr{Z_max > u_K}`` over `trials` maxima of `K` samples.

    ``c_hat = K (1 - freq)`` is the fitted constant of the ``1 - c/K`` law.
    The result is inconclusive when ``u_K`` falls below ``z_tau``.
    """
    u = spec.u_K
    if u < spec.z_tau:
        return TailResult(spec.K, u, 0, 0, np.nan, np.nan, np.nan, True)
    zmax = spec.sample_max(rng, trials)
    hit = int(np.sum(zmax > u))
    f = hit / trials
    se = np.sqrt(max(f * (1.0 - f), 1.0 / trials) / trials)
    return TailResult(spec.K, u, trials, hit, f, se, spec.K * (1.0 - f))


def exponential_exceedance(K: int) -> float:
    """Exact ``Pr{max of K Exp(1) > log K - log log K} = 1 - (1 - log K / K)^K``."""
    return 1.0 - (1.0 - np.log(K) / K) ** K


def evt_constant_stability(lambdas, zeta: float, Ks: Sequence[int], rng: np.random.Generator,
                           trials: int = 10_000, min_misses: int = 200):
    """Fit ``c`` at every K and return ``(results, max_ratio)``.

    Trials grow with K so that about `min_misses` non-exceedances are
    expected (``c`` near 1), which keeps the fitted constants comparable.
    ``max_ratio`` is the largest ratio between fitted constants.
    """
    res = []
    for K in Ks:
        n = max(trials, int(min_misses * K))
        res.append(evt_tail_check(TailBoundSpec(tuple(lambdas), zeta, int(K)), n, rng))
    cs = np.array([r.c_hat for r in res])
    ratio = float(cs.max() / cs.min()) if np.all(cs > 0) else np.inf
    return res, ratio


# --------------------------------------------------------------------------
# Sum-rate scaling
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class SlopeFit:
    """Least-squares fit of mean sum rate (nats) on ``log log K'``.

    ``predicted`` is ``sum_g r_g log(1 + rho lam_{g,1} log K')`` on the grid.
    """

    K_grid: tuple
    means: np.ndarray
    slope: float
    intercept: float
    beta: int
    predicted: np.ndarray
    n_groups: int = 1

    @property
    def ratio_to_beta(self) -> float:
        return self.slope / self.beta

    @property
    def predicted_slope(self) -> float:
        x = np.log(np.log(self.K_prime))
        return float(np.polyfit(x, self.predicted, 1)[0])

    @property
    def K_prime(self) -> np.ndarray:
        return np.asarray(self.K_grid, dtype=float) / self.n_groups


def fit_loglog_slope(K_grid: Sequence[int], means: Sequence[float], groups: Sequence[GroupProfile],
                     rho: float, M: int) -> SlopeFit:
    """Regress `means` (nats) on ``log log (K / G)``."""
    if len(K_grid) < 3:
        raise ValueError("need at least three grid points")
    G = len(groups)
    Kp = np.asarray(K_grid, dtype=float) / G
    if np.any(Kp <= np.e):
        raise ValueError("K / G must exceed e")
    x = np.log(np.log(Kp))
    slope, icpt = np.polyfit(x, np.asarray(means, dtype=float), 1)
    beta = min(M, sum(p.rank for p in groups))
    pred = sum(p.r_star * np.log1p(rho * p.lambdas[0] * np.log(Kp)) for p in groups)
    return SlopeFit(tuple(int(k) for k in K_grid), np.asarray(means, dtype=float), float(slope),
                    float(icpt), int(beta), np.asarray(pred), G)


def scaling_slope_fit(scheme: str, scenario, K_grid: Sequence[int], trials: int,
                      alpha: float | None = None, seed: int | None = None) -> SlopeFit:
    """Run `scheme` of `scenario` over `K_grid` and fit the log log slope.

    `scheme` is ``"redos"`` (at fixed `alpha`) or ``"dpc"``.
    """
    from .harness import mean_rates_nats

    means = mean_rates_nats(scenario, scheme, K_grid, trials, alpha=alpha, seed=seed)
    groups = scenario.profiles(K_grid[0])
    return fit_loglog_slope(K_grid, means, groups, scenario.rho, groups[0].M)


# --------------------------------------------------------------------------
# Quasi-SINR tail sandwich
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class SandwichResult:
    """Empirical CCDF lower bound check for one group and beam.

    ``lhs`` is ``Pr{phi >= z}``; ``rhs`` is ``zeta Pr{||g||^2 >= z (1/rho + eps)}``.
    ``cond_ccdf`` and ``ccdf`` compare ``||g||^2`` inside the cone with its
    unconditional law.
    """

    z: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    sigma: np.ndarray
    zeta: float
    eps: float
    cond_ccdf: np.ndarray
    ccdf: np.ndarray
    cond_sigma: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(self.lhs + 3.0 * self.sigma >= self.rhs))

    @property
    def lemma4_passed(self) -> bool:
        return bool(np.all(self.cond_ccdf + 3.0 * self.cond_sigma >= self.ccdf))


def ccdf_sandwich_check(groups: Sequence[GroupProfile], g: int, beam: int, alpha: float,
                        rho: float, n: int, rng: np.random.Generator, z=None,
                        eps: float | None = None) -> SandwichResult:
    """Check the quasi-SINR CCDF lower bound of a group and beam by simulation.

    ``phi`` is the quasi-SINR of a user whose channel lies in cone `beam` and
    zero otherwise.  ``zeta`` is estimated as the product of the measured cone
    and interference-cap probabilities; `eps` defaults to the median of
    ``r_star * intergroup_power``.
    """
    profs = [p.with_users(n) for p in groups]
    batch = sample_channels(profs, rng)
    ch = batch.channels[g]
    r = profs[g].r_star
    b, top = best_beam(ch.G)
    in_cone = (b == beam) & (top >= alpha)
    load = r * ch.intergroup_power
    if eps is None:
        eps = float(np.median(load))
    eps = max(eps, 1e-12)
    capped = load <= eps
    zeta = float(in_cone.mean() * capped.mean())
    phi = np.where(in_cone, quasi_sinr(ch.gain, ch.intergroup_power, rho, r), 0.0)
    if z is None:
        z = np.quantile(phi[in_cone], [0.1, 0.3, 0.5, 0.7, 0.9]) if in_cone.any() else np.zeros(1)
    z = np.asarray(z, dtype=float)
    lhs = np.array([np.mean(phi >= zz) for zz in z])
    sigma = np.sqrt(np.maximum(lhs * (1.0 - lhs), 1.0 / n) / n)
    try:
        law = GenChiSquare(profs[g].lambdas[:r])
        tail = law.ccdf(z * (1.0 / rho + eps))
        zg = np.quantile(ch.gain, [0.25, 0.5, 0.75, 0.95])
        uncond = law.ccdf(zg)
    except ValueError:
        tail = np.array([np.mean(ch.gain >= zz * (1.0 / rho + eps)) for zz in z])
        zg = np.quantile(ch.gain, [0.25, 0.5, 0.75, 0.95])
        uncond = np.array([np.mean(ch.gain >= zz) for zz in zg])
    m = max(int(in_cone.sum()), 1)
    cond = np.array([np.mean(ch.gain[in_cone] >= zz) if in_cone.any() else 0.0 for zz in zg])
    csig = np.sqrt(np.maximum(cond * (1.0 - cond), 1.0 / m) / m)
    return SandwichResult(z, lhs, zeta * tail, sigma, zeta, eps, cond, uncond, csig)
