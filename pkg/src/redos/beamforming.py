"""Second-stage zero-forcing precoding, gain bounds and power allocation."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import linalg

from .channel import GroupProfile

__all__ = [
    "BdReport",
    "ZfPrecoder",
    "RankDeficientError",
    "check_approx_bd",
    "zf_precoder",
    "gershgorin_gain_bound",
    "allocate_power",
    "waterfill",
    "EQUAL",
    "WATERFILL",
]

EQUAL = "equal"
WATERFILL = "waterfill"

CHOLESKY_COND = 1e6
MAX_COND = 1e8


class RankDeficientError(np.linalg.LinAlgError):
    """Selected effective channels are (numerically) linearly dependent.

    The ``users`` attribute lists row indices of the selection whose channel
    lies closest to the span of the other rows.
    """

    def __init__(self, users: Sequence[int], cond: float):
        self.users = list(users)
        self.cond = cond
        super().__init__(f"rank-deficient selection (cond={cond:.3g}); offending rows {self.users}")


@dataclass(frozen=True)
class BdReport:
    """Per-group block-diagonalisation residuals."""

    residuals: tuple[float, ...]
    passed: tuple[bool, ...]
    tol: float

    @property
    def ok(self) -> bool:
        return all(self.passed)


def check_approx_bd(groups: Sequence[GroupProfile], tol: float = 1e-9) -> BdReport:
    """Check that each group's pre-beamformer is orthogonal to the others.

    For group ``g`` the residual is ``max_{g' != g} max|V_g^H V_g'|``.
    """
    res = []
    for g, prof in enumerate(groups):
        worst = 0.0
        for g2, other in enumerate(groups):
            if g2 != g:
                worst = max(worst, float(np.max(np.abs(prof.V.conj().T @ other.V))))
        res.append(worst)
    return BdReport(tuple(res), tuple(r <= tol for r in res), tol)


@dataclass(frozen=True, eq=False)
class ZfPrecoder:
    """Zero-forcing precoder for one group's selected users.

    Attributes
    ----------
    W_tilde : np.ndarray
        r_star x s unnormalised columns, ``G_sel @ W_tilde = I``.
    gammas : np.ndarray
        Effective channel gains ``1 / [(G G^H)^{-1}]_{ii}``.
    powers : np.ndarray or None
        Power scales ``P_i``; column ``i`` of the final precoder is
        ``sqrt(P_i) * W_tilde[:, i]`` with transmit power ``P_i / gamma_i``.
    """

    W_tilde: np.ndarray
    gammas: np.ndarray
    powers: np.ndarray | None = None

    @property
    def n_streams(self) -> int:
        return self.W_tilde.shape[1]

    @property
    def W(self) -> np.ndarray:
        if self.powers is None:
            raise ValueError("powers not allocated")
        return self.W_tilde * np.sqrt(self.powers)

    @property
    def transmit_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.W) ** 2, axis=0)


def _offending_rows(G: np.ndarray, k: int = 1) -> list[int]:
    # distance of each row to the span of the others, relative to its norm
    dist = []
    for i in range(G.shape[0]):
        others = np.delete(G, i, axis=0)
        row = G[i]
        if others.size:
            Q, _ = np.linalg.qr(others.conj().T)
            resid = row.conj() - Q @ (Q.conj().T @ row.conj())
            dist.append(np.linalg.norm(resid) / max(np.linalg.norm(row), 1e-300))
        else:
            dist.append(np.linalg.norm(row))
    order = np.argsort(dist)
    return [int(i) for i in order[:k]]


def zf_precoder(G_sel: np.ndarray) -> ZfPrecoder:
    """Zero-forcing precoder ``G^H (G G^H)^{-1}`` for rows of `G_sel`.

    Uses a Cholesky solve on the Gram matrix when it is well conditioned and
    an SVD-based pseudo-inverse otherwise.

    Raises
    ------
    RankDeficientError
        If the condition number of `G_sel` exceeds 1e8.
    """
    G = np.atleast_2d(np.asarray(G_sel, dtype=complex))
    s, r = G.shape
    if s == 0:
        return ZfPrecoder(np.zeros((r, 0), dtype=complex), np.zeros(0))
    if s > r:
        raise RankDeficientError(_offending_rows(G, s - r), np.inf)
    sv = np.linalg.svd(G, compute_uv=False)
    cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
    if cond > MAX_COND:
        raise RankDeficientError(_offending_rows(G), cond)
    gram = G @ G.conj().T
    if cond < CHOLESKY_COND:
        c = linalg.cho_factor(gram, lower=True)
        gram_inv = linalg.cho_solve(c, np.eye(s))
        W_tilde = G.conj().T @ gram_inv
    else:
        W_tilde = np.linalg.pinv(G)
        gram_inv = W_tilde.conj().T @ W_tilde
    gammas = 1.0 / np.real(np.diag(gram_inv))
    return ZfPrecoder(W_tilde, gammas)


def gershgorin_gain_bound(alpha: float, r_star: int) -> float:
    """Certified factor ``c`` with ``gamma_i >= c * ||g_i||^2``.

    Valid for users taken from distinct selection cones of half-width
    ``alpha >= 1/sqrt(2)``: ``c = max(0, 1 - (r_star - 1) 2 alpha sqrt(1 - alpha^2))``.
    """
    if alpha < 1.0 / np.sqrt(2.0) - 1e-15 or alpha > 1.0:
        raise ValueError("gain bound requires 1/sqrt(2) <= alpha <= 1")
    coherence = 2.0 * alpha * np.sqrt(max(0.0, 1.0 - alpha * alpha))
    return max(0.0, 1.0 - (r_star - 1) * coherence)


def waterfill(gains: np.ndarray, budget: float, tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Maximise ``sum log(1 + gains_i q_i)`` subject to ``sum q_i <= budget``.

    Returns the allocation ``q`` and water level ``mu`` with
    ``q_i = max(0, mu - 1 / gains_i)``.  The level is bracketed by bisection
    and then fixed exactly on the resulting active set, so the budget is met
    with equality.
    """
    gains = np.asarray(gains, dtype=float)
    if budget <= 0:
        raise ValueError("budget must be positive")
    if not np.any(gains > 0):
        raise ValueError("all gains are zero")
    floor = np.full_like(gains, np.inf)
    floor[gains > 0] = 1.0 / gains[gains > 0]
    lo, hi = floor.min(), floor.min() + budget
    while hi - lo > tol * budget:
        mid = 0.5 * (lo + hi)
        if np.sum(np.maximum(0.0, mid - floor)) > budget:
            hi = mid
        else:
            lo = mid
    active = floor < hi
    for _ in range(gains.size):
        mu = (budget + floor[active].sum()) / active.sum()
        # a marginal user can fall out once the level is exact
        if np.array_equal(floor < mu, active):
            break
        active = floor < mu
    q = np.where(active, mu - floor, 0.0)
    return np.maximum(q, 0.0), float(mu)


def allocate_power(precoder: ZfPrecoder, noise: np.ndarray, budget: float,
                   mode: str = EQUAL) -> ZfPrecoder:
    """Set the power scales of `precoder`.

    Parameters
    ----------
    precoder : ZfPrecoder
        Precoder from :func:`zf_precoder`.
    noise : np.ndarray
        Per-user noise-plus-interference powers ``N_i``.
    budget : float
        Group budget ``r_star * rho`` on ``sum_i P_i / gamma_i``.
    mode : {"equal", "waterfill"}
        ``equal`` gives every stream transmit power ``budget / r_star``;
        ``waterfill`` maximises ``sum log(1 + P_i / N_i)``.
    """
    gammas = np.asarray(precoder.gammas, dtype=float)
    if gammas.size == 0:
        return replace(precoder, powers=np.zeros(0))
    if not np.any(gammas > 0):
        raise ValueError("all effective gains are zero")
    if mode == EQUAL:
        rho = budget / precoder.W_tilde.shape[0]
        return replace(precoder, powers=rho * gammas)
    if mode == WATERFILL:
        noise = np.broadcast_to(np.asarray(noise, dtype=float), gammas.shape)
        q, _ = waterfill(gammas / noise, budget)
        return replace(precoder, powers=q * gammas)
    raise ValueError(f"unknown power mode {mode!r}")
