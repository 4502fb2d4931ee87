"""User selection: reference-cone selection (ReDOS-PBR), RBF, SUS and greedy DPC.

All selection functions work on a :class:`~redos.channel.ChannelBatch` and
return a :class:`ScheduleOutcome` holding, per group, the selected users in
beam-slot order together with the CQI statistics the feedback tally needs.
Beam indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from .channel import ChannelBatch

__all__ = [
    "CqiReport",
    "GroupSchedule",
    "ScheduleOutcome",
    "DpcResult",
    "NORM",
    "QUASI_SINR",
    "alpha_min",
    "candidate_set",
    "best_beam",
    "quasi_sinr",
    "cqi_reports",
    "redos_group",
    "redos_select",
    "rbf_sinr",
    "rbf_select",
    "sus_group",
    "sus_select",
    "greedy_dpc",
    "greedy_dpc_select",
    "dpc_rate",
]

NORM = "norm"
QUASI_SINR = "quasi_sinr"
TIE_TOL = 1e-12


@dataclass(frozen=True)
class CqiReport:
    """Uplink CQI of one user: best reference beam and, if in a cone, its quasi-SINR."""

    user: int
    beam: int
    quasi_sinr: float | None


@dataclass(frozen=True, eq=False)
class GroupSchedule:
    """Selection result for one group.

    Attributes
    ----------
    users : np.ndarray
        Selected user indices, in slot order.
    beams : np.ndarray
        Slot of each selected user (reference beam for cone/RBF schemes,
        selection step for SUS).
    candidate_sizes : np.ndarray
        Per reference beam, the number of users that filed a CQI report for
        it (``|W_{g,i}|``).
    n_index_only : int
        Users that reported a beam index without a quality value.
    """

    users: np.ndarray
    beams: np.ndarray
    candidate_sizes: np.ndarray
    n_index_only: int = 0

    @property
    def n_reports(self) -> int:
        return int(np.sum(self.candidate_sizes))

    def __len__(self) -> int:
        return len(self.users)


@dataclass(frozen=True, eq=False)
class ScheduleOutcome:
    scheme: str
    groups: tuple[GroupSchedule, ...]

    @property
    def n_scheduled(self) -> int:
        return sum(len(g) for g in self.groups)


@dataclass(frozen=True, eq=False)
class DpcResult:
    """Greedy DPC selection over all users of all groups."""

    users: tuple[tuple[int, int], ...]
    diag: np.ndarray
    rate: float


def alpha_min(r_star: int) -> float:
    """Largest cone threshold for which every user lands in some cone."""
    return 1.0 / np.sqrt(r_star)


def _normalized_magnitudes(G: np.ndarray) -> np.ndarray:
    G = np.atleast_2d(G)
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        mags = np.abs(G) / norms
    return np.where(norms > 0, mags, 0.0)


def candidate_set(g_eff: np.ndarray, alpha: float) -> np.ndarray:
    """Beams ``i`` with ``|g_i| / ||g|| >= alpha``; empty for a zero vector."""
    mags = _normalized_magnitudes(np.asarray(g_eff)[None, :])[0]
    return np.flatnonzero(mags >= alpha) if np.any(mags > 0) else np.zeros(0, dtype=int)


def best_beam(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per row: index and value of the largest normalised entry magnitude."""
    mags = _normalized_magnitudes(G)
    beam = np.argmax(mags, axis=1)
    return beam, mags[np.arange(mags.shape[0]), beam]


def quasi_sinr(gain, intergroup_power, rho: float, r_star: int):
    """``||g||^2 / (1/rho + r_star * intergroup_power)``.

    ``rho = np.inf`` gives the interference-limited form.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    return np.asarray(gain) / (1.0 / rho + r_star * np.asarray(intergroup_power))


def _argmax_low(scores: np.ndarray, idx: np.ndarray) -> int:
    # ties within TIE_TOL go to the lowest user index
    best = scores.max()
    near = scores >= best - TIE_TOL * max(1.0, abs(best))
    return int(idx[near].min())


def _pick_per_beam(beam, eligible, scores, n_beams):
    users, beams = [], []
    sizes = np.bincount(beam[eligible], minlength=n_beams)
    for i in range(n_beams):
        members = np.flatnonzero(eligible & (beam == i))
        if members.size:
            users.append(_argmax_low(scores[members], members))
            beams.append(i)
    return np.array(users, dtype=int), np.array(beams, dtype=int), sizes


def redos_group(G: np.ndarray, intergroup_power: np.ndarray, alpha, rho: float,
                active: np.ndarray | None = None, score: np.ndarray | None = None,
                index_only: bool = False) -> GroupSchedule:
    """Cone-based selection within one group.

    Parameters
    ----------
    G : np.ndarray
        K x r_star effective channels (rows ``g_k^H``).
    intergroup_power : np.ndarray
        Per-user ``sum_{g' != g} ||h_k^H V_g'||^2``.
    alpha : float or np.ndarray
        Cone threshold, shared or per user.
    rho : float
        Per-stream power.
    active : np.ndarray of bool, optional
        Users taking part in this interval (others stay silent).
    score : np.ndarray, optional
        Selection metric replacing the quasi-SINR (e.g. a PF ratio).
    index_only : bool
        Users outside every cone still report their best beam index.
    """
    K, r_star = G.shape
    beam, top = best_beam(G)
    active = np.ones(K, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    gain = np.sum(np.abs(G) ** 2, axis=1)
    in_cone = active & (gain > 0) & (top >= np.asarray(alpha))
    if score is None:
        score = quasi_sinr(gain, intergroup_power, rho, r_star)
    users, beams, sizes = _pick_per_beam(beam, in_cone, np.asarray(score, dtype=float), r_star)
    n_idx = int(np.sum(active & ~in_cone)) if index_only else 0
    return GroupSchedule(users, beams, sizes, n_idx)


def cqi_reports(G: np.ndarray, intergroup_power: np.ndarray, alpha: float, rho: float,
                index_only: bool = False) -> list[CqiReport]:
    """Per-user CQI reports as filed in the uplink."""
    beam, top = best_beam(G)
    qs = quasi_sinr(np.sum(np.abs(G) ** 2, axis=1), intergroup_power, rho, G.shape[1])
    out = []
    for k in range(G.shape[0]):
        if top[k] >= alpha and top[k] > 0:
            out.append(CqiReport(k, int(beam[k]), float(qs[k])))
        elif index_only:
            out.append(CqiReport(k, int(beam[k]), None))
    return out


def redos_select(batch: ChannelBatch, alpha, rho: float) -> ScheduleOutcome:
    """Reference-cone selection in every group.

    `alpha` may be a scalar or one value per group.
    """
    alphas = np.broadcast_to(np.asarray(alpha, dtype=float), (len(batch),))
    groups = tuple(
        redos_group(ch.G, ch.intergroup_power, a, rho)
        for ch, a in zip(batch.channels, alphas)
    )
    return ScheduleOutcome("redos", groups)


def rbf_sinr(G: np.ndarray, intergroup_power: np.ndarray, rho: float) -> np.ndarray:
    """K x r_star per-beam SINRs with every reference beam at power `rho`.

    Inter-group interference enters as ``rho * r_star * intergroup_power``,
    the same bound the quasi-SINR uses.
    """
    p = rho * np.abs(G) ** 2
    r_star = G.shape[1]
    denom = 1.0 + p.sum(axis=1, keepdims=True) - p + rho * r_star * np.asarray(intergroup_power)[:, None]
    return p / denom


def rbf_select(batch: ChannelBatch, rho: float) -> ScheduleOutcome:
    """Random (orthogonal) beamforming on the reference beams ``u_{g,i}``."""
    groups = []
    for ch in batch.channels:
        sinr = rbf_sinr(ch.G, ch.intergroup_power, rho)
        beam = np.argmax(sinr, axis=1)
        best = sinr[np.arange(sinr.shape[0]), beam]
        eligible = np.ones(sinr.shape[0], dtype=bool)
        users, beams, sizes = _pick_per_beam(beam, eligible, best, ch.G.shape[1])
        groups.append(GroupSchedule(users, beams, sizes))
    return ScheduleOutcome("rbf", tuple(groups))


def sus_group(G: np.ndarray, metric: np.ndarray, gamma_slab: float) -> GroupSchedule:
    """Semi-orthogonal user selection within one group.

    Repeatedly takes the user with the largest `metric` among the remaining
    candidates, then keeps only candidates whose normalised coherence with
    the new user is at most `gamma_slab`.
    """
    K, r_star = G.shape
    norms = np.linalg.norm(G, axis=1)
    pool = norms > 0
    metric = np.asarray(metric, dtype=float)
    users: list[int] = []
    while pool.any() and len(users) < r_star:
        idx = np.flatnonzero(pool)
        k = _argmax_low(metric[idx], idx)
        users.append(k)
        pool[k] = False
        coh = np.abs(G @ G[k].conj()) / (norms * norms[k])
        pool &= coh <= gamma_slab
    return GroupSchedule(np.array(users, dtype=int), np.arange(len(users)), np.zeros(r_star, dtype=int))


def sus_select(batch: ChannelBatch, gamma_slab: float, rho: float,
               criterion: str = QUASI_SINR) -> ScheduleOutcome:
    """SUS on effective channels with the norm or quasi-SINR criterion."""
    groups = []
    for ch in batch.channels:
        if criterion == NORM:
            metric = ch.gain
        elif criterion == QUASI_SINR:
            metric = quasi_sinr(ch.gain, ch.intergroup_power, rho, ch.G.shape[1])
        else:
            raise ValueError(f"unknown SUS criterion {criterion!r}")
        groups.append(sus_group(ch.G, metric, gamma_slab))
    return ScheduleOutcome(f"sus_{criterion}", tuple(groups))


def dpc_rate(H_rows: np.ndarray, rho: float) -> float:
    """``sum_i log(1 + rho R_ii^2)`` from the QR factorisation of ``H_rows^H``."""
    H_rows = np.atleast_2d(H_rows)
    if H_rows.shape[0] == 0:
        return 0.0
    R = np.linalg.qr(H_rows.conj().T, mode="r")
    return float(np.sum(np.log1p(rho * np.abs(np.diag(R)) ** 2)))


def greedy_dpc(H_rows: np.ndarray, rho: float, max_streams: int) -> tuple[np.ndarray, np.ndarray]:
    """Greedy QR-based user ordering for DPC.

    Each step adds the user whose component orthogonal to the already
    selected channels is largest, which is the user increasing the DPC
    sum rate most.

    Returns
    -------
    order : np.ndarray
        Selected row indices in encoding order.
    diag : np.ndarray
        Magnitudes of the QR diagonal ``R_ii`` for the selected users.
    """
    resid = np.array(H_rows, dtype=complex)
    order, diag = [], []
    for _ in range(min(max_streams, resid.shape[0], resid.shape[1])):
        norms2 = np.sum(np.abs(resid) ** 2, axis=1)
        if order:
            norms2[order] = -1.0
        k = int(np.argmax(norms2))
        if np.log1p(rho * max(norms2[k], 0.0)) <= 1e-15:
            break
        q = resid[k] / np.sqrt(norms2[k])
        order.append(k)
        diag.append(np.sqrt(norms2[k]))
        resid = resid - np.outer(resid @ q.conj(), q)
    return np.array(order, dtype=int), np.array(diag)


def greedy_dpc_select(batch: ChannelBatch, rho: float, max_streams: int | None = None) -> DpcResult:
    """Greedy DPC over the full channels of all users in all groups.

    `max_streams` defaults to ``min(M, sum_g r_g)``.
    """
    owners = [(g, k) for g, ch in enumerate(batch.channels) for k in range(ch.n_users)]
    H = np.concatenate([ch.h for ch in batch.channels], axis=0)
    if max_streams is None:
        max_streams = min(batch.M, sum(p.rank for p in batch.groups))
    order, diag = greedy_dpc(H, rho, max_streams)
    rate = float(np.sum(np.log1p(rho * diag**2)))
    return DpcResult(tuple(owners[i] for i in order), diag, rate)


def exhaustive_dpc(H_rows: np.ndarray, rho: float, max_streams: int) -> float:
    """Best DPC rate over all ordered user subsets of size <= `max_streams`.

    Brute force; intended for small reference problems.
    """
    best = 0.0
    for s in range(1, max_streams + 1):
        for subset in combinations(range(H_rows.shape[0]), s):
            for perm in permutations(subset):
                best = max(best, dpc_rate(H_rows[list(perm)], rho))
    return best
