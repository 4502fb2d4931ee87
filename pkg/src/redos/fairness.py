"""Round-robin and proportional-fair scheduling built on cone selection.

Both schedulers adapt the cone threshold ``alpha`` over scheduling
intervals.  Round robin adapts one threshold per group at the base station;
proportional fair lets every user adapt its own threshold, which is how it
saves CQI feedback.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .beamforming import EQUAL
from .channel import ChannelBatch
from .metrics import FeedbackTally, evaluate_rates, tally_feedback, zf_transmission
from .scheduling import GroupSchedule, ScheduleOutcome, alpha_min, quasi_sinr, redos_group

__all__ = [
    "FairnessState",
    "RrRound",
    "PfRun",
    "rr_round",
    "pf_interval",
    "run_pf",
    "step_alpha",
]

ALPHA_TOL = 1e-12


def step_alpha(alpha, step, a_min: float):
    """Move thresholds by `step` and keep them in ``[a_min, 1)``.

    Down-steps that would undershoot land on ``a_min``; up-steps that would
    reach 1 keep the old value.
    """
    alpha = np.asarray(alpha, dtype=float)
    new = alpha + step
    new = np.where(new >= 1.0, alpha, new)
    return np.maximum(new, a_min)


@dataclass
class FairnessState:
    """Mutable scheduler state shared by the RR and PF wrappers.

    Attributes
    ----------
    r_stars : tuple of int
        Streams per group.
    alpha_group : np.ndarray
        Per-group threshold (RR).
    alpha_user : list of np.ndarray
        Per-user thresholds (PF).
    mu : list of np.ndarray
        Average served rates (nats), strictly positive.
    pool : list of np.ndarray
        Boolean masks of users not yet served in the current RR round.
    """

    r_stars: tuple[int, ...]
    alpha_group: np.ndarray
    alpha_user: list[np.ndarray]
    mu: list[np.ndarray]
    pool: list[np.ndarray]
    delta: float = 0.01
    d_alpha: float = 0.05
    d_up: float = 0.1
    d_down: float = 0.002
    adaptive: bool = True

    @classmethod
    def initial(cls, group_sizes: Sequence[int], r_stars: Sequence[int], alpha0=None,
                mu0: float = 0.1, delta: float = 0.01, d_alpha: float = 0.05,
                d_up: float = 0.1, d_down: float = 0.002, adaptive: bool = True) -> "FairnessState":
        """Fresh state; thresholds start at ``alpha0`` (default ``alpha_min``)."""
        if len(group_sizes) != len(r_stars):
            raise ValueError("group_sizes and r_stars differ in length")
        if not 0.0 < delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if mu0 <= 0:
            raise ValueError("initial mu must be positive")
        if d_alpha <= 0:
            raise ValueError("d_alpha must be positive")
        if adaptive and not d_up > d_down > 0:
            raise ValueError("need d_up > d_down > 0")
        mins = np.array([alpha_min(r) for r in r_stars])
        a0 = mins if alpha0 is None else np.broadcast_to(np.asarray(alpha0, dtype=float), mins.shape).copy()
        if np.any(a0 < mins - ALPHA_TOL) or np.any(a0 >= 1.0):
            raise ValueError("initial alpha must lie in [alpha_min, 1)")
        return cls(
            r_stars=tuple(int(r) for r in r_stars),
            alpha_group=a0.astype(float),
            alpha_user=[np.full(K, a) for K, a in zip(group_sizes, a0)],
            mu=[np.full(K, float(mu0)) for K in group_sizes],
            pool=[np.ones(K, dtype=bool) for K in group_sizes],
            delta=delta, d_alpha=d_alpha, d_up=d_up, d_down=d_down, adaptive=adaptive,
        )

    @property
    def alpha_mins(self) -> np.ndarray:
        return np.array([alpha_min(r) for r in self.r_stars])

    def reset_pool(self) -> None:
        self.pool = [np.ones_like(p) for p in self.pool]


def _batches(source) -> Iterator[ChannelBatch]:
    if callable(source):
        t = 0
        while True:
            yield source(t)
            t += 1
    else:
        yield from source


@dataclass
class RrRound:
    """Outcome of one round-robin round.

    ``served[g]`` lists the users of group ``g`` in service order and
    ``rates[g]`` their served rates (nats); ``intervals[g]`` gives the
    interval in which each was served.
    """

    served: list[list[int]]
    rates: list[list[float]]
    intervals: list[list[int]]
    n_intervals: int
    feedback: FeedbackTally
    alpha_trace: list[np.ndarray] = field(default_factory=list)


def rr_round(state: FairnessState, batch_stream: Iterable[ChannelBatch] | Callable[[int], ChannelBatch],
             rho: float) -> RrRound:
    """Serve every user once with cone selection and per-group threshold adaptation.

    Each interval, users still in the pool report their best beam; those in
    a cone add their quasi-SINR.  A group whose pool holds fewer than
    ``r_star`` users serves all of them and finishes.

    Parameters
    ----------
    state : FairnessState
        Modified in place; its pool is refilled at the start.
    batch_stream : iterable or callable
        Channel realisations per interval, or ``t -> ChannelBatch``.
    rho : float
        Per-stream power.

    Raises
    ------
    RuntimeError
        If the round exceeds ``|K_g| (2 + ceil(1 / d_alpha))`` intervals.
    """
    state.reset_pool()
    G = len(state.r_stars)
    sizes = [len(p) for p in state.pool]
    budget = max((K * (2 + math.ceil(1.0 / state.d_alpha)) for K in sizes), default=0)
    served = [[] for _ in range(G)]
    rates = [[] for _ in range(G)]
    when = [[] for _ in range(G)]
    tally = FeedbackTally("redos_rr")
    trace = []
    mins = state.alpha_mins
    t = 0
    stream = _batches(batch_stream)
    while any(p.any() for p in state.pool):
        if t >= budget:
            raise RuntimeError(f"round-robin round exceeded {budget} intervals")
        batch = next(stream)
        if len(batch) != G:
            raise ValueError("batch does not match the state's groups")
        scheds = []
        for g, ch in enumerate(batch.channels):
            pool = state.pool[g]
            r = state.r_stars[g]
            if not pool.any():
                scheds.append(GroupSchedule(np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(r, dtype=int)))
                continue
            if pool.sum() < r:
                rest = np.flatnonzero(pool)
                scheds.append(GroupSchedule(rest, np.arange(rest.size), np.zeros(r, dtype=int)))
                continue
            s = redos_group(ch.G, ch.intergroup_power, state.alpha_group[g], rho,
                            active=pool, index_only=True)
            scheds.append(s)
            step = state.d_alpha if len(s) == r else -state.d_alpha
            state.alpha_group[g] = step_alpha(state.alpha_group[g], step, mins[g])
        outcome = ScheduleOutcome("redos_rr", tuple(scheds))
        tx = zf_transmission(outcome, batch, rho, EQUAL)
        report = evaluate_rates(batch, tx)
        tally = tally + tally_feedback(outcome, "redos", [c.n_users for c in batch.channels], state.r_stars)
        for g, s in enumerate(scheds):
            for u, rate in zip(s.users, report.rates[g]):
                served[g].append(int(u))
                rates[g].append(float(rate))
                when[g].append(t)
            state.pool[g][s.users] = False
        trace.append(state.alpha_group.copy())
        t += 1
    return RrRound(served, rates, when, t, tally, trace)


def pf_interval(state: FairnessState, batch: ChannelBatch, rho: float,
                delta: float | None = None) -> tuple[ScheduleOutcome, FairnessState]:
    """One proportional-fair interval.

    Users in a cone under their own threshold report; per beam the base
    station picks the largest ``log(1 + quasi-SINR) / mu``.  Served users'
    averages absorb the actual equal-power ZF rate.  With
    ``state.adaptive`` served users raise their threshold by ``d_up`` and
    the others lower it by ``d_down``.

    The state is updated in place and also returned.
    """
    outcome, _ = _pf_step(state, batch, rho, delta)
    return outcome, state


def _pf_step(state, batch, rho, delta=None):
    delta = state.delta if delta is None else delta
    scheds = []
    mins = state.alpha_mins
    for g, ch in enumerate(batch.channels):
        r = state.r_stars[g]
        qs = quasi_sinr(ch.gain, ch.intergroup_power, rho, r)
        score = np.log1p(qs) / state.mu[g]
        scheds.append(redos_group(ch.G, ch.intergroup_power, state.alpha_user[g], rho, score=score))
    outcome = ScheduleOutcome("redos_pf", tuple(scheds))
    report = evaluate_rates(batch, zf_transmission(outcome, batch, rho, EQUAL))
    for g, s in enumerate(scheds):
        got = np.zeros(len(state.mu[g]))
        got[s.users] = report.rates[g]
        hit = np.zeros(len(got), dtype=bool)
        hit[s.users] = True
        state.mu[g] = (1.0 - delta) * state.mu[g] + delta * got
        if state.adaptive:
            step = np.where(hit, state.d_up, -state.d_down)
            state.alpha_user[g] = step_alpha(state.alpha_user[g], step, mins[g])
    return outcome, report


@dataclass
class PfRun:
    """Aggregates of a proportional-fair run.

    ``served_counts[g][k]`` counts intervals in which user ``k`` was served,
    ``mean_rate[g][k]`` is its served rate (nats) averaged over all
    intervals, ``sum_rates`` the per-interval sum rate (nats) and
    ``reports`` the CQI reports filed per interval.
    """

    served_counts: list[np.ndarray]
    mean_rate: list[np.ndarray]
    sum_rates: np.ndarray
    reports: np.ndarray
    n_intervals: int
    alpha_range: tuple[float, float]

    @property
    def served_fraction(self) -> list[np.ndarray]:
        return [c / self.n_intervals for c in self.served_counts]

    @property
    def total_reports(self) -> int:
        return int(self.reports.sum())


def run_pf(state: FairnessState, batch_stream, rho: float, n_intervals: int) -> PfRun:
    """Run :func:`pf_interval` over `n_intervals` channel realisations."""
    counts = [np.zeros(len(m), dtype=int) for m in state.mu]
    totals = [np.zeros(len(m)) for m in state.mu]
    reports = np.zeros(n_intervals, dtype=int)
    sums = np.zeros(n_intervals)
    lo, hi = np.inf, -np.inf
    stream = _batches(batch_stream)
    for t in range(n_intervals):
        batch = next(stream)
        outcome, rep = _pf_step(state, batch, rho)
        for g, s in enumerate(outcome.groups):
            counts[g][s.users] += 1
            totals[g][s.users] += rep.rates[g]
        sums[t] = rep.sum_rate
        reports[t] = sum(s.n_reports for s in outcome.groups)
        for a in state.alpha_user:
            if a.size:
                lo, hi = min(lo, float(a.min())), max(hi, float(a.max()))
    return PfRun(counts, [x / n_intervals for x in totals], sums, reports, n_intervals, (lo, hi))
