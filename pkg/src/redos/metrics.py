"""Rate evaluation under the multi-group signal model and feedback accounting."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .beamforming import EQUAL, WATERFILL, allocate_power, zf_precoder
from .channel import ChannelBatch
from .scheduling import ScheduleOutcome

__all__ = [
    "Transmission",
    "RateReport",
    "FeedbackTally",
    "zf_transmission",
    "rbf_transmission",
    "evaluate_rates",
    "tally_feedback",
    "ZF_RESIDUAL_TOL",
]

ZF_RESIDUAL_TOL = 1e-9


class InvariantViolation(AssertionError):
    """A simulation-time invariant (e.g. zero intra-group leakage) failed."""


@dataclass(frozen=True, eq=False)
class Transmission:
    """Per-group selected users and their second-stage precoders.

    ``W[g]`` is r_star_g x len(users[g]); column ``i`` serves ``users[g][i]``.
    """

    users: tuple[np.ndarray, ...]
    W: tuple[np.ndarray, ...]
    zero_forcing: bool = True


@dataclass(frozen=True, eq=False)
class RateReport:
    """Per-user rates (nats) of every group and their sum."""

    rates: tuple[np.ndarray, ...]

    @property
    def sum_rate(self) -> float:
        return float(sum(r.sum() for r in self.rates))

    @property
    def sum_rate_bits(self) -> float:
        return self.sum_rate / np.log(2.0)


def _received(batch: ChannelBatch, tx: Transmission):
    """Signal and interference powers for every scheduled user."""
    G = len(batch)
    out = []
    for g in range(G):
        users = tx.users[g]
        if len(users) == 0:
            out.append((np.zeros(0), np.zeros(0), np.zeros(0)))
            continue
        own = batch.channels[g].G[users] @ tx.W[g]  # s x s
        sig = np.abs(np.diag(own)) ** 2
        intra = np.sum(np.abs(own) ** 2, axis=1) - sig
        inter = np.zeros(len(users))
        for g2 in range(G):
            if g2 != g and len(tx.users[g2]):
                cross = batch.cross_channel(g, g2, users) @ tx.W[g2]
                inter += np.sum(np.abs(cross) ** 2, axis=1)
        out.append((sig, intra, inter))
    return out


def zf_transmission(outcome: ScheduleOutcome, batch: ChannelBatch, rho: float,
                    mode: str = EQUAL) -> Transmission:
    """ZF precoders with power allocation for every group of `outcome`.

    The per-group budget is ``r_star * rho``.  In water-filling mode the
    inter-group interference seen by each user is measured once with all
    groups at equal power, then every group re-allocates against it.
    """
    pre = []
    for prof, ch, sched in zip(batch.groups, batch.channels, outcome.groups):
        zf = zf_precoder(ch.G[sched.users]) if len(sched) else zf_precoder(np.zeros((0, prof.r_star)))
        pre.append(zf)
    users = tuple(s.users for s in outcome.groups)
    equal = [allocate_power(p, 1.0, prof.r_star * rho, EQUAL) for p, prof in zip(pre, batch.groups)]
    tx = Transmission(users, tuple(p.W for p in equal))
    if mode == EQUAL:
        return tx
    if mode != WATERFILL:
        raise ValueError(f"unknown power mode {mode!r}")
    noise = [1.0 + inter for _, _, inter in _received(batch, tx)]
    wf = [allocate_power(p, n, prof.r_star * rho, WATERFILL) if p.n_streams else p
          for p, n, prof in zip(pre, noise, batch.groups)]
    return Transmission(users, tuple(p.W if p.n_streams else np.zeros((prof.r_star, 0))
                                     for p, prof in zip(wf, batch.groups)))


def rbf_transmission(outcome: ScheduleOutcome, batch: ChannelBatch, rho: float) -> Transmission:
    """Reference beams as precoders, ``W_g = sqrt(rho) I`` restricted to filled beams."""
    W = tuple(np.sqrt(rho) * np.eye(prof.r_star)[:, s.beams]
              for prof, s in zip(batch.groups, outcome.groups))
    return Transmission(tuple(s.users for s in outcome.groups), W, zero_forcing=False)


def evaluate_rates(batch: ChannelBatch, tx: Transmission) -> RateReport:
    """Achievable rates ``log(1 + S / (1 + I_intra + I_inter))`` in nats.

    For ZF transmissions the intra-group leakage must be below 1e-9 of the
    signal power and is then dropped.

    Raises
    ------
    InvariantViolation
        If a ZF transmission leaks intra-group interference.
    """
    if len(tx.users) != len(batch) or len(tx.W) != len(batch):
        raise ValueError("transmission must cover every group")
    rates = []
    for sig, intra, inter in _received(batch, tx):
        if tx.zero_forcing:
            # users switched off by water-filling are judged against the group peak
            ref = np.where(sig > 0, sig, sig.max(initial=0.0))
            if np.any(intra > ZF_RESIDUAL_TOL * np.maximum(ref, 1e-300)):
                raise InvariantViolation("ZF precoder leaks intra-group interference")
            intra = np.zeros_like(intra)
        rates.append(np.log1p(sig / (1.0 + intra + inter)))
    return RateReport(tuple(rates))


@dataclass(frozen=True)
class FeedbackTally:
    """Uplink feedback volume of one scheduling interval.

    A complex CSI entry counts as two reals.
    """

    scheme: str
    integers: int = 0
    reals: int = 0

    def units(self, count_integers: bool = True) -> int:
        return self.reals + (self.integers if count_integers else 0)

    def __add__(self, other: "FeedbackTally") -> "FeedbackTally":
        return FeedbackTally(self.scheme, self.integers + other.integers, self.reals + other.reals)


def tally_feedback(outcome: ScheduleOutcome | None, scheme: str, group_sizes: Sequence[int],
                   r_stars: Sequence[int], M: int | None = None) -> FeedbackTally:
    """Count the feedback a scheme needs for one interval.

    ``redos``: one (index, quasi-SINR) pair per cone report plus effective CSI
    from the scheduled users; index-only reports add integers.
    ``rbf``: one (index, SINR) pair per user.
    ``sus_*``: full effective CSI from every user.
    ``dpc``: full M-dimensional CSI from every user.
    """
    ints = reals = 0
    if scheme.startswith("redos"):
        for sched, r in zip(outcome.groups, r_stars):
            ints += sched.n_reports + sched.n_index_only
            reals += sched.n_reports + 2 * r * len(sched)
    elif scheme == "rbf":
        ints = reals = int(sum(group_sizes))
    elif scheme.startswith("sus"):
        reals = int(sum(2 * r * K for r, K in zip(r_stars, group_sizes)))
    elif scheme == "dpc":
        if M is None:
            raise ValueError("dpc tally needs M")
        reals = 2 * M * int(sum(group_sizes))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return FeedbackTally(scheme, int(ints), int(reals))
