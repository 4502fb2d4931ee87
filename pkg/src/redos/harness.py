"""Scenario configuration, Monte Carlo orchestration and CSV output.

A scenario is a flat ``key = value`` file (see ``redos/scenarios``) listing
the groups, the total power, the schemes with their parameter grids and the
user counts.  Every trial draws one channel batch from its own counter-based
stream keyed by ``(seed, K, trial)`` and runs all schemes on it, so results
do not depend on how trials are spread over worker processes.
"""
from __future__ import annotations

import configparser
import csv
import functools
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .beamforming import EQUAL, WATERFILL, BdReport, check_approx_bd
from .channel import (CovarianceSpec, DftColumns, ExpCorrelation, GroupProfile, OneRing,
                      sample_channels, trial_rng)
from .fairness import FairnessState, rr_round, run_pf
from .metrics import evaluate_rates, rbf_transmission, tally_feedback, zf_transmission
from .scheduling import NORM, QUASI_SINR, greedy_dpc_select, rbf_select, redos_select, sus_select

__all__ = [
    "GroupSpec",
    "SchemeSpec",
    "FairnessSpec",
    "ScenarioSpec",
    "ResultRow",
    "AlphaSweep",
    "BdCheckError",
    "CSV_COLUMNS",
    "SCHEMES",
    "load_scenario",
    "parse_scenario",
    "preset_names",
    "run_scenario",
    "run_fairness",
    "alpha_sweep",
    "best_rows",
    "write_csv",
    "read_csv",
    "mean_rates_nats",
]

CSV_COLUMNS = ("scenario", "scheme", "K", "param_alpha", "param_gamma", "mean_sum_rate_bits",
               "stderr", "mean_feedback_units", "trials", "seed")
SCHEMES = ("dpc", "sus_quasi_sinr", "sus_norm", "redos", "rbf")
LN2 = math.log(2.0)


class BdCheckError(RuntimeError):
    """The groups' pre-beamformers are not block diagonal."""

    def __init__(self, report: BdReport):
        self.report = report
        bad = [g for g, ok in enumerate(report.passed) if not ok]
        super().__init__(f"block-diagonalisation check failed for groups {bad}: "
                         f"residuals {[f'{r:.3g}' for r in report.residuals]}")


@dataclass(frozen=True)
class GroupSpec:
    """Covariance model and stream count of one group.

    ``r_star`` is capped at the covariance rank (relevant for strongly
    correlated exponential models).
    """

    cov: CovarianceSpec
    r_star: int
    rank: int | None = None


@dataclass(frozen=True)
class SchemeSpec:
    name: str
    alphas: tuple = ()
    gammas: tuple = ()

    def params(self):
        """``(alpha, gamma)`` pairs this scheme is run with."""
        if self.name == "redos":
            return [(a, None) for a in self.alphas]
        if self.name.startswith("sus"):
            return [(None, g) for g in self.gammas]
        return [(None, None)]


@dataclass(frozen=True)
class FairnessSpec:
    kind: str = "pf"
    intervals: int = 10_000
    delta: float = 0.01
    mu0: float = 0.1
    d_up: float = 0.1
    d_down: float = 0.002
    d_alpha: float = 0.05
    alpha0: float | None = None
    variants: tuple = ("adaptive", "fixed")


@dataclass(frozen=True)
class ScenarioSpec:
    """A simulation scenario.

    Attributes
    ----------
    groups : tuple of GroupSpec
        One entry per user group; users are split equally between groups.
    P_dB : float
        Total transmit power over unit noise.
    schemes : tuple of SchemeSpec
        Schemes in output order with their parameter grids.
    large_scale_dB : float
        Spread of per-user large-scale gains; user powers are log-spaced
        from 0 dB up to this value (0 disables).
    sweep_nu : tuple
        Correlation values substituted into exponential-correlation groups.
    """

    name: str
    groups: tuple
    P_dB: float
    schemes: tuple
    K_grid: tuple
    trials: int
    seed: int = 1
    power: str = EQUAL
    large_scale_dB: float = 0.0
    sweep_nu: tuple = ()
    fairness: FairnessSpec | None = None
    count_integers: bool = True
    waive_bd: bool = False
    out_dir: str = "results"

    def __post_init__(self) -> None:
        if not self.groups:
            raise ValueError("scenario needs at least one group")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.power not in (EQUAL, WATERFILL):
            raise ValueError(f"unknown power mode {self.power!r}")
        G = len(self.groups)
        for K in self.K_grid:
            if K % G:
                raise ValueError(f"K={K} is not divisible by the {G} groups")
        for s in self.schemes:
            if s.name not in SCHEMES:
                raise ValueError(f"unknown scheme {s.name!r}")

    @property
    def P(self) -> float:
        return 10.0 ** (self.P_dB / 10.0)

    @property
    def rho(self) -> float:
        """Per-stream power ``P / sum_g r_star_g``."""
        return self.P / sum(p.r_star for p in _base_profiles(self.groups))

    def profiles(self, K: int) -> list[GroupProfile]:
        return [p.with_users(K // len(self.groups)) for p in _base_profiles(self.groups)]

    def large_scale(self, K: int):
        if not self.large_scale_dB:
            return None
        Kg = K // len(self.groups)
        return [np.logspace(0.0, self.large_scale_dB / 10.0, Kg) for _ in self.groups]

    def expand(self) -> list["ScenarioSpec"]:
        """One concrete scenario per swept correlation value."""
        if not self.sweep_nu:
            return [self]
        out = []
        for nu in self.sweep_nu:
            groups = tuple(replace(g, cov=replace(g.cov, nu=float(nu))) if isinstance(g.cov, ExpCorrelation) else g
                           for g in self.groups)
            out.append(replace(self, name=f"{self.name}[nu={nu:g}]", groups=groups, sweep_nu=()))
        return out


@functools.lru_cache(maxsize=64)
def _base_profiles(groups: tuple) -> tuple[GroupProfile, ...]:
    out = []
    for gs in groups:
        if isinstance(gs.cov, DftColumns):
            out.append(GroupProfile.from_spec(gs.cov, gs.r_star))
            continue
        probe = GroupProfile.from_spec(gs.cov, 1, rank=gs.rank)
        out.append(GroupProfile.from_spec(gs.cov, min(gs.r_star, probe.rank), rank=gs.rank))
    return tuple(out)


# --------------------------------------------------------------------------
# Config files
# --------------------------------------------------------------------------
def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(float(x)) for x in text.replace(",", " ").split())


def _group(sec) -> GroupSpec:
    model = sec.get("model", "dft").strip().lower()
    dim = sec.getint("dim")
    if model == "dft":
        lo, hi = (int(x) for x in sec["columns"].split(":"))
        cov = DftColumns(dim, lo - 1, hi, _floats(sec["eigenvalues"]))
    elif model == "exp":
        cov = ExpCorrelation(dim, sec.getfloat("nu"))
    elif model == "one_ring":
        cov = OneRing(dim, math.radians(sec.getfloat("aoa_deg")), math.radians(sec.getfloat("spread_deg")),
                      sec.getfloat("spacing", 0.5))
    else:
        raise ValueError(f"unknown covariance model {model!r}")
    rank = sec.getint("rank") if "rank" in sec else None
    return GroupSpec(cov, sec.getint("r_star"), rank)


def parse_scenario(text: str) -> ScenarioSpec:
    """Build a scenario from config text.

    ``[group.*]`` and ``[scheme.*]`` sections are taken in file order; DFT
    column ranges are 1-based and inclusive.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_string(text)
    sc = cp["scenario"]
    groups = tuple(_group(cp[s]) for s in cp.sections() if s.startswith("group."))
    schemes = []
    for s in cp.sections():
        if s.startswith("scheme."):
            sec = cp[s]
            schemes.append(SchemeSpec(s.split(".", 1)[1], _floats(sec.get("alpha", "")),
                                      _floats(sec.get("gamma", ""))))
    fair = None
    if cp.has_section("fairness"):
        f = cp["fairness"]
        fair = FairnessSpec(
            kind=f.get("kind", "pf"), intervals=f.getint("intervals", 10_000),
            delta=f.getfloat("delta", 0.01), mu0=f.getfloat("mu0", 0.1),
            d_up=f.getfloat("d_up", 0.1), d_down=f.getfloat("d_down", 0.002),
            d_alpha=f.getfloat("d_alpha", 0.05),
            alpha0=f.getfloat("alpha0") if "alpha0" in f else None,
            variants=tuple(v.strip() for v in f.get("variants", "adaptive, fixed").split(",")),
        )
    return ScenarioSpec(
        name=sc.get("name", "scenario"),
        groups=groups,
        P_dB=sc.getfloat("P_dB"),
        schemes=tuple(schemes),
        K_grid=_ints(sc.get("K_grid", "")),
        trials=sc.getint("trials", 100),
        seed=sc.getint("seed", 1),
        power=sc.get("power", EQUAL).strip(),
        large_scale_dB=sc.getfloat("large_scale_dB", 0.0),
        sweep_nu=_floats(sc.get("sweep_nu", "")),
        fairness=fair,
        count_integers=sc.getboolean("count_integers", True),
        waive_bd=sc.getboolean("waive_bd", False),
        out_dir=sc.get("out_dir", "results"),
    )


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("redos.scenarios").iterdir() if p.name.endswith(".ini"))


def load_scenario(source: str | Path) -> ScenarioSpec:
    """Load a scenario from a file path or a bundled preset name."""
    path = Path(source)
    if path.is_file():
        return parse_scenario(path.read_text())
    name = str(source).removesuffix(".ini")
    res = resources.files("redos.scenarios").joinpath(f"{name}.ini")
    if not res.is_file():
        raise FileNotFoundError(f"no scenario file or preset named {source!r}")
    return parse_scenario(res.read_text())


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ResultRow:
    scenario: str
    scheme: str
    K: int
    param_alpha: float | None
    param_gamma: float | None
    mean_sum_rate_bits: float
    stderr: float
    mean_feedback_units: float
    trials: int
    seed: int

    def as_list(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def run_trial(spec: ScenarioSpec, K: int, trial: int) -> list[tuple[float, float]]:
    """Sum rate (bits) and feedback units of every (scheme, parameter) on one batch."""
    profs = spec.profiles(K)
    batch = sample_channels(profs, trial_rng(spec.seed, K, trial), spec.large_scale(K))
    rho = spec.rho
    sizes = [p.n_users for p in profs]
    r_stars = [p.r_star for p in profs]
    out = []
    for s in spec.schemes:
        for a, gm in s.params():
            if s.name == "dpc":
                res = greedy_dpc_select(batch, rho)
                out.append((res.rate / LN2, tally_feedback(None, "dpc", sizes, r_stars, batch.M).units()))
                continue
            if s.name == "redos":
                o = redos_select(batch, a, rho)
                tx = zf_transmission(o, batch, rho, spec.power)
            elif s.name == "rbf":
                o = rbf_select(batch, rho)
                tx = rbf_transmission(o, batch, rho)
            else:
                crit = NORM if s.name == "sus_norm" else QUASI_SINR
                o = sus_select(batch, gm, rho, crit)
                tx = zf_transmission(o, batch, rho, spec.power)
            fb = tally_feedback(o, s.name, sizes, r_stars).units(spec.count_integers)
            out.append((evaluate_rates(batch, tx).sum_rate_bits, fb))
    return out


def _trial_chunk(args):
    spec, K, trials = args
    return [run_trial(spec, K, t) for t in trials]


def _collect(spec: ScenarioSpec, K: int, threads: int) -> np.ndarray:
    """trials x params x 2 array, in trial order for any worker count."""
    idx = list(range(spec.trials))
    if threads <= 1:
        per = _trial_chunk((spec, K, idx))
    else:
        n = max(1, math.ceil(len(idx) / (4 * threads)))
        chunks = [(spec, K, idx[i : i + n]) for i in range(0, len(idx), n)]
        with ProcessPoolExecutor(max_workers=threads) as ex:
            per = [r for part in ex.map(_trial_chunk, chunks) for r in part]
    return np.asarray(per, dtype=float)


def _stderr(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0


def run_scenario(spec: ScenarioSpec, threads: int = 1, fairness_out: dict | None = None) -> list[ResultRow]:
    """Mean sum rate, its standard error and mean feedback per (K, scheme, parameter).

    Fairness scenarios yield one row per variant; pass a dict as
    `fairness_out` to also receive the raw runs keyed by scenario name.

    Raises
    ------
    BdCheckError
        If the groups are not block diagonal and the scenario does not waive it.
    """
    rows = []
    for sub in spec.expand():
        if not sub.waive_bd:
            rep = check_approx_bd(_base_profiles(sub.groups))
            if not rep.ok:
                raise BdCheckError(rep)
        if sub.fairness is not None:
            res = run_fairness(sub)
            if fairness_out is not None:
                fairness_out[sub.name] = res
            rows.extend(_fairness_rows(sub, res))
            continue
        for K in sub.K_grid:
            data = _collect(sub, K, threads)
            j = 0
            for s in sub.schemes:
                for a, gm in s.params():
                    rate, fb = data[:, j, 0], data[:, j, 1]
                    rows.append(ResultRow(sub.name, s.name, int(K), a, gm, float(rate.mean()),
                                          _stderr(rate), float(fb.mean()), sub.trials, sub.seed))
                    j += 1
    return rows


def run_fairness(spec: ScenarioSpec) -> dict:
    """Run the scenario's fairness block for each variant.

    Returns ``{variant: PfRun}`` for proportional fairness and
    ``{variant: [RrRound, ...]}`` (one per trial) for round robin.
    """
    fs = spec.fairness
    if fs is None:
        raise ValueError("scenario has no fairness block")
    K = spec.K_grid[0]
    profs = spec.profiles(K)
    sizes = [p.n_users for p in profs]
    r_stars = [p.r_star for p in profs]
    ls = spec.large_scale(K)
    rho = spec.rho
    out = {}
    for v in fs.variants:
        if v not in ("adaptive", "fixed"):
            raise ValueError(f"unknown fairness variant {v!r}")
        st = FairnessState.initial(sizes, r_stars, alpha0=fs.alpha0, mu0=fs.mu0, delta=fs.delta,
                                   d_alpha=fs.d_alpha, d_up=fs.d_up, d_down=fs.d_down,
                                   adaptive=(v == "adaptive"))

        def stream(t):
            return sample_channels(profs, trial_rng(spec.seed, K, t), ls)

        if fs.kind == "pf":
            out[v] = run_pf(st, stream, rho, fs.intervals)
        elif fs.kind == "rr":
            rounds = []
            for trial in range(spec.trials):
                rounds.append(rr_round(st, lambda t, tr=trial: sample_channels(
                    profs, trial_rng(spec.seed, K, tr, t), ls), rho))
            out[v] = rounds
        else:
            raise ValueError(f"unknown fairness kind {fs.kind!r}")
    return out


def _fairness_rows(spec: ScenarioSpec, results: dict) -> list[ResultRow]:
    K = spec.K_grid[0]
    rows = []
    for v, res in results.items():
        if spec.fairness.kind == "pf":
            sums = res.sum_rates / LN2
            rows.append(ResultRow(spec.name, f"redos_pf_{v}", K, None, None, float(sums.mean()), _stderr(sums),
                                  float(res.reports.mean()), res.n_intervals, spec.seed))
        else:
            rates = np.array([sum(map(sum, r.rates)) / r.n_intervals / LN2 for r in res])
            fb = np.array([r.feedback.units(spec.count_integers) for r in res], dtype=float)
            rows.append(ResultRow(spec.name, f"redos_rr_{v}", K, None, None, float(rates.mean()),
                                  _stderr(rates), float(fb.mean()), len(res), spec.seed))
    return rows


def best_rows(rows: Sequence[ResultRow]) -> dict:
    """Best parameter per ``(scenario, K, scheme)``; ties go to the smaller parameter."""
    best = {}
    for r in rows:
        key = (r.scenario, r.K, r.scheme)
        cur = best.get(key)
        if cur is None or r.mean_sum_rate_bits > cur.mean_sum_rate_bits:
            best[key] = r
    return best


@dataclass
class AlphaSweep:
    """Mean sum rate per K over an alpha grid and the best alpha per K."""

    alphas: np.ndarray
    K_grid: tuple
    surface: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)

    @property
    def optimal(self) -> dict:
        # np.argmax keeps the first, i.e. lowest, alpha among exact ties
        return {K: float(self.alphas[int(np.argmax(row))]) for K, row in zip(self.K_grid, self.surface)}


def alpha_sweep(spec: ScenarioSpec, alpha_grid: Sequence[float], threads: int = 1) -> AlphaSweep:
    """Cone-selection sum rate over `alpha_grid` for every K of `spec`."""
    grid = np.sort(np.asarray(alpha_grid, dtype=float))
    if grid.size == 0 or np.any(grid <= 0) or np.any(grid >= 1):
        raise ValueError("alpha grid must lie in (0, 1)")
    sub = replace(spec, schemes=(SchemeSpec("redos", tuple(grid)),), fairness=None)
    rows = run_scenario(sub, threads)
    surf = np.array([[r.mean_sum_rate_bits for r in rows if r.K == K] for K in sub.K_grid])
    se = np.array([[r.stderr for r in rows if r.K == K] for K in sub.K_grid])
    return AlphaSweep(grid, tuple(sub.K_grid), surf, se)


def mean_rates_nats(spec: ScenarioSpec, scheme: str, K_grid: Sequence[int], trials: int,
                    alpha: float | None = None, seed: int | None = None, threads: int = 1) -> np.ndarray:
    """Mean sum rate (nats) of one scheme over `K_grid`."""
    s = SchemeSpec(scheme, (alpha,) if scheme == "redos" else ())
    sub = replace(spec, schemes=(s,), K_grid=tuple(K_grid), trials=trials,
                  seed=spec.seed if seed is None else seed, fairness=None, sweep_nu=())
    rows = run_scenario(sub, threads)
    return np.array([r.mean_sum_rate_bits * LN2 for r in rows])


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(rows: Sequence[ResultRow], path: str | Path | None = None) -> str:
    """Write rows with the fixed column order; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(x) for x in r.as_list()])
    text = buf.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def read_csv(path: str | Path) -> list[ResultRow]:
    def num(x, cast=float):
        return None if x == "" else cast(x)

    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError("unexpected CSV columns")
        return [ResultRow(d["scenario"], d["scheme"], int(d["K"]), num(d["param_alpha"]),
                          num(d["param_gamma"]), float(d["mean_sum_rate_bits"]), float(d["stderr"]),
                          float(d["mean_feedback_units"]), int(d["trials"]), int(d["seed"]))
                for d in rd]
