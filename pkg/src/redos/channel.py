"""Channel covariance construction and correlated Rayleigh channel sampling.

Every user ``k`` of group ``g`` has channel ``h = U_g diag(lam_g)^{1/2} eta``
with ``eta ~ CN(0, I)``.  The group pre-beamformer ``V_g`` keeps the
``r_star`` dominant eigenvectors, and the effective channel row seen by the
second-stage precoder is ``h^H V_g``.

Arrays follow one convention throughout the package: ``h`` holds channel
vectors as rows (row ``k`` is ``h_k``), while ``G`` holds effective channels
already conjugate-transposed (row ``k`` is ``h_k^H V_g``), so that ``G`` is
the matrix the zero-forcing precoder inverts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import integrate

__all__ = [
    "OneRing",
    "ExpCorrelation",
    "DftColumns",
    "CovarianceSpec",
    "GroupProfile",
    "GroupChannels",
    "ChannelBatch",
    "GenChiSquare",
    "dft_matrix",
    "build_covariance",
    "eig_truncate",
    "numerical_rank",
    "sample_channels",
    "gen_chi_square_cdf",
    "trial_rng",
]

HERMITIAN_TOL = 1e-12
EIG_TIE_TOL = 1e-12
DISTINCT_TOL = 1e-9
RANK_TOL = 1e-10


class ChannelModelError(ValueError):
    """Raised for invalid covariance or profile parameters."""


# --------------------------------------------------------------------------
# Covariance models
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class OneRing:
    """One-ring scattering model for a uniform linear array.

    Parameters
    ----------
    dim : int
        Number of antennas M.
    aoa : float
        Angle of arrival (radians).
    spread : float
        Angular spread (radians), must be positive.
    spacing : float
        Antenna spacing as a fraction of the carrier wavelength.
    """

    dim: int
    aoa: float
    spread: float
    spacing: float = 0.5

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ChannelModelError("dim must be >= 1")
        if not self.spread > 0:
            raise ChannelModelError("one-ring angular spread must be positive")


@dataclass(frozen=True)
class ExpCorrelation:
    """Exponential correlation ``R[i, j] = nu**|i - j|``."""

    dim: int
    nu: float

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ChannelModelError("dim must be >= 1")
        if not 0.0 <= self.nu <= 1.0:
            raise ChannelModelError("nu must lie in [0, 1]")


@dataclass(frozen=True)
class DftColumns:
    """Covariance spanned by a contiguous block of unitary DFT columns.

    ``start``/``stop`` follow Python slice semantics (0-based, ``stop``
    exclusive), so the 1-based inclusive range "columns 1:3" is ``DftColumns(M, 0,
    3, ...)``.
    """

    dim: int
    start: int
    stop: int
    eigenvalues: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "eigenvalues", tuple(float(x) for x in self.eigenvalues))
        if not 0 <= self.start < self.stop <= self.dim:
            raise ChannelModelError("DFT column range out of bounds")
        if len(self.eigenvalues) != self.stop - self.start:
            raise ChannelModelError("need one eigenvalue per DFT column")
        lam = np.asarray(self.eigenvalues)
        if np.any(lam <= 0):
            raise ChannelModelError("DFT eigenvalues must be positive")
        if np.any(np.diff(lam) >= 0):
            raise ChannelModelError("DFT eigenvalues must be strictly decreasing")

    @property
    def columns(self) -> np.ndarray:
        return dft_matrix(self.dim)[:, self.start:self.stop]


CovarianceSpec = Union[OneRing, ExpCorrelation, DftColumns]


def dft_matrix(n: int) -> np.ndarray:
    """Unitary n-point DFT matrix, ``F[m, k] = exp(-2j pi m k / n) / sqrt(n)``."""
    m = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(m, m) / n) / np.sqrt(n)


def _one_ring_lag(lag: int, spec: OneRing) -> complex:
    if lag == 0:
        return 1.0 + 0.0j
    phase = 2.0 * np.pi * lag * spec.spacing
    lo, hi = spec.aoa - spec.spread, spec.aoa + spec.spread
    re, _ = integrate.quad(lambda w: np.cos(phase * np.sin(w)), lo, hi,
                           epsabs=1e-10, epsrel=1e-10, limit=200)
    im, _ = integrate.quad(lambda w: -np.sin(phase * np.sin(w)), lo, hi,
                           epsabs=1e-10, epsrel=1e-10, limit=200)
    return (re + 1j * im) / (2.0 * spec.spread)


def build_covariance(spec: CovarianceSpec) -> np.ndarray:
    """Return the M x M Hermitian covariance matrix described by `spec`.

    Raises
    ------
    ChannelModelError
        If the assembled matrix is not Hermitian to 1e-12 (max-norm).
    """
    M = spec.dim
    lags = np.subtract.outer(np.arange(M), np.arange(M))
    if isinstance(spec, OneRing):
        # Toeplitz: one quadrature per lag, negative lags by conjugation.
        c = np.array([_one_ring_lag(d, spec) for d in range(M)])
        R = np.where(lags >= 0, c[np.abs(lags)], np.conj(c[np.abs(lags)]))
    elif isinstance(spec, ExpCorrelation):
        # 0**0 == 1 keeps the diagonal at one for nu = 0.
        R = np.power(spec.nu, np.abs(lags)).astype(complex)
    elif isinstance(spec, DftColumns):
        U = spec.columns
        R = (U * np.asarray(spec.eigenvalues)) @ U.conj().T
    else:
        raise TypeError(f"unknown covariance spec {type(spec).__name__}")
    if np.max(np.abs(R - R.conj().T)) > HERMITIAN_TOL:
        raise ChannelModelError("covariance is not Hermitian within tolerance")
    return R


# --------------------------------------------------------------------------
# Eigenstructure
# --------------------------------------------------------------------------
def _fix_phase(U: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    U = np.array(U, dtype=complex)
    for j in range(U.shape[1]):
        mags = np.abs(U[:, j])
        # first index among near-maximal magnitudes, for platform stability
        idx = int(np.flatnonzero(mags >= mags.max() - EIG_TIE_TOL)[0])
        U[:, j] *= np.exp(-1j * np.angle(U[idx, j]))
    return U


def numerical_rank(R: np.ndarray, tol: float = RANK_TOL) -> int:
    """Number of eigenvalues of Hermitian `R` above ``tol * max eigenvalue``."""
    w = np.linalg.eigvalsh(R)
    return int(np.sum(w > tol * max(w.max(), 0.0)))


def eig_truncate(R: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-`r` eigenpairs of a Hermitian PSD matrix in descending order.

    Eigenvectors are phase-normalised (largest-magnitude entry real positive);
    eigenvalues tied within 1e-12 are ordered by the row index of that entry.

    Returns
    -------
    U : np.ndarray
        M x r matrix with orthonormal columns.
    lam : np.ndarray
        r descending positive eigenvalues.
    """
    R = np.asarray(R, dtype=complex)
    if r < 1:
        raise ChannelModelError("r must be >= 1")
    if r > numerical_rank(R):
        raise ChannelModelError(f"r={r} exceeds the numerical rank of R")
    w, V = np.linalg.eigh(0.5 * (R + R.conj().T))
    V = _fix_phase(V)
    lead = np.argmax(np.abs(V) >= np.abs(V).max(axis=0) - EIG_TIE_TOL, axis=0)
    # snap near-equal eigenvalues together so ties fall back to `lead`
    w_key = np.round(-w / max(EIG_TIE_TOL, EIG_TIE_TOL * abs(w).max()))
    order = np.lexsort((lead, w_key))[:r]
    return V[:, order], w[order].real.copy()


# --------------------------------------------------------------------------
# Group profiles and channel batches
# --------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class GroupProfile:
    """Covariance eigenstructure and pre-beamformer of one user group.

    Parameters
    ----------
    U : np.ndarray
        M x r_g orthonormal eigenvectors.
    lambdas : np.ndarray
        r_g positive eigenvalues in descending order.
    r_star : int
        Number of served reference beams; ``V = U[:, :r_star]``.
    n_users : int
        Number of users K_g in the group.
    strict : bool
        Reject eigenvalues that are not strictly decreasing (within 1e-9).
        Isotropic profiles (repeated eigenvalues) need ``strict=False``.
    """

    U: np.ndarray
    lambdas: np.ndarray
    r_star: int
    n_users: int = 0
    strict: bool = False
    V: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        U = np.array(self.U, dtype=complex)
        lam = np.array(self.lambdas, dtype=float).ravel()
        if U.ndim != 2 or U.shape[1] != lam.size:
            raise ChannelModelError("U must be M x r with one column per eigenvalue")
        if np.max(np.abs(U.conj().T @ U - np.eye(lam.size))) > 1e-9:
            raise ChannelModelError("U must have orthonormal columns")
        if np.any(lam <= 0):
            raise ChannelModelError("eigenvalues must be positive")
        steps = np.diff(lam)
        if np.any(steps > DISTINCT_TOL):
            raise ChannelModelError("eigenvalues must be in descending order")
        if self.strict and np.any(steps > -DISTINCT_TOL):
            raise ChannelModelError("eigenvalues must be strictly decreasing")
        if not 1 <= self.r_star <= lam.size:
            raise ChannelModelError("need 1 <= r_star <= r_g")
        if self.n_users < 0:
            raise ChannelModelError("n_users must be non-negative")
        U.setflags(write=False)
        lam.setflags(write=False)
        V = U[:, : self.r_star]
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "V", V)

    @property
    def M(self) -> int:
        return self.U.shape[0]

    @property
    def rank(self) -> int:
        return self.lambdas.size

    @property
    def covariance(self) -> np.ndarray:
        return (self.U * self.lambdas) @ self.U.conj().T

    def with_users(self, n_users: int) -> "GroupProfile":
        return GroupProfile(self.U, self.lambdas, self.r_star, n_users, self.strict)

    @classmethod
    def from_spec(cls, spec: CovarianceSpec, r_star: int, n_users: int = 0,
                  rank: int | None = None, strict: bool = False) -> "GroupProfile":
        """Build a profile from a covariance model.

        DFT-column specs use their columns directly; other models go through
        :func:`eig_truncate` with ``rank`` (default: numerical rank).
        """
        if isinstance(spec, DftColumns):
            return cls(spec.columns, np.asarray(spec.eigenvalues), r_star, n_users, strict)
        R = build_covariance(spec)
        r = numerical_rank(R) if rank is None else rank
        U, lam = eig_truncate(R, r)
        return cls(U, lam, r_star, n_users, strict)


@dataclass(frozen=True, eq=False)
class GroupChannels:
    """Channels of the users in one group for one realisation.

    Attributes
    ----------
    eta : np.ndarray
        K_g x r_g latent coefficients.
    h : np.ndarray
        K_g x M channel vectors (row k is h_k).
    G : np.ndarray
        K_g x r_star effective channels (row k is h_k^H V_g).
    intergroup_power : np.ndarray
        K_g values of sum over g' != g of ||h_k^H V_g'||^2.
    """

    eta: np.ndarray
    h: np.ndarray
    G: np.ndarray
    intergroup_power: np.ndarray

    @property
    def n_users(self) -> int:
        return self.h.shape[0]

    @property
    def gain(self) -> np.ndarray:
        """Squared effective channel norms ||g_k||^2."""
        return np.sum(np.abs(self.G) ** 2, axis=1)


@dataclass(frozen=True, eq=False)
class ChannelBatch:
    """One Monte Carlo realisation of all groups' channels."""

    groups: tuple[GroupProfile, ...]
    channels: tuple[GroupChannels, ...]

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def M(self) -> int:
        return self.groups[0].M

    def cross_channel(self, g: int, g2: int, users=None) -> np.ndarray:
        """Rows h_k^H V_g2 for users of group `g` (optionally a subset)."""
        h = self.channels[g].h if users is None else self.channels[g].h[users]
        return h.conj() @ self.groups[g2].V


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one (seed, key...) stream.

    Streams keyed by trial index are independent of how trials are
    distributed across workers.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channels(groups: Sequence[GroupProfile], rng: np.random.Generator | int,
                    large_scale: Sequence[np.ndarray] | None = None) -> ChannelBatch:
    """Draw one channel realisation for every user of every group.

    Parameters
    ----------
    groups : sequence of GroupProfile
        Group profiles; ``n_users`` sets how many users are drawn.
    rng : Generator or int
        Random source; an int is turned into :func:`trial_rng` ``(rng,)``.
    large_scale : sequence of arrays, optional
        Per-group, per-user power factors ``l_k``; the channel becomes
        ``sqrt(l_k) U diag(lam)^{1/2} eta``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = trial_rng(int(rng))
    groups = tuple(groups)
    hs, etas = [], []
    for gi, prof in enumerate(groups):
        eta = _complex_normal(rng, (prof.n_users, prof.rank))
        coef = eta * np.sqrt(prof.lambdas)
        if large_scale is not None:
            coef = coef * np.sqrt(np.asarray(large_scale[gi], dtype=float))[:, None]
        etas.append(eta)
        hs.append(coef @ prof.U.T)
    chans = []
    for gi, prof in enumerate(groups):
        hc = hs[gi].conj()
        G = hc @ prof.V
        inter = np.zeros(prof.n_users)
        for gj, other in enumerate(groups):
            if gj != gi:
                inter += np.sum(np.abs(hc @ other.V) ** 2, axis=1)
        chans.append(GroupChannels(etas[gi], hs[gi], G, inter))
    return ChannelBatch(groups, tuple(chans))


# --------------------------------------------------------------------------
# Generalised chi-square
# --------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class GenChiSquare:
    """Law of ``sum_i lam_i |X_i|^2`` with ``X_i ~ CN(0, 1)`` i.i.d.

    The weights must be positive and strictly decreasing; the partial-fraction
    constants ``xi_i = prod_{j != i} (1 - lam_j / lam_i)`` are precomputed.
    """

    lambdas: np.ndarray
    xi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        lam = np.array(self.lambdas, dtype=float).ravel()
        if lam.size == 0 or np.any(lam <= 0):
            raise ChannelModelError("weights must be positive")
        if np.any(np.diff(lam) > -DISTINCT_TOL):
            raise ChannelModelError("weights must be strictly decreasing")
        ratio = lam[None, :] / lam[:, None]
        np.fill_diagonal(ratio, 0.0)
        xi = np.prod(1.0 - ratio, axis=1)
        lam.setflags(write=False)
        xi.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "xi", xi)

    def ccdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.sum(np.exp(-z[..., None] / self.lambdas) / self.xi, axis=-1)

    def cdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if np.any(z < 0):
            raise ValueError("z must be non-negative")
        F = np.sum(-np.expm1(-z[..., None] / self.lambdas) / self.xi, axis=-1)
        # clip only rounding error, which grows with the partial-fraction weights
        tol = self.rounding_tol
        return np.where((F < 0) & (F > -tol), 0.0, np.where((F > 1) & (F < 1 + tol), 1.0, F))

    @property
    def rounding_tol(self) -> float:
        """Absolute rounding bound of the closed-form sums."""
        return max(1e-12, 64 * np.finfo(float).eps * float(np.sum(np.abs(1 / self.xi))))

    def pdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.sum(np.exp(-z[..., None] / self.lambdas) / (self.lambdas * self.xi), axis=-1)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        size = (size,) if np.isscalar(size) else tuple(size)
        # |X|^2 of a unit-variance complex normal is Exp(1)
        return rng.standard_exponential(size + (self.lambdas.size,)) @ self.lambdas


def gen_chi_square_cdf(d: GenChiSquare, z) -> np.ndarray:
    """CDF ``sum_i (1 - exp(-z / lam_i)) / xi_i`` of a generalised chi-square."""
    return d.cdf(z)
