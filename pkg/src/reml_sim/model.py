"""Balanced half-sib model: design, covariance structures, simulation.

The data model is a balanced two-way nested layout: I sires, J dams per
sire, K offspring per dam, each observation a vector of p traits.
Observations decompose as an intercept plus independent Gaussian sire,
dam and individual effects with covariances ``sigma_A``, ``sigma_B``
and ``sigma_E``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "DesignSpec",
    "CovarianceComponents",
    "PhenotypeDataset",
    "SigmaAKind",
    "SigmaBKind",
    "NotPSDError",
    "build_sigma_A",
    "build_sigma_B",
    "psd_factor",
    "simulate",
    "haar_orthogonal",
]

# Relative floor below which a symmetric matrix is rejected as not PSD.
PSD_EIG_FLOOR = 1e-10
# Relative tolerance for symmetry checks on stored matrices.
SYMMETRY_RTOL = 1e-12


class NotPSDError(ValueError):
    """Raised when a matrix required to be PSD has a significantly negative eigenvalue."""


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _check_symmetric(M: np.ndarray, name: str) -> None:
    scale = max(1.0, float(np.abs(M).max()) if M.size else 0.0)
    if float(np.abs(M - M.T).max()) > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric within tolerance")


@dataclass(frozen=True)
class DesignSpec:
    """Balanced layout: I sires x J dams/sire x K offspring/dam, p traits."""

    n_sires: int
    n_dams_per_sire: int
    n_offspring_per_dam: int
    n_traits: int

    def __post_init__(self):
        if self.n_sires < 2 or self.n_dams_per_sire < 2 or self.n_offspring_per_dam < 2:
            raise ValueError("need at least 2 sires, 2 dams per sire and 2 offspring per dam")
        if self.n_traits < 1:
            raise ValueError("need at least one trait")

    @property
    def df_A(self) -> int:
        return self.n_sires - 1

    @property
    def df_B(self) -> int:
        return self.n_sires * (self.n_dams_per_sire - 1)

    @property
    def df_E(self) -> int:
        return self.n_sires * self.n_dams_per_sire * (self.n_offspring_per_dam - 1)

    @property
    def n_observations(self) -> int:
        return self.n_sires * self.n_dams_per_sire * self.n_offspring_per_dam


@dataclass(frozen=True)
class CovarianceComponents:
    """The (sire, dam, error) covariance triple.

    Symmetry is enforced on construction.  Positive semidefiniteness is
    *not*: moment estimators legitimately produce indefinite sire/dam
    components.  Call :meth:`require_simulatable` before using the
    triple to generate data.
    """

    sigma_A: np.ndarray
    sigma_B: np.ndarray
    sigma_E: np.ndarray

    def __post_init__(self):
        for name in ("sigma_A", "sigma_B", "sigma_E"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be square")
            _check_symmetric(M, name)
            object.__setattr__(self, name, _as_readonly(M))
        if not (self.sigma_A.shape == self.sigma_B.shape == self.sigma_E.shape):
            raise ValueError("components must share one dimension")

    @property
    def n_traits(self) -> int:
        return self.sigma_A.shape[0]

    def require_simulatable(self) -> None:
        """Check sigma_A/sigma_B are PSD (to tolerance) and sigma_E is PD."""
        for name in ("sigma_A", "sigma_B"):
            M = getattr(self, name)
            w = np.linalg.eigvalsh(M)
            if w[0] < -PSD_EIG_FLOOR * max(np.trace(M) / M.shape[0], 0.0):
                raise NotPSDError(f"{name} is not PSD (min eigenvalue {w[0]:.3e})")
        if np.linalg.eigvalsh(self.sigma_E)[0] <= 0.0:
            raise ValueError("sigma_E must be positive definite for simulation")


@dataclass(frozen=True)
class PhenotypeDataset:
    """Simulated observations, shape (I, J, K, p), plus the intercept used."""

    design: DesignSpec
    mu: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        d = self.design
        Y = np.asarray(self.Y, dtype=float)
        expected = (d.n_sires, d.n_dams_per_sire, d.n_offspring_per_dam, d.n_traits)
        if Y.shape != expected:
            raise ValueError(f"Y has shape {Y.shape}, expected {expected}")
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        if mu.shape != (d.n_traits,):
            raise ValueError("mu length must equal the number of traits")
        object.__setattr__(self, "Y", _as_readonly(Y))
        object.__setattr__(self, "mu", _as_readonly(mu))


_A_KINDS = (
    "explicit_diagonal",
    "identity",
    "chi_squared",
    "chi_squared_fixed",
    "heavy_tail",
    "spiked",
    "abs_normal_diagonal",
    "half_zero",
)
_B_KINDS = (
    "identity",
    "wishart",
    "high_rank",
    "high_corr",
    "explicit_diagonal",
    "abs_normal_diagonal",
    "half_zero",
)


@dataclass(frozen=True)
class SigmaAKind:
    """Recipe for the sire covariance.

    ``d`` is the null-space dimension (trailing zero eigenvalues) and
    ``c_A`` the overall scaling for the parametric diagonal menus.
    ``chi_squared_fixed`` redraws nothing per call: its diagonal is a
    chi-squared(5)/5 sample keyed by ``fixed_seed`` and (p, d), held
    constant across replicates.
    """

    kind: str
    d: int = 0
    c_A: float = 1.0
    diagonal: Optional[tuple] = None
    scale: float = 1.0
    fixed_seed: int = 0

    def __post_init__(self):
        if self.kind not in _A_KINDS:
            raise ValueError(f"unknown sigma_A kind {self.kind!r} (choose from {_A_KINDS})")
        if self.d < 0:
            raise ValueError("null dimension d must be >= 0")
        if self.c_A <= 0:
            raise ValueError("c_A must be positive")
        if self.kind == "explicit_diagonal":
            if self.diagonal is None:
                raise ValueError("explicit_diagonal needs a diagonal")
            object.__setattr__(self, "diagonal", tuple(float(v) for v in self.diagonal))

    @classmethod
    def explicit_diagonal(cls, values: Sequence[float]) -> "SigmaAKind":
        return cls(kind="explicit_diagonal", diagonal=tuple(values))

    @classmethod
    def identity(cls, d: int = 0, c_A: float = 1.0) -> "SigmaAKind":
        return cls(kind="identity", d=d, c_A=c_A)

    @classmethod
    def chi_squared(cls, d: int = 0, c_A: float = 1.0) -> "SigmaAKind":
        return cls(kind="chi_squared", d=d, c_A=c_A)

    @classmethod
    def chi_squared_fixed(cls, d: int = 0, c_A: float = 1.0, fixed_seed: int = 0) -> "SigmaAKind":
        return cls(kind="chi_squared_fixed", d=d, c_A=c_A, fixed_seed=fixed_seed)

    @classmethod
    def heavy_tail(cls, d: int = 0, c_A: float = 1.0) -> "SigmaAKind":
        return cls(kind="heavy_tail", d=d, c_A=c_A)

    @classmethod
    def spiked(cls, d: int = 0, c_A: float = 1.0) -> "SigmaAKind":
        return cls(kind="spiked", d=d, c_A=c_A)

    @classmethod
    def abs_normal_diagonal(cls, scale: float) -> "SigmaAKind":
        return cls(kind="abs_normal_diagonal", scale=scale)

    @classmethod
    def half_zero(cls, c_A: float = 1.0) -> "SigmaAKind":
        return cls(kind="half_zero", c_A=c_A)


@dataclass(frozen=True)
class SigmaBKind:
    """Recipe for the dam covariance.  ``scale`` multiplies the identity and
    half-zero menus and sets the magnitude of abs_normal_diagonal."""

    kind: str
    diagonal: Optional[tuple] = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _B_KINDS:
            raise ValueError(f"unknown sigma_B kind {self.kind!r} (choose from {_B_KINDS})")
        if self.kind == "explicit_diagonal":
            if self.diagonal is None:
                raise ValueError("explicit_diagonal needs a diagonal")
            object.__setattr__(self, "diagonal", tuple(float(v) for v in self.diagonal))

    @classmethod
    def identity(cls, scale: float = 1.0) -> "SigmaBKind":
        return cls(kind="identity", scale=scale)

    @classmethod
    def wishart(cls) -> "SigmaBKind":
        return cls(kind="wishart")

    @classmethod
    def high_rank(cls) -> "SigmaBKind":
        return cls(kind="high_rank")

    @classmethod
    def high_corr(cls) -> "SigmaBKind":
        return cls(kind="high_corr")

    @classmethod
    def explicit_diagonal(cls, values: Sequence[float]) -> "SigmaBKind":
        return cls(kind="explicit_diagonal", diagonal=tuple(values))

    @classmethod
    def abs_normal_diagonal(cls, scale: float) -> "SigmaBKind":
        return cls(kind="abs_normal_diagonal", scale=scale)

    @classmethod
    def half_zero(cls, scale: float = 1.0) -> "SigmaBKind":
        return cls(kind="half_zero", scale=scale)


def _standard_cauchy(rng: np.random.Generator, n: int) -> np.ndarray:
    # Ratio-of-normals construction: numerators drawn first, then denominators.
    num = rng.standard_normal(n)
    den = rng.standard_normal(n)
    return num / den


def _half_zero_pattern(rng: np.random.Generator, p: int) -> np.ndarray:
    """0/1 diagonal pattern with floor(p/2) randomly placed zeros."""
    pattern = np.ones(p)
    zeros = rng.choice(p, size=p // 2, replace=False)
    pattern[zeros] = 0.0
    return pattern


def haar_orthogonal(rng: np.random.Generator, p: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR of a Gaussian matrix.

    The R factor's diagonal signs are folded into Q, which makes the
    distribution exactly rotation invariant.
    """
    Z = rng.standard_normal((p, p))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def build_sigma_A(kind: SigmaAKind, p: int, rng: np.random.Generator) -> np.ndarray:
    """Construct a p x p sire covariance for the given recipe.

    All menus are diagonal with `d` trailing exact zeros; structure in
    off-diagonal directions is delegated to sigma_B (diagonalizing
    sigma_A loses no generality when sigma_E is scalar).
    """
    if kind.kind == "explicit_diagonal":
        diag = np.asarray(kind.diagonal, dtype=float)
        if diag.shape != (p,):
            raise ValueError(f"explicit diagonal has length {diag.size}, expected {p}")
        if diag.min() < 0:
            raise ValueError("explicit sigma_A diagonal must be nonnegative")
        return np.diag(diag)

    if kind.kind == "abs_normal_diagonal":
        return np.diag(kind.scale * np.abs(rng.standard_normal(p)))

    if kind.kind == "half_zero":
        return np.diag(kind.c_A * _half_zero_pattern(rng, p))

    d = kind.d
    if d > p:
        raise ValueError(f"null dimension d={d} exceeds p={p}")
    head = p - d
    if kind.kind == "identity":
        body = np.ones(head)
    elif kind.kind == "chi_squared":
        body = rng.chisquare(5, size=head)
    elif kind.kind == "chi_squared_fixed":
        fixed_rng = np.random.default_rng(
            np.random.SeedSequence(kind.fixed_seed, spawn_key=(p, d))
        )
        body = fixed_rng.chisquare(5, size=head) / 5.0
    elif kind.kind == "heavy_tail":
        body = np.abs(_standard_cauchy(rng, head) + 5.0)
    elif kind.kind == "spiked":
        # At d == p there is no room for the spike; degenerate to all zeros.
        body = np.ones(head)
        if head > 0:
            body[0] = 5.0
    else:  # pragma: no cover - guarded by SigmaAKind
        raise ValueError(kind.kind)
    return np.diag(kind.c_A * np.concatenate([body, np.zeros(d)]))


def build_sigma_B(kind: SigmaBKind, p: int, rng: np.random.Generator) -> np.ndarray:
    """Construct a p x p dam covariance for the given recipe."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if kind.kind == "identity":
        return kind.scale * np.eye(p)
    if kind.kind == "wishart":
        X = rng.standard_normal((p, p))
        return X @ X.T / p
    if kind.kind == "high_rank":
        # Draw order: eigenvalues first, then the Haar rotation.
        diag = rng.chisquare(5, size=p)
        P = haar_orthogonal(rng, p)
        M = P @ np.diag(diag) @ P.T
        return (M + M.T) / 2.0
    if kind.kind == "high_corr":
        return 0.8 * np.ones((p, p)) + 0.2 * np.eye(p)
    if kind.kind == "explicit_diagonal":
        diag = np.asarray(kind.diagonal, dtype=float)
        if diag.shape != (p,):
            raise ValueError(f"explicit diagonal has length {diag.size}, expected {p}")
        if diag.min() < 0:
            raise ValueError("explicit sigma_B diagonal must be nonnegative")
        return np.diag(diag)
    if kind.kind == "abs_normal_diagonal":
        return np.diag(kind.scale * np.abs(rng.standard_normal(p)))
    if kind.kind == "half_zero":
        return np.diag(kind.scale * _half_zero_pattern(rng, p))
    raise ValueError(kind.kind)  # pragma: no cover


def psd_factor(M: np.ndarray) -> np.ndarray:
    """Factor a symmetric PSD matrix as F @ F.T = M.

    Uses the symmetric eigendecomposition rather than Cholesky so exact
    zero eigenvalues are allowed.  Eigenvalues in [-floor, 0) are
    clipped to zero; anything below the floor raises NotPSDError.  The
    floor is ``PSD_EIG_FLOOR * trace(M)/p``.
    """
    M = np.asarray(M, dtype=float)
    _check_symmetric(M, "matrix")
    w, V = np.linalg.eigh(M)
    floor = PSD_EIG_FLOOR * max(float(np.trace(M)) / M.shape[0], 0.0)
    if w[0] < -floor:
        raise NotPSDError(f"matrix is not PSD (min eigenvalue {w[0]:.3e}, floor {-floor:.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def simulate(
    design: DesignSpec,
    comps: CovarianceComponents,
    mu: Optional[np.ndarray] = None,
    seed: int = 0,
) -> PhenotypeDataset:
    """Draw one balanced dataset: Y_ijk = mu + alpha_i + beta_ij + eps_ijk.

    Effects are sampled as F @ z with F from :func:`psd_factor` and z
    standard normal, consuming the seeded stream in the fixed order
    sire block, dam block, residual block; a given seed therefore
    yields a bit-identical dataset on every run.
    """
    if comps.n_traits != design.n_traits:
        raise ValueError("component dimension does not match design")
    comps.require_simulatable()
    p = design.n_traits
    if mu is None:
        mu = np.zeros(p)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.shape != (p,):
        raise ValueError("mu length must equal the number of traits")

    F_A = psd_factor(comps.sigma_A)
    F_B = psd_factor(comps.sigma_B)
    F_E = psd_factor(comps.sigma_E)

    rng = np.random.default_rng(seed)
    I, J, K = design.n_sires, design.n_dams_per_sire, design.n_offspring_per_dam
    alpha = rng.standard_normal((I, p)) @ F_A.T
    beta = rng.standard_normal((I, J, p)) @ F_B.T
    eps = rng.standard_normal((I, J, K, p)) @ F_E.T
    Y = mu + alpha[:, None, None, :] + beta[:, :, None, :] + eps
    return PhenotypeDataset(design=design, mu=mu, Y=Y)
