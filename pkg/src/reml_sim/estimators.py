"""Covariance component estimators for the balanced half-sib design.

All four estimators consume stratum mean squares.  The likelihood they
target factors into independent Wishart terms, one per stratum, whose
expected mean squares form a chain ordered in the Loewner sense
(gamma_E <= gamma_B <= gamma_A).  The moment (MANOVA) estimator ignores
the ordering; the stepwise solver maximizes the restricted likelihood
over the full cone by cycling a closed-form two-matrix solver with
Dykstra-style correction increments; the pseudo estimator applies the
same two-matrix solver in a single bottom-up pass; the pairwise
estimator assembles a large matrix from 1- and 2-trait stepwise fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import scipy.linalg

from .model import CovarianceComponents, DesignSpec
from .stats import MeanSquares

__all__ = [
    "StratumChain",
    "EstimateSet",
    "SingularStratumError",
    "manova",
    "two_wishart_order_mle",
    "stepwise_reml",
    "pseudo_reml",
    "pairwise_reml",
    "reml_criterion",
    "chain_from_components",
    "components_from_chain",
]

# Eigenvalues of fitted sire/dam components within this distance of zero
# are snapped to exact 0.0, so that counting zero eigenvalues of a REML
# estimate is well defined in floating point.  The window is the
# absolute floor ZERO_SNAP_TOL widened by ZERO_SNAP_REL times the top
# eigenvalue: stopping at the default step tolerance leaves pooled
# directions dithering at ~1e-8 of the component scale, four orders of
# magnitude below any genuine small eigenvalue seen in these designs.
ZERO_SNAP_TOL = 1e-10
ZERO_SNAP_REL = 1e-8

DEFAULT_TOL = 1e-6
DEFAULT_MAX_CYCLES = 1000


class SingularStratumError(ValueError):
    """Raised when a stratum matrix that must be PD is singular."""


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


@dataclass(frozen=True)
class StratumChain:
    """Expected mean squares (gamma_E, gamma_B, gamma_A), the REML variables."""

    gamma_E: np.ndarray
    gamma_B: np.ndarray
    gamma_A: np.ndarray

    def as_tuple(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.gamma_E, self.gamma_B, self.gamma_A

    def min_order_margin(self) -> float:
        """Smallest eigenvalue among gamma_B - gamma_E and gamma_A - gamma_B."""
        wb = np.linalg.eigvalsh(_sym(self.gamma_B - self.gamma_E))[0]
        wa = np.linalg.eigvalsh(_sym(self.gamma_A - self.gamma_B))[0]
        return float(min(wb, wa))


def chain_from_components(comps: CovarianceComponents, design: DesignSpec) -> StratumChain:
    K = design.n_offspring_per_dam
    JK = design.n_dams_per_sire * K
    gamma_E = comps.sigma_E
    gamma_B = gamma_E + K * comps.sigma_B
    gamma_A = gamma_B + JK * comps.sigma_A
    return StratumChain(gamma_E=gamma_E, gamma_B=gamma_B, gamma_A=gamma_A)


def components_from_chain(chain: StratumChain, design: DesignSpec) -> CovarianceComponents:
    K = design.n_offspring_per_dam
    JK = design.n_dams_per_sire * K
    return CovarianceComponents(
        sigma_A=_sym(chain.gamma_A - chain.gamma_B) / JK,
        sigma_B=_sym(chain.gamma_B - chain.gamma_E) / K,
        sigma_E=_sym(chain.gamma_E),
    )


@dataclass(frozen=True)
class EstimateSet:
    """A fitted covariance triple plus method tag and solver diagnostics.

    ``spectra`` holds the eigenvalues (descending) of each component as
    computed by the estimator itself; for the order-constrained methods
    these carry the exact-zero snapping, so "number of zero
    eigenvalues" can be read off without re-decomposing.
    ``criterion_path`` records the restricted-likelihood value after
    each stepwise cycle (empty for one-shot methods).
    """

    method: str
    components: CovarianceComponents
    criterion: float
    iterations: int
    converged: bool
    final_step: float
    spectra: dict = field(default_factory=dict)
    criterion_path: tuple = ()

    def eigenvalues(self, component: str) -> np.ndarray:
        return self.spectra[component]


def reml_criterion(chain: StratumChain, ms: MeanSquares) -> float:
    """Restricted log-likelihood of a chain, up to an additive constant.

    ell = -1/2 sum_k df_k [log det gamma_k + tr(gamma_k^{-1} m_k)].
    Wishart normalizing constants are omitted, so values are comparable
    only between fits of the same mean squares.  A chain with a
    non-PD member scores -inf rather than raising.
    """
    total = 0.0
    for gamma, m, df in (
        (chain.gamma_E, ms.m_E, ms.df_E),
        (chain.gamma_B, ms.m_B, ms.df_B),
        (chain.gamma_A, ms.m_A, ms.df_A),
    ):
        try:
            c, low = scipy.linalg.cho_factor(gamma, lower=True)
        except (scipy.linalg.LinAlgError, ValueError):
            return float("-inf")
        logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
        trace_term = float(np.trace(scipy.linalg.cho_solve((c, low), m)))
        total += df * (logdet + trace_term)
    return -0.5 * total


def _snapped_eigh(M: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with tiny eigenvalues snapped to exact zero.

    Returns (descending eigenvalues, matrix rebuilt from them).
    """
    w, V = np.linalg.eigh(_sym(M))
    window = max(ZERO_SNAP_TOL, ZERO_SNAP_REL * float(np.abs(w).max(initial=0.0)))
    w[np.abs(w) <= window] = 0.0
    rebuilt = _sym((V * w) @ V.T)
    return w[::-1].copy(), rebuilt


def _estimate_from_chain(
    method: str,
    chain: StratumChain,
    ms: MeanSquares,
    design: DesignSpec,
    iterations: int,
    converged: bool,
    final_step: float,
    criterion_path: tuple = (),
    snap: bool = True,
) -> EstimateSet:
    """Map a chain to components, optionally snapping near-zero eigenvalues."""
    raw = components_from_chain(chain, design)
    if snap:
        eig_A, sigma_A = _snapped_eigh(raw.sigma_A)
        eig_B, sigma_B = _snapped_eigh(raw.sigma_B)
        comps = CovarianceComponents(sigma_A=sigma_A, sigma_B=sigma_B, sigma_E=raw.sigma_E)
    else:
        comps = raw
        eig_A = np.linalg.eigvalsh(raw.sigma_A)[::-1].copy()
        eig_B = np.linalg.eigvalsh(raw.sigma_B)[::-1].copy()
    eig_E = np.linalg.eigvalsh(comps.sigma_E)[::-1].copy()
    return EstimateSet(
        method=method,
        components=comps,
        criterion=reml_criterion(chain, ms),
        iterations=iterations,
        converged=converged,
        final_step=final_step,
        spectra={"A": eig_A, "B": eig_B, "E": eig_E},
        criterion_path=criterion_path,
    )


def manova(ms: MeanSquares, design: DesignSpec) -> EstimateSet:
    """Moment estimator equating mean squares to their expectations.

    Unbiased, and the unconstrained restricted-likelihood maximizer in
    the balanced design, but the sire/dam components need not be PSD.
    The reported criterion plugs the (possibly unordered) mean squares
    in as the chain.
    """
    chain = StratumChain(gamma_E=ms.m_E, gamma_B=ms.m_B, gamma_A=ms.m_A)
    return _estimate_from_chain(
        "MANOVA", chain, ms, design, iterations=0, converged=True, final_step=0.0, snap=False
    )


def two_wishart_order_mle(
    M1: np.ndarray, n1: float, M2: np.ndarray, n2: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form MLE of two Wishart scale matrices under G1 <= G2.

    Maximizes -n1 (log det G1 + tr(G1^-1 M1)) - n2 (log det G2 + tr(G2^-1 M2))
    subject to G2 - G1 PSD.  Simultaneously diagonalize the pair
    (M2 v = lambda M1 v); coordinates with lambda >= 1 keep their
    unconstrained optima (1, lambda), the rest pool to the df-weighted
    average (n1 + n2 lambda) / (n1 + n2).  The output ordering holds
    exactly because pooled coordinates share one float.
    """
    try:
        w, V = scipy.linalg.eigh(_sym(M2), _sym(M1))
    except scipy.linalg.LinAlgError as exc:
        raise SingularStratumError(f"left stratum matrix is not PD: {exc}") from None
    pooled = (n1 + n2 * w) / (n1 + n2)
    if pooled.min() <= 0.0:
        raise SingularStratumError(
            "pooled coordinate is not positive; right-hand matrix is too indefinite"
        )
    keep = w >= 1.0
    g1 = np.where(keep, 1.0, pooled)
    g2 = np.where(keep, w, pooled)
    # V is M1-orthonormal: V.T @ M1 @ V = I, so C = V.T and C^-1 = M1 @ V.
    W = M1 @ V
    G1 = _sym((W * g1) @ W.T)
    G2 = _sym((W * g2) @ W.T)
    return G1, G2


def stepwise_reml(
    ms: MeanSquares,
    design: DesignSpec,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> EstimateSet:
    """Exact REML by cyclic two-matrix fitting with correction increments.

    Working chain starts at the mean squares.  Each cycle enforces the
    (E,B) ordering and then the (B,A) ordering through
    :func:`two_wishart_order_mle`, carrying Dykstra-style increments
    (the residual of each two-matrix fit is added back before that
    constraint is next visited).  Stops when the df-weighted distance
    between successive component estimates,
    d^2 = sum_k df_k ||sigma_k^l - sigma_k^{l-1}||_F^2, drops below
    ``tol``.  Sire/dam eigenvalues within ZERO_SNAP_TOL of zero are
    snapped to exact zeros in the returned estimate.
    """
    try:
        scipy.linalg.cho_factor(ms.m_E)
    except (scipy.linalg.LinAlgError, ValueError):
        raise SingularStratumError("residual mean square is singular; cannot start REML")

    A_E, A_B, A_A = ms.m_E, ms.m_B, ms.m_A
    p = ms.n_traits
    R_EB_E = np.zeros((p, p))
    R_EB_B = np.zeros((p, p))
    R_BA_B = np.zeros((p, p))
    R_BA_A = np.zeros((p, p))

    prev = components_from_chain(
        StratumChain(gamma_E=A_E, gamma_B=A_B, gamma_A=A_A), design
    )
    crit_path = []
    converged = False
    step = float("inf")
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        U_E = A_E + R_EB_E
        U_B = A_B + R_EB_B
        F_E, F_B = two_wishart_order_mle(U_E, ms.df_E, U_B, ms.df_B)
        R_EB_E = U_E - F_E
        R_EB_B = U_B - F_B
        A_E, A_B = F_E, F_B

        U_B = A_B + R_BA_B
        U_A = A_A + R_BA_A
        F_B, F_A = two_wishart_order_mle(U_B, ms.df_B, U_A, ms.df_A)
        R_BA_B = U_B - F_B
        R_BA_A = U_A - F_A
        A_B, A_A = F_B, F_A

        chain = StratumChain(gamma_E=A_E, gamma_B=A_B, gamma_A=A_A)
        cur = components_from_chain(chain, design)
        step = float(
            np.sqrt(
                ms.df_A * np.linalg.norm(cur.sigma_A - prev.sigma_A, "fro") ** 2
                + ms.df_B * np.linalg.norm(cur.sigma_B - prev.sigma_B, "fro") ** 2
                + ms.df_E * np.linalg.norm(cur.sigma_E - prev.sigma_E, "fro") ** 2
            )
        )
        crit_path.append(reml_criterion(chain, ms))
        prev = cur
        if step < tol:
            converged = True
            break

    chain = StratumChain(gamma_E=A_E, gamma_B=A_B, gamma_A=A_A)
    return _estimate_from_chain(
        "StepwiseREML",
        chain,
        ms,
        design,
        iterations=cycles,
        converged=converged,
        final_step=step,
        criterion_path=tuple(crit_path),
    )


def order_truncate_above(M1: np.ndarray, M2: np.ndarray) -> np.ndarray:
    """MLE of the upper Wishart scale with the lower matrix held fixed.

    Maximizes -(log det G2 + tr(G2^-1 M2)) subject to G2 >= M1 with M1
    fixed: generalized eigenvalues of (M2, M1) below 1 are clamped to
    the boundary.  This is the fixed-anchor limit of
    :func:`two_wishart_order_mle` as n1 -> inf.
    """
    try:
        w, V = scipy.linalg.eigh(_sym(M2), _sym(M1))
    except scipy.linalg.LinAlgError as exc:
        raise SingularStratumError(f"anchor matrix is not PD: {exc}") from None
    W = M1 @ V
    return _sym((W * np.maximum(w, 1.0)) @ W.T)


def pseudo_reml(ms: MeanSquares, design: DesignSpec) -> EstimateSet:
    """One bottom-up pass of order-constrained truncation.

    Exact REML in a one-way design; in the nested design it skips the
    cyclic corrections, so the criterion falls short of the stepwise
    optimum whenever both orderings are active.  The first stage fits
    the (residual, dam) pair jointly; the second truncates the sire
    stratum against the fitted dam stratum, which stays fixed.  Holding
    the anchor fixed keeps the chain inside the ordered cone, so both
    fitted components are PSD by construction.
    """
    try:
        scipy.linalg.cho_factor(ms.m_E)
    except (scipy.linalg.LinAlgError, ValueError):
        raise SingularStratumError("residual mean square is singular; cannot start REML")
    G_E, G_B = two_wishart_order_mle(ms.m_E, ms.df_E, ms.m_B, ms.df_B)
    G_A = order_truncate_above(G_B, ms.m_A)
    chain = StratumChain(gamma_E=G_E, gamma_B=G_B, gamma_A=G_A)
    return _estimate_from_chain(
        "PseudoREML", chain, ms, design, iterations=2, converged=True, final_step=0.0
    )


def pairwise_reml(
    ms: MeanSquares,
    design: DesignSpec,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> EstimateSet:
    """Assemble components from 1-trait and 2-trait stepwise REML fits.

    Diagonal entries come from the p single-trait analyses, off-diagonal
    entries from the p(p-1)/2 two-trait analyses.  The assembled
    matrices need not be PSD; no repair is applied.  The criterion is
    evaluated on the implied chain (it is -inf if that chain leaves the
    cone of PD stratum matrices).
    """
    p = ms.n_traits
    sub_design = design
    out = {name: np.zeros((p, p)) for name in ("A", "B", "E")}
    iterations = 0
    converged = True
    for i in range(p):
        fit = stepwise_reml(ms.submatrix([i]), _with_traits(sub_design, 1), tol, max_cycles)
        iterations = max(iterations, fit.iterations)
        converged = converged and fit.converged
        for name, M in _component_dict(fit).items():
            out[name][i, i] = M[0, 0]
    for i in range(p):
        for j in range(i + 1, p):
            fit = stepwise_reml(
                ms.submatrix([i, j]), _with_traits(sub_design, 2), tol, max_cycles
            )
            iterations = max(iterations, fit.iterations)
            converged = converged and fit.converged
            for name, M in _component_dict(fit).items():
                out[name][i, j] = M[0, 1]
                out[name][j, i] = M[0, 1]
    comps = CovarianceComponents(sigma_A=out["A"], sigma_B=out["B"], sigma_E=out["E"])
    chain = chain_from_components(comps, design)
    spectra = {k: np.linalg.eigvalsh(M)[::-1].copy() for k, M in _component_dict_c(comps).items()}
    return EstimateSet(
        method="PairwiseREML",
        components=comps,
        criterion=reml_criterion(chain, ms),
        iterations=iterations,
        converged=converged,
        final_step=0.0,
        spectra=spectra,
    )


def _with_traits(design: DesignSpec, p: int) -> DesignSpec:
    return DesignSpec(
        n_sires=design.n_sires,
        n_dams_per_sire=design.n_dams_per_sire,
        n_offspring_per_dam=design.n_offspring_per_dam,
        n_traits=p,
    )


def _component_dict(fit: EstimateSet) -> dict:
    return _component_dict_c(fit.components)


def _component_dict_c(comps: CovarianceComponents) -> dict:
    return {"A": comps.sigma_A, "B": comps.sigma_B, "E": comps.sigma_E}


ESTIMATOR_NAMES = ("manova", "stepwise", "pseudo", "pairwise")


def fit_by_name(
    name: str,
    ms: MeanSquares,
    design: DesignSpec,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> EstimateSet:
    """Dispatch an estimator by its CLI/config name."""
    if name == "manova":
        return manova(ms, design)
    if name == "stepwise":
        return stepwise_reml(ms, design, tol=tol, max_cycles=max_cycles)
    if name == "pseudo":
        return pseudo_reml(ms, design)
    if name == "pairwise":
        return pairwise_reml(ms, design, tol=tol, max_cycles=max_cycles)
    raise ValueError(f"unknown estimator {name!r} (choose from {ESTIMATOR_NAMES})")
