"""Brute-force REML maximizer used to validate the stepwise solver.

The chain is parameterized through unconstrained triangular factors,
gamma_E = L0 L0', gamma_B = gamma_E + L1 L1', gamma_A = gamma_B + L2 L2',
which keeps every iterate inside the ordered cone, and the restricted
likelihood is maximized with L-BFGS-B from several perturbed starts.
Slow by design; refuse anything beyond a handful of traits.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.optimize

from .estimators import EstimateSet, StratumChain, _estimate_from_chain
from .model import DesignSpec
from .stats import MeanSquares

__all__ = ["brute_force_reml"]

MAX_TRAITS = 4
DEFAULT_RESTARTS = 8
_RESTART_ENTROPY = 0x5EED


def _tril_indices(p: int):
    return np.tril_indices(p)


def _unpack(theta: np.ndarray, p: int):
    m = p * (p + 1) // 2
    rows, cols = _tril_indices(p)
    Ls = []
    for i in range(3):
        L = np.zeros((p, p))
        L[rows, cols] = theta[i * m : (i + 1) * m]
        Ls.append(L)
    return Ls


def _chain_from_factors(L0, L1, L2) -> StratumChain:
    gamma_E = L0 @ L0.T
    gamma_B = gamma_E + L1 @ L1.T
    gamma_A = gamma_B + L2 @ L2.T
    return StratumChain(gamma_E=gamma_E, gamma_B=gamma_B, gamma_A=gamma_A)


def _neg_loglik_and_grad(theta: np.ndarray, ms: MeanSquares, p: int):
    L0, L1, L2 = _unpack(theta, p)
    chain = _chain_from_factors(L0, L1, L2)
    grads = []
    total = 0.0
    for gamma, m, df in (
        (chain.gamma_E, ms.m_E, ms.df_E),
        (chain.gamma_B, ms.m_B, ms.df_B),
        (chain.gamma_A, ms.m_A, ms.df_A),
    ):
        try:
            c, low = scipy.linalg.cho_factor(gamma, lower=True)
        except (scipy.linalg.LinAlgError, ValueError):
            return 1e15, np.zeros_like(theta)
        logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
        inv = scipy.linalg.cho_solve((c, low), np.eye(p))
        inv_m_inv = inv @ m @ inv
        total += df * (logdet + float(np.trace(inv @ m)))
        # d ell / d gamma = -df/2 (gamma^-1 - gamma^-1 m gamma^-1)
        grads.append(-0.5 * df * (inv - inv_m_inv))
    # gamma_E feeds all three strata, gamma_B - gamma_E the upper two, etc.
    S0 = grads[0] + grads[1] + grads[2]
    S1 = grads[1] + grads[2]
    S2 = grads[2]
    rows, cols = _tril_indices(p)
    grad = np.concatenate(
        [
            -(2.0 * S0 @ L0)[rows, cols],
            -(2.0 * S1 @ L1)[rows, cols],
            -(2.0 * S2 @ L2)[rows, cols],
        ]
    )
    return 0.5 * total, grad


def _psd_part_factor(M: np.ndarray) -> np.ndarray:
    """Lower-triangular factor of the PSD part of a symmetric matrix."""
    w, V = np.linalg.eigh((M + M.T) / 2.0)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    # Reduce to lower-triangular via QR of the transpose (RQ-style).
    q, r = np.linalg.qr(root.T)
    return r.T


def brute_force_reml(
    ms: MeanSquares, design: DesignSpec, restarts: int = DEFAULT_RESTARTS
) -> EstimateSet:
    """Maximize the restricted likelihood over the ordered cone directly.

    Starts are the MANOVA chain projected to feasibility, plus
    ``restarts - 1`` deterministic random perturbations of it; the best
    local optimum wins, ties going to the lowest restart index.
    """
    p = ms.n_traits
    if p > MAX_TRAITS:
        raise ValueError(f"brute-force oracle is limited to p <= {MAX_TRAITS} (got {p})")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")

    L0 = _psd_part_factor(ms.m_E)
    L1 = _psd_part_factor(ms.m_B - ms.m_E)
    L2 = _psd_part_factor(ms.m_A - ms.m_B)
    rows, cols = _tril_indices(p)
    theta0 = np.concatenate([L[rows, cols] for L in (L0, L1, L2)])
    scale = max(float(np.abs(theta0).max()), 1e-3)

    best_theta = None
    best_val = np.inf
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(_RESTART_ENTROPY, spawn_key=(r,)))
        theta = theta0 if r == 0 else theta0 + 0.1 * scale * rng.standard_normal(theta0.shape)
        res = scipy.optimize.minimize(
            _neg_loglik_and_grad,
            theta,
            args=(ms, p),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-12},
        )
        if res.fun < best_val:
            best_val = res.fun
            best_theta = res.x

    L0, L1, L2 = _unpack(best_theta, p)
    chain = _chain_from_factors(L0, L1, L2)
    return _estimate_from_chain(
        "BruteForceREML",
        chain,
        ms,
        design,
        iterations=restarts,
        converged=True,
        final_step=0.0,
    )
