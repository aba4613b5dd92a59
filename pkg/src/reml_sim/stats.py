"""Reduction of a balanced dataset to its stratum mean squares.

In the balanced nested design the three cross-product matrices between
strata (sire, dam-within-sire, residual) are jointly sufficient for all
the estimators in this package; everything downstream consumes
:class:`MeanSquares` instead of raw data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import PhenotypeDataset, _as_readonly, _check_symmetric

__all__ = ["MeanSquares", "mean_squares", "decomposition_check"]


@dataclass(frozen=True)
class MeanSquares:
    """Stratum mean-square matrices with their degrees of freedom.

    Expectations under the model:
    E[m_E] = sigma_E, E[m_B] = sigma_E + K sigma_B,
    E[m_A] = sigma_E + K sigma_B + J K sigma_A.
    """

    m_A: np.ndarray
    m_B: np.ndarray
    m_E: np.ndarray
    df_A: int
    df_B: int
    df_E: int

    def __post_init__(self):
        for name in ("m_A", "m_B", "m_E"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            _check_symmetric(M, name)
            object.__setattr__(self, name, _as_readonly(M))
        if not (self.m_A.shape == self.m_B.shape == self.m_E.shape):
            raise ValueError("mean squares must share one dimension")
        for name in ("df_A", "df_B", "df_E"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")

    @property
    def n_traits(self) -> int:
        return self.m_A.shape[0]

    def submatrix(self, traits: Sequence[int]) -> "MeanSquares":
        """Mean squares of a trait subset: exactly the principal submatrices."""
        idx = np.asarray(traits, dtype=int)
        return MeanSquares(
            m_A=self.m_A[np.ix_(idx, idx)],
            m_B=self.m_B[np.ix_(idx, idx)],
            m_E=self.m_E[np.ix_(idx, idx)],
            df_A=self.df_A,
            df_B=self.df_B,
            df_E=self.df_E,
        )


def _outer_sum(R: np.ndarray) -> np.ndarray:
    """Sum of outer products of the rows of R (n, p) -> (p, p), symmetrized."""
    S = R.T @ R
    return (S + S.T) / 2.0


def mean_squares(data: PhenotypeDataset) -> MeanSquares:
    """Compute the three stratum mean squares of a balanced dataset.

    Two passes: group means first, then centered cross products, which
    keeps the reduction stable for trait counts around 100.
    """
    d = data.design
    I, J, K, p = data.Y.shape
    Y = data.Y

    dam_means = Y.mean(axis=2)          # (I, J, p)
    sire_means = dam_means.mean(axis=1)  # (I, p)
    grand_mean = sire_means.mean(axis=0)  # (p,)

    S_A = J * K * _outer_sum(sire_means - grand_mean)
    S_B = K * _outer_sum((dam_means - sire_means[:, None, :]).reshape(-1, p))
    S_E = _outer_sum((Y - dam_means[:, :, None, :]).reshape(-1, p))

    return MeanSquares(
        m_A=S_A / d.df_A,
        m_B=S_B / d.df_B,
        m_E=S_E / d.df_E,
        df_A=d.df_A,
        df_B=d.df_B,
        df_E=d.df_E,
    )


def decomposition_check(data: PhenotypeDataset, ms: MeanSquares) -> float:
    """Residual of the balanced decomposition identity, in Frobenius norm.

    df_A m_A + df_B m_B + df_E m_E must reproduce the total centered
    cross-product matrix; the residual should not exceed
    1e-8 * ||S_total||_F for mean squares computed from `data`.
    """
    p = data.Y.shape[-1]
    grand_mean = data.Y.mean(axis=(0, 1, 2))
    S_total = _outer_sum((data.Y - grand_mean).reshape(-1, p))
    recomposed = ms.df_A * ms.m_A + ms.df_B * ms.m_B + ms.df_E * ms.m_E
    return float(np.linalg.norm(recomposed - S_total, "fro"))
