"""Eigenvalue analytics: sorted spectra, small-eigenvalue counts, replicate summaries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "SpectrumSummary",
    "ReplicateStats",
    "eigenvalues_sym",
    "nearly_null_dim",
    "relative_difference",
    "summarize",
]


def eigenvalues_sym(M: np.ndarray) -> np.ndarray:
    """Full real spectrum of a (nearly) symmetric matrix, descending.

    The input is symmetrized as (M + M')/2 first, so small asymmetries
    from accumulated arithmetic are tolerated.
    """
    M = np.asarray(M, dtype=float)
    return np.linalg.eigvalsh((M + M.T) / 2.0)[::-1].copy()


def nearly_null_dim(eigs: Sequence[float], delta: float) -> int:
    """Count of eigenvalues <= delta (inclusive threshold; negatives count)."""
    return int(np.count_nonzero(np.asarray(eigs, dtype=float) <= delta))


def relative_difference(a: float, b: float) -> float:
    """(a - b) / b, or NaN when the reference b is zero."""
    if b == 0:
        return float("nan")
    return (a - b) / b


@dataclass(frozen=True)
class SpectrumSummary:
    """Descending eigenvalues of one matrix plus null-dimension counters."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        eigs = np.sort(np.asarray(self.eigenvalues, dtype=float))[::-1]
        eigs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", eigs)

    @classmethod
    def of(cls, M: np.ndarray) -> "SpectrumSummary":
        return cls(eigenvalues=eigenvalues_sym(M))

    @property
    def d_hat_zero(self) -> int:
        """Number of exactly-zero eigenvalues."""
        return int(np.count_nonzero(self.eigenvalues == 0.0))

    def d_hat(self, delta: float) -> int:
        return nearly_null_dim(self.eigenvalues, delta)


@dataclass(frozen=True)
class ReplicateStats:
    """Mean, SD and quartiles of one statistic over replicates.

    SD uses the n-1 denominator (0.0 for a single replicate).
    Quartiles use linear interpolation between order statistics, the
    numpy default; the same convention is applied everywhere.
    """

    n: int
    mean: float
    sd: float
    q1: float
    median: float
    q3: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def summarize(values: Sequence[float]) -> ReplicateStats:
    """Summarize replicate values; raises on empty input."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty list")
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    q1, med, q3 = (float(q) for q in np.percentile(arr, [25.0, 50.0, 75.0]))
    return ReplicateStats(
        n=int(arr.size), mean=float(arr.mean()), sd=sd, q1=q1, median=med, q3=q3
    )
