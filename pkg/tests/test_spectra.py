import numpy as np
import pytest

from reml_sim.estimators import stepwise_reml
from reml_sim.model import CovarianceComponents, DesignSpec, haar_orthogonal, simulate
from reml_sim.spectra import (
    SpectrumSummary,
    eigenvalues_sym,
    nearly_null_dim,
    relative_difference,
    summarize,
)
from reml_sim.stats import mean_squares


class TestEigenvaluesSym:
    def test_diagonal(self):
        assert np.array_equal(eigenvalues_sym(np.diag([3.0, 1.0, 2.0])), [3.0, 2.0, 1.0])

    def test_rank_one_plus_scalar(self):
        M = 0.8 * np.ones((4, 4)) + 0.2 * np.eye(4)
        assert np.allclose(eigenvalues_sym(M), [3.4, 0.2, 0.2, 0.2], atol=1e-12)

    def test_matches_characteristic_polynomial_roots(self):
        rng = np.random.default_rng(31)
        M = rng.standard_normal((5, 5))
        M = (M + M.T) / 2.0
        roots = np.sort(np.roots(np.poly(M)).real)[::-1]
        assert np.abs(eigenvalues_sym(M) - roots).max() < 1e-8

    def test_rotation_invariance(self):
        rng = np.random.default_rng(32)
        M = rng.standard_normal((6, 6))
        M = (M + M.T) / 2.0
        Q = haar_orthogonal(rng, 6)
        assert np.abs(eigenvalues_sym(Q @ M @ Q.T) - eigenvalues_sym(M)).max() < 1e-8


class TestNearlyNullDim:
    def test_zero_threshold(self):
        assert nearly_null_dim([3, 1, 0.5, 0, 0], 0.0) == 2

    def test_inclusive_threshold(self):
        assert nearly_null_dim([3, 1, 0.5, 0, 0], 1.0) == 4

    def test_negatives_count(self):
        assert nearly_null_dim([-0.2, 0.1], 0.0) == 1

    def test_monotone_in_delta(self):
        eigs = [5.0, 2.0, 0.7, 0.0, -0.1]
        counts = [nearly_null_dim(eigs, d) for d in (-1.0, 0.0, 0.7, 1.0, 10.0)]
        assert counts == sorted(counts)


class TestRelativeDifference:
    def test_basic(self):
        assert relative_difference(1.1, 1.0) == pytest.approx(0.1)

    def test_equal(self):
        assert relative_difference(2.5, 2.5) == 0.0

    def test_typical_magnitudes(self):
        # (25 - 26.24) / 26.24
        assert relative_difference(25.0, 26.24) == pytest.approx(-0.04725609756097561)

    def test_zero_reference_is_nan(self):
        assert np.isnan(relative_difference(1.0, 0.0))


class TestSummarize:
    def test_small_list(self):
        st = summarize([1.0, 2.0, 3.0])
        assert st.mean == 2.0
        assert st.sd == pytest.approx(1.0)
        assert st.median == 2.0

    def test_constant(self):
        st = summarize([4.0] * 6)
        assert st.sd == 0.0
        assert st.iqr == 0.0

    def test_quartiles_linear_interpolation(self):
        # for (1,2,3,4): position (n-1)*q = 0.75 -> 1 + 0.75*(2-1) = 1.75, and 3.25
        st = summarize([1.0, 2.0, 3.0, 4.0])
        assert st.q1 == pytest.approx(1.75)
        assert st.q3 == pytest.approx(3.25)

    def test_iqr_brackets_median(self):
        rng = np.random.default_rng(33)
        st = summarize(rng.standard_normal(50))
        assert st.q1 <= st.median <= st.q3

    def test_single_value(self):
        st = summarize([7.0])
        assert st.mean == 7.0 and st.sd == 0.0 and st.median == 7.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize([])


class TestSpectrumSummary:
    def test_sorts_and_counts(self):
        s = SpectrumSummary(eigenvalues=[0.0, 3.0, 0.0, 1.0])
        assert np.array_equal(s.eigenvalues, [3.0, 1.0, 0.0, 0.0])
        assert s.d_hat_zero == 2
        assert s.d_hat(0.0) == 2
        assert s.d_hat(1.0) == 3

    def test_consistency_with_estimator_zeros(self):
        # For PSD snapped REML output, d_hat(0) equals the exact-zero count.
        design = DesignSpec(100, 3, 5, 4)
        comps = CovarianceComponents(
            sigma_A=25.0 * np.diag([1.0, 1.0, 0.0, 0.0]),
            sigma_B=9.0 * np.diag([1.0, 0.0, 0.0, 1.0]),
            sigma_E=np.eye(4),
        )
        for seed in range(6):
            fit = stepwise_reml(mean_squares(simulate(design, comps, seed=seed)), design)
            for comp in ("A", "B"):
                s = SpectrumSummary(eigenvalues=fit.spectra[comp])
                assert s.d_hat(0.0) == s.d_hat_zero
