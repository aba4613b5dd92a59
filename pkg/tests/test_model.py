import numpy as np
import pytest

from reml_sim.model import (
    CovarianceComponents,
    DesignSpec,
    NotPSDError,
    SigmaAKind,
    SigmaBKind,
    build_sigma_A,
    build_sigma_B,
    haar_orthogonal,
    psd_factor,
    simulate,
)


def rng_for(*key):
    return np.random.default_rng(np.random.SeedSequence(1234, spawn_key=key))


class TestDesignSpec:
    def test_degrees_of_freedom(self):
        d = DesignSpec(100, 3, 5, 4)
        assert (d.df_A, d.df_B, d.df_E) == (99, 200, 1200)
        assert d.n_observations == 1500

    @pytest.mark.parametrize("args", [(1, 3, 5, 4), (10, 1, 5, 4), (10, 3, 1, 4), (10, 3, 5, 0)])
    def test_invalid_layouts(self, args):
        with pytest.raises(ValueError):
            DesignSpec(*args)


class TestSigmaA:
    def test_identity_null_block(self):
        M = build_sigma_A(SigmaAKind.identity(d=10, c_A=1.0), 50, rng_for(0))
        w = np.sort(np.diag(M))
        assert np.sum(w == 1.0) == 40
        assert np.sum(w == 0.0) == 10

    def test_identity_no_null(self):
        M = build_sigma_A(SigmaAKind.identity(d=0, c_A=2.0), 3, rng_for(1))
        assert np.array_equal(M, np.diag([2.0, 2.0, 2.0]))

    def test_spiked(self):
        M = build_sigma_A(SigmaAKind.spiked(d=10, c_A=1.0), 50, rng_for(2))
        w = np.sort(np.diag(M))[::-1]
        assert w[0] == 5.0
        assert np.all(w[1:40] == 1.0)
        assert np.all(w[40:] == 0.0)

    def test_chi_squared_scale(self):
        M = build_sigma_A(SigmaAKind.chi_squared(d=5, c_A=2.0), 2000, rng_for(3))
        body = np.diag(M)[:-5]
        # chi-squared(5) has mean 5, so scaled entries average to 10
        assert abs(body.mean() - 10.0) < 0.5
        assert np.all(np.diag(M)[-5:] == 0.0)

    def test_chi_squared_fixed_reused_across_calls(self):
        kind = SigmaAKind.chi_squared_fixed(d=3, c_A=1.0, fixed_seed=9)
        M1 = build_sigma_A(kind, 10, rng_for(4))
        M2 = build_sigma_A(kind, 10, rng_for(5))
        assert np.array_equal(M1, M2)
        # chi-squared(5)/5 has mean 1
        big = build_sigma_A(SigmaAKind.chi_squared_fixed(d=0, c_A=1.0, fixed_seed=9), 5000, rng_for(6))
        assert abs(np.diag(big).mean() - 1.0) < 0.05

    def test_heavy_tail_nonnegative(self):
        M = build_sigma_A(SigmaAKind.heavy_tail(d=7, c_A=0.5), 40, rng_for(7))
        assert np.all(np.diag(M) >= 0.0)
        assert np.sum(np.diag(M) == 0.0) == 7

    def test_abs_normal_diagonal(self):
        M = build_sigma_A(SigmaAKind.abs_normal_diagonal(scale=25.0), 4000, rng_for(8))
        vals = np.diag(M)
        assert np.all(vals >= 0)
        # E|Z| = sqrt(2/pi)
        assert abs(vals.mean() - 25.0 * np.sqrt(2 / np.pi)) < 0.6

    def test_half_zero_pattern(self):
        M = build_sigma_A(SigmaAKind.half_zero(c_A=3.0), 20, rng_for(9))
        vals = np.diag(M)
        assert np.sum(vals == 0.0) == 10
        assert np.sum(vals == 3.0) == 10

    def test_null_dim_too_large(self):
        with pytest.raises(ValueError):
            build_sigma_A(SigmaAKind.identity(d=5), 4, rng_for(10))

    def test_explicit_diagonal_length_check(self):
        with pytest.raises(ValueError):
            build_sigma_A(SigmaAKind.explicit_diagonal([1.0, 2.0]), 3, rng_for(11))

    def test_builders_exactly_symmetric(self):
        for kind in (
            SigmaAKind.identity(d=2),
            SigmaAKind.chi_squared(d=1),
            SigmaAKind.heavy_tail(d=0),
            SigmaAKind.spiked(d=3),
            SigmaAKind.abs_normal_diagonal(2.0),
        ):
            M = build_sigma_A(kind, 8, rng_for(12))
            assert np.array_equal(M, M.T)


class TestSigmaB:
    def test_high_corr_spectrum(self):
        M = build_sigma_B(SigmaBKind.high_corr(), 50, rng_for(20))
        w = np.linalg.eigvalsh(M)
        # exact spectrum of 0.8*J + 0.2*I: top = 0.8*50 + 0.2, rest 0.2
        assert abs(w[-1] - 40.2) < 1e-10
        assert np.allclose(w[:-1], 0.2, atol=1e-10)

    def test_identity(self):
        M = build_sigma_B(SigmaBKind.identity(), 50, rng_for(21))
        assert np.array_equal(M, np.eye(50))

    def test_identity_scaled(self):
        M = build_sigma_B(SigmaBKind.identity(scale=4.0), 6, rng_for(22))
        assert np.array_equal(M, 4.0 * np.eye(6))

    def test_wishart_spread(self):
        M = build_sigma_B(SigmaBKind.wishart(), 50, rng_for(23))
        w = np.linalg.eigvalsh(M)
        assert w[0] > -1e-12
        # Marchenko-Pastur support for gamma=1 is [0, 4]; finite-p edges fluctuate
        assert w[-1] < 5.0
        assert np.sum(w > 1e-10) == 50

    def test_high_rank_haar_basis(self):
        P = haar_orthogonal(rng_for(24), 30)
        assert np.linalg.norm(P.T @ P - np.eye(30), "fro") < 1e-10
        M = build_sigma_B(SigmaBKind.high_rank(), 30, rng_for(25))
        assert np.array_equal(M, M.T)
        assert np.linalg.eigvalsh(M)[0] > -1e-10

    def test_all_kinds_symmetric(self):
        for kind in (
            SigmaBKind.identity(),
            SigmaBKind.wishart(),
            SigmaBKind.high_rank(),
            SigmaBKind.high_corr(),
            SigmaBKind.abs_normal_diagonal(25.0),
            SigmaBKind.half_zero(scale=4.0),
        ):
            M = build_sigma_B(kind, 12, rng_for(26))
            assert np.array_equal(M, M.T)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            SigmaBKind(kind="nope")


class TestPsdFactor:
    def test_identity(self):
        F = psd_factor(np.eye(3))
        assert np.allclose(F @ F.T, np.eye(3), atol=1e-12)

    def test_singular_diagonal(self):
        F = psd_factor(np.diag([4.0, 0.0]))
        assert np.allclose(F @ F.T, np.diag([4.0, 0.0]), atol=1e-12)

    def test_high_corr_reconstruction(self):
        M = 0.8 * np.ones((4, 4)) + 0.2 * np.eye(4)
        F = psd_factor(M)
        assert np.abs(F @ F.T - M).max() < 1e-10

    def test_rejects_indefinite(self):
        with pytest.raises(NotPSDError):
            psd_factor(np.diag([1.0, -0.5]))

    def test_null_eigenvalues_exact(self):
        # builders with a null block must factor without clipping drama
        M = build_sigma_A(SigmaAKind.identity(d=3, c_A=1.0), 6, rng_for(30))
        F = psd_factor(M)
        assert np.abs(F @ F.T - M).max() < 1e-12


class TestSimulate:
    def design(self, p):
        return DesignSpec(100, 3, 5, p)

    def test_univariate_unit_variance(self):
        comps = CovarianceComponents(
            sigma_A=np.zeros((1, 1)), sigma_B=np.zeros((1, 1)), sigma_E=np.eye(1)
        )
        data = simulate(self.design(1), comps, seed=99)
        v = data.Y.var()
        assert 0.9 < v < 1.1

    def test_determinism(self):
        comps = CovarianceComponents(sigma_A=np.eye(2), sigma_B=np.eye(2), sigma_E=np.eye(2))
        a = simulate(self.design(2), comps, mu=np.array([1.0, -1.0]), seed=5)
        b = simulate(self.design(2), comps, mu=np.array([1.0, -1.0]), seed=5)
        assert np.array_equal(a.Y, b.Y)
        c = simulate(self.design(2), comps, mu=np.array([1.0, -1.0]), seed=6)
        assert not np.array_equal(a.Y, c.Y)

    def test_grand_variance_three_components(self):
        # var(Y) = 1 + 1 + 1 per trait when all components are the identity
        p = 3
        comps = CovarianceComponents(sigma_A=np.eye(p), sigma_B=np.eye(p), sigma_E=np.eye(p))
        design = self.design(p)
        totals = []
        for seed in range(25):
            data = simulate(design, comps, seed=seed)
            totals.append(data.Y.reshape(-1, p).var(axis=0, ddof=1).mean())
        assert abs(np.mean(totals) - 3.0) < 0.3

    def test_singular_error_covariance_rejected(self):
        comps = CovarianceComponents(
            sigma_A=np.eye(2), sigma_B=np.eye(2), sigma_E=np.diag([1.0, 0.0])
        )
        with pytest.raises(ValueError):
            simulate(self.design(2), comps, seed=0)

    def test_indefinite_sire_rejected(self):
        comps = CovarianceComponents(
            sigma_A=np.diag([1.0, -1.0]), sigma_B=np.eye(2), sigma_E=np.eye(2)
        )
        with pytest.raises(NotPSDError):
            simulate(self.design(2), comps, seed=0)

    def test_mean_shift(self):
        comps = CovarianceComponents(
            sigma_A=np.zeros((2, 2)), sigma_B=np.zeros((2, 2)), sigma_E=0.01 * np.eye(2)
        )
        data = simulate(self.design(2), comps, mu=np.array([5.0, -3.0]), seed=3)
        assert np.allclose(data.Y.mean(axis=(0, 1, 2)), [5.0, -3.0], atol=0.05)

    def test_asymmetric_component_rejected(self):
        M = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError):
            CovarianceComponents(sigma_A=M, sigma_B=np.eye(2), sigma_E=np.eye(2))
