import numpy as np
import pytest

from reml_sim.model import CovarianceComponents, DesignSpec, PhenotypeDataset, simulate
from reml_sim.stats import decomposition_check, mean_squares


def identity_comps(p):
    return CovarianceComponents(sigma_A=np.eye(p), sigma_B=np.eye(p), sigma_E=np.eye(p))


def test_degrees_of_freedom_passthrough():
    design = DesignSpec(100, 3, 5, 2)
    ms = mean_squares(simulate(design, identity_comps(2), seed=0))
    assert (ms.df_A, ms.df_B, ms.df_E) == (99, 200, 1200)


def test_constant_dataset_gives_zero_sums():
    design = DesignSpec(3, 2, 2, 2)
    Y = np.ones((3, 2, 2, 2)) * 7.0
    data = PhenotypeDataset(design=design, mu=np.zeros(2), Y=Y)
    ms = mean_squares(data)
    assert np.array_equal(ms.m_A, np.zeros((2, 2)))
    assert np.array_equal(ms.m_B, np.zeros((2, 2)))
    assert np.array_equal(ms.m_E, np.zeros((2, 2)))
    assert decomposition_check(data, ms) == 0.0


def test_hand_computed_univariate_case():
    # I=J=K=2 with Y = 1..8: check every sum against direct arithmetic.
    design = DesignSpec(2, 2, 2, 1)
    Y = np.arange(1.0, 9.0).reshape(2, 2, 2, 1)
    data = PhenotypeDataset(design=design, mu=np.zeros(1), Y=Y)
    ms = mean_squares(data)

    y = Y[..., 0]
    dam_means = y.mean(axis=2)            # [[1.5, 3.5], [5.5, 7.5]]
    sire_means = y.mean(axis=(1, 2))      # [2.5, 6.5]
    grand = y.mean()                      # 4.5
    S_A = 4 * sum((m - grand) ** 2 for m in sire_means)            # 4*(4+4) = 32
    S_B = 2 * sum(
        (dam_means[i, j] - sire_means[i]) ** 2 for i in range(2) for j in range(2)
    )                                                               # 2*4*1 = 8
    S_E = sum(
        (y[i, j, k] - dam_means[i, j]) ** 2
        for i in range(2) for j in range(2) for k in range(2)
    )                                                               # 8*0.25 = 2
    assert S_A == 32.0 and S_B == 8.0 and S_E == 2.0
    assert ms.m_A[0, 0] == pytest.approx(S_A / 1)
    assert ms.m_B[0, 0] == pytest.approx(S_B / 2)
    assert ms.m_E[0, 0] == pytest.approx(S_E / 4)

    S_total = ((y - grand) ** 2).sum()
    recomposed = 1 * ms.m_A[0, 0] + 2 * ms.m_B[0, 0] + 4 * ms.m_E[0, 0]
    assert recomposed == pytest.approx(S_total)
    assert decomposition_check(data, ms) <= 1e-8 * S_total


def test_decomposition_identity_on_simulated_data():
    design = DesignSpec(30, 3, 4, 5)
    comps = CovarianceComponents(
        sigma_A=2.0 * np.eye(5), sigma_B=np.eye(5), sigma_E=np.eye(5)
    )
    for seed in (0, 1, 2):
        data = simulate(design, comps, seed=seed)
        ms = mean_squares(data)
        grand = data.Y.reshape(-1, 5)
        S_total = np.linalg.norm((grand - grand.mean(0)).T @ (grand - grand.mean(0)), "fro")
        assert decomposition_check(data, ms) <= 1e-8 * S_total


def test_noise_only_residual_mean_square_near_identity():
    design = DesignSpec(100, 3, 5, 3)
    comps = CovarianceComponents(
        sigma_A=np.zeros((3, 3)), sigma_B=np.zeros((3, 3)), sigma_E=np.eye(3)
    )
    acc = np.zeros((3, 3))
    n = 20
    for seed in range(n):
        acc += mean_squares(simulate(design, comps, seed=seed)).m_E
    assert np.abs(acc / n - np.eye(3)).max() < 0.1


def test_monte_carlo_unbiasedness_three_strata():
    # Entrywise 3-standard-error band around the expected mean squares.
    p = 2
    design = DesignSpec(20, 3, 4, p)
    comps = CovarianceComponents(
        sigma_A=np.array([[2.0, 0.5], [0.5, 1.0]]),
        sigma_B=np.array([[1.0, -0.3], [-0.3, 0.8]]),
        sigma_E=np.eye(p),
    )
    K = design.n_offspring_per_dam
    JK = design.n_dams_per_sire * K
    expected = {
        "A": comps.sigma_E + K * comps.sigma_B + JK * comps.sigma_A,
        "B": comps.sigma_E + K * comps.sigma_B,
        "E": comps.sigma_E,
    }
    n = 400
    draws = {k: np.zeros((n, p, p)) for k in "ABE"}
    for seed in range(n):
        ms = mean_squares(simulate(design, comps, seed=9000 + seed))
        draws["A"][seed], draws["B"][seed], draws["E"][seed] = ms.m_A, ms.m_B, ms.m_E
    for k in "ABE":
        mean = draws[k].mean(axis=0)
        se = draws[k].std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(mean - expected[k]) <= 3.0 * se), f"stratum {k} biased"


def test_subset_consistency_is_exact():
    design = DesignSpec(15, 3, 3, 4)
    comps = CovarianceComponents(
        sigma_A=np.eye(4), sigma_B=0.5 * np.eye(4), sigma_E=np.eye(4)
    )
    data = simulate(design, comps, seed=11)
    ms = mean_squares(data)
    traits = [0, 2]
    sub_design = DesignSpec(15, 3, 3, 2)
    sub_data = PhenotypeDataset(design=sub_design, mu=data.mu[traits], Y=data.Y[..., traits])
    direct = mean_squares(sub_data)
    taken = ms.submatrix(traits)
    assert np.allclose(direct.m_A, taken.m_A, atol=1e-12)
    assert np.allclose(direct.m_B, taken.m_B, atol=1e-12)
    assert np.allclose(direct.m_E, taken.m_E, atol=1e-12)
