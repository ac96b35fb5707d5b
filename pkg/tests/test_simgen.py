import numpy as np
import pytest
from scipy import stats

from quickiva import simgen
from quickiva.selftest import rejection_radii


def test_streams_are_reproducible():
    a = simgen.complex_normal(simgen.make_rng(5), 10)
    b = simgen.complex_normal(simgen.make_rng(5), 10)
    np.testing.assert_array_equal(a, b)
    t0 = simgen.trial_rng(5, 0).standard_normal(4)
    t1 = simgen.trial_rng(5, 1).standard_normal(4)
    assert not np.array_equal(t0, t1)
    np.testing.assert_array_equal(t1, simgen.trial_rng(5, 1).standard_normal(4))


def test_pcg64_stream_is_pinned():
    # guards against a silent change of the underlying generator
    assert simgen.make_rng(0).bit_generator.__class__.__name__ == "PCG64"
    np.testing.assert_array_equal(
        simgen.make_rng(0).integers(0, 2**31, 3), np.random.Generator(np.random.PCG64(0)).integers(0, 2**31, 3)
    )


def test_lambda_gaussian_and_laplacean():
    assert simgen.exp_power_lambda2(1, 1.0) == pytest.approx(1.0)
    # exp(-lambda |s|) with unit variance: lambda^2 = 6
    assert simgen.exp_power_lambda2(1, 0.5) == pytest.approx(6.0)


@pytest.mark.parametrize("K,alpha,tol", [(1, 1.0, 0.01), (1, 0.5, 0.01), (3, 0.4, 0.02)])
def test_exp_power_unit_variance(K, alpha, tol):
    s = simgen.sample_exp_power(simgen.make_rng(1), K, alpha, 10**6)
    assert s.shape == (K, 10**6)
    np.testing.assert_allclose(np.mean(np.abs(s) ** 2, axis=1), 1, atol=tol)


def test_laplacean_is_heavy_tailed():
    s = simgen.laplacean(simgen.make_rng(2), 10**5)
    assert stats.kurtosis(s.real) > 0
    assert abs(np.mean(s**2)) < 0.02  # circular


@pytest.mark.parametrize("K,alpha", [(1, 0.5), (3, 0.4)])
def test_exp_power_radial_law(K, alpha):
    rng = simgen.make_rng(3)
    r = np.linalg.norm(simgen.sample_exp_power(rng, K, alpha, 10**5), axis=0)
    assert stats.ks_2samp(r, rejection_radii(rng, K, alpha, 10**5)).pvalue > 0.01


def test_random_unitary(rng):
    u = simgen.random_unitary(rng, 1)
    assert abs(abs(u[0, 0]) - 1) <= 1e-12
    for n in range(1, 7):
        U = simgen.random_unitary(rng, n)
        assert np.linalg.norm(U.conj().T @ U - np.eye(n)) <= 1e-12


def test_random_unitary_haar_mean():
    rng = simgen.make_rng(4)
    mean = np.mean([simgen.random_unitary(rng, 3) for _ in range(10**4)], axis=0)
    assert np.abs(mean).max() <= 0.05


def test_random_mixing_conditioning(rng):
    for _ in range(1000):
        assert np.linalg.cond(simgen.random_mixing(rng, 6)) <= 1e4
    with pytest.raises(RuntimeError):
        simgen.random_mixing(rng, 6, cond_cap=1.0 + 1e-9)


def test_iva_dataset_structure(rng):
    data = simgen.generate_iva_dataset(rng, K=3, d=4, N=200)
    assert data.samples.shape == (3, 1, 4, 200)
    for k in range(3):
        np.testing.assert_allclose(data.samples[k, 0], data.mixing[k, 0] @ data.sources[k, 0], atol=1e-12)
    data1 = simgen.generate_iva_dataset(rng, K=1, d=3, N=50)
    assert data1.K == 1 and data1.d == 3


def test_iva_soi_is_uncorrelated_but_dependent():
    data = simgen.generate_iva_dataset(simgen.make_rng(6), K=3, d=2, N=10**5)
    s = data.sources[:, 0, 0, :]
    C = s @ s.conj().T / s.shape[1]
    np.testing.assert_allclose(C, np.eye(3), atol=0.03)
    p = np.abs(s) ** 2
    for j in range(3):
        for l in range(3):
            if j != l:
                assert np.mean(p[j] * p[l]) - p[j].mean() * p[l].mean() > 0.1
    # the remaining sources are independent across mixtures
    q = np.abs(data.sources[:, 0, 1, :]) ** 2
    assert abs(np.mean(q[0] * q[1]) - q[0].mean() * q[1].mean()) < 0.1


def test_true_separating_vector_reaches_cap(rng):
    from quickiva.extract import extraction_sir

    data = simgen.generate_iva_dataset(rng, N=300)
    np.testing.assert_array_equal(extraction_sir(simgen.true_separating_vectors(data), data), 150)
    csv = simgen.generate_csv_dataset(rng, n_block=300)
    w = simgen.true_separating_vectors(csv)
    for t in range(csv.T):
        y = np.einsum("kd,kdn->kn", w.conj(), csv.samples[:, t])
        np.testing.assert_allclose(y, csv.sources[:, t, 0], atol=1e-8)


def test_csv_dataset_has_constant_rows(rng):
    data = simgen.generate_csv_dataset(rng, K=2, d=5, T=4, n_block=50, n_csv_sources=2)
    assert data.samples.shape == (2, 4, 5, 50)
    for k in range(2):
        inv = [np.linalg.inv(data.mixing[k, t]) for t in range(4)]
        for t in range(1, 4):
            np.testing.assert_allclose(inv[t][:2], inv[0][:2], rtol=1e-9, atol=1e-9)
            assert not np.allclose(inv[t][2:], inv[0][2:])
            assert np.linalg.cond(inv[t]) <= 1e4
    with pytest.raises(ValueError):
        simgen.generate_csv_dataset(rng, d=3, n_csv_sources=4)


def test_csv_with_one_block_has_iva_shape(rng):
    data = simgen.generate_csv_dataset(rng, T=1, n_block=40)
    assert data.samples.shape == (3, 1, 6, 40)


def test_separation_dataset(rng):
    data = simgen.generate_separation_dataset(rng, K=3, d=5, N=5000)
    assert data.samples.shape == (3, 1, 5, 5000)
    np.testing.assert_allclose(np.mean(np.abs(data.sources) ** 2, axis=-1), 1, atol=0.1)
    other = simgen.generate_separation_dataset(simgen.make_rng(99), K=3, d=5, N=10)
    assert not np.allclose(other.mixing, data.mixing)
    for k in range(3):
        np.testing.assert_allclose(np.linalg.inv(data.mixing[k, 0]) @ data.mixing[k, 0], np.eye(5), atol=1e-10)


def test_generators_are_pure():
    a = simgen.generate_csv_dataset(simgen.make_rng(8), n_block=20)
    b = simgen.generate_csv_dataset(simgen.make_rng(8), n_block=20)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_near_ideal_init_norm(rng):
    w = simgen.complex_normal(rng, (3, 6))
    w0 = simgen.near_ideal_init(rng, w, 0.1)
    np.testing.assert_allclose(np.linalg.norm(w0 - w, axis=1), 0.1)
