import math

import numpy as np
import pytest
from scipy import integrate
from hypothesis import given
from hypothesis import strategies as st

from artifact.model import (
    Dataset,
    GmmInstance,
    MeanEnsemble,
    MlmInstance,
    as_priors,
    balanced,
    dataset_from_csv,
    dataset_to_csv,
    make_orthogonal_ensemble,
    sample_gmm,
    sample_mlm,
)


def test_noiseless_single_class_sits_on_the_mean():
    mu = np.array([[1.5], [-2.0], [0.25]])
    data = sample_gmm(GmmInstance(MeanEnsemble.from_means(mu), [1.0], sigma=0.0), 50, seed=3)
    assert np.array_equal(data.X, np.repeat(mu, 50, axis=1))
    assert np.all(data.labels == 0)


def test_degenerate_prior_gives_one_label():
    inst = GmmInstance(make_orthogonal_ensemble(3, 5, 1.0), [1.0, 0.0, 0.0])
    assert np.all(sample_gmm(inst, 20_000, seed=1).labels == 0)


def test_balanced_frequencies_within_three_over_root_n():
    n = 100_000
    data = sample_gmm(GmmInstance(make_orthogonal_ensemble(3, 4, 1.0), balanced(3)), n, seed=2)
    freq = np.bincount(data.labels, minlength=3) / n
    assert np.all(np.abs(freq - 1 / 3) < 3 / math.sqrt(n))


def test_zero_means_give_uniform_logit_labels():
    n, k = 100_000, 4
    data = sample_mlm(MlmInstance(MeanEnsemble.from_means(np.zeros((6, k)))), n, seed=4)
    freq = np.bincount(data.labels, minlength=k) / n
    assert np.all(np.abs(freq - 1 / k) < 3 / math.sqrt(n) * math.sqrt(1 / k))


def test_single_class_logit_model():
    data = sample_mlm(MlmInstance(MeanEnsemble.from_means(np.ones((3, 1)))), 1000, seed=5)
    assert np.all(data.labels == 0)


def _sharp_agreement_oracle(norm):
    # P(label = argmax) = E[sigmoid(2 norm |g|)]; adaptive quadrature handles the kink at 0
    f = lambda g: 2 * math.exp(-g * g / 2) / math.sqrt(2 * math.pi) / (1 + math.exp(-2 * norm * g))  # noqa: E731
    return integrate.quad(f, 0, 40, points=[0.1, 1.0], epsabs=1e-12)[0]


def _sharp_agreement(n=10_000):
    mu = np.zeros((5, 2))
    mu[0] = [20.0, -20.0]
    data = sample_mlm(MlmInstance(MeanEnsemble.from_means(mu)), n, seed=6)
    return np.mean(np.argmax(mu.T @ data.X, axis=0) == data.labels)


def test_sharp_softmax_follows_the_argmax():
    n = 10_000
    exact = _sharp_agreement_oracle(20.0)
    assert abs(_sharp_agreement(n) - exact) < 3 * math.sqrt(exact * (1 - exact) / n)


@pytest.mark.xfail(strict=True, reason="exact agreement for antipodal norm-20 means is 0.9862, below the stated 0.99")
def test_sharp_softmax_agreement_exceeds_099():
    assert _sharp_agreement() > 0.99


def test_uncorrelated_gram_is_diagonal():
    norms = np.array([1.0, 2.0, 3.5])
    me = make_orthogonal_ensemble(3, 6, norms)
    np.testing.assert_allclose(me.M.T @ me.M, np.diag(norms**2), atol=1e-12)


def test_correlated_gram_matches_figure_setup():
    me = make_orthogonal_ensemble(9, 20, math.sqrt(15), pairwise_corr=0.5)
    expected = 15 * (0.5 * np.ones((9, 9)) + 0.5 * np.eye(9))
    np.testing.assert_allclose(me.M.T @ me.M, expected, rtol=1e-12, atol=1e-12)


def test_non_psd_correlation_is_rejected():
    with pytest.raises(ValueError):
        make_orthogonal_ensemble(3, 3, 1.0, pairwise_corr=-0.9)


@given(
    k=st.integers(1, 7),
    extra=st.integers(0, 4),
    corr=st.floats(0.0, 0.95),
    scale=st.floats(0.1, 10.0),
)
def test_ensemble_factorization(k, extra, corr, scale):
    norms = scale * (1 + np.arange(k) / k)
    me = make_orthogonal_ensemble(k, k + extra, norms, corr)
    gram = me.M.T @ me.M  # brute-force Gram
    np.testing.assert_allclose(me.V.T @ me.V, np.eye(me.r), atol=1e-10)
    recon = me.V @ np.diag(me.sv**2) @ me.V.T
    assert np.linalg.norm(recon - gram) <= 1e-8 * np.linalg.norm(gram)
    assert np.all(me.sv > 0)


def test_rank_deficient_means_drop_directions():
    M = np.zeros((4, 3))
    M[0] = [1.0, -1.0, 0.0]
    me = MeanEnsemble.from_means(M)
    assert me.r == 1


def test_priors_validation():
    with pytest.raises(ValueError):
        as_priors([0.5, 0.6])
    with pytest.raises(ValueError):
        as_priors([1.5, -0.5])
    np.testing.assert_array_equal(as_priors([0.25, 0.75]), [0.25, 0.75])


def test_one_hot_rows_are_orthogonal():
    data = Dataset(np.zeros((2, 6)), [0, 2, 1, 2, 0, 0], 3)
    assert np.all(data.Y.sum(axis=0) == 1)
    gram = data.Y @ data.Y.T
    assert np.count_nonzero(gram - np.diag(np.diag(gram))) == 0
    np.testing.assert_array_equal(np.argmax(data.Y, axis=0), data.labels)


def test_class_means_converge():
    n, d = 100_000, 50
    inst = GmmInstance(make_orthogonal_ensemble(3, d, 3.0), balanced(3))
    data = sample_gmm(inst, n, seed=8)
    for c in range(3):
        cols = data.X[:, data.labels == c]
        dev = np.linalg.norm(cols.mean(axis=1) - inst.means.M[:, c])
        assert dev < 5 * math.sqrt(d / cols.shape[1])


def test_logit_projections_have_mean_gram_covariance():
    M = np.random.default_rng(0).normal(size=(8, 3))
    data = sample_mlm(MlmInstance(MeanEnsemble.from_means(M)), 100_000, seed=9)
    cov = np.cov(M.T @ data.X)
    assert np.linalg.norm(cov - M.T @ M) < 0.05 * np.linalg.norm(M.T @ M)


def test_same_seed_same_bits_and_chunk_independence():
    inst = GmmInstance(make_orthogonal_ensemble(3, 7, 2.0), [0.2, 0.3, 0.5])
    a, b = sample_gmm(inst, 9000, 11), sample_gmm(inst, 9000, 11)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.labels, b.labels)
    # the first rows do not depend on how many samples were requested
    c = sample_gmm(inst, 100, 11)
    assert np.array_equal(c.X, a.X[:, :100])
    m = MlmInstance(make_orthogonal_ensemble(3, 7, 2.0))
    assert np.array_equal(sample_mlm(m, 500, 1).labels, sample_mlm(m, 500, 1).labels)


def test_dataset_csv_round_trip(tmp_path):
    data = sample_gmm(GmmInstance(make_orthogonal_ensemble(2, 3, 1.0), balanced(2)), 25, seed=1)
    path = tmp_path / "data.csv"
    dataset_to_csv(data, path)
    assert path.read_text().splitlines()[0] == "x_1,x_2,x_3,label"
    back = dataset_from_csv(path, 2)
    assert np.array_equal(back.X, data.X) and np.array_equal(back.labels, data.labels)
