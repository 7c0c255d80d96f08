import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact._random import jackknife, make_rng
from artifact.asymptotics import predict_avg_gmm, predict_avg_mlm, predict_ls_gmm, predict_ls_mlm
from artifact.classifiers import CorrelationSummary, fit_ls, summarize
from artifact.gausstail import (
    TailProblem,
    classwise_error_gmm,
    classwise_error_mlm,
    genie_lower_bound,
    gmm_tail_problem,
    psd_sqrt,
    qfunc,
    rank_one_tail,
    sathe_bounds,
    slepian_bound,
    tail_prob_mc,
    total_error_gmm,
    total_error_mlm,
    union_bound_diag_only,
    union_bound_gmm,
)
from artifact.model import GmmInstance, MeanEnsemble, MlmInstance, balanced, make_orthogonal_ensemble, sample_gmm
from artifact.moments import estimate_moments

MC = 200_000


def within(est, expected, n_se=3, floor=0.0):
    return abs(est.value - expected) <= n_se * est.std_err + floor


def random_gmm_summary(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    inst = GmmInstance(MeanEnsemble.from_means(rng.normal(size=(k + 1, k)) * 1.5), rng.dirichlet(np.full(k, 2.0)), 1.0)
    return inst, predict_ls_gmm(inst, float(rng.uniform(0.1, 0.6)))


def direct_gmm_error(summary, sigma, priors, n, seed):
    # simulate argmax(sigma g + b + Swm e_Y) != Y with g ~ N(0, Sww) and Y ~ priors
    rng = make_rng(seed, 99)
    y = rng.choice(summary.k, size=n, p=priors)
    root, _ = psd_sqrt(summary.Sww)
    scores = sigma * rng.standard_normal((n, summary.k)) @ root.T + summary.b + summary.Swm[:, y].T
    return jackknife((np.argmax(scores, axis=1) != y).astype(float))


# primitives


def test_tail_mc_simple_cases():
    assert within(tail_prob_mc(TailProblem([[1.0]], [0.0]), MC, 1), 0.5)
    assert within(tail_prob_mc(TailProblem(np.eye(2), [0.0, 0.0]), MC, 2), 0.25)


def test_tail_mc_against_rank_one():
    est = tail_prob_mc(TailProblem(np.eye(2) + 1, [0.5, 0.5]), MC, 3)
    # P{X >= t 1} = P{X <= -t 1} = 1 - P{G0 + max G_i >= -t}
    assert within(est, 1 - rank_one_tail(2, -0.5).value)


def test_tail_problem_validation():
    with pytest.raises(ValueError):
        TailProblem([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(ValueError):
        TailProblem(np.eye(2), [0.0])


def test_clamped_covariance_warns():
    A = np.array([[1.0, 0.0], [0.0, -0.01]])
    with pytest.warns(RuntimeWarning):
        est = tail_prob_mc(TailProblem(A, [0.0, -1.0]), 2000, 0)
    assert est.warning is not None


def test_rank_one_single_coordinate():
    assert rank_one_tail(1, 0.0).value == pytest.approx(0.5, abs=1e-12)
    for t in (-2.0, -0.3, 0.7, 3.0):
        assert rank_one_tail(1, t).value == pytest.approx(float(qfunc(t / math.sqrt(2))), abs=1e-10)


def test_rank_one_against_mc():
    est = tail_prob_mc(TailProblem(np.eye(3) + 1, -np.ones(3)), MC, 4)
    assert within(est, 1 - rank_one_tail(3, 1.0).value)


def test_rank_one_monotone():
    ts = np.linspace(-3, 4, 15)
    for k in (1, 2, 5, 9):
        vals = [rank_one_tail(k, t).value for t in ts]
        assert all(a > b for a, b in zip(vals, vals[1:]))
    for t in (-1.0, 0.5, 2.0):
        vals = [rank_one_tail(k, t).value for k in (1, 2, 3, 5, 8)]
        assert all(a < b for a, b in zip(vals, vals[1:]))


# mixture model errors


def test_dominant_class_has_no_error():
    s = CorrelationSummary(np.array([1e6, 0.0, 0.0]), np.zeros((3, 3)), np.eye(3), np.eye(3))
    assert classwise_error_gmm(s, 1.0, 0, MC, 0).value < 1e-12
    assert union_bound_gmm(s, 1.0, 0) < 1e-12


def test_total_error_zero_when_every_class_is_separated():
    s = CorrelationSummary(np.zeros(3), 1e3 * np.eye(3), np.eye(3), np.eye(3))
    assert total_error_gmm(s, 1.0, balanced(3), MC, 0).value == 0.0


def test_total_equals_classwise_in_symmetric_case():
    inst = GmmInstance(make_orthogonal_ensemble(4, 6, 2.0), balanced(4))
    s = predict_ls_gmm(inst, 0.3)
    assert total_error_gmm(s, 1.0, inst.priors).value == pytest.approx(classwise_error_gmm(s, 1.0, 2).value, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_total_error_gmm_against_direct_simulation(seed):
    inst, s = random_gmm_summary(seed)
    est = total_error_gmm(s, 1.0, inst.priors, MC, seed)
    direct, direct_se = direct_gmm_error(s, 1.0, inst.priors, MC, seed)
    assert abs(est.value - float(direct)) <= 4 * math.hypot(est.std_err, float(direct_se))


@pytest.mark.parametrize("seed", range(3))
def test_gmm_classwise_consistency(seed):
    inst, s = random_gmm_summary(seed + 10)
    total = total_error_gmm(s, 1.0, inst.priors, MC, seed)
    per = [classwise_error_gmm(s, 1.0, c, MC, seed + 7919 * (c + 1)) for c in range(inst.k)]
    assert total.value == pytest.approx(sum(p * e.value for p, e in zip(inst.priors, per)), abs=1e-12)


@given(st.integers(0, 2**31), st.floats(0.01, 100.0))
def test_errors_are_scale_invariant(seed, lam):
    inst, s = random_gmm_summary(seed)
    scaled = CorrelationSummary(lam * s.b, lam * s.Swm, lam**2 * s.Sww, s.Smm)
    for c in range(inst.k):
        a = classwise_error_gmm(s, 1.0, c, 20_000, seed % 1000)
        b = classwise_error_gmm(scaled, 1.0, c, 20_000, seed % 1000)
        assert abs(a.value - b.value) <= 3 * max(a.std_err, b.std_err) + 1e-9


# logit model errors


def test_uninformative_logit_error():
    k = 4
    s = CorrelationSummary(np.zeros(k), np.zeros((k, k)), np.eye(k), np.zeros((k, k)))
    assert within(total_error_mlm(s, MC, 0), (k - 1) / k)
    for c in range(k):
        assert within(classwise_error_mlm(s, c, 20_000, 200, c), (k - 1) / k)


def test_aligned_weights_beat_scrambled():
    me = make_orthogonal_ensemble(3, 5, 3.0)
    S = me.gram
    aligned = CorrelationSummary(np.zeros(3), 10 * S, 100 * S, S)
    perm = [1, 2, 0]
    scrambled = CorrelationSummary(np.zeros(3), 10 * S[perm], 100 * S[np.ix_(perm, perm)], S)
    assert total_error_mlm(aligned, MC, 0).value < total_error_mlm(scrambled, MC, 0).value


def test_avg_logit_error_against_direct_simulation():
    gamma = 0.3
    inst = MlmInstance(make_orthogonal_ensemble(3, 3, np.array([1.0, 2.0, 3.0])))
    mom = estimate_moments(inst.means, MC, 0)
    est = total_error_mlm(predict_avg_mlm(inst, gamma, mom), MC, 1)
    # scores given h = M^T x are pi + K h + sqrt(gamma) diag(sqrt(pi)) g; the label is drawn from softmax(h)
    rng = make_rng(7, 0)
    h = rng.standard_normal((MC, 3)) @ inst.means.M
    p = np.exp(h - h.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    y = (p.cumsum(axis=1) < rng.random((MC, 1))).sum(axis=1)
    scores = mom.pi + h @ mom.K.T + math.sqrt(gamma) * np.sqrt(mom.pi) * rng.standard_normal((MC, 3))
    direct, se = jackknife((np.argmax(scores, axis=1) != y).astype(float))
    assert abs(est.value - float(direct)) <= 4 * math.hypot(est.std_err, float(se))


def test_symmetric_logit_classwise_errors_agree_and_sum_to_total():
    inst = MlmInstance(make_orthogonal_ensemble(3, 3, 2.0))
    mom = estimate_moments(inst.means, MC, 0)
    s = predict_ls_mlm(inst, 0.3, mom)
    per = [classwise_error_mlm(s, c, 50_000, 500, 10 + c) for c in range(3)]
    for a in per:
        for b in per:
            assert abs(a.value - b.value) <= 3 * math.hypot(a.std_err, b.std_err)
    total = total_error_mlm(s, MC, 3)
    mix = sum(p * e.value for p, e in zip(mom.pi, per))
    mix_se = math.sqrt(sum((p * e.std_err) ** 2 for p, e in zip(mom.pi, per)))
    assert abs(total.value - mix) <= 4 * math.hypot(total.std_err, mix_se)


def test_asymmetric_logit_classwise_sum_to_total():
    inst = MlmInstance(make_orthogonal_ensemble(3, 3, np.array([1.0, 2.0, 3.0])))
    mom = estimate_moments(inst.means, MC, 0)
    s = predict_avg_mlm(inst, 0.4, mom)
    per = [classwise_error_mlm(s, c, 50_000, 500, 20 + c) for c in range(3)]
    total = total_error_mlm(s, MC, 4)
    mix = sum(p * e.value for p, e in zip(mom.pi, per))
    mix_se = math.sqrt(sum((p * e.std_err) ** 2 for p, e in zip(mom.pi, per)))
    assert abs(total.value - mix) <= 4 * math.hypot(total.std_err, mix_se)


# bounds


def test_union_bound_is_exact_for_two_classes():
    M = np.zeros((3, 2))
    M[0] = [1.0, -1.0]
    inst = GmmInstance(MeanEnsemble.from_means(M), [0.4, 0.6], 1.0)
    s = predict_avg_gmm(inst, 0.5)
    for c in range(2):
        exact = classwise_error_gmm(s, 1.0, c, MC, c)
        assert within(exact, union_bound_gmm(s, 1.0, c), floor=1e-12)
        diag = union_bound_diag_only(s, 1.0, c)
        assert diag < 1 and diag >= exact.value - 3 * exact.std_err


@pytest.mark.parametrize("seed", range(5))
def test_bound_chain_on_random_instances(seed):
    inst, s = random_gmm_summary(seed + 100)
    for c in range(inst.k):
        exact = classwise_error_gmm(s, 1.0, c, MC, c)
        ub = union_bound_gmm(s, 1.0, c)
        assert ub >= exact.value - 3 * exact.std_err - 1e-9
        db = union_bound_diag_only(s, 1.0, c)
        if db < 1:
            assert db >= ub - 1e-12
        sl = slepian_bound(gmm_tail_problem(s, c, 1.0))
        if not math.isnan(sl):
            assert sl >= exact.value - 3 * exact.std_err - 1e-9


def test_diag_only_is_trivial_with_nonnegative_margin():
    s = CorrelationSummary(np.array([0.0, 1.0]), np.zeros((2, 2)), np.eye(2), np.eye(2))
    assert union_bound_diag_only(s, 1.0, 0) == 1.0


def test_slepian_equality_case():
    a = 0.4
    A = np.diag([1.0, 2.0, 0.5]) + a
    p = TailProblem(A, [-0.3, 0.2, -1.0])
    exact = 1 - tail_prob_mc(p, MC, 5).value
    assert abs(slepian_bound(p) - exact) <= 3 * tail_prob_mc(p, MC, 5).std_err
    # closed form by conditioning on the shared factor
    g = np.linspace(-10, 10, 20001)
    dens = np.exp(-g * g / 2) / math.sqrt(2 * math.pi)
    sd = np.sqrt(np.diag(A) - a)
    inner = np.prod([qfunc((t - math.sqrt(a) * g) / s) for t, s in zip(p.t, sd)], axis=0)
    assert slepian_bound(p) == pytest.approx(1 - np.trapezoid(dens * inner, g), abs=1e-7)


@given(st.integers(0, 2**31))
def test_slepian_bounds_mc(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 5))
    B = rng.uniform(0.1, 1.0, size=(m, m))
    A = B @ B.T  # positive entries
    p = TailProblem(A, rng.normal(size=m))
    est = tail_prob_mc(p, 50_000, seed % 1000)
    assert slepian_bound(p) >= 1 - est.value - 3 * est.std_err - 1e-9


def test_slepian_without_shared_factor_is_product_form():
    t = np.array([0.3, -0.5])
    p = TailProblem(np.diag([1.0, 4.0]), t)
    assert slepian_bound(p) == pytest.approx(1 - float(np.prod(qfunc(t / np.array([1.0, 2.0])))), abs=1e-14)


def test_slepian_not_applicable_with_negative_covariance():
    assert math.isnan(slepian_bound(TailProblem([[1.0, -0.2], [-0.2, 1.0]], [0.0, 0.0])))


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5))
def test_sathe_independent_case(x):
    lo, hi = sathe_bounds(0.0, x)
    exact = float(np.prod(qfunc(np.array(x))))
    assert lo == pytest.approx(exact, rel=1e-12, abs=1e-300)
    assert hi == pytest.approx(exact, rel=1e-12, abs=1e-300)


def test_sathe_single_coordinate():
    assert sathe_bounds(0.7, [0.4]) == (float(qfunc(0.4)), float(qfunc(0.4)))


def test_sathe_example():
    x = [0.2, 0.4, -0.1]
    lo, hi = sathe_bounds(0.5, x)
    est = tail_prob_mc(TailProblem(0.5 * np.eye(3) + 0.5, x), MC, 6)
    assert lo <= est.value + 3 * est.std_err and est.value <= hi + 3 * est.std_err


def test_genie_special_cases():
    M = np.zeros((3, 2))
    M[0] = [1.0, -1.0]
    assert genie_lower_bound(MeanEnsemble.from_means(M), balanced(2)) == pytest.approx(float(qfunc(1.0)), abs=1e-15)
    same = MeanEnsemble.from_means(np.ones((3, 2)))
    assert genie_lower_bound(same, balanced(2)) == pytest.approx(0.5)


def test_genie_below_trained_classifiers():
    inst = GmmInstance(make_orthogonal_ensemble(3, 60, 2.0), [0.5, 0.3, 0.2])
    genie = genie_lower_bound(inst.means, inst.priors)
    for seed in range(3):
        s = summarize(fit_ls(sample_gmm(inst, 300, seed)), inst.means)
        err = total_error_gmm(s, 1.0, inst.priors, MC, seed)
        assert genie <= err.value + 3 * err.std_err
