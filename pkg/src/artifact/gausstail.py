"""Misclassification probabilities from correlation summaries, exact and bounded.

Every class-wise error reduces to a Gaussian orthant probability
P{A^{1/2} z >= t}. For the mixture model the noise scale ``sigma`` is applied
here (A = sigma^2 S_c); for the logit model z is standard normal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, ndtr

from ._random import CHUNK, jackknife, make_rng, normal_rows
from .classifiers import CorrelationSummary
from .model import MeanEnsemble, as_priors, softmax

DEFAULT_SAMPLES = 200_000
DEFAULT_INNER = 1000
CLAMP_WARN = 1e-4
SYMMETRY_RTOL = 1e-9
QUAD_TOL = 1e-11


def qfunc(x):
    """Standard normal upper tail Q(x) = 1 - Phi(x)."""
    return ndtr(-np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ProbEstimate:
    value: float
    std_err: float
    method: str  # "MC", "ClosedForm" or "Bound"
    warning: str | None = None


@dataclass(frozen=True)
class TailProblem:
    """P{A^{1/2} z >= t} entrywise, z standard normal."""

    A: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        t = np.atleast_1d(np.asarray(self.t, dtype=float))
        if A.shape != (t.size, t.size):
            raise ValueError("A must be m x m with m = len(t)")
        scale = max(1.0, float(np.abs(A).max()))
        if not np.allclose(A, A.T, rtol=0, atol=1e-10 * scale):
            raise ValueError("A must be symmetric")
        object.__setattr__(self, "A", (A + A.T) / 2)
        object.__setattr__(self, "t", t)


def psd_sqrt(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetric square root with negative eigenvalues clamped; also returns the clamped mass / trace."""
    lam, vec = np.linalg.eigh(A)
    neg = -lam[lam < 0].sum()
    tr = float(np.abs(lam).sum())
    root = (vec * np.sqrt(np.clip(lam, 0, None))) @ vec.T
    return root, (neg / tr if tr > 0 else 0.0)


def _clamp_note(frac: float) -> str | None:
    if frac > CLAMP_WARN:
        msg = f"covariance clamped: negative eigenvalue mass {frac:.2e} of trace"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return msg
    return None


def tail_prob_mc(p: TailProblem, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> ProbEstimate:
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    root, frac = psd_sqrt(p.A)
    z = normal_rows(seed, n_samples, p.t.size, 4)
    hit = np.all(z @ root.T >= p.t, axis=1).astype(float)
    value, se = jackknife(hit)
    return ProbEstimate(float(value), float(se), "MC", _clamp_note(frac))


def rank_one_tail(k: int, t: float) -> ProbEstimate:
    """P{G0 + max_{i<=k} G_i >= t} for iid standard normals, as 1 - E[Phi(t - G0)^k] by 1-D quadrature."""
    if k < 1:
        raise ValueError("k must be at least 1")

    def integrand(g):
        return math.exp(-0.5 * g * g + k * float(log_ndtr(t - g))) / math.sqrt(2 * math.pi)

    # the mass of G0 sits in [-12, 12]; split at t to help the integrator with the kink-free but steep edge
    pts = sorted({-12.0, min(max(t, -12.0), 12.0), 12.0})
    total = sum(integrate.quad(integrand, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)[0] for a, b in zip(pts, pts[1:]))
    return ProbEstimate(float(min(max(1.0 - total, 0.0), 1.0)), 0.0, "ClosedForm")


def gmm_tail_problem(summary: CorrelationSummary, c: int, sigma: float) -> TailProblem:
    """Correct-classification event of class c as P{A^{1/2} z >= t} with A = sigma^2 S_c.

    t_j = <w_j - w_c, mu_c> + b_j - b_c and (S_c)_ij = <w_c - w_i, w_c - w_j> over j != c.
    """
    k = summary.k
    if k < 2:
        raise ValueError("need at least two classes")
    others = np.array([j for j in range(k) if j != c])
    Swm, Sww, b = summary.Swm, summary.Sww, summary.b
    t = Swm[others, c] - Swm[c, c] + b[others] - b[c]
    S = Sww[c, c] - Sww[c, others][None, :] - Sww[others, c][:, None] + Sww[np.ix_(others, others)]
    return TailProblem(sigma**2 * S, t)


def _rank_one_scale(p: TailProblem) -> tuple[float, float] | None:
    """(s, tau) if A = s (I + 11^T) and t = tau 1 up to SYMMETRY_RTOL, else None."""
    m = p.t.size
    s = p.A[0, 0] / 2
    if s <= 0:
        return None
    if not np.allclose(p.A, s * (np.eye(m) + 1.0), rtol=0, atol=SYMMETRY_RTOL * s):
        return None
    tau = p.t[0]
    if not np.allclose(p.t, tau, rtol=0, atol=SYMMETRY_RTOL * max(abs(tau), math.sqrt(s))):
        return None
    return s, tau


def classwise_error_gmm(
    summary: CorrelationSummary, sigma: float, c: int, n_samples: int = DEFAULT_SAMPLES, seed: int = 0
) -> ProbEstimate:
    """1 - P{sigma S_c^{1/2} z >= t_c}; closed form when the geometry is the symmetric rank-one case."""
    p = gmm_tail_problem(summary, c, sigma)
    sym = _rank_one_scale(p)
    if sym is not None:
        s, tau = sym
        return rank_one_tail(p.t.size, -tau / math.sqrt(s))
    est = tail_prob_mc(p, n_samples, seed)
    return ProbEstimate(1.0 - est.value, est.std_err, "MC", est.warning)


def total_error_gmm(
    summary: CorrelationSummary, sigma: float, priors, n_samples: int = DEFAULT_SAMPLES, seed: int = 0
) -> ProbEstimate:
    pi = as_priors(priors, summary.k)
    value, var, methods = 0.0, 0.0, set()
    for c in range(summary.k):
        if pi[c] == 0:
            continue
        e = classwise_error_gmm(summary, sigma, c, n_samples, seed + 7919 * (c + 1))
        value += pi[c] * e.value
        var += (pi[c] * e.std_err) ** 2
        methods.add(e.method)
    return ProbEstimate(float(value), math.sqrt(var), "MC" if "MC" in methods else "ClosedForm")


def _joint_root(summary: CorrelationSummary) -> tuple[np.ndarray, str | None]:
    C = np.block([[summary.Sww, summary.Swm], [summary.Swm.T, summary.Smm]])
    root, frac = psd_sqrt((C + C.T) / 2)
    return root, _clamp_note(frac)


def total_error_mlm(summary: CorrelationSummary, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> ProbEstimate:
    """P{argmax(g + b) != Y} with (g, h) jointly Gaussian and Y ~ softmax(h).

    The label draw is integrated out: each sample contributes 1 - softmax(h)[prediction].
    """
    miss, note = mlm_miss_samples(summary, n_samples, seed)
    value, se = jackknife(miss)
    return ProbEstimate(float(value), float(se), "MC", note)


def mlm_miss_samples(summary: CorrelationSummary, n_samples: int, seed: int) -> tuple[np.ndarray, str | None]:
    """Per-sample miss probabilities behind total_error_mlm.

    Two summaries evaluated with the same seed share the underlying normals,
    which makes paired differences far less noisy than either error.
    """
    k = summary.k
    root, note = _joint_root(summary)
    z = normal_rows(seed, n_samples, 2 * k, 5) @ root.T
    g, h = z[:, :k], z[:, k:]
    pred = np.argmax(g + summary.b, axis=1)
    return 1.0 - softmax(h)[np.arange(n_samples), pred], note


def classwise_error_mlm(
    summary: CorrelationSummary,
    c: int,
    n_outer: int = DEFAULT_SAMPLES,
    n_inner: int = DEFAULT_INNER,
    seed: int = 0,
) -> ProbEstimate:
    """(1/pi_c) E_h[softmax(h)_c (1 - P{S_c^{1/2} z >= t_c(h)})] by nested Monte Carlo.

    Given h, the scores g are Gaussian with mean Swm Smm^+ h and covariance the
    Schur complement Sww - Swm Smm^+ Swm^T; S_c and t_c(h) are built from those.
    Inner draws are shared within each outer chunk.
    """
    k = summary.k
    if k < 2:
        raise ValueError("need at least two classes")
    Smm_pinv = np.linalg.pinv(summary.Smm, rcond=1e-10, hermitian=True)
    h_root, frac_h = psd_sqrt(summary.Smm)
    schur = summary.Sww - summary.Swm @ Smm_pinv @ summary.Swm.T
    others = np.array([j for j in range(k) if j != c])
    S = schur[c, c] - schur[c, others][None, :] - schur[others, c][:, None] + schur[np.ix_(others, others)]
    s_root, frac_s = psd_sqrt((S + S.T) / 2)
    note = _clamp_note(max(frac_h, frac_s))
    h = normal_rows(seed, n_outer, k, 6) @ h_root.T
    mean = h @ (summary.Swm @ Smm_pinv).T
    t = summary.b[others] - summary.b[c] + mean[:, others] - mean[:, [c]]
    weight = softmax(h)[:, c]
    miss = np.empty(n_outer)
    for idx, a in enumerate(range(0, n_outer, CHUNK // 16)):
        stop = min(a + CHUNK // 16, n_outer)
        x = make_rng(seed, 7, idx).standard_normal((n_inner, k - 1)) @ s_root.T
        ok = np.all(x[None, :, :] >= t[a:stop, None, :], axis=2).mean(axis=1)
        miss[a:stop] = 1.0 - ok
    pairs = np.column_stack([weight * miss, weight])
    value, se = jackknife(pairs, lambda rows: rows[:, 0].sum() / rows[:, 1].sum())
    return ProbEstimate(float(value), float(se), "MC", note)


def union_bound_gmm(summary: CorrelationSummary, sigma: float, c: int) -> float:
    p = gmm_tail_problem(summary, c, sigma)
    sd = np.sqrt(np.clip(np.diag(p.A), 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(sd > 0, qfunc(-p.t / sd), (p.t > 0).astype(float))
    return float(min(max(terms.sum(), 0.0), 1.0))


def union_bound_diag_only(summary: CorrelationSummary, sigma: float, c: int) -> float:
    """Union bound that only uses the weight norms, via ||w_c - w_j|| <= ||w_c|| + ||w_j||."""
    p = gmm_tail_problem(summary, c, sigma)
    if np.any(p.t >= 0):
        return 1.0
    norms = np.sqrt(np.clip(np.diag(summary.Sww), 0, None))
    others = [j for j in range(summary.k) if j != c]
    scale = sigma * (norms[c] + norms[others])
    with np.errstate(divide="ignore"):
        terms = np.where(scale > 0, qfunc(-p.t / scale), 0.0)
    return float(min(terms.sum(), 1.0))


def slepian_bound(p: TailProblem) -> float:
    """Upper bound on 1 - P{A^{1/2} z >= t} by lowering every covariance to a = min A_ij.

    Returns NaN when some entry of A is negative (the comparison needs a >= 0).
    The comparison vector is sqrt(a) G0 + sqrt(A_jj - a) G_j, so the bound is a
    1-D integral over G0.
    """
    A = p.A
    a = float(A.min())
    if a < 0:
        return float("nan")
    s = -p.t  # 1 - P{X >= t} = 1 - P{X <= -t} by symmetry
    spread = np.clip(np.diag(A) - a, 0, None)
    tiny = 1e-14 * max(1.0, float(np.diag(A).max()))
    free = spread > tiny
    sd = np.sqrt(spread[free])
    ra = math.sqrt(a)

    if ra == 0:
        prob = float(np.prod(ndtr(s[free] / sd))) * float(np.all(s[~free] >= 0))
        return 1.0 - prob

    upper = float(np.min(s[~free]) / ra) if np.any(~free) else math.inf

    def integrand(g):
        return math.exp(-0.5 * g * g + float(np.sum(log_ndtr((s[free] - ra * g) / sd)))) / math.sqrt(2 * math.pi)

    hi = min(upper, 12.0)
    if hi <= -12.0:
        return 1.0
    prob = integrate.quad(integrand, -12.0, hi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)[0]
    return float(min(max(1.0 - prob, 0.0), 1.0))


def sathe_bounds(rho: float, x) -> tuple[float, float]:
    """Lower and upper bounds on P{X >= x} for X ~ N(0, (1 - rho) I + rho 11^T)."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    if n == 1:
        # a single coordinate carries no correlation: the tail is exact
        q = float(qfunc(x[0]))
        return q, q
    b = 1 - rho
    c = 1 + (n - 1) * rho
    xbar = x.mean()
    s2 = float(((x - xbar) ** 2).sum())
    lower = math.sqrt(b / c) * math.exp(-n * rho * xbar**2 / (2 * c**2)) * float(
        np.prod(qfunc(x / math.sqrt(b) - n * xbar * rho / (c * math.sqrt(b))))
    )
    upper = (c / b) ** ((n - 1) / 2) * math.exp(n * rho * s2 / (2 * b**2)) * float(
        np.prod(qfunc(x * math.sqrt(c) / b - n * xbar * rho / (b * math.sqrt(c))))
    )
    return lower, upper


def genie_lower_bound(means: MeanEnsemble, priors, sigma: float = 1.0) -> float:
    """Pairwise-Bayes lower bound on the error of any classifier that knows the means.

    Coincident means with unequal priors use the limiting pairwise error
    min(p_i, p_j) / (p_i + p_j).
    """
    pi = as_priors(priors, means.k)
    M = means.M
    k = means.k
    total = 0.0
    for i in range(k):
        for j in range(k):
            if i == j or pi[i] + pi[j] == 0:
                continue
            D = float(np.linalg.norm(M[:, i] - M[:, j])) / sigma
            pair = pi[i] + pi[j]
            if D == 0:
                bayes = min(pi[i], pi[j]) / pair
            elif pi[i] == 0 or pi[j] == 0:
                bayes = 0.0
            else:
                lr = math.log(pi[i] / pi[j]) / D
                bayes = (pi[i] * qfunc(D / 2 + lr) + pi[j] * qfunc(D / 2 - lr)) / pair
            total += pi[i] * bayes
    return 2.0 / k * total
