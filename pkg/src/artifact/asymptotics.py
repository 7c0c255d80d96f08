"""High-dimensional limits of the correlation summaries of Avg, LS and WLS classifiers.

Every predictor takes the aspect ratio ``gamma = d / n`` explicitly. Shorthand
used below: ``VS = V @ diag(sv)`` (k x r) factors the mean Grammian,
``P = diag(p) - p p^T`` for a probability vector ``p``, and under the logit
model ``K = diag(pi) - Pi`` from the softmax moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._random import jackknife, normal_rows
from .classifiers import CorrelationSummary
from .model import GmmInstance, MlmInstance, as_priors, softmax
from .moments import SoftmaxMoments, estimate_weighted_ggT


@dataclass(frozen=True)
class WlsFixedPoint:
    """Solution of sum_l pi_l w_l^2 / (w_l^2 + eta) = gamma and the derived reweighting."""

    gamma: float
    eta: float
    nu: np.ndarray
    pi_tilde: np.ndarray
    zeta: float
    nu_prime: np.ndarray  # d nu / d eta
    pi_tilde_prime: np.ndarray


def _fixed_point_lhs(pi: np.ndarray, w2: np.ndarray, eta: float) -> float:
    return float(np.sum(pi * w2 / (w2 + eta)))


def solve_eta(priors, omega, gamma: float) -> WlsFixedPoint:
    """Bisection for the unique positive root of a strictly decreasing function."""
    pi = as_priors(priors)
    w2 = np.asarray(omega, dtype=float).ravel() ** 2
    if w2.size != pi.size or np.any(w2 < 0):
        raise ValueError("omega must be a nonnegative vector matching the priors")
    top = float(pi[w2 > 0].sum())
    if not 0 < gamma < top:
        raise ValueError(f"gamma={gamma} outside the attainable range (0, {top})")
    lo, hi = 0.0, 1.0
    while _fixed_point_lhs(pi, w2, hi) > gamma:
        lo, hi = hi, 2 * hi
    eta = hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = _fixed_point_lhs(pi, w2, mid)
        if f == gamma or mid in (lo, hi):
            eta = mid
            break
        if f > gamma:
            lo = mid
        else:
            hi = mid
        eta = mid
    denom = w2 + eta
    nu = w2 / denom / gamma
    nu_prime = -w2 / denom**2 / gamma
    zeta = gamma / (eta * float(np.sum(pi * w2 / denom**2)))
    return WlsFixedPoint(gamma, eta, nu, pi * nu, zeta, nu_prime, pi * nu_prime)


def _gmm_parts(inst: GmmInstance, p: np.ndarray, ridge: float):
    """P, VS and the inverse of ridge*I + VS^T P VS for effective priors p."""
    if not inst.sigma > 0:
        raise ValueError("least-squares limits need sigma > 0")
    VS = inst.means.VS
    P = np.diag(p) - np.outer(p, p)
    delta = ridge * np.eye(VS.shape[1]) + VS.T @ P @ VS
    return P, VS, np.linalg.inv(delta)


def predict_avg_gmm(inst: GmmInstance, gamma: float) -> CorrelationSummary:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    pi, S = inst.priors, inst.means.gram
    D = np.diag(pi)
    return CorrelationSummary(pi.copy(), D @ S, _sym(gamma * inst.sigma**2 * D + D @ S @ D), S)


def predict_ls_gmm(inst: GmmInstance, gamma: float) -> CorrelationSummary:
    if not 0 < gamma < 1:
        raise ValueError("LS limits need 0 < gamma < 1; use predict_minnorm_ls_gmm for gamma > 1")
    s2 = inst.sigma**2
    pi = inst.priors
    P, VS, Di = _gmm_parts(inst, pi, s2)
    G = P @ VS
    H = G @ Di
    coef = gamma / ((1 - gamma) * s2)
    Sww = coef * P + H @ (Di - coef * np.eye(Di.shape[0])) @ G.T
    return CorrelationSummary(pi - H @ VS.T @ pi, H @ VS.T, _sym(Sww), inst.means.gram)


def predict_minnorm_ls_gmm(inst: GmmInstance, gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Intercepts, W M and per-class weight norms of min-norm LS for gamma > 1.

    Off-diagonal entries of W W^T have no known limit here, so only the norms
    ||w_l|| are returned. The effective ridge is sigma^2 * gamma, i.e. the
    underdetermined Delta_gamma = (gamma - 1) sigma^2 I + Delta.
    """
    if gamma <= 1:
        raise ValueError("min-norm limits need gamma > 1")
    s2 = inst.sigma**2
    pi = inst.priors
    P, VS, Di = _gmm_parts(inst, pi, s2 * gamma)
    H = P @ VS @ Di
    b = pi - H @ VS.T @ pi
    U = VS.T @ (np.eye(pi.size) - pi[None, :])  # column l is VS^T (e_l - pi)
    quad = np.einsum("il,ij,jl->l", U, Di, U)
    norms2 = (pi * (1 - pi) - pi**2 * quad) / (s2 * (gamma - 1))
    return b, H @ VS.T, np.sqrt(np.clip(norms2, 0, None))


def _block_A(C: np.ndarray, weights: np.ndarray, s2: float) -> np.ndarray:
    """C diag(weights) C^T plus s2 * sum(weights) on the leading r x r block."""
    A = (C * weights) @ C.T
    r = C.shape[0] - 1
    A[:r, :r] += s2 * weights.sum() * np.eye(r)
    return A


def predict_wls_gmm(inst: GmmInstance, gamma: float, omega) -> CorrelationSummary:
    if not 0 < gamma < 1:
        raise ValueError("WLS limits need 0 < gamma < 1")
    fp = solve_eta(inst.priors, omega, gamma)
    s2 = inst.sigma**2
    pt, ptp = fp.pi_tilde, fp.pi_tilde_prime
    P, VS, Di = _gmm_parts(inst, pt, s2)
    r, k = VS.shape[1], pt.size
    H = P @ VS @ Di
    b = pt - H @ VS.T @ pt
    Swm = H @ VS.T

    # Q: derivative-in-eta correction, built from A (effective priors) and A' (their eta-derivative).
    C = np.vstack([VS.T, np.ones((1, k))])
    A = _block_A(C, pt, s2)
    A_prime = _block_A(C, ptp, s2)
    Ainv_C = np.linalg.solve(A, C)
    CAC = C.T @ Ainv_C
    Dt, Dtp = np.diag(pt), np.diag(ptp)
    Q = Dtp + Dt @ Ainv_C.T @ A_prime @ Ainv_C @ Dt - Dtp @ CAC @ Dt - Dt @ CAC @ Dtp

    coef = fp.zeta / s2
    Sww = coef * P + H @ (Di - coef * np.eye(r)) @ (P @ VS).T + fp.eta * coef * Q
    return CorrelationSummary(b, Swm, _sym(Sww), inst.means.gram)


def predict_avg_mlm(inst: MlmInstance, gamma: float, mom: SoftmaxMoments) -> CorrelationSummary:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    S = inst.means.gram
    K = mom.K
    return CorrelationSummary(mom.pi.copy(), K @ S, _sym(gamma * np.diag(mom.pi) + K @ S @ K), S)


def predict_ls_mlm(inst: MlmInstance, gamma: float, mom: SoftmaxMoments) -> CorrelationSummary:
    if not 0 < gamma < 1:
        raise ValueError("LS limits need 0 < gamma < 1")
    S = inst.means.gram
    K, pi = mom.K, mom.pi
    Sww = gamma / (1 - gamma) * (np.diag(pi) - np.outer(pi, pi)) + (1 - 2 * gamma) / (1 - gamma) * K @ S @ K
    return CorrelationSummary(pi.copy(), K @ S, _sym(Sww), S)


def predict_wls_mlm(
    inst: MlmInstance,
    gamma: float,
    omega,
    mom: SoftmaxMoments,
    wgg: tuple[np.ndarray, np.ndarray] | None = None,
) -> CorrelationSummary:
    """WLS limits under the logit model.

    ``wgg`` holds E[(nu^T v) g g^T] and E[((nu*nu)^T v) g g^T]; by default they
    are estimated with the same sample budget and seed as ``mom`` so that all
    Monte Carlo inputs share one set of draws.
    """
    if not 0 < gamma < 1:
        raise ValueError("WLS limits need 0 < gamma < 1")
    pi = mom.pi / mom.pi.sum()
    fp = solve_eta(pi, omega, gamma)
    nu, pt = fp.nu, fp.pi_tilde
    k = pi.size
    VS = inst.means.VS
    r = VS.shape[1]
    if wgg is None:
        E1 = estimate_weighted_ggT(inst.means, nu, mom.n_samples, mom.seed)[0] if r else np.zeros((0, 0))
        E2 = estimate_weighted_ggT(inst.means, nu * nu, mom.n_samples, mom.seed)[0] if r else np.zeros((0, 0))
    else:
        E1, E2 = wgg
    B = VS.T @ mom.K  # r x k; column l is E[V_l g]
    u = B @ nu
    delta = E1 - np.outer(u, u)
    if r and np.linalg.eigvalsh(delta).min() <= 0:
        raise ValueError("weighted second-moment matrix is not positive definite; increase n_samples")
    Di = np.linalg.inv(delta) if r else np.zeros((0, 0))
    R = (nu[:, None] * (np.eye(k) - np.outer(pi, nu))) @ B.T  # k x r
    b = pt - R @ Di @ u
    Swm = R @ Di @ VS.T

    A = np.block([[E1, u[:, None]], [u[None, :], np.ones((1, 1))]])
    nu2 = nu * nu
    u2 = B @ nu2
    A_prime = np.block([[E2, u2[:, None]], [u2[None, :], np.array([[nu2 @ pi]])]])
    Cm = np.vstack([B * nu, pt[None, :]])  # column l is c_l
    X = np.linalg.solve(A, Cm)
    CAC = Cm.T @ X
    # cross terms carry (nu_c + nu_l); on the diagonal this is the 2 nu_l of the norm formula
    inner = X.T @ A_prime @ X - nu[:, None] * CAC - CAC * nu[None, :] + np.diag(pt * nu)
    Sww = R @ Di @ Di @ R.T + inner / (1 / gamma - pt @ nu)
    return CorrelationSummary(b, Swm, _sym(Sww), inst.means.gram)


def u_values(mu: float, sigma: float, k: int, gamma: float) -> tuple[float, float, float]:
    """Thresholds u for which the balanced orthogonal error is P{G0 + max_{j<k} G_j >= u}."""
    if not (mu > 0 and sigma > 0 and 0 < gamma < 1 and k >= 1):
        raise ValueError("need mu > 0, sigma > 0, k >= 1 and 0 < gamma < 1")
    denom = mu**2 + k * gamma * sigma**2
    u_avg = mu**2 / sigma * math.sqrt(1 / denom)
    u_ls = mu**2 / sigma * math.sqrt((1 - gamma) / denom)
    u_bayes = mu**2 / sigma / math.sqrt(denom)
    return u_avg, u_ls, u_bayes


def gamma_star(mu: float, k: int, n_samples: int = 200_000, seed: int = 0) -> tuple[float, float]:
    """Threshold below which LS beats Avg for orthogonal equal-norm logit means; (value, std error)."""
    if k < 2 or mu <= 0:
        raise ValueError("need k >= 2 and mu > 0")
    g = normal_rows(seed, n_samples, k, 3)
    s = softmax(mu * g)
    # exchangeability: average the squared softmax over all k coordinates
    per_sample = (s**2).mean(axis=1)

    def stat(rows):
        return mu**2 * k / (k - 1) ** 2 * (1 - k * rows.mean()) ** 2

    value, se = jackknife(per_sample, stat)
    return float(value), float(se)


def _sym(S: np.ndarray) -> np.ndarray:
    return (S + S.T) / 2
