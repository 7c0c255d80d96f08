"""Monte Carlo moments of v = softmax(V Sigma g), g ~ N(0, I_r).

These drive every prediction under the multinomial-logit model. All
estimators with the same ``(n_samples, seed)`` reuse the same Gaussian draws,
so identities between them hold sample-by-sample where they are algebraic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._random import block_slices, jackknife_sums, normal_rows
from .model import MeanEnsemble, softmax

DEFAULT_SAMPLES = 200_000
_STREAM = 2


@dataclass(frozen=True)
class SoftmaxMoments:
    pi: np.ndarray
    Pi: np.ndarray
    pi_se: np.ndarray
    Pi_se: np.ndarray
    n_samples: int
    seed: int

    @property
    def k(self) -> int:
        return self.pi.size

    @property
    def K(self) -> np.ndarray:
        """diag(pi) - Pi, the covariance-like matrix appearing in every MLM formula."""
        return np.diag(self.pi) - self.Pi

    def to_csv(self, path) -> None:
        k = self.k
        body = np.vstack([self.pi, self.Pi, self.pi_se, self.Pi_se])
        header = f"n_samples={self.n_samples},seed={self.seed},k={k}"
        np.savetxt(path, body, delimiter=",", fmt="%.17g", header=header)

    @classmethod
    def from_csv(cls, path) -> "SoftmaxMoments":
        with open(path) as fh:
            header = fh.readline().lstrip("# ").strip()
        meta = dict(item.split("=") for item in header.split(","))
        k = int(meta["k"])
        body = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(
            pi=body[0], Pi=body[1 : k + 1], pi_se=body[k + 1], Pi_se=body[k + 2 : 2 * k + 2],
            n_samples=int(meta["n_samples"]), seed=int(meta["seed"]),
        )


def _draws(means: MeanEnsemble, n_samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    g = normal_rows(seed, n_samples, means.r, _STREAM)
    v = softmax(g @ means.VS.T)
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("non-finite softmax values")
    return g, v


def _blockwise(fn, n: int) -> tuple[np.ndarray, np.ndarray]:
    blocks = block_slices(n)
    sums = np.stack([fn(sl) for sl in blocks])
    return jackknife_sums(sums, [sl.stop - sl.start for sl in blocks])


def estimate_moments(means: MeanEnsemble, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> SoftmaxMoments:
    """pi = E[v] and Pi = E[v v^T] with per-entry jackknife standard errors."""
    k = means.k
    if means.r == 0:
        z = np.zeros(k)
        return SoftmaxMoments(np.full(k, 1 / k), np.full((k, k), 1 / k**2), z, np.zeros((k, k)), n_samples, seed)
    _, v = _draws(means, n_samples, seed)
    pi, pi_se = _blockwise(lambda sl: v[sl].sum(axis=0), n_samples)
    Pi, Pi_se = _blockwise(lambda sl: v[sl].T @ v[sl], n_samples)
    return SoftmaxMoments(pi, (Pi + Pi.T) / 2, pi_se, Pi_se, n_samples, seed)


def estimate_cross_moment(
    means: MeanEnsemble, n_samples: int = DEFAULT_SAMPLES, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """E[v g^T] (k x r) and its standard error."""
    if means.r == 0:
        z = np.zeros((means.k, 0))
        return z, z.copy()
    g, v = _draws(means, n_samples, seed)
    return _blockwise(lambda sl: v[sl].T @ g[sl], n_samples)


def estimate_weighted_ggT(
    means: MeanEnsemble, weight, n_samples: int = DEFAULT_SAMPLES, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """E[(weight^T v) g g^T] (r x r), symmetrized, and its standard error.

    Uses E[g g^T] = I as a control variate: the average of
    (weight^T v - mean(weight)) g g^T plus mean(weight) * I is unbiased and
    exact when the weight is constant.
    """
    weight = np.asarray(weight, dtype=float).ravel()
    if weight.size != means.k:
        raise ValueError("weight must have length k")
    if means.r == 0:
        z = np.zeros((0, 0))
        return z, z.copy()
    g, v = _draws(means, n_samples, seed)
    kappa = float(weight.mean())
    s = v @ weight - kappa
    est, se = _blockwise(lambda sl: (g[sl] * s[sl, None]).T @ g[sl], n_samples)
    return (est + est.T) / 2 + kappa * np.eye(means.r), se


def softmax_hessian_mean(
    means: MeanEnsemble, cls: int, n_samples: int = DEFAULT_SAMPLES, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """E[Hessian of softmax(h)_cls] at h = V Sigma g (k x k); used as a test oracle."""
    _, v = _draws(means, n_samples, seed)

    def block(sl):
        s = v[sl]
        sc = s[:, cls]
        dev = -s
        dev[:, cls] += 1.0
        outer = np.einsum("n,ni,nj->ij", sc, dev, dev)
        cov = np.diag((sc[:, None] * s).sum(axis=0)) - np.einsum("n,ni,nj->ij", sc, s, s)
        return outer - cov

    return _blockwise(block, n_samples)


def jackknife_moments(means: MeanEnsemble, n_samples: int = DEFAULT_SAMPLES, seed: int = 0) -> list[SoftmaxMoments]:
    """Leave-one-block-out moment replicates, for propagating Monte Carlo error through predictors."""
    k = means.k
    if means.r == 0:
        return [estimate_moments(means, n_samples, seed)]
    _, v = _draws(means, n_samples, seed)
    blocks = block_slices(n_samples)
    s1 = np.stack([v[sl].sum(axis=0) for sl in blocks])
    s2 = np.stack([v[sl].T @ v[sl] for sl in blocks])
    counts = np.array([sl.stop - sl.start for sl in blocks], dtype=float)
    out = []
    for i in range(len(blocks)):
        m = counts.sum() - counts[i]
        Pi = (s2.sum(axis=0) - s2[i]) / m
        out.append(SoftmaxMoments((s1.sum(axis=0) - s1[i]) / m, (Pi + Pi.T) / 2, np.zeros(k), np.zeros((k, k)), n_samples, seed))
    return out


def replicate_se(values: list[np.ndarray]) -> np.ndarray:
    """Jackknife standard error from leave-one-block-out replicates of any statistic."""
    reps = np.stack([np.asarray(v, dtype=float) for v in values])
    m = len(reps)
    if m < 2:
        return np.zeros(reps.shape[1:])
    return np.sqrt((m - 1) / m * ((reps - reps.mean(axis=0)) ** 2).sum(axis=0))
