"""Problem instances and samplers for the Gaussian-mixture and multinomial-logit models.

Labels are 0-based integers throughout (class ``l`` is row ``l`` of the one-hot
matrix). Features are stored column-wise: ``X`` is d x n.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._random import chunk_bounds, make_rng

RANK_TOL = 1e-10


@dataclass(frozen=True)
class MeanEnsemble:
    """Class means ``M`` (d x k) with the eigendecomposition ``M^T M = V diag(sv**2) V^T``.

    Only eigenvalues above ``RANK_TOL * max`` are kept, so ``V`` is k x r and
    ``sv`` has length r, the numerical rank of ``M``.
    """

    M: np.ndarray
    V: np.ndarray = field(repr=False)
    sv: np.ndarray

    @classmethod
    def from_means(cls, M) -> "MeanEnsemble":
        M = np.asarray(M, dtype=float)
        if M.ndim != 2:
            raise ValueError("means must be a d x k matrix")
        lam, vec = np.linalg.eigh(M.T @ M)
        lam, vec = lam[::-1], vec[:, ::-1]
        top = lam[0] if lam.size else 0.0
        keep = lam > RANK_TOL * top if top > 0 else np.zeros(lam.shape, dtype=bool)
        return cls(M=M, V=vec[:, keep].copy(), sv=np.sqrt(lam[keep]))

    @property
    def d(self) -> int:
        return self.M.shape[0]

    @property
    def k(self) -> int:
        return self.M.shape[1]

    @property
    def r(self) -> int:
        return self.sv.size

    @property
    def Sigma(self) -> np.ndarray:
        return np.diag(self.sv)

    @property
    def VS(self) -> np.ndarray:
        """V @ Sigma, the k x r factor of the mean Grammian."""
        return self.V * self.sv

    @property
    def gram(self) -> np.ndarray:
        """Sigma_mumu = M^T M."""
        return self.M.T @ self.M


def as_priors(pi, k: int | None = None) -> np.ndarray:
    pi = np.asarray(pi, dtype=float).ravel()
    if k is not None and pi.size != k:
        raise ValueError(f"expected {k} priors, got {pi.size}")
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
        raise ValueError("priors must be nonnegative and sum to 1")
    return pi


def balanced(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


@dataclass(frozen=True)
class GmmInstance:
    """x = mu_y + sigma * z with y ~ priors and z standard normal."""

    means: MeanEnsemble
    priors: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "priors", as_priors(self.priors, self.means.k))
        # sigma = 0 is allowed for noiseless sampling; the LS/WLS limits require sigma > 0
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def k(self) -> int:
        return self.means.k


@dataclass(frozen=True)
class MlmInstance:
    """x ~ N(0, I_d) and P(y = l | x) = softmax(M^T x)_l."""

    means: MeanEnsemble

    @property
    def k(self) -> int:
        return self.means.k


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    labels: np.ndarray
    k: int
    Y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size != self.X.shape[1]:
            raise ValueError("labels must have one entry per column of X")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise ValueError("labels out of range")
        Y = np.zeros((self.k, labels.size))
        Y[labels, np.arange(labels.size)] = 1.0
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[0]


def make_orthogonal_ensemble(k: int, d: int, norms, pairwise_corr: float = 0.0) -> MeanEnsemble:
    """Means with prescribed norms and equal pairwise correlation, embedded in the first k coordinates."""
    if d < k:
        raise ValueError("need d >= k")
    norms = np.broadcast_to(np.asarray(norms, dtype=float), (k,))
    if np.any(norms <= 0):
        raise ValueError("norms must be positive")
    corr = np.full((k, k), float(pairwise_corr))
    np.fill_diagonal(corr, 1.0)
    if np.linalg.eigvalsh(corr).min() < -1e-12:
        raise ValueError(f"pairwise_corr={pairwise_corr} gives a non-PSD Gram matrix for k={k}")
    gram = corr * np.outer(norms, norms)
    lam, vec = np.linalg.eigh(gram)
    root = (vec * np.sqrt(np.clip(lam, 0, None))) @ vec.T
    if pairwise_corr == 0:
        root = np.diag(norms)
    M = np.zeros((d, k))
    M[:k] = root
    return MeanEnsemble.from_means(M)


def sample_gmm(inst: GmmInstance, n: int, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("n must be positive")
    d, k = inst.means.d, inst.k
    X = np.empty((d, n), order="F")
    labels = np.empty(n, dtype=np.int64)
    cdf = np.cumsum(inst.priors)
    for idx, a, b in chunk_bounds(n):
        # labels and noise use separate streams so a prefix of a chunk is a prefix of every longer draw
        lab = np.minimum(np.searchsorted(cdf, make_rng(seed, 0, idx, 0).random(b - a), side="right"), k - 1)
        # skip classes with zero prior that searchsorted could land on at a boundary
        lab = np.where(inst.priors[lab] > 0, lab, np.argmax(inst.priors))
        labels[a:b] = lab
        X[:, a:b] = inst.means.M[:, lab] + inst.sigma * make_rng(seed, 0, idx, 1).standard_normal((b - a, d)).T
    return Dataset(X, labels, k)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def sample_mlm(inst: MlmInstance, n: int, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("n must be positive")
    M = inst.means.M
    d, k = M.shape
    X = np.empty((d, n), order="F")
    labels = np.empty(n, dtype=np.int64)
    for idx, a, b in chunk_bounds(n):
        x = make_rng(seed, 1, idx, 0).standard_normal((b - a, d))
        cdf = np.cumsum(softmax(x @ M), axis=1)
        u = make_rng(seed, 1, idx, 1).random(b - a)[:, None]
        labels[a:b] = np.minimum((cdf < u).sum(axis=1), k - 1)
        X[:, a:b] = x.T
    return Dataset(X, labels, k)


def dataset_to_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{i + 1}" for i in range(data.d)] + ["label"])
        for col, lab in zip(data.X.T, data.labels):
            w.writerow([repr(float(v)) for v in col] + [int(lab)])


def dataset_from_csv(path, k: int) -> Dataset:
    raw = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    return Dataset(np.asfortranarray(raw[:, :-1].T), raw[:, -1].astype(np.int64), k)
