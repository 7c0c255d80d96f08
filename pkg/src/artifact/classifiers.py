"""Linear multiclass classifiers (Avg, LS, WLS, CE), prediction and error statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .model import Dataset, MeanEnsemble, softmax

PINV_RTOL = 1e-10


@dataclass(frozen=True)
class LinearClassifier:
    W: np.ndarray  # k x d
    b: np.ndarray  # k
    rule: str
    separable: bool = False

    @property
    def k(self) -> int:
        return self.W.shape[0]

    def scores(self, X: np.ndarray) -> np.ndarray:
        return self.W @ X + self.b[:, None]

    def to_csv(self, path) -> None:
        """One row per class: the d weights followed by the intercept."""
        np.savetxt(path, np.column_stack([self.W, self.b]), delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, rule: str = "LS") -> "LinearClassifier":
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(raw[:, :-1].copy(), raw[:, -1].copy(), rule)


@dataclass(frozen=True)
class CorrelationSummary:
    """Intercepts and correlation matrices that determine the test error of a linear classifier."""

    b: np.ndarray
    Swm: np.ndarray  # W M
    Sww: np.ndarray  # W W^T
    Smm: np.ndarray  # M^T M

    @property
    def k(self) -> int:
        return self.b.size

    def check(self, tol: float = 1e-8) -> None:
        if not np.allclose(self.Sww, self.Sww.T, atol=1e-10 * max(1.0, np.abs(self.Sww).max())):
            raise ValueError("Sww is not symmetric")
        tr = max(np.trace(self.Sww), 1e-300)
        if np.linalg.eigvalsh(self.Sww).min() < -tol * tr:
            raise ValueError("Sww is not PSD")

    def to_csv(self, path) -> None:
        """b on the first row, then the k rows of Swm, Sww and Smm in that order."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([repr(float(v)) for v in self.b])
            for block in (self.Swm, self.Sww, self.Smm):
                for row in block:
                    w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "CorrelationSummary":
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
        k = raw.shape[1]
        return cls(raw[0], raw[1 : 1 + k], raw[1 + k : 1 + 2 * k], raw[1 + 2 * k : 1 + 3 * k])


def fit_avg(data: Dataset) -> LinearClassifier:
    n = data.n
    return LinearClassifier(data.Y @ data.X.T / n, data.Y.sum(axis=1) / n, "Avg")


def _weighted_lstsq(X: np.ndarray, Y: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimize sum_i s_i ||W x_i + b - y_i||^2 with b free and min-norm W when underdetermined.

    The intercept is profiled out by weighted centering, so the remaining
    problem in W is an ordinary (weighted) least squares that is solved with a
    Cholesky factorization when well posed and an eigendecomposition
    pseudo-inverse otherwise. All k targets share one factorization.
    """
    d, n = X.shape
    sw = s.sum()
    xbar = X @ s / sw
    ybar = Y @ s / sw
    Xc = X - xbar[:, None]
    Yc = Y - ybar[:, None]
    root = np.sqrt(s)
    Z = Xc * root
    T = Yc * root
    W = None
    if n > d:
        G = Z @ Z.T
        R = Z @ T.T
        try:
            cf = linalg.cho_factor(G, lower=True, check_finite=False)
            diag = np.abs(np.diag(cf[0]))
            if diag.min() ** 2 > PINV_RTOL * diag.max() ** 2:
                W = linalg.cho_solve(cf, R, check_finite=False).T
        except linalg.LinAlgError:
            pass
        if W is None:
            W = (_pinv_psd(G) @ R).T
    else:
        # dual form: n x n kernel, cheaper and exact for the min-norm solution
        W = (T @ _pinv_psd(Z.T @ Z)) @ Z.T
    b = ybar - W @ xbar
    return W, b


def _pinv_psd(G: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(G)
    top = lam.max() if lam.size else 0.0
    keep = lam > PINV_RTOL * top if top > 0 else np.zeros(lam.shape, dtype=bool)
    return (vec[:, keep] / lam[keep]) @ vec[:, keep].T


def fit_wls(data: Dataset, omega) -> LinearClassifier:
    """Least squares with the loss of every class-l sample weighted by omega_l**2."""
    omega = np.asarray(omega, dtype=float).ravel()
    if omega.size != data.k or np.any(omega < 0) or not np.any(omega > 0):
        raise ValueError("omega must be a nonnegative length-k vector with a positive entry")
    present = np.unique(data.labels)
    if np.any(omega[present] == 0):
        raise ValueError("omega is zero on a class present in the data")
    W, b = _weighted_lstsq(data.X, data.Y, omega[data.labels] ** 2)
    return LinearClassifier(W, b, "WLS")


def fit_ls(data: Dataset) -> LinearClassifier:
    clf = fit_wls(data, np.ones(data.k))
    return LinearClassifier(clf.W, clf.b, "LS")


def ce_loss_grad(theta: np.ndarray, Xa: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean multiclass cross-entropy and its gradient in theta = [W b] (k x (d+1))."""
    n = Xa.shape[1]
    Z = theta @ Xa
    zmax = Z.max(axis=0)
    lse = zmax + np.log(np.exp(Z - zmax).sum(axis=0))
    loss = float((lse - (Z * Y).sum(axis=0)).mean())
    P = np.exp(Z - lse)
    return loss, (P - Y) @ Xa.T / n


def fit_ce(data: Dataset, steps: int = 500, lr: float = 1.0, max_norm: float = 1e4) -> LinearClassifier:
    """Full-batch gradient descent on the cross-entropy, halving the step on any loss increase.

    The iterate norm is capped at ``max_norm``. ``separable`` is set when the
    final iterate fits every training label, in which case the loss has no
    finite minimizer and the weights keep growing with more steps.
    """
    if steps < 1 or not lr > 0:
        raise ValueError("need steps >= 1 and lr > 0")
    Xa = np.vstack([data.X, np.ones((1, data.n))])
    theta = np.zeros((data.k, data.d + 1))
    loss, grad = ce_loss_grad(theta, Xa, data.Y)
    capped = False
    for _ in range(steps):
        for _ in range(60):
            cand = theta - lr * grad
            new_loss, new_grad = ce_loss_grad(cand, Xa, data.Y)
            if not np.isfinite(new_loss):
                raise FloatingPointError(f"non-finite cross-entropy loss at lr={lr:g}")
            if new_loss <= loss:
                break
            lr /= 2
        else:
            break
        norm = np.linalg.norm(cand)
        if norm > max_norm:
            cand *= max_norm / norm
            capped = True
        theta, loss, grad = cand, new_loss, new_grad
        if capped:
            break
    W, b = theta[:, :-1].copy(), theta[:, -1].copy()
    fits_all = bool(np.all(np.argmax(W @ data.X + b[:, None], axis=0) == data.labels))
    return LinearClassifier(W, b, "CE", separable=capped or fits_all)


def predict(clf: LinearClassifier, x: np.ndarray):
    """Winner-takes-all label(s); ties go to the lowest class index.

    ``x`` may be a single d-vector (returns an int) or a d x n matrix.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return int(np.argmax(clf.W @ x + clf.b))
    return np.argmax(clf.scores(x), axis=0)


def summarize(clf: LinearClassifier, means: MeanEnsemble) -> CorrelationSummary:
    Sww = clf.W @ clf.W.T
    return CorrelationSummary(clf.b.copy(), clf.W @ means.M, (Sww + Sww.T) / 2, means.gram)


def empirical_error(clf: LinearClassifier, test: Dataset) -> tuple[float, np.ndarray]:
    """Total and class-wise misclassification rates; absent classes get NaN."""
    wrong = predict(clf, test.X) != test.labels
    counts = np.bincount(test.labels, minlength=test.k)
    errs = np.bincount(test.labels, weights=wrong, minlength=test.k)
    with np.errstate(invalid="ignore", divide="ignore"):
        classwise = np.where(counts > 0, errs / np.maximum(counts, 1), np.nan)
    return float(wrong.mean()), classwise
