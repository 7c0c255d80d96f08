"""Experiment sweeps: empirical classifiers against their asymptotic predictions.

A sweep visits every (gamma, classifier) cell of a config. Each cell averages
``trials`` fresh train/test draws and evaluates the matching theory summary
through the tail-probability evaluators. Every random stream is derived from
the config seed and the cell coordinates, so output is byte-identical per seed.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ._random import derive_seed, jackknife
from .asymptotics import (
    gamma_star,
    predict_avg_gmm,
    predict_avg_mlm,
    predict_ls_gmm,
    predict_ls_mlm,
    predict_wls_gmm,
    predict_wls_mlm,
)
from .classifiers import CorrelationSummary, empirical_error, fit_avg, fit_ce, fit_ls, fit_wls
from .gausstail import (
    ProbEstimate,
    classwise_error_gmm,
    classwise_error_mlm,
    mlm_miss_samples,
    total_error_gmm,
    total_error_mlm,
)
from .model import GmmInstance, MeanEnsemble, MlmInstance, balanced, make_orthogonal_ensemble, sample_gmm, sample_mlm
from .moments import SoftmaxMoments, estimate_moments
from .schemas import CLASSIFIER_ORDER, CrossoverPoint, CrossoverResponse, ExperimentConfig, SweepRow

log = logging.getLogger(__name__)

CSV_HEADER = ("gamma", "classifier", "class_id", "empirical", "emp_se", "theory", "theory_se", "ratio")
TOTAL = "all"
NAN = float("nan")
INNER_SAMPLES = 1000

# stream tags for derive_seed
_TRAIN, _TEST, _THEORY, _CLASSWISE, _CROSS = 10, 11, 20, 21, 30


def list_presets() -> list[str]:
    root = resources.files("artifact") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(source: str | Path) -> ExperimentConfig:
    """Read a JSON config from a path, or a shipped preset by name."""
    path = Path(source)
    if path.suffix == ".json" or path.exists():
        text = path.read_text()
    else:
        res = resources.files("artifact") / "presets" / f"{source}.json"
        if not res.is_file():
            raise FileNotFoundError(f"no config file or preset named {source!r}; presets: {', '.join(list_presets())}")
        text = res.read_text()
    return ExperimentConfig.model_validate(json.loads(text))


@dataclass(frozen=True)
class Setup:
    """Instantiated model for a config; ``pi`` are the class priors (GMM) or softmax marginals (MLM)."""

    cfg: ExperimentConfig
    means: MeanEnsemble
    instance: GmmInstance | MlmInstance
    pi: np.ndarray
    omega: np.ndarray
    moments: SoftmaxMoments | None


@functools.lru_cache(maxsize=32)
def _moments_cached(k: int, d: int, norms: tuple, corr: float, n_mc: int, seed: int) -> SoftmaxMoments:
    means = make_orthogonal_ensemble(k, d, np.array(norms), corr)
    return estimate_moments(means, n_mc, seed)


def _norm_vector(cfg: ExperimentConfig) -> np.ndarray:
    return np.full(cfg.k, float(cfg.norms)) if not isinstance(cfg.norms, list) else np.array(cfg.norms, dtype=float)


def config_moments(cfg: ExperimentConfig) -> SoftmaxMoments:
    """Softmax moments of an MLM config, memoized across calls in this process."""
    return _moments_cached(cfg.k, cfg.d, tuple(_norm_vector(cfg)), cfg.pairwise_corr, cfg.n_mc, cfg.seed)


def build_setup(cfg: ExperimentConfig, moments: SoftmaxMoments | None = None) -> Setup:
    means = make_orthogonal_ensemble(cfg.k, cfg.d, _norm_vector(cfg), cfg.pairwise_corr)
    if cfg.model == "GMM":
        pi = np.array(cfg.priors, dtype=float) if cfg.priors is not None else balanced(cfg.k)
        inst = GmmInstance(means, pi, cfg.sigma)
        mom = None
    else:
        inst = MlmInstance(means)
        if moments is None and cfg.moments_csv:
            moments = SoftmaxMoments.from_csv(cfg.moments_csv)
        mom = moments if moments is not None else config_moments(cfg)
        if mom.k != cfg.k:
            raise ValueError("moments do not match the config's k")
        pi = mom.pi / mom.pi.sum()
    if cfg.weights == "inv_sqrt_prior":
        with np.errstate(divide="ignore"):
            omega = np.where(pi > 0, 1 / np.sqrt(pi), 0.0)
    else:
        omega = np.array(cfg.weights, dtype=float)
    return Setup(cfg, means, inst, pi, omega, mom)


def theory_summary(setup: Setup, classifier: str, gamma: float) -> CorrelationSummary:
    """Asymptotic correlation summary of one classifier; raises where no limit is available."""
    inst = setup.instance
    if setup.cfg.model == "GMM":
        if classifier == "Avg":
            return predict_avg_gmm(inst, gamma)
        if classifier == "LS":
            return predict_ls_gmm(inst, gamma)
        if classifier == "WLS":
            return predict_wls_gmm(inst, gamma, setup.omega)
    else:
        if classifier == "Avg":
            return predict_avg_mlm(inst, gamma, setup.moments)
        if classifier == "LS":
            return predict_ls_mlm(inst, gamma, setup.moments)
        if classifier == "WLS":
            return predict_wls_mlm(inst, gamma, setup.omega, setup.moments)
    raise ValueError(f"no asymptotic prediction for {classifier}")


def theory_errors(
    setup: Setup, summary: CorrelationSummary, seed: int, classwise: bool = True
) -> tuple[ProbEstimate, list[ProbEstimate] | None]:
    cfg = setup.cfg
    if cfg.model == "GMM":
        total = total_error_gmm(summary, cfg.sigma, setup.pi, cfg.n_mc, seed)
        per = [classwise_error_gmm(summary, cfg.sigma, c, cfg.n_mc, seed + 7919 * (c + 1)) for c in range(cfg.k)]
        return total, per if classwise else None
    total = total_error_mlm(summary, cfg.n_mc, seed)
    if not classwise:
        return total, None
    n_outer = max(cfg.n_mc // 10, 1000)
    per = [
        classwise_error_mlm(summary, c, n_outer, INNER_SAMPLES, derive_seed(seed, _CLASSWISE, c)) for c in range(cfg.k)
    ]
    return total, per


def _fit(setup: Setup, classifier: str, data):
    if classifier == "Avg":
        return fit_avg(data)
    if classifier == "LS":
        return fit_ls(data)
    if classifier == "WLS":
        return fit_wls(data, setup.omega)
    return fit_ce(data, steps=setup.cfg.ce_steps)


def _sample(setup: Setup, n: int, seed: int):
    if setup.cfg.model == "GMM":
        return sample_gmm(setup.instance, n, seed)
    return sample_mlm(setup.instance, n, seed)


def _empirical(setup: Setup, classifiers: list[str], gi: int, gamma: float):
    """Mean and SE of total and class-wise test errors per classifier over the configured trials."""
    cfg = setup.cfg
    n = cfg.n_for(gamma)
    totals = {c: [] for c in classifiers}
    per = {c: [] for c in classifiers}
    counts = []
    for trial in range(cfg.trials):
        train = _sample(setup, n, derive_seed(cfg.seed, _TRAIN, gi, trial))
        test = _sample(setup, cfg.n_test, derive_seed(cfg.seed, _TEST, gi, trial))
        counts.append(np.bincount(test.labels, minlength=cfg.k))
        for name in classifiers:
            try:
                tot, cw = empirical_error(_fit(setup, name, train), test)
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                log.warning("fit failed: gamma=%g classifier=%s trial=%d: %s", gamma, name, trial, exc)
                tot, cw = NAN, np.full(cfg.k, NAN)
            totals[name].append(tot)
            per[name].append(cw)
    out = {}
    n_cls = np.sum(counts, axis=0) / max(len(counts), 1)
    for name in classifiers:
        t = np.array(totals[name])
        cw = np.array(per[name])
        out[name] = (_mean_se(t, cfg.n_test), [_mean_se(cw[:, c], n_cls[c]) for c in range(cfg.k)])
    return out


def _mean_se(values: np.ndarray, n_test: float) -> tuple[float, float]:
    """Trial mean and its SE; a single trial falls back to the binomial SE of the test set."""
    if values.size == 0 or np.any(np.isnan(values)):
        return NAN, NAN
    m = float(values.mean())
    if values.size > 1:
        return m, float(values.std(ddof=1) / math.sqrt(values.size))
    return m, math.sqrt(m * (1 - m) / n_test) if n_test > 0 else NAN


def _row(gamma, classifier, class_id, emp, theo) -> SweepRow:
    e, es = emp
    t, ts = theo
    ratio = e / t if (math.isfinite(e) and math.isfinite(t) and t > 0) else NAN
    return SweepRow(
        gamma=gamma, classifier=classifier, class_id=class_id, empirical=e, emp_se=es, theory=t, theory_se=ts, ratio=ratio
    )


def run_sweep(cfg: ExperimentConfig, moments: SoftmaxMoments | None = None) -> list[SweepRow]:
    """Rows sorted by (gamma, classifier, class); class_id "all" holds the total error.

    A failing cell (no limit at this gamma, singular fit, ...) gets NaN in the
    affected columns and a logged warning; the sweep continues.
    """
    setup = build_setup(cfg, moments)
    classifiers = [c for c in CLASSIFIER_ORDER if c in cfg.classifiers]
    rows: list[SweepRow] = []
    for gi, gamma in sorted(enumerate(cfg.gamma_grid), key=lambda item: item[1]):
        emp = _empirical(setup, classifiers, gi, gamma) if cfg.trials > 0 else {}
        for ci, name in enumerate(classifiers):
            theo_total, theo_per = (NAN, NAN), [(NAN, NAN)] * cfg.k
            if name != "CE":
                try:
                    summary = theory_summary(setup, name, gamma)
                    tot, per = theory_errors(setup, summary, derive_seed(cfg.seed, _THEORY, gi, ci), cfg.classwise)
                    theo_total = (tot.value, tot.std_err)
                    if per is not None:
                        theo_per = [(p.value, p.std_err) for p in per]
                except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                    log.warning("theory failed: gamma=%g classifier=%s: %s", gamma, name, exc)
            e_total, e_per = emp.get(name, ((NAN, NAN), [(NAN, NAN)] * cfg.k))
            rows.append(_row(gamma, name, TOTAL, e_total, theo_total))
            if cfg.classwise:
                rows.extend(_row(gamma, name, str(c), e_per[c], theo_per[c]) for c in range(cfg.k))
    return rows


def predict_summaries(cfg: ExperimentConfig, moments: SoftmaxMoments | None = None):
    """(gamma, classifier, summary or None, total error estimate or None, note) for every theory cell."""
    setup = build_setup(cfg, moments)
    out = []
    for gi, gamma in enumerate(cfg.gamma_grid):
        for ci, name in enumerate(c for c in CLASSIFIER_ORDER if c in cfg.classifiers and c != "CE"):
            try:
                summary = theory_summary(setup, name, gamma)
                tot, _ = theory_errors(setup, summary, derive_seed(cfg.seed, _THEORY, gi, ci), classwise=False)
                out.append((gamma, name, summary, tot, tot.warning))
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                out.append((gamma, name, None, None, str(exc)))
    return out


def run_crossover(
    cfg: ExperimentConfig, offsets=(-0.1, -0.05, 0.0, 0.05, 0.1), tol_se: float = 3.0
) -> CrossoverResponse:
    """gamma* for equal-norm orthogonal logit means, and paired LS - Avg theory errors around it.

    Both errors at a grid point are evaluated on the same normals, so the
    difference has its own (much smaller) jackknife SE. ``sign_ok`` requires
    sign(err_LS - err_Avg) = sign(gamma - gamma*) wherever |diff| exceeds
    ``tol_se`` combined standard errors (the SE of the difference plus the
    SE of gamma* times the local slope).
    """
    if cfg.model != "MLM":
        raise ValueError("the crossover analysis is for the logit model")
    norms = _norm_vector(cfg)
    if cfg.pairwise_corr != 0 or not np.allclose(norms, norms[0]):
        raise ValueError("the crossover analysis needs orthogonal equal-norm means")
    gs, gs_se = gamma_star(float(norms[0]), cfg.k, cfg.n_mc, derive_seed(cfg.seed, _CROSS))
    setup = build_setup(cfg)
    grid = sorted({round(gs + o, 12) for o in offsets if 0 < gs + o < 1})
    points = []
    ok = True
    seed = derive_seed(cfg.seed, _CROSS, 1)
    for gamma in grid:
        avg, _ = mlm_miss_samples(predict_avg_mlm(setup.instance, gamma, setup.moments), cfg.n_mc, seed)
        ls, _ = mlm_miss_samples(predict_ls_mlm(setup.instance, gamma, setup.moments), cfg.n_mc, seed)
        diff, diff_se = jackknife(ls - avg)
        diff, diff_se = float(diff), float(diff_se)
        points.append(CrossoverPoint(gamma=gamma, err_avg=float(avg.mean()), err_ls=float(ls.mean()), diff=diff, diff_se=diff_se))
        if abs(gamma - gs) > tol_se * gs_se and abs(diff) > tol_se * diff_se:
            ok &= math.copysign(1, diff) == math.copysign(1, gamma - gs)
    return CrossoverResponse(config=cfg, gamma_star=gs, gamma_star_se=gs_se, points=points, sign_ok=ok)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_csv(table: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in table:
            w.writerow([_fmt(getattr(row, col)) for col in CSV_HEADER])


def read_csv(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [SweepRow.model_validate(rec) for rec in reader]


_PLOT_TEMPLATE = '''"""Error versus gamma: theory curves (lines) over empirical means (markers)."""

import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

# a relative path is resolved against this script's directory
CSV_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), {csv_path!r})
CLASSIFIERS = {classifiers!r}


def load(path):
    with open(path, newline="") as fh:
        return [row for row in csv.DictReader(fh) if row["class_id"] == "all"]


def main():
    rows = load(CSV_PATH)
    fig, ax = plt.subplots(figsize=(5, 4))
    for i, name in enumerate(CLASSIFIERS):
        sel = sorted((r for r in rows if r["classifier"] == name), key=lambda r: float(r["gamma"]))
        g = [float(r["gamma"]) for r in sel]
        theory = [float(r["theory"]) for r in sel]
        emp = [float(r["empirical"]) for r in sel]
        err = [float(r["emp_se"]) for r in sel]
        color = "C%d" % i
        if any(not math.isnan(v) for v in theory):
            ax.plot(g, theory, "-", color=color, label=name + " theory")
        if any(not math.isnan(v) for v in emp):
            ax.errorbar(g, emp, yerr=err, fmt="o", color=color, mfc="none", label=name + " empirical")
    ax.set_xlabel("gamma = d / n")
    ax.set_ylabel("misclassification error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = CSV_PATH.rsplit(".", 1)[0] + ".png"
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()
'''


def emit_plot_script(table: list[SweepRow], path, csv_path) -> None:
    """Write a standalone matplotlib script that reads ``csv_path`` and saves a PNG beside it.

    A relative ``csv_path`` is taken relative to the script's own directory.
    """
    present = {r.classifier for r in table}
    classifiers = [c for c in CLASSIFIER_ORDER if c in present] + sorted(present - set(CLASSIFIER_ORDER))
    Path(path).write_text(_PLOT_TEMPLATE.format(csv_path=str(csv_path), classifiers=classifiers))
