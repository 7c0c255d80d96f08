"""Command line client. Runs the service handlers in-process, or against a running server with --server."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import harness, service, validation
from .classifiers import CorrelationSummary
from .moments import SoftmaxMoments
from .schemas import (
    CrossoverResponse,
    ExperimentConfig,
    MomentsResponse,
    PredictResponse,
    SweepResponse,
    ValidateRequest,
    ValidateResponse,
)

HTTP_TIMEOUT_S = 3600.0


class Backend:
    """Calls the service either directly or over HTTP; both return the same pydantic models."""

    def __init__(self, server: str | None):
        self.server = server.rstrip("/") if server else None

    def _post(self, route: str, payload, model):
        import httpx

        body = payload.model_dump(mode="json")
        resp = httpx.post(f"{self.server}/{route}", json=body, timeout=HTTP_TIMEOUT_S)
        if resp.status_code != 200:
            raise SystemExit(f"server error {resp.status_code}: {resp.text}")
        return model.model_validate_json(resp.text)

    def call(self, route: str, payload, model):
        if self.server:
            return self._post(route, payload, model)
        return getattr(service, route)(payload)


def _config(args) -> ExperimentConfig:
    cfg = harness.load_config(args.config)
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        update["trials"] = args.trials
    if args.mc_samples is not None:
        update["n_mc"] = args.mc_samples
    if getattr(args, "moments", None):
        update["moments_csv"] = str(Path(args.moments).resolve())
    return ExperimentConfig.model_validate({**cfg.model_dump(), **update})


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_predict(args, backend: Backend) -> int:
    cfg = _config(args)
    res = backend.call("predict", cfg, PredictResponse)
    out = _out_dir(args) if args.out_dir else None
    for s in res.summaries:
        if not s.b:
            print(f"gamma={s.gamma:g} {s.classifier}: no prediction ({s.note})")
            continue
        print(f"gamma={s.gamma:g} {s.classifier}: error {s.error:.4f} +- {s.error_se:.4f}")
        if out is not None:
            summary = CorrelationSummary(np.array(s.b), np.array(s.Swm), np.array(s.Sww), np.array(s.Smm))
            summary.to_csv(out / f"summary_{cfg.name}_{s.classifier}_g{s.gamma:g}.csv")
    return 0


def cmd_sweep(args, backend: Backend) -> int:
    cfg = _config(args)
    res = backend.call("sweep", cfg, SweepResponse)
    out = _out_dir(args)
    csv_path = out / f"sweep_{cfg.name}.csv"
    harness.emit_csv(res.rows, csv_path)
    harness.emit_plot_script(res.rows, out / f"plot_{cfg.name}.py", csv_path.name)
    for r in res.rows:
        if r.class_id == harness.TOTAL:
            print(f"gamma={r.gamma:<8g} {r.classifier:<4} empirical {r.empirical:.4f} +- {r.emp_se:.4f}  theory {r.theory:.4f}  ratio {r.ratio:.3f}")
    print(csv_path)
    return 0


def cmd_crossover(args, backend: Backend) -> int:
    cfg = _config(args)
    res = backend.call("crossover", cfg, CrossoverResponse)
    out = _out_dir(args)
    path = out / f"crossover_{cfg.name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gamma", "err_avg", "err_ls", "diff", "diff_se"])
        for p in res.points:
            w.writerow([repr(p.gamma), repr(p.err_avg), repr(p.err_ls), repr(p.diff), repr(p.diff_se)])
    print(f"gamma* = {res.gamma_star:.4f} +- {res.gamma_star_se:.4f}; sign check {'ok' if res.sign_ok else 'FAILED'}")
    for p in res.points:
        print(f"gamma={p.gamma:.4f} Avg {p.err_avg:.4f} LS {p.err_ls:.4f} LS-Avg {p.diff:+.4f} +- {p.diff_se:.4f}")
    print(path)
    return 0 if res.sign_ok else 1


def cmd_moments(args, backend: Backend) -> int:
    cfg = _config(args)
    res = backend.call("moments", cfg, MomentsResponse)
    m = SoftmaxMoments(
        np.array(res.pi), np.array(res.Pi), np.array(res.pi_se), np.array(res.Pi_se), res.n_samples, res.seed
    )
    path = _out_dir(args) / f"moments_{cfg.name}.csv"
    m.to_csv(path)
    print(path)
    return 0


def cmd_validate(args, backend: Backend) -> int:
    criteria = [int(c) for c in args.only.split(",")] if args.only else None
    req = ValidateRequest(criteria=criteria, seed=args.seed or 0)
    if backend.server:
        res = backend.call("validate", req, ValidateResponse)
        for r in res.results:
            print(f"[{'PASS' if r.passed else 'FAIL'}] {r.number:2d} {r.name}: {r.detail} ({r.seconds:.1f}s)")
    else:
        # in-process: print each line as its criterion finishes
        start = time.perf_counter()
        results = validation.run_all(criteria, req.seed, echo=lambda line: print(line, flush=True))
        res = ValidateResponse(
            results=[vars(r) for r in results],
            passed=all(r.passed for r in results),
            seconds=time.perf_counter() - start,
        )
    within = res.seconds < 15 * 60
    print(f"total {res.seconds:.1f}s (budget 900s): {'PASS' if res.passed and within else 'FAIL'}")
    if args.out_dir:
        (_out_dir(args) / "validate.json").write_text(res.model_dump_json(indent=2))
    return 0 if res.passed and within else 1


def cmd_serve(args, backend: Backend) -> int:
    import uvicorn

    uvicorn.run(service.app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artifact", description=__doc__)
    parser.add_argument("--server", help="base URL of a running `artifact serve`; default runs in-process")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=True, moments=False):
        p.add_argument("--config", required=True, help="JSON config path or preset name")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default="out")
        p.add_argument("--mc-samples", type=int, help="Monte Carlo budget for moments and tail probabilities")
        if trials:
            p.add_argument("--trials", type=int, help="empirical trials per cell (0 = theory only)")
        if moments:
            p.add_argument("--moments", help="moments CSV written by `artifact moments`")

    p = sub.add_parser("predict", help="theory summaries and errors for a config")
    common(p, trials=False, moments=True)
    p.set_defaults(func=cmd_predict, out_dir=None)
    p = sub.add_parser("sweep", help="empirical vs theory sweep; writes CSV and a plot script")
    common(p, moments=True)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("crossover", help="gamma* and LS vs Avg errors around it (logit model)")
    common(p, trials=False)
    p.set_defaults(func=cmd_crossover)
    p = sub.add_parser("moments", help="estimate and cache softmax moments as CSV")
    common(p, trials=False)
    p.set_defaults(func=cmd_moments)
    p = sub.add_parser("validate", help="run the acceptance suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    p = sub.add_parser("presets", help="list shipped presets")
    p.set_defaults(func=lambda args, backend: print("\n".join(harness.list_presets())) or 0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, Backend(args.server))
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
