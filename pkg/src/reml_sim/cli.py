"""Command-line interface: simulate, fit, run scenarios, bench, validate, serve."""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import datafiles, experiments
from .estimators import ESTIMATOR_NAMES, fit_by_name
from .model import CovarianceComponents, DesignSpec, simulate
from .oracle import brute_force_reml
from .stats import mean_squares


def _diag_matrix(text: str, p: int, name: str) -> np.ndarray:
    vals = [float(v) for v in text.split(",") if v.strip()]
    if len(vals) != p:
        raise SystemExit(f"error: {name} needs {p} comma-separated values")
    return np.diag(vals)


def _add_common_fit_flags(sub):
    # defaults resolved per command so `run` can tell "flag given" from
    # "use the scenario's own setting"
    sub.add_argument("--tol", type=float, default=None, help="stepwise stopping tolerance (default 1e-6)")
    sub.add_argument("--max-cycles", type=int, default=None, help="stepwise cycle cap (default 1000)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reml-sim",
        description="Simulate balanced half-sib designs and fit covariance components.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="simulate a dataset and write it to a file")
    sim.add_argument("--sires", type=int, default=100)
    sim.add_argument("--dams", type=int, default=3)
    sim.add_argument("--offspring", type=int, default=5)
    sim.add_argument("--p", type=int, default=4)
    sim.add_argument("--sigma-a-diag", default=None, help="comma-separated diagonal of sigma_A")
    sim.add_argument("--sigma-b-diag", default=None, help="comma-separated diagonal of sigma_B")
    sim.add_argument("--sigma-e-diag", default=None, help="comma-separated diagonal of sigma_E (default ones)")
    sim.add_argument("--mu", default=None, help="comma-separated intercept (default zeros)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output dataset path")

    fit = subs.add_parser("fit", help="fit estimators to a dataset or mean-squares file")
    fit.add_argument("input", help="dataset CSV, or mean-squares JSON (*.json)")
    fit.add_argument(
        "--method",
        default="stepwise",
        choices=ESTIMATOR_NAMES + ("all",),
    )
    fit.add_argument("--delta", type=float, action="append", default=None,
                     help="also report d-hat(delta) per component (repeatable)")
    _add_common_fit_flags(fit)

    run = subs.add_parser("run", help="run a builtin or custom scenario")
    run.add_argument("scenario", help="builtin scenario name or config file path")
    run.add_argument("--seed", type=int, default=None, help="override base seed")
    run.add_argument("--replicates", type=int, default=None, help="override replicate count")
    run.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores, or REML_SIM_THREADS)")
    run.add_argument("--delta", type=float, action="append", default=None,
                     help="extra d-hat threshold (repeatable)")
    run.add_argument("--out", default=None, help="output path (default stdout)")
    run.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    _add_common_fit_flags(run)

    bench = subs.add_parser("bench", help="time stepwise fits across trait counts")
    bench.add_argument("--p", type=int, action="append", default=None,
                       help="trait count, repeatable (default 50)")
    bench.add_argument("--sires", type=int, default=100)
    bench.add_argument("--dams", type=int, default=3)
    bench.add_argument("--offspring", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)
    _add_common_fit_flags(bench)

    val = subs.add_parser("validate", help="cross-check stepwise REML against the brute-force solver")
    val.add_argument("--instances", type=int, default=5, help="instances per trait count")
    val.add_argument("--seed", type=int, default=2024)
    val.add_argument("--p-max", type=int, default=3, choices=(1, 2, 3, 4))

    serve = subs.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    return parser


def _cmd_simulate(args) -> int:
    design = DesignSpec(args.sires, args.dams, args.offspring, args.p)
    p = args.p
    diag_a = _diag_matrix(args.sigma_a_diag, p, "--sigma-a-diag") if args.sigma_a_diag else np.eye(p)
    diag_b = _diag_matrix(args.sigma_b_diag, p, "--sigma-b-diag") if args.sigma_b_diag else np.eye(p)
    diag_e = _diag_matrix(args.sigma_e_diag, p, "--sigma-e-diag") if args.sigma_e_diag else np.eye(p)
    mu = np.array([float(v) for v in args.mu.split(",")]) if args.mu else None
    comps = CovarianceComponents(sigma_A=diag_a, sigma_B=diag_b, sigma_E=diag_e)
    data = simulate(design, comps, mu=mu, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        datafiles.write_dataset(data, fh)
    print(f"wrote {design.n_observations} observations x {p} traits to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    path = Path(args.input)
    if not path.exists():
        print(f"error: no such file: {path}", file=sys.stderr)
        return 1
    with open(path, encoding="utf-8") as fh:
        if path.suffix == ".json":
            ms, design = datafiles.read_mean_squares(fh)
        else:
            data = datafiles.read_dataset(fh)
            design = data.design
            ms = mean_squares(data)
    tol = args.tol if args.tol is not None else 1e-6
    max_cycles = args.max_cycles if args.max_cycles is not None else 1000
    methods = list(ESTIMATOR_NAMES) if args.method == "all" else [args.method]
    for name in methods:
        fit = fit_by_name(name, ms, design, tol=tol, max_cycles=max_cycles)
        print(f"method: {fit.method}")
        print(f"  criterion: {fit.criterion:.6f}  converged: {fit.converged}  cycles: {fit.iterations}")
        for comp in ("A", "B", "E"):
            eigs = ", ".join(f"{v:.6g}" for v in fit.spectra[comp])
            print(f"  sigma_{comp} eigenvalues: [{eigs}]")
            for delta in args.delta or []:
                count = nearly_null_dim(fit.spectra[comp], delta)
                print(f"  sigma_{comp} d_hat({delta:g}): {count}")
    return 0


def _cmd_run(args) -> int:
    path = Path(args.scenario)
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            cfg = datafiles.parse_scenario_config(fh, name=path.stem)
    else:
        try:
            cfg = experiments.get_scenario(args.scenario, base_seed=args.seed or 0)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.delta:
        overrides["deltas"] = tuple(args.delta)
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.max_cycles is not None:
        overrides["max_cycles"] = args.max_cycles
    cfg = dataclasses.replace(cfg, **overrides)

    records = experiments.run_scenario(cfg, threads=args.threads)
    writer = experiments.write_csv if args.format == "csv" else experiments.write_jsonl
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            writer(records, fh)
        print(f"wrote {len(records)} records to {args.out}", file=sys.stderr)
    else:
        writer(records, sys.stdout)
    return 0


def _cmd_bench(args) -> int:
    tol = args.tol if args.tol is not None else 1e-6
    max_cycles = args.max_cycles if args.max_cycles is not None else 1000
    for p in args.p or [50]:
        design = DesignSpec(args.sires, args.dams, args.offspring, p)
        comps = CovarianceComponents(sigma_A=np.eye(p), sigma_B=4 * np.eye(p), sigma_E=np.eye(p))
        ms = mean_squares(simulate(design, comps, seed=args.seed))
        t0 = time.perf_counter()
        fit = fit_by_name("stepwise", ms, design, tol=tol, max_cycles=max_cycles)
        elapsed = time.perf_counter() - t0
        print(f"stepwise REML p={p}: {elapsed:.4f} s ({fit.iterations} cycles, converged={fit.converged})")
    return 0


def _cmd_validate(args) -> int:
    worst_crit = 0.0
    worst_comp = 0.0
    failures = 0
    for p in range(1, args.p_max + 1):
        design = DesignSpec(20, 3, 5, p)
        for r in range(args.instances):
            rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(p, r)))
            wA = np.abs(rng.standard_normal(p)) * 1.5
            wA[rng.random(p) < 0.4] = 0.0
            wB = np.abs(rng.standard_normal(p))
            comps = CovarianceComponents(
                sigma_A=np.diag(wA), sigma_B=np.diag(wB), sigma_E=np.eye(p)
            )
            ms = mean_squares(simulate(design, comps, seed=int(rng.integers(2**63))))
            sfit = fit_by_name("stepwise", ms, design, tol=1e-8, max_cycles=5000)
            ofit = brute_force_reml(ms, design)
            dc = abs(sfit.criterion - ofit.criterion)
            dm = max(
                float(np.linalg.norm(
                    getattr(sfit.components, f"sigma_{k}") - getattr(ofit.components, f"sigma_{k}"),
                    "fro",
                ))
                for k in "ABE"
            )
            worst_crit = max(worst_crit, dc)
            worst_comp = max(worst_comp, dm)
            ok = dc <= 1e-4 and dm <= 1e-3
            failures += 0 if ok else 1
            print(f"p={p} instance={r}: |crit diff|={dc:.2e} max component diff={dm:.2e} {'ok' if ok else 'FAIL'}")
    print(f"worst: |crit diff|={worst_crit:.2e} component diff={worst_comp:.2e} failures={failures}")
    return 0 if failures == 0 else 1


def _cmd_serve(args) -> int:
    try:
        import uvicorn
    except ImportError:
        print("error: the serve command needs uvicorn (pip install uvicorn)", file=sys.stderr)
        return 1
    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "run": _cmd_run,
    "bench": _cmd_bench,
    "validate": _cmd_validate,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
