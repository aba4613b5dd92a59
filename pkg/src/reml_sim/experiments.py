"""Declarative replicated experiments over simulated half-sib designs.

A scenario is a factorial grid over trait count, sire/dam covariance
recipes, null dimension and sire scaling, each cell replicated with
deterministic per-replicate seeding.  Every replicate emits flat
records (one row per method/component/statistic) suitable for CSV or
JSON-lines output; the record multiset is independent of worker count.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .estimators import fit_by_name
from .model import (
    CovarianceComponents,
    DesignSpec,
    SigmaAKind,
    SigmaBKind,
    build_sigma_A,
    build_sigma_B,
    simulate,
)
from .spectra import nearly_null_dim
from .stats import mean_squares

__all__ = [
    "ScenarioConfig",
    "ResultRecord",
    "run_scenario",
    "builtin_scenarios",
    "write_csv",
    "write_jsonl",
    "CSV_HEADER",
]

CSV_HEADER = (
    "scenario,p,d,c_A,sigma_A_kind,sigma_B_kind,replicate,seed,method,component,statistic,value"
)

TOP_EIGS = 5


@dataclass(frozen=True)
class ScenarioConfig:
    """Factorial grid definition plus replication and seeding policy."""

    name: str
    design: DesignSpec
    sigma_A_kinds: Tuple[SigmaAKind, ...]
    sigma_B_kinds: Tuple[SigmaBKind, ...]
    p_values: Tuple[int, ...]
    null_dims: Tuple[int, ...] = (0,)
    c_A_values: Tuple[float, ...] = (1.0,)
    replicates: int = 1
    base_seed: int = 0
    estimators: Tuple[str, ...] = ("stepwise",)
    deltas: Tuple[float, ...] = ()
    mu: Optional[Tuple[float, ...]] = None
    tol: float = 1e-6
    max_cycles: int = 1000

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        for p in self.p_values:
            if p < 1:
                raise ValueError("p values must be >= 1")
        for d in self.null_dims:
            if d < 0 or d > max(self.p_values):
                raise ValueError(f"null dimension {d} invalid for p values {self.p_values}")

    def cells(self) -> List[tuple]:
        """Deterministic enumeration of the grid: (p, A-kind, B-kind, d, c_A)."""
        return list(
            itertools.product(
                self.p_values,
                self.sigma_A_kinds,
                self.sigma_B_kinds,
                self.null_dims,
                self.c_A_values,
            )
        )


@dataclass(frozen=True)
class ResultRecord:
    """One statistic of one fit (or truth draw) in one replicate."""

    scenario: str
    p: int
    d: int
    c_A: float
    sigma_A_kind: str
    sigma_B_kind: str
    replicate: int
    seed: int
    method: str
    component: str
    statistic: str
    value: Optional[float]

    def sort_key(self):
        return (
            self.scenario,
            self.p,
            self.d,
            self.c_A,
            self.sigma_A_kind,
            self.sigma_B_kind,
            self.replicate,
            self.method,
            self.component,
            self.statistic,
        )

    def csv_row(self) -> str:
        val = (
            ""
            if self.value is None or (isinstance(self.value, float) and math.isnan(self.value))
            else repr(float(self.value))
        )
        return (
            f"{self.scenario},{self.p},{self.d},{float(self.c_A)!r},{self.sigma_A_kind},"
            f"{self.sigma_B_kind},{self.replicate},{self.seed},{self.method},"
            f"{self.component},{self.statistic},{val}"
        )


def _parametrized(kind_A: SigmaAKind, d: int, c_A: float) -> SigmaAKind:
    """Inject grid (d, c_A) into kinds that accept them."""
    if kind_A.kind in ("identity", "chi_squared", "chi_squared_fixed", "heavy_tail", "spiked"):
        return replace(kind_A, d=d, c_A=c_A)
    if kind_A.kind == "half_zero":
        return replace(kind_A, c_A=c_A)
    return kind_A


def _method_tag(name: str) -> str:
    return {
        "manova": "MANOVA",
        "stepwise": "StepwiseREML",
        "pseudo": "PseudoREML",
        "pairwise": "PairwiseREML",
    }[name]


def _spectrum_records(base: dict, method: str, component: str, eigs: np.ndarray, deltas):
    recs = []
    for i in range(min(TOP_EIGS, eigs.size)):
        recs.append(
            ResultRecord(**base, method=method, component=component, statistic=f"eig_{i+1}", value=float(eigs[i]))
        )
    recs.append(
        ResultRecord(
            **base, method=method, component=component, statistic="d_hat_0",
            value=float(nearly_null_dim(eigs, 0.0)),
        )
    )
    for delta in deltas:
        recs.append(
            ResultRecord(
                **base, method=method, component=component, statistic=f"d_hat_{delta:g}",
                value=float(nearly_null_dim(eigs, delta)),
            )
        )
    return recs


def _replicate_records(cfg: ScenarioConfig, cell_index: int, cell: tuple, rep: int) -> List[ResultRecord]:
    p, kind_A, kind_B, d, c_A = cell
    kind_A = _parametrized(kind_A, d, c_A)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.base_seed, spawn_key=(cell_index, rep)))
    # Stream order per replicate: sigma_A draw, sigma_B draw, dataset seed.
    sigma_A = build_sigma_A(kind_A, p, rng)
    sigma_B = build_sigma_B(kind_B, p, rng)
    seed = int(rng.integers(2**63))

    design = replace(cfg.design, n_traits=p)
    truth = CovarianceComponents(sigma_A=sigma_A, sigma_B=sigma_B, sigma_E=np.eye(p))
    mu = np.asarray(cfg.mu, dtype=float) if cfg.mu is not None else None
    data = simulate(design, truth, mu=mu, seed=seed)
    ms = mean_squares(data)

    base = dict(
        scenario=cfg.name, p=p, d=d, c_A=c_A,
        sigma_A_kind=kind_A.kind, sigma_B_kind=kind_B.kind,
        replicate=rep, seed=seed,
    )
    records: List[ResultRecord] = []

    # Realized truth rows: the reference lines of the replicated figures.
    true_eigs = {
        "A": np.sort(np.diag(sigma_A))[::-1],
        "B": np.linalg.eigvalsh(sigma_B)[::-1],
        "E": np.ones(p),
    }
    for comp, eigs in true_eigs.items():
        for i in range(min(TOP_EIGS, p)):
            records.append(
                ResultRecord(**base, method="truth", component=comp, statistic=f"eig_{i+1}", value=float(eigs[i]))
            )
        records.append(
            ResultRecord(
                **base, method="truth", component=comp, statistic="null_dim",
                value=float(np.count_nonzero(eigs == 0.0)),
            )
        )

    fits: dict = {}
    for est in cfg.estimators:
        tag = _method_tag(est)
        try:
            fit = fit_by_name(est, ms, design, tol=cfg.tol, max_cycles=cfg.max_cycles)
        except Exception:
            records.append(
                ResultRecord(**base, method=tag, component="all", statistic="failure", value=1.0)
            )
            continue
        fits[est] = fit
        for comp in ("A", "B", "E"):
            records.extend(_spectrum_records(base, tag, comp, fit.spectra[comp], cfg.deltas))
        records.append(
            ResultRecord(**base, method=tag, component="all", statistic="criterion",
                         value=float(fit.criterion) if np.isfinite(fit.criterion) else None)
        )
        records.append(
            ResultRecord(**base, method=tag, component="all", statistic="converged",
                         value=1.0 if fit.converged else 0.0)
        )
        records.append(
            ResultRecord(**base, method=tag, component="all", statistic="iterations",
                         value=float(fit.iterations))
        )
        # Relative bias of the top eigenvalue against the realized truth.
        lam1_true = float(true_eigs["A"][0])
        lam1 = float(fit.spectra["A"][0])
        records.append(
            ResultRecord(**base, method=tag, component="A", statistic="rel_eig_1_vs_truth",
                         value=(lam1 - lam1_true) / lam1_true if lam1_true != 0 else None)
        )

    if "stepwise" in fits and "manova" in fits:
        sfit, mfit = fits["stepwise"], fits["manova"]
        for comp in ("A", "B", "E"):
            count = min(TOP_EIGS, p)
            for i in range(count):
                records.append(
                    ResultRecord(
                        **base, method="StepwiseREML", component=comp,
                        statistic=f"eig_{i+1}_minus_manova",
                        value=float(sfit.spectra[comp][i] - mfit.spectra[comp][i]),
                    )
                )
        lam1R = float(sfit.spectra["A"][0])
        records.append(
            ResultRecord(
                **base, method="MANOVA", component="A", statistic="rel_eig_1_vs_stepwise",
                value=(float(mfit.spectra["A"][0]) - lam1R) / lam1R if lam1R != 0 else None,
            )
        )
    if "stepwise" in fits and "pairwise" in fits:
        sfit, pfit = fits["stepwise"], fits["pairwise"]
        lp, lr = pfit.spectra["A"], sfit.spectra["A"]
        records.append(
            ResultRecord(**base, method="PairwiseREML", component="A",
                         statistic="n_negative_eigs", value=float(np.count_nonzero(lp < 0)))
        )
        records.append(
            ResultRecord(**base, method="PairwiseREML", component="A",
                         statistic="max_gap_vs_stepwise", value=float(np.max(lp - lr)))
        )
    return records


def default_threads() -> int:
    env = os.environ.get("REML_SIM_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def run_scenario(cfg: ScenarioConfig, threads: Optional[int] = None) -> List[ResultRecord]:
    """Execute every grid cell and replicate; returns records sorted by keys.

    Each (cell, replicate) task derives its own generator from
    (base_seed, cell index, replicate), so the output is identical for
    any worker count.
    """
    if threads is None:
        threads = default_threads()
    tasks = [
        (ci, cell, rep)
        for ci, cell in enumerate(cfg.cells())
        for rep in range(cfg.replicates)
    ]
    if threads <= 1 or len(tasks) <= 1:
        chunks = [_replicate_records(cfg, ci, cell, rep) for ci, cell, rep in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(
                pool.map(lambda t: _replicate_records(cfg, t[0], t[1], t[2]), tasks)
            )
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=ResultRecord.sort_key)
    return records


def write_csv(records: Iterable[ResultRecord], fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for rec in records:
        fh.write(rec.csv_row() + "\n")


def write_jsonl(records: Iterable[ResultRecord], fh) -> None:
    for rec in records:
        row = {
            "scenario": rec.scenario, "p": rec.p, "d": rec.d, "c_A": rec.c_A,
            "sigma_A_kind": rec.sigma_A_kind, "sigma_B_kind": rec.sigma_B_kind,
            "replicate": rec.replicate, "seed": rec.seed, "method": rec.method,
            "component": rec.component, "statistic": rec.statistic,
            "value": None if rec.value is None or (isinstance(rec.value, float) and math.isnan(rec.value)) else rec.value,
        }
        fh.write(json.dumps(row) + "\n")


_BASE_DESIGN = DesignSpec(n_sires=100, n_dams_per_sire=3, n_offspring_per_dam=5, n_traits=4)

_NULL_GRID = tuple(range(0, 55, 5))
_CA_GRID = (0.5, 1.0, 2.0)
_B_MENU = (
    SigmaBKind.identity(),
    SigmaBKind.wishart(),
    SigmaBKind.high_rank(),
    SigmaBKind.high_corr(),
)


def builtin_scenarios(base_seed: int = 0) -> dict:
    """Named configurations for the bundled simulation studies.

    Replicate counts are the full ones; override with
    ``dataclasses.replace`` or the CLI ``--replicates`` flag for
    desk-scale runs.
    """
    scenarios = {}
    scenarios["table1"] = ScenarioConfig(
        name="table1",
        design=_BASE_DESIGN,
        sigma_A_kinds=(SigmaAKind.explicit_diagonal((25.0, 25.0, 0.0, 0.0)),),
        sigma_B_kinds=(SigmaBKind.explicit_diagonal((9.0, 0.0, 0.0, 9.0)),),
        p_values=(4,),
        null_dims=(2,),
        replicates=1,
        base_seed=base_seed,
        estimators=("manova", "stepwise", "pseudo"),
        mu=(1.0, 2.0, 3.0, 4.0),
    )
    scenarios["fig-q50"] = ScenarioConfig(
        name="fig-q50",
        design=_BASE_DESIGN,
        sigma_A_kinds=(SigmaAKind.abs_normal_diagonal(scale=25.0),),
        sigma_B_kinds=(SigmaBKind.abs_normal_diagonal(scale=25.0),),
        p_values=(50,),
        replicates=1,
        base_seed=base_seed,
        estimators=("manova", "stepwise"),
    )
    scenarios["fig-pairwise"] = replace(
        scenarios["fig-q50"], name="fig-pairwise", estimators=("stepwise", "pairwise")
    )
    scenarios["fig-top5-bias"] = ScenarioConfig(
        name="fig-top5-bias",
        design=_BASE_DESIGN,
        sigma_A_kinds=(SigmaAKind.identity(),),
        sigma_B_kinds=(SigmaBKind.identity(scale=4.0),),
        p_values=tuple(range(10, 110, 10)),
        replicates=50,
        base_seed=base_seed,
        estimators=("stepwise",),
    )
    scenarios["fig-reml-vs-manova"] = ScenarioConfig(
        name="fig-reml-vs-manova",
        design=_BASE_DESIGN,
        sigma_A_kinds=(SigmaAKind.half_zero(),),
        sigma_B_kinds=(SigmaBKind.half_zero(scale=4.0),),
        p_values=tuple(range(10, 110, 10)),
        replicates=50,
        base_seed=base_seed,
        estimators=("manova", "stepwise"),
    )
    scenarios["fig-nearly-null"] = ScenarioConfig(
        name="fig-nearly-null",
        design=_BASE_DESIGN,
        sigma_A_kinds=(
            SigmaAKind.identity(),
            SigmaAKind.chi_squared(),
            SigmaAKind.heavy_tail(),
        ),
        sigma_B_kinds=_B_MENU,
        p_values=(50,),
        null_dims=_NULL_GRID,
        c_A_values=_CA_GRID,
        replicates=10,
        base_seed=base_seed,
        estimators=("stepwise",),
    )
    scenarios["fig-dhat-delta"] = replace(
        scenarios["fig-nearly-null"], name="fig-dhat-delta", deltas=(1.0,)
    )
    scenarios["fig-top1-bias"] = ScenarioConfig(
        name="fig-top1-bias",
        design=_BASE_DESIGN,
        sigma_A_kinds=(
            SigmaAKind.identity(),
            SigmaAKind.chi_squared_fixed(fixed_seed=base_seed),
            SigmaAKind.spiked(),
        ),
        sigma_B_kinds=_B_MENU,
        p_values=(50,),
        null_dims=_NULL_GRID,
        c_A_values=_CA_GRID,
        replicates=10,
        base_seed=base_seed,
        estimators=("manova", "stepwise"),
    )
    return scenarios


def get_scenario(name: str, base_seed: int = 0) -> ScenarioConfig:
    scenarios = builtin_scenarios(base_seed)
    if name not in scenarios:
        raise ValueError(
            f"unknown scenario {name!r}; valid names: {', '.join(sorted(scenarios))}"
        )
    return scenarios[name]
