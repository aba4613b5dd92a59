"""File formats: dataset tables, mean-squares JSON, scenario config files.

Dataset files are plain UTF-8 CSV with a one-line header
``sire,dam,individual,trait_1,...,trait_p`` and 1-based indices, chosen
for inspectability and easy parsing from other languages.  Mean squares
travel as JSON.  Custom scenario files are flat ``key = value`` text.
"""

from __future__ import annotations

import json
from typing import Optional, TextIO

import numpy as np

from .experiments import ScenarioConfig
from .model import DesignSpec, PhenotypeDataset, SigmaAKind, SigmaBKind
from .stats import MeanSquares

__all__ = [
    "write_dataset",
    "read_dataset",
    "write_mean_squares",
    "read_mean_squares",
    "parse_scenario_config",
]


def write_dataset(data: PhenotypeDataset, fh: TextIO) -> None:
    d = data.design
    p = d.n_traits
    fh.write("sire,dam,individual," + ",".join(f"trait_{t+1}" for t in range(p)) + "\n")
    for i in range(d.n_sires):
        for j in range(d.n_dams_per_sire):
            for k in range(d.n_offspring_per_dam):
                row = ",".join(repr(float(v)) for v in data.Y[i, j, k])
                fh.write(f"{i+1},{j+1},{k+1},{row}\n")


def read_dataset(fh: TextIO) -> PhenotypeDataset:
    header = fh.readline().strip()
    cols = header.split(",")
    if cols[:3] != ["sire", "dam", "individual"]:
        raise ValueError("dataset header must start with sire,dam,individual")
    p = len(cols) - 3
    if p < 1:
        raise ValueError("dataset has no trait columns")
    rows = {}
    for line in fh:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != p + 3:
            raise ValueError(f"row has {len(parts)} fields, expected {p + 3}")
        key = (int(parts[0]), int(parts[1]), int(parts[2]))
        if key in rows:
            raise ValueError(f"duplicate observation {key}")
        rows[key] = [float(v) for v in parts[3:]]
    if not rows:
        raise ValueError("dataset has no observations")
    I = max(k[0] for k in rows)
    J = max(k[1] for k in rows)
    K = max(k[2] for k in rows)
    if len(rows) != I * J * K:
        raise ValueError(f"dataset is not balanced: {len(rows)} rows for {I}x{J}x{K} layout")
    Y = np.empty((I, J, K, p))
    for (i, j, k), vals in rows.items():
        Y[i - 1, j - 1, k - 1] = vals
    design = DesignSpec(n_sires=I, n_dams_per_sire=J, n_offspring_per_dam=K, n_traits=p)
    return PhenotypeDataset(design=design, mu=np.zeros(p), Y=Y)


def write_mean_squares(ms: MeanSquares, design: DesignSpec, fh: TextIO) -> None:
    payload = {
        "design": {
            "n_sires": design.n_sires,
            "n_dams_per_sire": design.n_dams_per_sire,
            "n_offspring_per_dam": design.n_offspring_per_dam,
            "n_traits": design.n_traits,
        },
        "df": {"A": ms.df_A, "B": ms.df_B, "E": ms.df_E},
        "m_A": ms.m_A.tolist(),
        "m_B": ms.m_B.tolist(),
        "m_E": ms.m_E.tolist(),
    }
    json.dump(payload, fh, indent=2)
    fh.write("\n")


def read_mean_squares(fh: TextIO) -> tuple:
    payload = json.load(fh)
    d = payload["design"]
    design = DesignSpec(
        n_sires=int(d["n_sires"]),
        n_dams_per_sire=int(d["n_dams_per_sire"]),
        n_offspring_per_dam=int(d["n_offspring_per_dam"]),
        n_traits=int(d["n_traits"]),
    )
    ms = MeanSquares(
        m_A=np.asarray(payload["m_A"], dtype=float),
        m_B=np.asarray(payload["m_B"], dtype=float),
        m_E=np.asarray(payload["m_E"], dtype=float),
        df_A=int(payload["df"]["A"]),
        df_B=int(payload["df"]["B"]),
        df_E=int(payload["df"]["E"]),
    )
    return ms, design


def _parse_kind_A(token: str, diag: Optional[tuple], scale: float) -> SigmaAKind:
    token = token.strip()
    if token == "explicit_diagonal":
        if diag is None:
            raise ValueError("sigma_a_diag required for explicit_diagonal")
        return SigmaAKind.explicit_diagonal(diag)
    if token == "abs_normal_diagonal":
        return SigmaAKind.abs_normal_diagonal(scale)
    return SigmaAKind(kind=token)


def _parse_kind_B(token: str, diag: Optional[tuple], scale: float) -> SigmaBKind:
    token = token.strip()
    if token == "explicit_diagonal":
        if diag is None:
            raise ValueError("sigma_b_diag required for explicit_diagonal")
        return SigmaBKind.explicit_diagonal(diag)
    if token in ("identity", "half_zero", "abs_normal_diagonal"):
        return SigmaBKind(kind=token, scale=scale)
    return SigmaBKind(kind=token)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def parse_scenario_config(fh: TextIO, name: str = "custom") -> ScenarioConfig:
    """Parse a flat key = value scenario file.

    Recognized keys: name, sires, dams_per_sire, offspring_per_dam,
    p_values, null_dims, c_a_values, replicates, base_seed, estimators,
    deltas, sigma_a_kinds, sigma_b_kinds, sigma_a_diag, sigma_b_diag,
    sigma_a_scale, sigma_b_scale, mu, tol, max_cycles.  Lists are
    comma-separated; kind lists are semicolon-separated.
    """
    raw = {}
    for lineno, line in enumerate(fh, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        raw[key.strip().lower()] = value.strip()

    sires = int(raw.get("sires", 100))
    dams = int(raw.get("dams_per_sire", 3))
    offspring = int(raw.get("offspring_per_dam", 5))
    p_values = _ints(raw.get("p_values", raw.get("p", "4")))
    design = DesignSpec(sires, dams, offspring, p_values[0])

    diag_a = _floats(raw["sigma_a_diag"]) if "sigma_a_diag" in raw else None
    diag_b = _floats(raw["sigma_b_diag"]) if "sigma_b_diag" in raw else None
    scale_a = float(raw.get("sigma_a_scale", 1.0))
    scale_b = float(raw.get("sigma_b_scale", 1.0))
    kinds_a = tuple(
        _parse_kind_A(tok, diag_a, scale_a)
        for tok in raw.get("sigma_a_kinds", "identity").split(";")
        if tok.strip()
    )
    kinds_b = tuple(
        _parse_kind_B(tok, diag_b, scale_b)
        for tok in raw.get("sigma_b_kinds", "identity").split(";")
        if tok.strip()
    )

    cfg = ScenarioConfig(
        name=raw.get("name", name),
        design=design,
        sigma_A_kinds=kinds_a,
        sigma_B_kinds=kinds_b,
        p_values=p_values,
        null_dims=_ints(raw.get("null_dims", "0")),
        c_A_values=_floats(raw.get("c_a_values", "1")),
        replicates=int(raw.get("replicates", 1)),
        base_seed=int(raw.get("base_seed", 0)),
        estimators=tuple(
            tok.strip() for tok in raw.get("estimators", "stepwise").split(";") if tok.strip()
        ),
        deltas=_floats(raw.get("deltas", "")),
        mu=_floats(raw["mu"]) if "mu" in raw else None,
        tol=float(raw.get("tol", 1e-6)),
        max_cycles=int(raw.get("max_cycles", 1000)),
    )
    return cfg
