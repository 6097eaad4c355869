"""Experiment sweeps over (d, r) and their CSV outputs."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .algorithms import Mode, make_source, naive_count, run_active, run_naive
from .stable import LITERAL_X2, build_bd_network

SWEEP_COLUMNS = [
    "r",
    "d",
    "epsilon",
    "n_naive",
    "n_active_mean",
    "n_active_std",
    "sample_ratio",
    "accepted_fraction_mean",
    "accepted_fraction_std",
    "cell_seed",
    "error",
]
TIDY_COLUMNS = ["r", "d", "algo", "n"]
NAIVE_CHECK_COLUMNS = ["r", "d", "n_naive", "n_naive_reference", "ratio", "tolerance_factor", "within_tolerance"]


@dataclass
class ExperimentConfig:
    d_values: Sequence[int] = (6, 7, 8, 9, 10, 11, 12)
    r_values: Sequence[int] = tuple(2**j for j in (7, 9, 11, 13, 15))
    k: int = 2
    delta: float = 0.05
    epsilon_1: float = 2**-5
    repetitions: int = 10
    seed: int = 0
    mode: Mode = Mode.ORACLE
    output_dir: Path | None = None
    x2_rows: Sequence[Sequence[float]] = LITERAL_X2


def cell_seed(root: int, d: int, r: int, rep: int) -> int:
    """Independent per-run seed derived from the root seed and the cell coordinates."""
    return int(np.random.SeedSequence([root, d, r, rep]).generate_state(1, dtype=np.uint64)[0] >> 1)


def run_cell(cfg: ExperimentConfig, d: int, r: int) -> dict:
    eps = d / r
    row: dict = {"r": r, "d": d, "epsilon": eps, "cell_seed": cell_seed(cfg.seed, d, r, 0), "error": ""}
    try:
        net = build_bd_network(d, cfg.x2_rows)
        if cfg.mode is Mode.COUNT_ONLY:
            n_naive = naive_count(d, cfg.k, eps, cfg.delta)
        else:
            n_naive = run_naive(d, cfg.k, eps, cfg.delta, make_source(cfg.mode, net, cfg.k, row["cell_seed"])).total_samples
        totals, fracs = [], []
        for rep in range(cfg.repetitions):
            src = make_source(cfg.mode, net, cfg.k, cell_seed(cfg.seed, d, r, rep))
            report = run_active(d, cfg.k, eps, cfg.delta, cfg.epsilon_1, src)
            totals.append(report.total_samples)
            fracs.append(report.accepted_fraction)
        row.update(
            n_naive=n_naive,
            n_active_mean=float(np.mean(totals)),
            n_active_std=float(np.std(totals)),
            sample_ratio=float(np.mean(totals)) / n_naive,
            accepted_fraction_mean=float(np.mean(fracs)),
            accepted_fraction_std=float(np.std(fracs)),
        )
    except Exception as exc:  # recorded per cell; the sweep carries on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(cfg: ExperimentConfig) -> list[dict]:
    rows = [run_cell(cfg, d, r) for r in cfg.r_values for d in cfg.d_values]
    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
        write_csv(out / "tidy.csv", TIDY_COLUMNS, tidy_rows(rows))
        write_csv(out / "naive_check.csv", NAIVE_CHECK_COLUMNS, naive_check(cfg.k, cfg.delta))
    return rows


def tidy_rows(rows: list[dict]) -> list[dict]:
    out = []
    for row in rows:
        if row["error"]:
            continue
        out.append({"r": row["r"], "d": row["d"], "algo": "naive", "n": row["n_naive"]})
        out.append({"r": row["r"], "d": row["d"], "algo": "active", "n": row["n_active_mean"]})
    return out


def reference_table() -> list[dict]:
    text = resources.files("activebnsl").joinpath("data/naive_reference.csv").read_text(encoding="utf-8")
    return [
        {"r": int(r["r"]), "d": int(r["d"]), "n": float(r["n_naive_reference"]), "tol": float(r["tolerance_factor"])}
        for r in csv.DictReader(io.StringIO(text))
    ]


def naive_check(k: int = 2, delta: float = 0.05) -> list[dict]:
    """Closed-form uniform-learner counts against the published reference column."""
    rows = []
    for ref in reference_table():
        n = naive_count(ref["d"], k, ref["d"] / ref["r"], delta)
        ratio = n / ref["n"]
        rows.append(
            {
                "r": ref["r"],
                "d": ref["d"],
                "n_naive": n,
                "n_naive_reference": ref["n"],
                "ratio": ratio,
                "tolerance_factor": ref["tol"],
                "within_tolerance": 1 / ref["tol"] <= ratio <= ref["tol"],
            }
        )
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])
