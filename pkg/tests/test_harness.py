import csv
from pathlib import Path

import pytest

from activebnsl.algorithms import Mode
from activebnsl.harness import (
    TIDY_COLUMNS,
    SWEEP_COLUMNS,
    ExperimentConfig,
    cell_seed,
    naive_check,
    reference_table,
    run_cell,
    run_sweep,
)

GOLDEN = Path(__file__).parent / "golden"


def small_config(tmp_path, **kw):
    base = dict(d_values=(6, 7), r_values=(2**7, 2**9), repetitions=1, seed=3, mode=Mode.ORACLE, output_dir=tmp_path)
    base.update(kw)
    return ExperimentConfig(**base)


def test_sweep_header_golden(tmp_path):
    run_sweep(small_config(tmp_path))
    head = (tmp_path / "sweep.csv").read_bytes().split(b"\n")[0] + b"\n"
    assert head == (GOLDEN / "sweep_header.csv").read_bytes()
    fig = (tmp_path / "tidy.csv").read_bytes().split(b"\n")[0] + b"\n"
    assert fig == (GOLDEN / "tidy_header.csv").read_bytes()


def test_column_constants():
    assert SWEEP_COLUMNS[:9] == [
        "r", "d", "epsilon", "n_naive", "n_active_mean", "n_active_std",
        "sample_ratio", "accepted_fraction_mean", "accepted_fraction_std",
    ]
    assert TIDY_COLUMNS == ["r", "d", "algo", "n"]


def test_rows_and_epsilon(tmp_path):
    rows = run_sweep(small_config(tmp_path))
    assert [(r["r"], r["d"]) for r in rows] == [(128, 6), (128, 7), (512, 6), (512, 7)]
    assert all(r["epsilon"] == r["d"] / r["r"] for r in rows)
    with open(tmp_path / "sweep.csv", newline="", encoding="utf-8") as fh:
        assert len(list(csv.DictReader(fh))) == 4
    with open(tmp_path / "tidy.csv", newline="", encoding="utf-8") as fh:
        assert {r["algo"] for r in csv.DictReader(fh)} == {"naive", "active"}


def test_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_sweep(small_config(a))
    run_sweep(small_config(b))
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()


def test_precondition_error_row():
    row = run_cell(ExperimentConfig(repetitions=1), 6, 8)
    assert "ValueError" in row["error"] and "n_naive" not in row


def test_cell_seeds_distinct():
    seeds = {cell_seed(0, d, r, rep) for d in range(6, 13) for r in (128, 512) for rep in range(10)}
    assert len(seeds) == 7 * 2 * 10
    assert cell_seed(0, 6, 128, 0) == cell_seed(0, 6, 128, 0)


def test_count_only_ratio_is_parity_when_nothing_accepted(tmp_path):
    from activebnsl.algorithms import parity_factor

    rows = run_sweep(small_config(tmp_path, mode=Mode.COUNT_ONLY))
    for r in rows:
        assert r["accepted_fraction_mean"] == 0
        assert r["sample_ratio"] == pytest.approx(parity_factor(r["d"], 2, r["epsilon"], 0.05, 2**-5), rel=1e-12)


def test_reference_table_shape():
    ref = reference_table()
    assert len(ref) == 35
    assert {r["d"] for r in ref} == set(range(6, 13))
    assert all(r["tol"] == 1.25 for r in ref)


def test_naive_check_flags():
    rows = naive_check()
    assert all(r["within_tolerance"] for r in rows)
    first = next(r for r in rows if r["r"] == 128 and r["d"] == 6)
    assert first["n_naive_reference"] == pytest.approx(2.25e10)
