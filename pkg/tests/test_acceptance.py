"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; the lines are echoed at the end of the run.
"""

import math
import time

import numpy as np
import pytest

from activebnsl.algorithms import Mode, make_source, naive_count, parity_factor, run_active, run_naive
from activebnsl.core import Dag, enumerate_dags, enumerate_families, random_dag, random_net, true_score
from activebnsl.equivalence import group_into_ecs
from activebnsl.harness import ExperimentConfig, reference_table, run_sweep
from activebnsl.search import best_structure
from activebnsl.stable import (
    build_d1_base,
    build_d2,
    check_d1,
    exact_table,
    near_optimal_nonoptimal_ec_exists,
    twin_inequality_gaps,
    verify_stability,
)

from conftest import brute_force_dags

RESULTS: dict[int, str] = {}
R_GRID = [2**j for j in (7, 9, 11, 13, 15)]


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_criterion_1_naive_counts():
    t0 = time.perf_counter()
    worst = 1.0
    bad = []
    for ref in reference_table():
        n = naive_count(ref["d"], 2, ref["d"] / ref["r"], 0.05)
        ratio = n / ref["n"]
        worst = max(worst, ratio, 1 / ratio)
        if not 1 / 1.25 <= ratio <= 1.25:
            bad.append((ref["r"], ref["d"], ratio))
    elapsed = time.perf_counter() - t0
    cell = naive_count(6, 2, 6 / 128, 0.05)
    report(1, not bad and elapsed < 1.0,
           f"35 cells, worst factor {worst:.3f} (limit 1.25), (2^7, 6) -> {cell:.4g}, {elapsed * 1e3:.1f} ms, out of range: {bad}")


@pytest.fixture(scope="module")
def fixed_net():
    rng = np.random.default_rng(2024)
    return random_net(Dag.from_edges(4, [(0, 1), (1, 2), (2, 3)]), rng, floor=0.2)


def test_criterion_2_epsilon_optimality(fixed_net):
    d, k, eps, delta, eps1 = 4, 1, 0.5, 0.05, 0.25
    opt = best_structure(exact_table(fixed_net, k))[1]
    hits = {"naive": 0, "active": 0}
    draws = {"naive": 0, "active": 0}
    for seed in range(20):
        for algo in hits:
            src = make_source(Mode.REAL, fixed_net, k, 1000 * seed + (algo == "active"))
            rep = run_naive(d, k, eps, delta, src) if algo == "naive" else run_active(d, k, eps, delta, eps1, src)
            hits[algo] += true_score(fixed_net, rep.output) >= opt - eps
            draws[algo] += rep.total_samples
    ok = all(h >= 19 for h in hits.values())
    report(2, ok, f"eps-optimal runs naive {hits['naive']}/20, active {hits['active']}/20 (need 19); "
                  f"mean draws naive {draws['naive'] / 20:.3g}, active {draws['active'] / 20:.3g}")


def test_criterion_3_equivalence_classes():
    dags = list(enumerate_dags(3, 2))
    oracle = brute_force_dags(3, 2)
    ecs = group_into_ecs(dags)
    counts_ok = len(dags) == 25 and set(dags) == set(oracle) and len(ecs) == 11
    by_d = {}
    for d in range(2, 6):
        k = min(2, d - 1)
        fams = enumerate_families(d, k)
        index = {f: i for i, f in enumerate(fams)}
        classes = group_into_ecs(enumerate_dags(d, k))
        by_d[d] = (fams, [np.array([[index[f] for f in g.families] for g in c.members]) for c in classes])
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 6))
        net = random_net(random_dag(d, min(2, d - 1), rng), rng, floor=0.05)
        fams, classes = by_d[d]
        terms = np.array([-net.conditional_entropy(f.child, f.parents) for f in fams])
        for idx in classes:
            s = terms[idx].sum(axis=1)
            worst = max(worst, float(s.max() - s.min()))
    report(3, counts_ok and worst <= 1e-9,
           f"d=3,k=2: {len(dags)} DAGs (oracle {len(oracle)}), {len(ecs)} ECs; 100 nets, max within-EC spread {worst:.2e}")


def _plugin_many(counts: np.ndarray) -> np.ndarray:
    p = counts / counts.sum(axis=1, keepdims=True)
    pb = p.reshape(len(p), 2, 2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        hj = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
        hb = -np.where(pb > 0, pb * np.log(pb), 0.0).sum(axis=1)
    return hj - hb


def test_criterion_4_estimator_bias():
    n, reps, m_a, m_b = 100, 100_000, 2, 2
    rng = np.random.default_rng(0)
    lines, ok = [], True
    for joint in (np.array([0.3, 0.1, 0.2, 0.4]), np.array([0.05, 0.45, 0.25, 0.25]), np.full(4, 0.25)):
        pb = joint.reshape(2, 2).sum(axis=0)
        h = float(-(joint * np.log(joint)).sum() + (pb * np.log(pb)).sum())
        err = _plugin_many(rng.multinomial(n, joint, size=reps)) - h
        se = err.std(ddof=1) / math.sqrt(reps)
        lo, hi = -(m_a - 1) * m_b / n - 3 * se, 3 * se
        ok &= lo <= err.mean() <= hi
        lines.append(f"bias {err.mean():.5f} in [{lo:.5f}, {hi:.5f}]")
    report(4, ok, f"N={n}, {reps} replicates: " + "; ".join(lines))


@pytest.fixture(scope="module")
def twin_net():
    base = build_d1_base()
    d1 = check_d1(base, 4)
    lam = d1.beta / 36
    net, params = build_d2(base, 4, lam)
    return net, params


def test_criterion_5_stability(twin_net):
    net, p = twin_net
    gamma = p.beta - 3 * net.d * p.lam
    w = verify_stability(net, range(4), gamma)
    report(5, gamma > 0 and w.condition1_ok and w.condition2_ok,
           f"d={net.d}, beta={p.beta:.6g}, lambda={p.lam:.4g}, gamma={gamma:.6g}: condition 1 {w.condition1_ok} "
           f"(margin {w.condition1_margin:.4g}), condition 2 {w.condition2_ok} (margin {w.condition2_margin:.4g})")


def test_criterion_6_near_optimal_ec(twin_net):
    net, p = twin_net
    eps = 4 * p.lam
    found = near_optimal_nonoptimal_ec_exists(net, eps)
    report(6, found, f"epsilon=4*lambda={eps:.4g}: non-optimal EC within epsilon exists = {found}")


def test_criterion_7_twin_inequalities(twin_net):
    net, p = twin_net
    t0 = time.perf_counter()
    first, second = twin_inequality_gaps(net, p.x_a, p.x_b)
    elapsed = time.perf_counter() - t0
    ok = first <= p.lam + 1e-9 and second <= 3 * p.lam + 1e-9
    report(7, ok, f"max |H(Xb|P)-H(Xa|P)| = {first:.4g} <= lambda = {p.lam:.4g}; "
                  f"max |H(Y|P,Xb)-H(Y|P,Xa)| = {second:.4g} <= 3*lambda; {elapsed * 1e3:.0f} ms")


def test_criterion_8_sample_ratio_trend():
    cfg = ExperimentConfig(d_values=(6, 7, 8, 9), r_values=R_GRID, repetitions=3, seed=0, mode=Mode.ORACLE)
    rows = run_sweep(cfg)
    errors = [r["error"] for r in rows if r["error"]]
    ratio = {(r["d"], r["r"]): r["sample_ratio"] for r in rows if not r["error"]}
    acc = {(r["d"], r["r"]): r["accepted_fraction_mean"] for r in rows if not r["error"]}
    nonincreasing = {d: all(ratio[d, b] <= ratio[d, a] for a, b in zip(R_GRID, R_GRID[1:])) for d in cfg.d_values}
    small_at_top = all(ratio[d, R_GRID[-1]] < 0.9 for d in (7, 8, 9))
    acc_up = all(
        all(acc[d, b] >= acc[d, a] for a, b in zip(R_GRID, R_GRID[1:])) and acc[d, R_GRID[-1]] > acc[d, R_GRID[0]]
        for d in cfg.d_values
    )
    table = "; ".join(f"d={d}: " + ",".join(f"{ratio[d, r]:.3f}" for r in R_GRID) for d in cfg.d_values)
    report(8, not errors and all(nonincreasing.values()) and small_at_top and acc_up,
           f"nonincreasing per d {nonincreasing}; ratio<0.9 at r=2^15 for d>=7 {small_at_top}; "
           f"accepted fraction increasing {acc_up}; ratios over r=2^7..2^15 {table}")


def test_criterion_9_worst_case_parity():
    cfg = ExperimentConfig(d_values=tuple(range(6, 13)), r_values=R_GRID, repetitions=1, mode=Mode.COUNT_ONLY)
    rows = run_sweep(cfg)
    fails, simplified_over = [], 0
    for r in rows:
        d, eps = r["d"], r["epsilon"]
        factor = parity_factor(d, 2, eps, 0.05, cfg.epsilon_1)
        if r["error"] or r["sample_ratio"] > factor * (1 + 1e-12):
            fails.append((r["r"], d))
        T = math.ceil(math.log2(2 * d * cfg.epsilon_1 / eps))
        n_fam = d * sum(math.comb(d - 1, i) for i in range(3))
        simplified_over += r["sample_ratio"] > 1 + math.log(T) / math.log(2 * n_fam / 0.05)
    report(9, len(rows) == 35 and not fails,
           f"{len(rows)} cells, active/naive <= exact overhead factor everywhere (violations {fails}); "
           f"cells above the simplified 1+lnT/ln(2|F|/delta) factor: {simplified_over}")
