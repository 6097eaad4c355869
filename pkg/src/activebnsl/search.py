"""Exact structure search over bounded in-degree DAGs.

Two exact primitives do the work:

* a dynamic program over variable subsets giving the best score of any DAG
  whose families come from per-child allowed lists, and
* a sink-removal enumeration of every DAG scoring at least a threshold,
  pruned with the same dynamic program.

Each DAG is produced once by the enumeration: the canonical removal order
always takes the highest-index sink, enforced lazily with a block mask.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import Dag, EnumerationLimitError, Family, enumerate_dags, enumerate_families, is_acyclic
from .equivalence import (
    EquivalenceClass,
    EquivalenceKey,
    consistent_subset,
    ec_members,
    equivalence_key,
    union_families,
)

TOL = 1e-12
DEFAULT_ENUM_LIMIT = 5_000_000
TIE_ENUM_LIMIT = 20_000


def enum_limit() -> int:
    return int(os.environ.get("BNSL_ENUM_LIMIT", DEFAULT_ENUM_LIMIT))


class InfeasibleConstraintsError(ValueError):
    """No DAG in the bounded in-degree space satisfies the constraints."""


def to_mask(variables: Iterable[int]) -> int:
    m = 0
    for u in variables:
        m |= 1 << u
    return m


def from_mask(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


@dataclass(frozen=True)
class ScoreTable:
    """Per-family score terms (negated entropies or their estimates)."""

    d: int
    k: int
    terms: Mapping[Family, float]
    provenance: str = "empirical"

    @classmethod
    def from_entropies(cls, d: int, k: int, entropy: Callable[[Family], float], provenance: str = "empirical") -> "ScoreTable":
        return cls(d, k, {f: -float(entropy(f)) for f in enumerate_families(d, k)}, provenance)

    def __getitem__(self, f: Family) -> float:
        return self.terms[f]

    def score(self, g: Dag) -> float:
        return float(sum(self.terms[f] for f in g.families))


@dataclass(frozen=True)
class Constraints:
    accepted: tuple[Family, ...] = ()

    def __post_init__(self):
        acc = tuple(sorted(set(self.accepted)))
        children = [f.child for f in acc]
        if len(children) != len(set(children)):
            raise ValueError("at most one accepted family per child")
        if not is_acyclic(acc):
            raise ValueError("accepted families contain a cycle")
        object.__setattr__(self, "accepted", acc)

    @property
    def children(self) -> frozenset[int]:
        return frozenset(f.child for f in self.accepted)

    def with_family(self, f: Family) -> "Constraints":
        return Constraints(self.accepted + (f,))


# ---------------------------------------------------------------- dynamic program


@lru_cache(maxsize=None)
def _layout(d: int):
    """Index arrays for the subset recursion, grouped by subset size."""
    masks = np.arange(1 << d)
    pop = np.array([bin(m).count("1") for m in range(1 << d)])
    layers = []
    for c in range(1, d + 1):
        layer = masks[pop == c]
        per_v = []
        for v in range(d):
            u = layer[(layer >> v) & 1 == 1]
            per_v.append((u, u ^ (1 << v)))
        layers.append(per_v)
    return layers


@dataclass
class _ChildOptions:
    """Allowed parent sets of one child, best score first."""

    items: list[tuple[float, int]]
    masks: np.ndarray = field(init=False)
    scores: np.ndarray = field(init=False)

    def __post_init__(self):
        self.items.sort(key=lambda t: -t[0])
        self.masks = np.array([m for _, m in self.items], dtype=np.int64)
        self.scores = np.array([s for s, _ in self.items], dtype=float)

    def filter(self, keep: Callable[[int], bool]) -> "_ChildOptions":
        return _ChildOptions([it for it in self.items if keep(it[1])])


@dataclass
class DPResult:
    d: int
    best: np.ndarray
    sink: np.ndarray
    options: list[_ChildOptions]

    @property
    def value(self) -> float:
        return float(self.best[-1])

    @property
    def feasible(self) -> bool:
        return bool(np.isfinite(self.best[-1]))

    def argmax(self) -> list[int]:
        """Parent masks of one maximizing DAG."""
        if not self.feasible:
            raise InfeasibleConstraintsError("no DAG satisfies the constraints")
        fam = [0] * self.d
        u = (1 << self.d) - 1
        while u:
            v = int(self.sink[u])
            r = u ^ (1 << v)
            for _, p in self.options[v].items:
                if p & ~r == 0:
                    fam[v] = p
                    break
            u = r
        return fam


def run_dp(d: int, options: Sequence[_ChildOptions]) -> DPResult:
    full = 1 << d
    fb = np.full((d, full), -np.inf)
    for v in range(d):
        a = fb[v]
        if len(options[v].masks):
            np.maximum.at(a, options[v].masks, options[v].scores)
        for b in range(d):
            r = a.reshape(-1, 2, 1 << b)
            np.maximum(r[:, 1, :], r[:, 0, :], out=r[:, 1, :])
    best = np.full(full, -np.inf)
    best[0] = 0.0
    sink = np.full(full, -1, dtype=np.int64)
    for per_v in _layout(d):
        for v, (u, r) in enumerate(per_v):
            cand = fb[v][r] + best[r]
            better = cand > best[u]
            if better.any():
                ub = u[better]
                best[ub] = cand[better]
                sink[ub] = v
    return DPResult(d, best, sink, list(options))


# ---------------------------------------------------------------- enumeration


class _Stop(Exception):
    pass


def enumerate_above(
    d: int,
    options: Sequence[_ChildOptions],
    bound: np.ndarray,
    threshold: float,
    leaf: Callable[[list[int], float], bool | None],
    prune: Callable[[list[int | None]], bool] | None = None,
    limit: int | None = None,
) -> int:
    """Call ``leaf(parent_masks, score)`` for every DAG scoring >= ``threshold``.

    ``bound[U]`` must upper-bound the best DAG on the subset ``U``. A truthy
    return from ``leaf`` stops the enumeration; ``prune(partial)`` skips the
    subtree below a partial assignment. Returns the number of leaves seen.
    """
    limit = enum_limit() if limit is None else limit
    lists = [o.items for o in options]
    fam: list[int | None] = [None] * d
    count = [0]

    def rec(u: int, blocked: int, partial: float) -> None:
        if u == 0:
            count[0] += 1
            if count[0] > limit:
                raise EnumerationLimitError(f"more than {limit} DAGs above the threshold; raise BNSL_ENUM_LIMIT")
            if leaf(fam, partial):  # type: ignore[arg-type]
                raise _Stop
            return
        x = u
        while x:
            lb = x & -x
            v = lb.bit_length() - 1
            x ^= lb
            if blocked & lb:
                continue
            r = u ^ lb
            rb = bound[r]
            higher = r & ~((lb << 1) - 1)
            for s, p in lists[v]:
                if partial + s + rb < threshold:
                    break
                if p & ~r:
                    continue
                fam[v] = p
                if prune is not None and prune(fam):
                    continue
                rec(r, (blocked & ~p) | (higher & ~p), partial + s)
            fam[v] = None

    try:
        rec((1 << d) - 1, 0, 0.0)
    except _Stop:
        pass
    return count[0]


# ---------------------------------------------------------------- engine


def _mask_dag(masks: Sequence[int]) -> Dag:
    return Dag(tuple(from_mask(m) for m in masks))


class SearchEngine:
    """Search over the DAGs that contain a fixed set of accepted families."""

    def __init__(self, table: ScoreTable, constraints: Constraints = Constraints()):
        self.table = table
        self.d = table.d
        self.k = table.k
        self.constraints = constraints
        self.fixed = {f.child: to_mask(f.parents) for f in constraints.accepted}
        if any(len(f.parents) > self.k or f.child >= self.d for f in constraints.accepted):
            raise InfeasibleConstraintsError("accepted family outside the search space")
        self.rank: list[dict[int, int]] = []
        opts = []
        for v in range(self.d):
            others = [u for u in range(self.d) if u != v]
            psets = sorted(ps for s in range(self.k + 1) for ps in itertools.combinations(others, s))
            self.rank.append({to_mask(ps): i for i, ps in enumerate(psets)})
            if v in self.fixed:
                items = [(table.terms[Family(v, from_mask(self.fixed[v]))], self.fixed[v])]
            else:
                items = [(table.terms[Family(v, ps)], to_mask(ps)) for ps in psets]
            opts.append(_ChildOptions(items))
        self.options = opts
        self._base: DPResult | None = None
        self._ec_cache: dict[EquivalenceKey, list[Dag]] = {}

    # -- helpers
    @property
    def base(self) -> DPResult:
        if self._base is None:
            self._base = run_dp(self.d, self.options)
        return self._base

    def restricted(self, rules: Mapping[int, Callable[[int], bool]]) -> list[_ChildOptions]:
        return [self.options[v].filter(rules[v]) if v in rules else self.options[v] for v in range(self.d)]

    def dp(self, rules: Mapping[int, Callable[[int], bool]] | None = None) -> DPResult:
        return self.base if not rules else run_dp(self.d, self.restricted(rules))

    def score_masks(self, masks: Sequence[int]) -> float:
        return float(sum(self.table.terms[Family(v, from_mask(m))] for v, m in enumerate(masks)))

    def consistent_members(self, g: Dag) -> tuple[EquivalenceKey, list[Dag]]:
        """Members of g's equivalence class that contain all accepted families."""
        key = equivalence_key(g)
        if key not in self._ec_cache:
            self._ec_cache[key] = consistent_subset(ec_members(g), self.constraints.accepted)
        return key, self._ec_cache[key]

    def enumerate(self, threshold: float, leaf, prune=None, options=None, limit=None) -> int:
        if options is None:
            options, bound = self.options, self.base.best
        else:
            bound = run_dp(self.d, options).best
        return enumerate_above(self.d, options, bound, threshold, leaf, prune, limit)

    # -- structure queries
    def first_maximizer(self) -> tuple[list[int], float]:
        """Best DAG, ties broken towards the earliest in child-major family order."""
        base = self.base
        if not base.feasible:
            raise InfeasibleConstraintsError("no DAG satisfies the constraints")
        best = base.value
        ties: list[list[int]] = []
        try:
            self.enumerate(best - TOL, lambda fam, s: ties.append(list(fam)), limit=TIE_ENUM_LIMIT)
        except EnumerationLimitError:
            return self._first_maximizer_guided(best)
        if not ties:  # rounding pushed the leaf just under the threshold
            ties = [base.argmax()]
        fam = min(ties, key=lambda m: tuple(self.rank[v][m[v]] for v in range(self.d)))
        return fam, self.score_masks(fam)

    def _first_maximizer_guided(self, best: float) -> tuple[list[int], float]:
        rules: dict[int, Callable[[int], bool]] = {}
        fam = []
        for v in range(self.d):
            for p in sorted(self.rank[v], key=self.rank[v].get):
                if v in self.fixed and p != self.fixed[v]:
                    continue
                trial = dict(rules)
                trial[v] = lambda m, p=p: m == p
                if self.dp(trial).value >= best - TOL:
                    rules = trial
                    fam.append(p)
                    break
        return fam, self.score_masks(fam)

    def best_ec_where(self, pred: Callable[[EquivalenceKey, list[Dag], float], bool], start_gap: float = 1e-3):
        """Highest consistent-subset score over ECs satisfying ``pred``.

        Widens the threshold geometrically; the first window holding a
        qualifying EC contains the best one. Returns (score, key, members)
        or (-inf, None, None).
        """
        base = self.base
        if not base.feasible:
            raise InfeasibleConstraintsError("no DAG satisfies the constraints")
        best = base.value
        floor = sum(min(s for s, _ in o.items) for o in self.options)
        gap = start_gap
        while True:
            thr = best - gap
            found: dict[EquivalenceKey, tuple[float, list[Dag]]] = {}

            def leaf(fam, s):
                g = _mask_dag(fam)
                key, members = self.consistent_members(g)
                if key not in found:
                    sc = max(self.table.score(h) for h in members)
                    found[key] = (sc, members)

            self.enumerate(thr - TOL, leaf)
            hits = [(sc, key, m) for key, (sc, m) in found.items() if pred(key, m, sc)]
            if hits:
                return max(hits, key=lambda t: (t[0], [-x for x in _flat_key(t[1])]))
            if thr <= floor:
                return -math.inf, None, None
            gap *= 4


def _flat_key(key: EquivalenceKey) -> list[int]:
    return [x for e in key.skeleton for x in e] + [x for t in key.vstructures for x in t]


def best_structure(table: ScoreTable, c: Constraints = Constraints()) -> tuple[Dag, float]:
    engine = SearchEngine(table, c)
    fam, score = engine.first_maximizer()
    return _mask_dag(fam), score


@dataclass(frozen=True)
class NearOptimalEC:
    ec: EquivalenceClass
    consistent: tuple[Dag, ...]
    score: float


def near_optimal_ecs(table: ScoreTable, c: Constraints, theta: float) -> list[NearOptimalEC]:
    """ECs whose consistent-subset score is within ``theta`` of the best, best first."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    engine = SearchEngine(table, c)
    if not engine.base.feasible:
        raise InfeasibleConstraintsError("no DAG satisfies the constraints")
    best_g, best = best_structure(table, c)
    seen: dict[EquivalenceKey, NearOptimalEC] = {}

    def leaf(fam, s):
        g = _mask_dag(fam)
        key = equivalence_key(g)
        if key not in seen:
            ec = ec_members(g)
            cons = tuple(consistent_subset(ec, c.accepted))
            seen[key] = NearOptimalEC(ec, cons, max(table.score(h) for h in cons))

    if math.isinf(theta):
        for g in enumerate_dags(table.d, table.k, c.accepted):
            leaf([to_mask(p) for p in g.parents], 0.0)
    else:
        engine.enumerate(best - theta - TOL, leaf)
    best_key = equivalence_key(best_g)
    return sorted(seen.values(), key=lambda e: (e.ec.key != best_key, -e.score, _flat_key(e.ec.key)))


def find_acceptable_family(
    best_ec_subset: Iterable[Dag], L: Sequence[Iterable[Dag]], active: Iterable[Family]
) -> Family | None:
    """First family (in family order) of the best EC's consistent members that
    is active and appears in the consistent members of every EC in ``L``."""
    active = set(active)
    unions = [union_families(sub) for sub in L]
    for f in sorted(union_families(best_ec_subset) & active):
        if all(f in u for u in unions):
            return f
    return None


def s_neg_diagnostic(table: ScoreTable, c: Constraints, f: Family) -> float:
    """Best consistent-subset score among ECs whose consistent members never contain ``f``."""
    engine = SearchEngine(table, c)
    score, _, _ = engine.best_ec_where(lambda key, members, sc: bool(members) and all(f not in g for g in members))
    return score


# ---------------------------------------------------------------- acceptance test


@dataclass
class AcceptanceResult:
    family: Family | None
    best_dag: Dag
    best_score: float
    candidates: int
    enumerated: int = 0


def _adjacent(fam: Sequence[int], a: int, b: int) -> bool:
    return bool(fam[b] >> a & 1 or fam[a] >> b & 1)


class _AcceptanceTest:
    def __init__(self, engine: SearchEngine, theta: float):
        self.e = engine
        self.theta = theta
        self.d = engine.d
        fam, best = engine.first_maximizer()
        self.best_masks = fam
        self.best = best
        self.thr = best - theta - TOL
        self._avoid_cache: dict[tuple[EquivalenceKey, Family], bool] = {}

    def avoids(self, fam: Sequence[int], f: Family) -> bool:
        """True iff no consistent member of fam's EC contains ``f``."""
        v, pmask = f.child, to_mask(f.parents)
        if fam[v] == pmask:
            return False
        for p in f.parents:
            if not _adjacent(fam, p, v):
                return True
        cur = from_mask(fam[v])
        for a, b in itertools.combinations(cur, 2):
            if not _adjacent(fam, a, b) and not (pmask >> a & 1 and pmask >> b & 1):
                return True  # collider at v that every member keeps
        for a, b in itertools.combinations(f.parents, 2):
            if not _adjacent(fam, a, b) and not (fam[v] >> a & 1 and fam[v] >> b & 1):
                return True  # f would add a collider the class lacks
        g = _mask_dag(fam)
        key, members = self.e.consistent_members(g)
        ck = (key, f)
        if ck not in self._avoid_cache:
            self._avoid_cache[ck] = all(f not in h for h in members)
        return self._avoid_cache[ck]

    def reaches(self, rules) -> DPResult | None:
        res = self.e.dp(rules)
        return res if res.feasible and res.value >= self.thr else None

    def quick(self, f: Family) -> str:
        v, pm = f.child, to_mask(f.parents)
        res = self.reaches({v: lambda m: m != pm})
        if res is None:
            return "accept"
        if self.avoids(res.argmax(), f):
            return "reject"
        for p in f.parents:
            pb, vb = 1 << p, 1 << v
            if self.reaches({v: lambda m: not m & pb, p: lambda m: not m & vb}):
                return "reject"
        for u, um in self.e.fixed.items():
            if not um >> v & 1 and u not in f.parents:
                ub = 1 << u
                if self.reaches({v: lambda m: bool(m & ub)}):
                    return "reject"
        for a, b in itertools.combinations(f.parents, 2):
            ab, ba = 1 << b, 1 << a
            if self.reaches({v: lambda m: m & pm != pm, a: lambda m: not m & ab, b: lambda m: not m & ba}):
                return "reject"
        others = [u for u in range(self.d) if u != v]
        for a, b in itertools.combinations(others, 2):
            if a in f.parents and b in f.parents:
                continue
            need = (1 << a) | (1 << b)
            ab, ba = 1 << b, 1 << a
            if self.reaches({v: lambda m: m & need == need, a: lambda m: not m & ab, b: lambda m: not m & ba}):
                return "reject"
        return "hard"

    def resolve(self, hard: list[Family]) -> tuple[set[Family], int]:
        """Exact rejection check of ``hard`` by enumerating every DAG above the threshold."""
        alive = {f: (f.child, to_mask(f.parents)) for f in hard}
        rejected: set[Family] = set()

        def prune(partial):
            return all(partial[v] == pm for v, pm in alive.values())

        def leaf(fam, s):
            for f in list(alive):
                if self.avoids(fam, f):
                    rejected.add(f)
                    del alive[f]
            return not alive

        n = self.e.enumerate(self.thr, leaf, prune)
        return rejected, n

    def run(self, active_children: frozenset[int]) -> AcceptanceResult:
        best_dag = _mask_dag(self.best_masks)
        _, members = self.e.consistent_members(best_dag)
        cands = sorted(f for f in union_families(members) if f.child in active_children)
        pending: list[Family] = []
        certified = None
        for f in cands:
            status = self.quick(f)
            if status == "accept":
                certified = f
                break
            if status == "hard":
                pending.append(f)
        enumerated = 0
        if pending:
            rejected, enumerated = self.resolve(pending)
            survivors = [f for f in pending if f not in rejected]
            if survivors:
                return AcceptanceResult(survivors[0], best_dag, self.best, len(cands), enumerated)
        return AcceptanceResult(certified, best_dag, self.best, len(cands), enumerated)


def acceptable_family(
    table: ScoreTable, c: Constraints, theta: float, active_children: Iterable[int] | None = None
) -> AcceptanceResult:
    """One iteration of the acceptance test against the ECs within ``theta`` of the best.

    Returns the first family, in family order, of the best EC's consistent
    members whose child is active and which some consistent member of every
    near-optimal EC contains; ``family`` is None when there is none.
    """
    engine = SearchEngine(table, c)
    test = _AcceptanceTest(engine, theta)
    if active_children is None:
        active_children = set(range(table.d)) - c.children
    return test.run(frozenset(active_children))


def acceptable_family_literal(table: ScoreTable, c: Constraints, theta: float, active_children=None) -> Family | None:
    """Reference version of :func:`acceptable_family` built on the set-level operations."""
    if active_children is None:
        active_children = set(range(table.d)) - c.children
    L = near_optimal_ecs(table, c, theta)
    active = [f for f in enumerate_families(table.d, table.k) if f.child in set(active_children)]
    return find_acceptable_family(L[0].consistent, [e.consistent for e in L], active)


def max_score_with_outside_parent(table: ScoreTable, v_set: Iterable[int], c: Constraints = Constraints()) -> float:
    """Best score of a DAG in which some member of ``v_set`` has a parent outside it."""
    engine = SearchEngine(table, c)
    inside = to_mask(v_set)
    best = -math.inf
    for u in sorted(set(v_set)):
        res = engine.dp({u: lambda m: bool(m & ~inside)})
        if res.feasible:
            best = max(best, res.value)
    return best
