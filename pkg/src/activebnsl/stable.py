"""Stable benchmark distributions: the noisy-twin construction, the xor-chain
benchmark networks and exact verifiers for their stability properties."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Dag, DiscreteBayesNet, exact_conditional_entropy
from .equivalence import ec_members, equivalence_key
from .search import ScoreTable, SearchEngine, max_score_with_outside_parent

RHO = 0.99
TWIN_FLIP = 5e-6


class ConstructionError(ValueError):
    """A required property of a construction does not hold."""


def exact_table(net: DiscreteBayesNet, k: int) -> ScoreTable:
    return ScoreTable.from_entropies(net.d, k, lambda f: exact_conditional_entropy(net, f), provenance="exact")


def _xor_cpt(rho: float) -> np.ndarray:
    rows = []
    for a, b in itertools.product((0, 1), repeat=2):
        x = a ^ b
        rows.append([rho, 1 - rho] if x == 0 else [1 - rho, rho])
    return np.array(rows)


def bd_parents(d: int) -> list[tuple[int, ...]]:
    """Parent sets of the d-node benchmark, 0-based; the twin pair is (d-2, d-1)."""
    pa: list[tuple[int, ...]] = [(), (0,), (0, 1), (0, 1)]
    for i in range(4, d - 2):
        pa.append((0, i - 2))
    pa.append((2, 3))
    pa.append((d - 2,))
    return pa


LITERAL_X2 = ((1 - RHO, RHO), (RHO, 1 - RHO))
SWAPPED_X2 = ((RHO, 1 - RHO), (1 - RHO, RHO))
ASYMMETRIC_X2 = ((1 - RHO, RHO), (0.8, 0.2))


def build_bd_network(d: int, x2_rows: Sequence[Sequence[float]] = LITERAL_X2) -> DiscreteBayesNet:
    """Binary xor-chain benchmark with a near-duplicate final pair.

    Variable 0 is Bernoulli(0.01); variable 1 equals variable 0 with
    probability 0.01 and its negation otherwise; variables 2..d-3 and the
    twin source d-2 equal the xor of their two parents with probability
    0.99; variable d-1 copies d-2 except for a 5e-6 flip probability.
    ``x2_rows`` is the CPT of variable 1 given variable 0. Any symmetric
    flip makes xor(X0, X1) independent of X0, which ties several ECs.
    """
    if not 6 <= d <= 12:
        raise ValueError(f"benchmark networks are defined for 6 <= d <= 12, got {d}")
    pa = bd_parents(d)
    cpts = [np.array([[RHO, 1 - RHO]]), np.array(x2_rows, dtype=float)]
    cpts += [_xor_cpt(RHO) for _ in range(2, d - 1)]
    cpts.append(np.array([[1 - TWIN_FLIP, TWIN_FLIP], [TWIN_FLIP, 1 - TWIN_FLIP]]))
    return DiscreteBayesNet((2,) * d, Dag(tuple(pa)), tuple(cpts))


def bd_stable_set(d: int) -> list[int]:
    return list(range(d - 2))


def build_d1_base(x2_rows: Sequence[Sequence[float]] = ASYMMETRIC_X2) -> DiscreteBayesNet:
    """Five-variable base for the noisy-twin construction, twin source at index 4.

    The 6-node benchmark without its twin, except that variable 1 is an
    asymmetric channel of variable 0. With a symmetric flip, xor(X0, X1) is
    independent of X0 and the optimal EC of the benchmark is not unique.
    """
    b6 = build_bd_network(6, x2_rows)
    return DiscreteBayesNet((2,) * 5, Dag(b6.structure.parents[:5]), b6.cpts[:5])


# ---------------------------------------------------------------- base properties


@dataclass(frozen=True)
class D1Check:
    alpha: float
    beta: float
    best_score: float
    second_score: float


def _best_two_ecs(table: ScoreTable) -> tuple[float, float, Dag]:
    engine = SearchEngine(table)
    fam, best = engine.first_maximizer()
    g = Dag(tuple(tuple(i for i in range(table.d) if m >> i & 1) for m in fam))
    best_key = equivalence_key(g)
    second, _, _ = engine.best_ec_where(lambda key, members, sc: key != best_key)
    return best, second, g


def check_d1(net: DiscreteBayesNet, x_a: int, k: int = 2) -> D1Check:
    """Check the three base properties by exact search; raise naming the first failure."""
    k = min(k, net.d - 1)
    table = exact_table(net, k)
    best, second, g = _best_two_ecs(table)
    beta = best - second
    if not beta > 1e-9:
        raise ConstructionError(f"property I fails: optimal EC not unique (gap {beta:.3g})")
    for h in ec_members(g):
        if h.children(x_a):
            raise ConstructionError(f"property II fails: variable {x_a} has children in an optimal structure {h}")
    alpha = net.conditional_entropy(x_a, [u for u in range(net.d) if u != x_a])
    if not alpha > 0:
        raise ConstructionError(f"property III fails: variable {x_a} is a function of the others")
    return D1Check(alpha, beta, best, second)


# ---------------------------------------------------------------- noisy twin


@dataclass(frozen=True)
class NoisyTwinParams:
    lam: float
    coin_p: float
    alpha: float
    beta: float
    x_a: int
    x_b: int
    c0_law: str = "uniform"


def _twin_channel(m: int, coin_p: float) -> np.ndarray:
    return coin_p * np.eye(m) + (1 - coin_p) / m


def _h(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def twin_level(p_a: np.ndarray, coin_p: float) -> float:
    """max(H(X_b | X_a), H(X_a | X_b)) for marginal ``p_a`` and the twin channel."""
    joint = p_a[:, None] * _twin_channel(len(p_a), coin_p)
    h_ab = _h(joint.ravel())
    return max(h_ab - _h(joint.sum(axis=1)), h_ab - _h(joint.sum(axis=0)))


def solve_coin(p_a: np.ndarray, lam: float, tol: float = 1e-12) -> float:
    grid = [twin_level(p_a, c) for c in np.linspace(0, 1, 33)]
    if any(b > a + 1e-12 for a, b in zip(grid, grid[1:])):
        raise ConstructionError("twin entropy level is not monotone in the coin probability")
    if not grid[-1] <= lam <= grid[0]:
        raise ConstructionError(f"lambda={lam} outside the reachable range [0, {grid[0]:.6g}]")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if twin_level(p_a, mid) > lam:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def add_twin(base: DiscreteBayesNet, x_a: int, coin_p: float) -> DiscreteBayesNet:
    """Append X_b = X_a when the hidden coin is 1, uniform otherwise."""
    m = base.support_sizes[x_a]
    parents = base.structure.parents + ((x_a,),)
    return DiscreteBayesNet(base.support_sizes + (m,), Dag(parents), base.cpts + (_twin_channel(m, coin_p),))


def build_d2(base: DiscreteBayesNet, x_a: int, lam: float, k: int = 2) -> tuple[DiscreteBayesNet, NoisyTwinParams]:
    d1 = check_d1(base, x_a, k)
    d = base.d + 1
    if not lam > 0:
        raise ConstructionError("lambda must be positive")
    if not lam < d1.alpha:
        raise ConstructionError(f"lambda={lam} violates lambda < alpha={d1.alpha:.6g}")
    if not lam < d1.beta / (3 * d):
        raise ConstructionError(f"lambda={lam} violates lambda < beta/(3d)={d1.beta / (3 * d):.6g}")
    p_a = base.joint.marginal([x_a])
    coin = solve_coin(p_a, lam)
    net = add_twin(base, x_a, coin)
    x_b = base.d
    level = max(net.conditional_entropy(x_b, [x_a]), net.conditional_entropy(x_a, [x_b]))
    if abs(level - lam) > 1e-9:
        raise ConstructionError(f"twin entropy level {level} misses lambda={lam}")
    return net, NoisyTwinParams(lam, coin, d1.alpha, d1.beta, x_a, x_b)


# ---------------------------------------------------------------- stability


@dataclass(frozen=True)
class StabilityWitness:
    gamma: float
    d: int
    v_set: tuple[int, ...]
    condition1_ok: bool
    condition2_ok: bool
    best_v_ec_score: float
    second_v_ec_score: float
    best_score: float
    best_outside_parent_score: float

    @property
    def q(self) -> int:
        return self.d - len(self.v_set)

    @property
    def stable(self) -> bool:
        return self.condition1_ok and self.condition2_ok

    @property
    def condition1_margin(self) -> float:
        return self.best_score - self.best_outside_parent_score

    @property
    def condition2_margin(self) -> float:
        return self.best_v_ec_score - self.second_v_ec_score

    def to_dict(self) -> dict:
        data = asdict(self)
        data["v_set"] = list(self.v_set)
        data["stable"] = self.stable
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v)) for k, v in data.items()}


def verify_stability(net: DiscreteBayesNet, v: Iterable[int], gamma: float, k: int = 2) -> StabilityWitness:
    """Exact check of both stability conditions for the set ``v`` at gap ``gamma``.

    Condition 1 compares the optimum with the best DAG in which some member
    of ``v`` has a parent outside ``v``; condition 2 compares the best two
    ECs of the marginal on ``v``.
    """
    v = tuple(sorted(set(v)))
    table = exact_table(net, k)
    best = SearchEngine(table).base.value
    outside = max_score_with_outside_parent(table, v)
    cond1 = outside < best - gamma
    if len(v) <= 1:
        s1 = -net.entropy(v) if v else 0.0
        s2 = -math.inf
    else:
        marg = net.marginal_net(v)
        s1, s2, _ = _best_two_ecs(exact_table(marg, min(k, len(v) - 1)))
    cond2 = s1 - s2 > gamma
    return StabilityWitness(gamma, net.d, v, cond1, cond2, s1, s2, best, outside)


def stability_margin(net: DiscreteBayesNet, v: Iterable[int], k: int = 2) -> float:
    """Largest gap both stability conditions allow (conditions hold for any smaller gamma)."""
    w = verify_stability(net, v, 0.0, k)
    return min(w.condition1_margin, w.condition2_margin)


# ---------------------------------------------------------------- proof devices


def has_directed_path(g: Dag, src: int, dst: int) -> bool:
    stack, seen = [src], {src}
    while stack:
        u = stack.pop()
        for c in g.children(u):
            if c == dst:
                return True
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def ghost_swap_transform(g: Dag, x_a: int, x_b: int) -> Dag:
    """Rewire ``g`` so that ``x_b`` has no children, moving them to ``x_a``.

    When ``x_b`` reaches ``x_a`` by a directed path the two swap parent sets,
    with a direct edge x_b -> x_a turned into x_a -> x_b.
    """
    w = g.children(x_b)
    if not w:
        return g
    pa = [set(p) for p in g.parents]
    if has_directed_path(g, x_b, x_a):
        pa_a, pa_b = set(g.parents[x_a]), set(g.parents[x_b])
        pa[x_a] = pa_b
        pa[x_b] = (pa_a - {x_b}) | {x_a} if x_b in pa_a else pa_a
    for c in w:
        if c != x_a:
            pa[c] = (pa[c] - {x_b}) | {x_a}
    return Dag(tuple(tuple(p) for p in pa))


def swap_roles(g: Dag, x_a: int, x_b: int) -> Dag:
    """Exchange the families of ``x_a`` and ``x_b`` (their labels swap everywhere in the two families)."""
    sw = {x_a: x_b, x_b: x_a}
    pa = list(g.parents)
    new_a = tuple(sw.get(p, p) for p in g.parents[x_b])
    new_b = tuple(sw.get(p, p) for p in g.parents[x_a])
    pa[x_a], pa[x_b] = new_a, new_b
    return Dag(tuple(pa))


def near_optimal_nonoptimal_ec_exists(net: DiscreteBayesNet, epsilon: float, k: int = 2) -> bool:
    """True iff some non-optimal EC scores within ``epsilon`` of the optimum."""
    k = min(k, net.d - 1)
    table = exact_table(net, k)
    engine = SearchEngine(table)
    best = engine.base.value
    score, _, _ = engine.best_ec_where(lambda key, members, sc: sc < best - 1e-12)
    return score >= best - epsilon


def twin_inequality_gaps(net: DiscreteBayesNet, x_a: int, x_b: int, k: int = 2) -> tuple[float, float]:
    """Largest observed |H(X_b|P) - H(X_a|P)| over |P| <= k and
    |H(Y|P,X_b) - H(Y|P,X_a)| over |P| <= k-1, with P and Y drawn from every variable but x_b."""
    x1 = [u for u in range(net.d) if u != x_b]
    first = 0.0
    for s in range(k + 1):
        for p in itertools.combinations(x1, s):
            first = max(first, abs(net.conditional_entropy(x_b, p) - net.conditional_entropy(x_a, p)))
    second = 0.0
    for y in x1:
        pool = [u for u in x1 if u != y]
        for s in range(k):
            for p in itertools.combinations(pool, s):
                h_b = net.conditional_entropy(y, p + (x_b,))
                h_a = net.conditional_entropy(y, p + (x_a,))
                second = max(second, abs(h_b - h_a))
    return first, second


def best_score_twin_has_outside_child(net: DiscreteBayesNet, x_a: int, x_b: int, k: int = 2) -> float:
    """Best score of a DAG in which x_a or x_b has a child other than x_a, x_b."""
    table = exact_table(net, k)
    engine = SearchEngine(table)
    tw = (1 << x_a) | (1 << x_b)
    best = -math.inf
    for u in range(net.d):
        if u in (x_a, x_b):
            continue
        res = engine.dp({u: lambda m: bool(m & tw)})
        if res.feasible:
            best = max(best, res.value)
    return best
