"""Families, bounded in-degree DAGs and discrete Bayesian networks.

Entropies are in nats throughout. A DAG is identified with its set of
families, one ``Family(child, parents)`` per variable.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

DEFAULT_CELL_LIMIT = 1 << 24
HIDDEN = -1


class EnumerationLimitError(RuntimeError):
    """Raised when an exhaustive computation would exceed its configured size."""


@dataclass(frozen=True, order=True)
class Family:
    child: int
    parents: tuple[int, ...] = ()

    def __post_init__(self):
        ps = tuple(sorted(set(int(p) for p in self.parents)))
        if self.child in ps:
            raise ValueError(f"variable {self.child} cannot be its own parent")
        if self.child < 0 or any(p < 0 for p in ps):
            raise ValueError("variable indexes must be nonnegative")
        object.__setattr__(self, "parents", ps)

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(sorted((self.child,) + self.parents))

    def __str__(self) -> str:
        return f"{self.child}:{','.join(map(str, self.parents))}"

    @classmethod
    def parse(cls, text: str) -> "Family":
        child, _, parents = text.partition(":")
        return cls(int(child), tuple(int(p) for p in parents.split(",") if p))


def enumerate_families(d: int, k: int) -> list[Family]:
    """All families over ``d`` variables with at most ``k`` parents.

    Ordered child-major, then lexicographically by the sorted parent tuple.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if not 0 <= k < d:
        raise ValueError(f"need 0 <= k < d, got k={k}, d={d}")
    out = []
    for child in range(d):
        others = [u for u in range(d) if u != child]
        parent_sets = [ps for size in range(k + 1) for ps in itertools.combinations(others, size)]
        out.extend(Family(child, ps) for ps in sorted(parent_sets))
    return out


def family_count(d: int, k: int) -> int:
    return d * sum(math.comb(d - 1, i) for i in range(k + 1))


def _parent_map(families: Iterable[Family]) -> dict[int, tuple[int, ...]]:
    pm: dict[int, tuple[int, ...]] = {}
    for f in families:
        if f.child in pm and pm[f.child] != f.parents:
            raise ValueError(f"two families for child {f.child}")
        pm[f.child] = f.parents
    return pm


def is_acyclic(families: Iterable[Family]) -> bool:
    """True iff the edges induced by ``families`` contain no directed cycle."""
    pm = _parent_map(families)
    state: dict[int, int] = {}  # 1 = on stack, 2 = done

    def visit(u: int) -> bool:
        state[u] = 1
        for p in pm.get(u, ()):
            s = state.get(p, 0)
            if s == 1 or (s == 0 and not visit(p)):
                return False
        state[u] = 2
        return True

    return all(state.get(u, 0) == 2 or visit(u) for u in list(pm))


@dataclass(frozen=True)
class Dag:
    """A DAG over ``len(parents)`` variables, stored as one parent tuple per child."""

    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        ps = tuple(tuple(sorted(set(int(p) for p in pa))) for pa in self.parents)
        object.__setattr__(self, "parents", ps)
        d = len(ps)
        for child, pa in enumerate(ps):
            if child in pa or any(not 0 <= p < d for p in pa):
                raise ValueError(f"invalid parent set {pa} for child {child}")
        if not is_acyclic(self.families):
            raise ValueError("graph has a directed cycle")

    @classmethod
    def from_families(cls, families: Iterable[Family], d: int | None = None) -> "Dag":
        pm = _parent_map(families)
        if d is None:
            d = len(pm)
        if set(pm) != set(range(d)):
            raise ValueError("need exactly one family per variable")
        return cls(tuple(pm[i] for i in range(d)))

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[tuple[int, int]]) -> "Dag":
        pa: list[set[int]] = [set() for _ in range(d)]
        for u, v in edges:
            pa[v].add(u)
        return cls(tuple(tuple(p) for p in pa))

    @classmethod
    def empty(cls, d: int) -> "Dag":
        return cls(((),) * d)

    @property
    def d(self) -> int:
        return len(self.parents)

    @cached_property
    def families(self) -> tuple[Family, ...]:
        return tuple(Family(i, pa) for i, pa in enumerate(self.parents))

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(p, c) for c, pa in enumerate(self.parents) for p in pa]

    @property
    def max_in_degree(self) -> int:
        return max((len(p) for p in self.parents), default=0)

    def children(self, u: int) -> list[int]:
        return [c for c, pa in enumerate(self.parents) if u in pa]

    def __contains__(self, f: object) -> bool:
        return isinstance(f, Family) and f.child < self.d and self.parents[f.child] == f.parents

    def topological_order(self) -> list[int]:
        order, placed = [], set()
        while len(order) < self.d:
            for i in range(self.d):
                if i not in placed and all(p in placed for p in self.parents[i]):
                    order.append(i)
                    placed.add(i)
        return order

    def __str__(self) -> str:
        return " ".join(str(f) for f in self.families)


def enumerate_dags(
    d: int,
    k: int,
    required: Iterable[Family] = (),
    forbidden_children: Iterable[int] = (),
) -> Iterator[Dag]:
    """Yield every DAG in the in-degree-``k`` space containing ``required``.

    Variables are assigned one family at a time in index order, parent sets
    in family order; branches are cut as soon as the chosen edges close a
    cycle. A child in ``forbidden_children`` may have no parents unless its
    family is required.
    """
    req = _parent_map(required)
    if any(len(p) > k for p in req.values()):
        return
    forbidden = set(forbidden_children)
    if forbidden & set(req):
        raise ValueError("forbidden_children overlaps required children")
    choices = []
    for v in range(d):
        if v in req:
            choices.append([req[v]])
        elif v in forbidden:
            choices.append([()])
        else:
            others = [u for u in range(d) if u != v]
            choices.append(sorted(ps for s in range(k + 1) for ps in itertools.combinations(others, s)))
    if not is_acyclic(Family(c, p) for c, p in req.items()):
        return

    reach = [0] * d  # reach[u]: bitmask of nodes reachable from u by chosen edges
    current: list[tuple[int, ...]] = [()] * d

    def rec(v: int) -> Iterator[Dag]:
        if v == d:
            yield Dag(tuple(current))
            return
        for ps in choices[v]:
            pmask = 0
            for p in ps:
                pmask |= 1 << p
            if reach[v] & pmask:
                continue
            saved = reach[:]
            down = (1 << v) | reach[v]
            for u in range(d):
                if (pmask >> u) & 1 or reach[u] & pmask:
                    reach[u] |= down
            current[v] = ps
            yield from rec(v + 1)
            reach[:] = saved

    yield from rec(0)


def _entropy(probs: np.ndarray) -> float:
    p = probs[probs > 0]
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True, eq=False)
class JointTable:
    dims: tuple[int, ...]
    probs: np.ndarray

    def marginal(self, variables: Sequence[int]) -> np.ndarray:
        keep = sorted(set(variables))
        drop = tuple(i for i in range(len(self.dims)) if i not in keep)
        return self.probs.sum(axis=drop) if drop else self.probs

    def entropy(self, variables: Sequence[int]) -> float:
        if not variables:
            return 0.0
        return _entropy(self.marginal(variables).ravel())


@dataclass(eq=False)
class DiscreteBayesNet:
    """Ground-truth model: structure plus one CPT per variable.

    ``cpts[i]`` has shape ``(prod of parent supports, support_sizes[i])``;
    rows follow the row-major order of the sorted parent configuration.
    """

    support_sizes: tuple[int, ...]
    structure: Dag
    cpts: tuple[np.ndarray, ...]
    cell_limit: int = DEFAULT_CELL_LIMIT
    _h_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.support_sizes = tuple(int(s) for s in self.support_sizes)
        if len(self.support_sizes) != self.structure.d:
            raise ValueError("support_sizes length must equal structure size")
        cpts = []
        for i, cpt in enumerate(self.cpts):
            cpt = np.asarray(cpt, dtype=float)
            rows = math.prod(self.support_sizes[p] for p in self.structure.parents[i])
            cpt = cpt.reshape(rows, self.support_sizes[i])
            if (cpt < 0).any() or not np.allclose(cpt.sum(axis=1), 1.0, rtol=0, atol=1e-12):
                raise ValueError(f"CPT of variable {i} is not a set of probability rows")
            cpt.setflags(write=False)
            cpts.append(cpt)
        if len(cpts) != self.d:
            raise ValueError("need one CPT per variable")
        self.cpts = tuple(cpts)

    @property
    def d(self) -> int:
        return self.structure.d

    @cached_property
    def joint(self) -> JointTable:
        cells = math.prod(self.support_sizes)
        if cells > self.cell_limit:
            raise EnumerationLimitError(f"joint table has {cells} cells, limit is {self.cell_limit}")
        probs = np.ones(self.support_sizes)
        for i in range(self.d):
            pa = self.structure.parents[i]
            axes = list(pa) + [i]
            t = self.cpts[i].reshape([self.support_sizes[p] for p in pa] + [self.support_sizes[i]])
            perm = np.argsort(axes)
            t = t.transpose(perm)
            shape = [1] * self.d
            for a in axes:
                shape[a] = self.support_sizes[a]
            probs = probs * t.reshape(shape)
        return JointTable(self.support_sizes, probs)

    def entropy(self, variables: Iterable[int]) -> float:
        key = frozenset(variables)
        if key not in self._h_cache:
            self._h_cache[key] = self.joint.entropy(sorted(key))
        return self._h_cache[key]

    def conditional_entropy(self, child: int, given: Iterable[int] = ()) -> float:
        given = frozenset(given)
        if child in given:
            return 0.0
        return max(0.0, self.entropy(given | {child}) - self.entropy(given))

    def marginal_net(self, keep: Sequence[int]) -> "DiscreteBayesNet":
        """Exact marginal over ``keep`` as a net whose structure ignores the
        removed variables (a full-joint CPT chain in the order of ``keep``).

        Only entropies of the result are meaningful, not its structure.
        """
        keep = list(keep)
        m = self.joint.marginal(keep)
        order = np.argsort(np.argsort(keep))
        m = m.transpose(list(order)) if len(keep) > 1 else m
        parents, cpts = [], []
        for j in range(len(keep)):
            pa = tuple(range(j))
            sub = m.sum(axis=tuple(range(j + 1, len(keep)))) if j + 1 < len(keep) else m
            sub = sub.reshape(-1, self.support_sizes[keep[j]])
            tot = sub.sum(axis=1, keepdims=True)
            rows = np.where(tot > 0, sub / np.where(tot > 0, tot, 1), 1.0 / sub.shape[1])
            parents.append(pa)
            cpts.append(rows)
        net = DiscreteBayesNet(tuple(self.support_sizes[i] for i in keep), Dag(tuple(parents)), tuple(cpts))
        return net

    def topological_order(self) -> list[int]:
        return self.structure.topological_order()

    def sample_many(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` full assignments as an ``(n, d)`` int array.

        Uses exactly ``n * d`` uniforms from ``rng`` laid out row by row, so
        two calls of sizes a and b reproduce one call of size a + b.
        """
        u = rng.random((n, self.d))
        x = np.zeros((n, self.d), dtype=np.int64)
        for i in self.topological_order():
            pa = self.structure.parents[i]
            idx = np.zeros(n, dtype=np.int64)
            for p in pa:
                idx = idx * self.support_sizes[p] + x[:, p]
            cdf = np.cumsum(self.cpts[i], axis=1)
            x[:, i] = (u[:, i : i + 1] >= cdf[idx, :-1]).sum(axis=1)
        return x

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "support_sizes": list(self.support_sizes),
            "families": [{"child": f.child, "parents": list(f.parents)} for f in self.structure.families],
            "cpts": [cpt.tolist() for cpt in self.cpts],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteBayesNet":
        fams = [Family(f["child"], tuple(f["parents"])) for f in data["families"]]
        dag = Dag.from_families(fams, data["d"])
        return cls(tuple(data["support_sizes"]), dag, tuple(np.array(c, dtype=float) for c in data["cpts"]))

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        data = self.to_dict()
        if extra:
            data.update(extra)
        Path(path).write_text(json.dumps(data, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DiscreteBayesNet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def same_as(self, other: "DiscreteBayesNet") -> bool:
        return (
            self.support_sizes == other.support_sizes
            and self.structure == other.structure
            and all(np.array_equal(a, b) for a, b in zip(self.cpts, other.cpts))
        )


def exact_conditional_entropy(net: DiscreteBayesNet, family: Family) -> float:
    """H(child | parents) of ``net``'s joint distribution, in nats."""
    if family.child >= net.d or any(p >= net.d for p in family.parents):
        raise ValueError(f"family {family} out of range for d={net.d}")
    return net.conditional_entropy(family.child, family.parents)


def true_score(net: DiscreteBayesNet, g: Dag) -> float:
    return -sum(exact_conditional_entropy(net, f) for f in g.families)


def sample(net: DiscreteBayesNet, rng: np.random.Generator) -> np.ndarray:
    return net.sample_many(1, rng)[0]


def observe(assignment: Sequence[int], mask: Iterable[int], k: int) -> np.ndarray:
    """Keep the values of the ``k + 1`` variables in ``mask``; others become ``HIDDEN``."""
    mask = sorted(set(mask))
    if len(mask) != k + 1:
        raise ValueError(f"observation mask must have exactly k+1={k + 1} variables, got {len(mask)}")
    full = np.asarray(assignment)
    out = np.full(full.shape, HIDDEN, dtype=np.int64)
    out[mask] = full[mask]
    return out


def random_net(
    structure: Dag,
    rng: np.random.Generator,
    support_sizes: Sequence[int] | None = None,
    concentration: float = 1.0,
    floor: float = 0.0,
) -> DiscreteBayesNet:
    """Net over ``structure`` with Dirichlet-drawn CPT rows.

    ``floor`` > 0 mixes every row with the uniform law, keeping CPTs strictly positive.
    """
    sizes = tuple(support_sizes) if support_sizes is not None else (2,) * structure.d
    cpts = []
    for i, pa in enumerate(structure.parents):
        rows = math.prod(sizes[p] for p in pa)
        t = rng.dirichlet([concentration] * sizes[i], size=rows)
        t = (1 - floor) * t + floor / sizes[i]
        cpts.append(t / t.sum(axis=1, keepdims=True))
    return DiscreteBayesNet(sizes, structure, tuple(cpts))


def random_dag(d: int, k: int, rng: np.random.Generator, edge_prob: float = 0.5) -> Dag:
    order = rng.permutation(d)
    parents: list[tuple[int, ...]] = [()] * d
    for pos, v in enumerate(order):
        cands = [int(u) for u in order[:pos] if rng.random() < edge_prob]
        rng.shuffle(cands)
        parents[int(v)] = tuple(cands[:k])
    return Dag(tuple(parents))
