"""Skeletons, v-structures and Markov equivalence classes of DAGs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .core import Dag, Family


@dataclass(frozen=True, order=True)
class EquivalenceKey:
    skeleton: tuple[tuple[int, int], ...]
    vstructures: tuple[tuple[int, int, int], ...]


def skeleton(g: Dag) -> frozenset[tuple[int, int]]:
    return frozenset((min(p, c), max(p, c)) for p, c in g.edges)


def vstructures(g: Dag) -> list[tuple[int, int, int]]:
    """Triples (x, y, z), x < z, with x -> y <- z and x, z nonadjacent."""
    skel = skeleton(g)
    out = []
    for y, pa in enumerate(g.parents):
        for i, x in enumerate(pa):
            for z in pa[i + 1 :]:
                if (x, z) not in skel:
                    out.append((x, y, z))
    return sorted(out)


def equivalence_key(g: Dag) -> EquivalenceKey:
    return EquivalenceKey(tuple(sorted(skeleton(g))), tuple(vstructures(g)))


@dataclass(frozen=True)
class EquivalenceClass:
    key: EquivalenceKey
    members: tuple[Dag, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("an equivalence class needs at least one member")

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def group_into_ecs(graphs: Iterable[Dag]) -> list[EquivalenceClass]:
    """Partition ``graphs`` by key; classes ordered by first appearance."""
    groups: dict[EquivalenceKey, list[Dag]] = {}
    for g in graphs:
        bucket = groups.setdefault(equivalence_key(g), [])
        if g not in bucket:
            bucket.append(g)
    return [EquivalenceClass(k, tuple(v)) for k, v in groups.items()]


def union_families(graphs: Iterable[Dag]) -> set[Family]:
    out: set[Family] = set()
    for g in graphs:
        out.update(g.families)
    return out


def consistent_subset(ec: EquivalenceClass | Iterable[Dag], accepted: Iterable[Family]) -> list[Dag]:
    accepted = list(accepted)
    return [g for g in ec if all(f in g for f in accepted)]


def covered_edges(g: Dag) -> list[tuple[int, int]]:
    """Edges x -> y with Pa(y) = Pa(x) + {x}."""
    out = []
    for y, pa in enumerate(g.parents):
        for x in pa:
            if set(pa) == set(g.parents[x]) | {x}:
                out.append((x, y))
    return out


def reverse_edge(g: Dag, x: int, y: int) -> Dag:
    pa = [set(p) for p in g.parents]
    pa[y].discard(x)
    pa[x].add(y)
    return Dag(tuple(tuple(p) for p in pa))


def ec_members(g: Dag) -> EquivalenceClass:
    """Whole equivalence class of ``g``, found by covered-edge reversals.

    Any two equivalent DAGs are linked by a chain of covered-edge reversals,
    and a reversal keeps the multiset of in-degrees, so every member also
    respects the in-degree bound of ``g``. Members are sorted by parent tuples.
    """
    seen = {g}
    queue = deque([g])
    while queue:
        h = queue.popleft()
        for x, y in covered_edges(h):
            h2 = reverse_edge(h, x, y)
            if h2 not in seen:
                seen.add(h2)
                queue.append(h2)
    return EquivalenceClass(equivalence_key(g), tuple(sorted(seen, key=lambda h: h.parents)))


def is_markov_equivalent(g: Dag, h: Dag) -> bool:
    return equivalence_key(g) == equivalence_key(h)
