"""Plug-in conditional-entropy estimation from partially observed samples."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .core import Dag, Family


class NoDataError(LookupError):
    """No observed subset covers the variables of a family."""


@dataclass(frozen=True)
class SampleBoundParams:
    epsilon: float
    delta: float
    m_a: int = 2
    m_b: int = 4

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.m_a < 1 or self.m_b < 1:
            raise ValueError("support sizes must be positive")


def sample_bound(p: SampleBoundParams) -> int:
    """Samples sufficient for |H_hat(A|B) - H(A|B)| <= epsilon w.p. 1 - delta."""
    eps, delta = p.epsilon, p.delta
    log_term = math.log(2 / delta)
    main = 8 / eps**2 * log_term * math.log(8 * log_term / eps**2) ** 2
    return math.ceil(max(main, math.e**2, p.m_a, (p.m_a - 1) * p.m_b / eps))


def subsets(variables: Iterable[int], size: int) -> list[tuple[int, ...]]:
    """All ``size``-subsets of ``variables`` in lexicographic order."""
    return list(itertools.combinations(sorted(variables), size))


def designated_subset(family: Family, d: int, k: int) -> tuple[int, ...]:
    """The fixed (k+1)-subset used to estimate ``family``: its own variables
    completed with the lowest-index remaining variables."""
    own = set(family.variables)
    if len(own) > k + 1:
        raise ValueError(f"family {family} has more than k+1={k + 1} variables")
    rest = [u for u in range(d) if u not in own]
    return tuple(sorted(own | set(rest[: k + 1 - len(own)])))


def _plugin_from_counts(counts: np.ndarray, child_axis: int) -> float:
    """H_hat(child | other axes) from a count table. Empty parent cells weigh 0."""
    n = counts.sum()
    if n == 0:
        raise NoDataError("count table is empty")
    joint = counts.reshape(-1) / n
    parent = counts.sum(axis=child_axis).reshape(-1) / n
    pj = joint[joint > 0]
    pp = parent[parent > 0]
    h = float(-(pj * np.log(pj)).sum() + (pp * np.log(pp)).sum())
    return min(max(h, 0.0), math.log(counts.shape[child_axis]))


def plugin_conditional_entropy_from_counts(counts: np.ndarray, child_axis: int = 0) -> float:
    return _plugin_from_counts(np.asarray(counts), child_axis)


class Sampler(Protocol):
    def draw(self, n: int) -> np.ndarray: ...


class SampleStore:
    """Per-subset joint count tables, append-only.

    ``tables[S]`` has one axis per variable of ``S`` (in sorted order).
    """

    def __init__(self, d: int, k: int, support_sizes: Sequence[int] | None = None):
        self.d = d
        self.k = k
        self.support_sizes = tuple(support_sizes) if support_sizes is not None else (2,) * d
        self.tables: dict[tuple[int, ...], np.ndarray] = {}
        self.total_draws = 0

    def count(self, subset: Iterable[int]) -> int:
        t = self.tables.get(tuple(sorted(subset)))
        return 0 if t is None else int(t.sum())

    def table(self, subset: Iterable[int]) -> np.ndarray:
        s = tuple(sorted(subset))
        if s not in self.tables:
            self.tables[s] = np.zeros([self.support_sizes[i] for i in s], dtype=np.int64)
        return self.tables[s]

    def record(self, subset: Iterable[int], values: np.ndarray) -> None:
        """Add observed rows ``values`` (shape (n, len(subset))) to the subset's table."""
        s = tuple(sorted(subset))
        t = self.table(s)
        if len(values) == 0:
            return
        flat = np.ravel_multi_index(tuple(values.T), t.shape)
        t += np.bincount(flat, minlength=t.size).reshape(t.shape)
        self.total_draws += len(values)

    def family_counts(self, family: Family) -> tuple[np.ndarray, int]:
        """Counts over the family's variables and the axis of the child."""
        s = designated_subset(family, self.d, self.k)
        t = self.tables.get(s)
        if t is None or t.sum() == 0:
            raise NoDataError(f"no samples for subset {s} covering family {family}")
        keep = family.variables
        drop = tuple(i for i, u in enumerate(s) if u not in keep)
        marg = t.sum(axis=drop) if drop else t
        return marg, keep.index(family.child)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "support_sizes": list(self.support_sizes),
            "total_draws": self.total_draws,
            "subsets": [
                {"subset": list(s), "n": int(t.sum()), "counts": t.ravel().tolist()} for s, t in sorted(self.tables.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SampleStore":
        store = cls(data["d"], data["k"], data["support_sizes"])
        store.total_draws = data["total_draws"]
        for entry in data["subsets"]:
            s = tuple(entry["subset"])
            shape = [store.support_sizes[i] for i in s]
            store.tables[s] = np.array(entry["counts"], dtype=np.int64).reshape(shape)
        return store

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SampleStore":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def plugin_conditional_entropy(store: SampleStore, family: Family) -> float:
    counts, axis = store.family_counts(family)
    return _plugin_from_counts(counts, axis)


def add_samples(store: SampleStore, subset: Iterable[int], n: int, source: Sampler, chunk: int = 1 << 20) -> SampleStore:
    """Draw ``n`` fresh full samples from ``source`` and record the ``subset`` columns."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    s = tuple(sorted(subset))
    if len(s) != store.k + 1:
        raise ValueError(f"subset must have k+1={store.k + 1} variables")
    store.table(s)
    left = n
    while left > 0:
        m = min(chunk, left)
        store.record(s, source.draw(m)[:, list(s)])
        left -= m
    return store


def empirical_score(store: SampleStore, g: Dag) -> float:
    return -sum(plugin_conditional_entropy(store, f) for f in g.families)
