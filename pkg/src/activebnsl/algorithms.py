"""The uniform-allocation learner and the active learner, with sample accounting."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .core import Dag, DiscreteBayesNet, Family, enumerate_families, family_count
from .estimation import SampleBoundParams, SampleStore, designated_subset, plugin_conditional_entropy, sample_bound, subsets
from .search import Constraints, ScoreTable, acceptable_family, best_structure

log = logging.getLogger("activebnsl")


class Mode(str, Enum):
    REAL = "real"
    ORACLE = "oracle"
    COUNT_ONLY = "count_only"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        return cls(text.replace("-", "_"))


class EntropySource:
    """Sample allocation plus entropy answers; subclasses decide where answers come from."""

    mode: Mode

    def __init__(self, d: int, k: int, support_sizes: Sequence[int] | None = None):
        self.d, self.k = d, k
        self.support_sizes = tuple(support_sizes) if support_sizes is not None else (2,) * d
        self.counts: dict[tuple[int, ...], int] = {}

    @property
    def total_samples(self) -> int:
        return sum(self.counts.values())

    def observe(self, subset_list: Iterable[tuple[int, ...]], target: int, accuracy: float) -> list[tuple[int, ...]]:
        """Raise each subset's count to ``target``; returns the subsets that grew."""
        grown = []
        for s in subset_list:
            have = self.counts.get(s, 0)
            if target > have:
                self.counts[s] = target
                grown.append(s)
        self._grow(grown, target, accuracy)
        return grown

    def _grow(self, grown: list[tuple[int, ...]], target: int, accuracy: float) -> None:
        pass

    def estimate(self, f: Family) -> float:
        raise NotImplementedError

    def table(self) -> ScoreTable:
        return ScoreTable.from_entropies(self.d, self.k, self.estimate, provenance=self.mode.value)

    def bound_params(self, epsilon: float, delta: float) -> SampleBoundParams:
        m = max(self.support_sizes)
        return SampleBoundParams(epsilon, delta, m_a=m, m_b=m**self.k)


class RealSource(EntropySource):
    """Draws from a net; each drawn sample is assigned to one subset, round-robin."""

    mode = Mode.REAL

    def __init__(self, net: DiscreteBayesNet, k: int, rng: np.random.Generator, chunk: int = 1 << 18):
        super().__init__(net.d, k, net.support_sizes)
        self.net = net
        self.rng = rng
        self.chunk = chunk
        self.store = SampleStore(net.d, k, net.support_sizes)

    def _grow(self, grown, target, accuracy):
        by_need: dict[int, list[tuple[int, ...]]] = {}
        for s in grown:
            by_need.setdefault(target - self.store.count(s), []).append(s)
        for need, group in sorted(by_need.items()):
            per_chunk = max(1, self.chunk // len(group))
            left = need
            while left > 0:
                m = min(per_chunk, left)
                x = self.net.sample_many(m * len(group), self.rng).reshape(m, len(group), self.d)
                for j, s in enumerate(group):
                    self.store.record(s, x[:, j, list(s)])
                left -= m

    def estimate(self, f: Family) -> float:
        return plugin_conditional_entropy(self.store, f)


class OracleSource(EntropySource):
    """Exact entropies plus seeded uniform noise bounded by each subset's current accuracy.

    Noise is drawn once per family each time its designated subset grows, so
    estimates stay fixed between observations.
    """

    mode = Mode.ORACLE

    def __init__(self, net: DiscreteBayesNet, k: int, rng: np.random.Generator, noise: bool = True):
        super().__init__(net.d, k, net.support_sizes)
        self.net = net
        self.rng = rng
        self.noise = noise
        self.families = enumerate_families(net.d, k)
        self.by_subset: dict[tuple[int, ...], list[Family]] = {}
        for f in self.families:
            self.by_subset.setdefault(designated_subset(f, net.d, k), []).append(f)
        self.offset: dict[Family, float] = {}

    def _grow(self, grown, target, accuracy):
        grown_set = set(grown)
        hit = [f for f in self.families if designated_subset(f, self.d, self.k) in grown_set]
        u = self.rng.uniform(-1.0, 1.0, size=len(hit)) if self.noise else np.zeros(len(hit))
        for f, x in zip(hit, u):
            self.offset[f] = float(x) * accuracy

    def estimate(self, f: Family) -> float:
        if f not in self.offset:
            raise LookupError(f"no observations yet for family {f}")
        h = self.net.conditional_entropy(f.child, f.parents) + self.offset[f]
        return min(max(h, 0.0), math.log(self.support_sizes[f.child]))


class CountOnlySource(EntropySource):
    """No data: exact entropy answers, sample counts tracked for accounting."""

    mode = Mode.COUNT_ONLY

    def __init__(self, net: DiscreteBayesNet | None, d: int, k: int, support_sizes: Sequence[int] | None = None):
        super().__init__(d, k, support_sizes if net is None else net.support_sizes)
        self.net = net

    def estimate(self, f: Family) -> float:
        if self.net is None:
            return 0.0
        return self.net.conditional_entropy(f.child, f.parents)


def make_source(mode: Mode | str, net: DiscreteBayesNet, k: int, seed: int | None = None) -> EntropySource:
    mode = Mode.parse(mode) if isinstance(mode, str) else mode
    rng = np.random.default_rng(seed)
    if mode is Mode.REAL:
        return RealSource(net, k, rng)
    if mode is Mode.ORACLE:
        return OracleSource(net, k, rng)
    return CountOnlySource(net, net.d, k)


@dataclass
class Acceptance:
    iteration: int
    family: str
    theta: float


@dataclass
class RoundRecord:
    t: int
    epsilon_t: float
    n_t: int
    subsets_observed: int
    accepted: list[Acceptance] = field(default_factory=list)
    final: bool = False


@dataclass
class RunReport:
    algorithm: str
    mode: str
    d: int
    k: int
    epsilon: float
    delta: float
    output: Dag
    total_samples: int
    per_round: list[RoundRecord]
    accepted_fraction: float
    epsilon_1: float | None = None
    T: int | None = None

    @property
    def accepted_families(self) -> list[Family]:
        return [Family.parse(a.family) for r in self.per_round for a in r.accepted]

    def log_lines(self) -> list[str]:
        return [
            f"round={r.t} iter={a.iteration} accepted={a.family} theta={a.theta:.6g}" for r in self.per_round for a in r.accepted
        ]

    def to_dict(self) -> dict:
        data = asdict(self)
        data["output"] = [{"child": f.child, "parents": list(f.parents)} for f in self.output.families]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def naive_count(d: int, k: int, epsilon: float, delta: float, m: int = 2) -> int:
    """Closed-form total of the uniform-allocation learner."""
    n = sample_bound(SampleBoundParams(epsilon / (2 * d), delta / family_count(d, k), m, m**k))
    return math.comb(d, k + 1) * n


def worst_case_active_count(d: int, k: int, epsilon: float, delta: float, epsilon_1: float, m: int = 2) -> int:
    """Active-learner total when nothing is ever accepted."""
    T = rounds_bound(d, epsilon, epsilon_1)
    n = sample_bound(SampleBoundParams(epsilon / (2 * d), delta / (T * family_count(d, k)), m, m**k))
    return math.comb(d, k + 1) * n


def parity_factor(d: int, k: int, epsilon: float, delta: float, epsilon_1: float, m: int = 2) -> float:
    """Exact overhead of the never-accepting active run over the uniform learner."""
    return worst_case_active_count(d, k, epsilon, delta, epsilon_1, m) / naive_count(d, k, epsilon, delta, m)


def rounds_bound(d: int, epsilon: float, epsilon_1: float) -> int:
    T = math.ceil(math.log2(2 * d * epsilon_1 / epsilon))
    if T < 1:
        raise ValueError(f"need epsilon <= 2*d*epsilon_1 (epsilon={epsilon}, d={d}, epsilon_1={epsilon_1})")
    return T


def _check_params(epsilon: float, delta: float) -> None:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")


def run_naive(d: int, k: int, epsilon: float, delta: float, source: EntropySource) -> RunReport:
    _check_params(epsilon, delta)
    n = sample_bound(source.bound_params(epsilon / (2 * d), delta / family_count(d, k)))
    all_subsets = subsets(range(d), k + 1)
    source.observe(all_subsets, n, epsilon / (2 * d))
    g, _ = best_structure(source.table())
    rec = RoundRecord(1, epsilon, n, len(all_subsets), final=True)
    return RunReport("naive", source.mode.value, d, k, epsilon, delta, g, source.total_samples, [rec], 0.0)


def run_active(d: int, k: int, epsilon: float, delta: float, epsilon_1: float, source: EntropySource) -> RunReport:
    _check_params(epsilon, delta)
    if not epsilon_1 > 0:
        raise ValueError("epsilon_1 must be positive")
    T = rounds_bound(d, epsilon, epsilon_1)
    per_fam = family_count(d, k) // d
    all_subsets = subsets(range(d), k + 1)
    accepted = Constraints()
    chosen: set[int] = set()
    rounds: list[RoundRecord] = []
    t, eps_t, j = 1, epsilon_1, 1

    def open_subsets():
        return [s for s in all_subsets if not set(s) <= chosen]

    def report(output: Dag) -> RunReport:
        return RunReport(
            "active", source.mode.value, d, k, epsilon, delta, output, source.total_samples, rounds, len(chosen) / d, epsilon_1, T
        )

    while eps_t > epsilon / (d - len(chosen)):
        n_t = sample_bound(source.bound_params(eps_t / 2, delta / (T * (d - len(chosen)) * per_fam)))
        todo = open_subsets()
        source.observe(todo, n_t, eps_t / 2)
        rec = RoundRecord(t, eps_t, n_t, len(todo))
        rounds.append(rec)
        table = source.table()
        while True:
            theta = (d - len(chosen)) * eps_t
            res = acceptable_family(table, accepted, theta, set(range(d)) - chosen)
            j += 1
            if res.family is None:
                break
            f = res.family
            accepted = accepted.with_family(f)
            chosen.add(f.child)
            rec.accepted.append(Acceptance(j - 1, str(f), theta))
            log.info("round=%d iter=%d accepted=%s theta=%.6g", t, j - 1, f, theta)
            if len(chosen) == d:
                break
        if len(chosen) == d:
            return report(Dag.from_families(accepted.accepted, d))
        t += 1
        eps_t /= 2
    eps_last = epsilon / (d - len(chosen))
    n_T = sample_bound(source.bound_params(eps_last / 2, delta / (T * (d - len(chosen)) * per_fam)))
    todo = open_subsets()
    source.observe(todo, n_T, eps_last / 2)
    rounds.append(RoundRecord(t, eps_last, n_T, len(todo), final=True))
    g, _ = best_structure(source.table(), accepted)
    return report(g)


@dataclass
class AccountingTerm:
    t: int
    v_size: int
    q: int
    n: int

    @property
    def samples(self) -> int:
        return self.q * self.n


def sample_accounting(report: RunReport) -> list[AccountingTerm]:
    """Per-round breakdown: subsets seen for the last time in a round, times their count.

    The final term covers subsets still open at the end of the run.
    """
    k1 = report.k + 1
    terms = []
    v_prev, v_size, n_max = 0, 0, 0
    for rec in report.per_round:
        n_max = max(n_max, rec.n_t)
        v_size += len(rec.accepted)
        if rec.final or v_size > v_prev:
            top = report.d if rec.final else v_size
            q = math.comb(top, k1) - math.comb(v_prev, k1)
            terms.append(AccountingTerm(rec.t, top, q, n_max))
            v_prev = v_size
    if not report.per_round[-1].final and v_prev < report.d:
        raise ValueError("report ends without covering every subset")
    return terms
