"""Value tables, partitions, accuracy metrics, and verification evidence.

The data model is intentionally small: a :class:`ValueTable` assigns dense
integer ids to unique strings, a :class:`Partition` is a set of disjoint
clusters over those ids, and user actions accumulate pairwise match /
non-match evidence (:class:`VerificationSet`) whose transitive closure
certifies that a finished cleaning run reproduces the gold partition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import comb
from typing import Iterable, Iterator, Mapping, Sequence

log = logging.getLogger(__name__)


class ConflictingEvidence(Exception):
    """The same value pair was asserted both as a match and a non-match."""

    def __init__(self, pair: tuple[int, int], message: str = ""):
        self.pair = pair
        super().__init__(message or f"conflicting evidence for value pair {pair}")


class ValueTableMismatch(Exception):
    """Two collections that must share a ValueTable do not."""


class ValueTable:
    """Ordered collection of unique strings, addressed by dense ids 0..n-1.

    Duplicate input strings are dropped on ingestion (exact comparison);
    ids are stable for the lifetime of the table.
    """

    __slots__ = ("values", "_ids")

    def __init__(self, values: Iterable[str]):
        seen: dict[str, int] = {}
        ordered: list[str] = []
        for v in values:
            if v not in seen:
                seen[v] = len(ordered)
                ordered.append(v)
        self.values: tuple[str, ...] = tuple(ordered)
        self._ids = seen

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, value_id: int) -> str:
        return self.values[value_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def id_of(self, value: str) -> int:
        return self._ids[value]

    def __contains__(self, value: str) -> bool:
        return value in self._ids

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ValueTable) and self.values == other.values

    def __hash__(self):
        return hash(self.values)


@dataclass(frozen=True)
class Cluster:
    """A nonempty set of value ids belonging to one partition."""

    id: int
    members: frozenset[int]

    def __post_init__(self):
        if not self.members:
            raise ValueError("cluster must be nonempty")

    def __len__(self) -> int:
        return len(self.members)


class Partition:
    """Disjoint clusters whose union covers value ids 0..n-1."""

    __slots__ = ("clusters", "n_values", "_label_of")

    def __init__(self, clusters: Sequence[Cluster], n_values: int):
        label_of = [-1] * n_values
        total = 0
        for c in clusters:
            for v in c.members:
                if v < 0 or v >= n_values:
                    raise ValueError(f"value id {v} outside table of size {n_values}")
                if label_of[v] != -1:
                    raise ValueError(f"value id {v} appears in two clusters")
                label_of[v] = c.id
            total += len(c.members)
        if total != n_values:
            raise ValueError("clusters do not cover the full value-id range")
        self.clusters = tuple(clusters)
        self.n_values = n_values
        self._label_of = label_of

    @classmethod
    def from_member_sets(cls, member_sets: Iterable[Iterable[int]], n_values: int) -> "Partition":
        """Build a partition with dense cluster ids, ordered by smallest member."""
        sets = [frozenset(m) for m in member_sets if m]
        sets.sort(key=min)
        return cls([Cluster(i, s) for i, s in enumerate(sets)], n_values)

    @classmethod
    def singletons(cls, n_values: int) -> "Partition":
        return cls([Cluster(i, frozenset([i])) for i in range(n_values)], n_values)

    def label_of(self, value_id: int) -> int:
        return self._label_of[value_id]

    def member_sets(self) -> list[frozenset[int]]:
        return [c.members for c in self.clusters]

    def sizes(self) -> list[int]:
        return [len(c) for c in self.clusters]

    def __len__(self) -> int:
        return len(self.clusters)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.n_values == other.n_values and set(self.member_sets()) == set(other.member_sets())

    def __hash__(self):
        return hash((self.n_values, frozenset(self.member_sets())))


class GoldPartition:
    """The correct partition, plus a value-id -> gold-cluster-id lookup."""

    __slots__ = ("partition", "entity_of")

    def __init__(self, partition: Partition):
        self.partition = partition
        self.entity_of: list[int] = list(partition._label_of)

    @classmethod
    def from_entity_map(cls, entity_of: Sequence[int] | Mapping[int, int], n_values: int) -> "GoldPartition":
        if isinstance(entity_of, Mapping):
            entity_of = [entity_of[i] for i in range(n_values)]
        groups: dict[int, set[int]] = {}
        for v, e in enumerate(entity_of):
            groups.setdefault(e, set()).add(v)
        return cls(Partition.from_member_sets(groups.values(), n_values))

    @property
    def n_values(self) -> int:
        return self.partition.n_values


@dataclass(frozen=True)
class PairAssertion:
    """An unordered value pair asserted as a match or a non-match."""

    a: int
    b: int
    is_match: bool

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("a pair must involve two distinct values")
        if self.a > self.b:
            lo, hi = self.b, self.a
            object.__setattr__(self, "a", lo)
            object.__setattr__(self, "b", hi)

    @property
    def pair(self) -> tuple[int, int]:
        return (self.a, self.b)


class VerificationSet:
    """Accumulated pairwise evidence; rejects contradictory assertions."""

    __slots__ = ("matches", "non_matches")

    def __init__(self):
        self.matches: set[tuple[int, int]] = set()
        self.non_matches: set[tuple[int, int]] = set()

    def add(self, a: int, b: int, is_match: bool) -> None:
        if a == b:
            raise ValueError("a pair must involve two distinct values")
        pair = (a, b) if a < b else (b, a)
        if is_match:
            if pair in self.non_matches:
                raise ConflictingEvidence(pair)
            self.matches.add(pair)
        else:
            if pair in self.matches:
                raise ConflictingEvidence(pair)
            self.non_matches.add(pair)

    def add_match(self, a: int, b: int) -> None:
        self.add(a, b, True)

    def add_non_match(self, a: int, b: int) -> None:
        self.add(a, b, False)

    def record(self, assertions: Iterable[PairAssertion]) -> "VerificationSet":
        for pa in assertions:
            self.add(pa.a, pa.b, pa.is_match)
        return self

    def update(self, other: "VerificationSet") -> "VerificationSet":
        for pair in other.matches:
            self.add(pair[0], pair[1], True)
        for pair in other.non_matches:
            self.add(pair[0], pair[1], False)
        return self

    def __len__(self) -> int:
        return len(self.matches) + len(self.non_matches)

    def __iter__(self) -> Iterator[PairAssertion]:
        for a, b in sorted(self.matches):
            yield PairAssertion(a, b, True)
        for a, b in sorted(self.non_matches):
            yield PairAssertion(a, b, False)

    def copy(self) -> "VerificationSet":
        vs = VerificationSet()
        vs.matches = set(self.matches)
        vs.non_matches = set(self.non_matches)
        return vs


class _DisjointSets:
    """Array union-find with path compression and union by size."""

    __slots__ = ("parent", "size")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


class TransitivityIndex:
    """Closure of a verification set: match components plus component-level
    non-match edges, so any inferable pair is answered in near-constant time.
    """

    __slots__ = ("n_values", "_dsu", "non_match_edges")

    def __init__(self, n_values: int, dsu: _DisjointSets, non_match_edges: set[tuple[int, int]]):
        self.n_values = n_values
        self._dsu = dsu
        self.non_match_edges = non_match_edges

    @classmethod
    def build(cls, vs: VerificationSet, n_values: int) -> "TransitivityIndex":
        dsu = _DisjointSets(n_values)
        for a, b in vs.matches:
            dsu.union(a, b)
        edges: set[tuple[int, int]] = set()
        for a, b in vs.non_matches:
            ra, rb = dsu.find(a), dsu.find(b)
            if ra == rb:
                raise ConflictingEvidence((a, b), f"non-match {a}!={b} inside one match component")
            edges.add((ra, rb) if ra < rb else (rb, ra))
        return cls(n_values, dsu, edges)

    def component_of(self, value_id: int) -> int:
        return self._dsu.find(value_id)

    def components(self) -> dict[int, list[int]]:
        comps: dict[int, list[int]] = {}
        for v in range(self.n_values):
            comps.setdefault(self._dsu.find(v), []).append(v)
        return comps

    def can_infer(self, assertion: PairAssertion) -> bool:
        ra = self._dsu.find(assertion.a)
        rb = self._dsu.find(assertion.b)
        if assertion.is_match:
            return ra == rb
        if ra == rb:
            return False
        edge = (ra, rb) if ra < rb else (rb, ra)
        return edge in self.non_match_edges


def match_set_size(partition: Partition) -> int:
    """Number of intra-cluster pairs the partition asserts as matches."""
    return sum(comb(len(c), 2) for c in partition.clusters)


def precision_recall(candidate: Partition, gold: GoldPartition) -> tuple[float, float]:
    """Pair precision/recall of ``candidate`` against the gold partition.

    Counted from cluster-intersection cardinalities rather than by pair
    enumeration. An empty match set on either side makes the corresponding
    ratio vacuously 1.0 (logged, since it usually signals a degenerate input).
    """
    if candidate.n_values != gold.n_values:
        raise ValueTableMismatch(
            f"candidate covers {candidate.n_values} values, gold covers {gold.n_values}"
        )
    candidate_pairs = match_set_size(candidate)
    gold_pairs = match_set_size(gold.partition)
    common = 0
    for c in candidate.clusters:
        counts: dict[int, int] = {}
        for v in c.members:
            e = gold.entity_of[v]
            counts[e] = counts.get(e, 0) + 1
        common += sum(comb(k, 2) for k in counts.values())
    if candidate_pairs == 0:
        log.debug("degenerate precision: candidate has no matches, defined as 1.0")
    if gold_pairs == 0:
        log.debug("degenerate recall: gold has no matches, defined as 1.0")
    precision = common / candidate_pairs if candidate_pairs else 1.0
    recall = common / gold_pairs if gold_pairs else 1.0
    return precision, recall


def partition_from_matches(vs: VerificationSet, n_values: int) -> Partition:
    """Partition induced by the match components of a verification set."""
    index = TransitivityIndex.build(vs, n_values)
    return Partition.from_member_sets(index.components().values(), n_values)


def is_gold_sequence(vs: VerificationSet, gold: GoldPartition) -> bool:
    """True iff every gold match and non-match is present or inferable.

    Checked by component comparison: each gold cluster must form exactly one
    match component, and every pair of distinct components must carry a
    non-match edge.
    """
    try:
        index = TransitivityIndex.build(vs, gold.n_values)
    except ConflictingEvidence:
        return False
    roots = []
    for c in gold.partition.clusters:
        members = list(c.members)
        r = index.component_of(members[0])
        if any(index.component_of(v) != r for v in members[1:]):
            return False
        roots.append(r)
    if len(set(roots)) != len(roots):
        # two gold clusters share a component: some asserted match is wrong
        return False
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            ra, rb = roots[i], roots[j]
            edge = (ra, rb) if ra < rb else (rb, ra)
            if edge not in index.non_match_edges:
                return False
    return True


def canonical_string(table: ValueTable, members: Iterable[int]) -> str:
    """Longest member string; ties broken by smallest value id."""
    best = min(members, key=lambda v: (-len(table[v]), v))
    return table[best]
