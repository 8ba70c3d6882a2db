"""Character n-gram similarity and size-capped agglomerative clustering.

The clustering engine runs greedy agglomeration over a precomputed pairwise
similarity matrix, honoring a stop threshold and an optional cluster-size
cap: at every step the highest-similarity pair whose merged size fits the
cap is merged, and the run stops when no admissible pair remains.

``run_joint`` executes the uncapped run once and resumes each capped
variant from a checkpoint at the last shared step, which is equivalent to
running each variant independently but far cheaper.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .core import Partition, ValueTable

LINKAGES = ("single", "complete", "average")


@dataclass(frozen=True)
class SimilarityConfig:
    """Similarity measure and agglomeration settings."""

    gram_size: int = 3
    stop_threshold: float = 0.3
    linkage: str = "average"
    padding: bool = True

    def __post_init__(self):
        if self.gram_size < 1:
            raise ValueError("gram_size must be >= 1")
        if not 0.0 <= self.stop_threshold <= 1.0:
            raise ValueError("stop_threshold must lie in [0, 1]")
        if self.linkage not in LINKAGES:
            raise ValueError(f"linkage must be one of {LINKAGES}")


def character_ngrams(value: str, gram_size: int = 3, padding: bool = True) -> frozenset[str]:
    """Case-folded character n-grams, optionally padded at the boundaries."""
    s = value.casefold()
    if padding and s:
        pad = "\x00" * (gram_size - 1)
        s = pad + s + pad
    if len(s) < gram_size:
        return frozenset()
    return frozenset(s[i : i + gram_size] for i in range(len(s) - gram_size + 1))


def jaccard_similarity(a: str, b: str, cfg: SimilarityConfig = SimilarityConfig()) -> float:
    """Jaccard overlap of the two strings' n-gram sets.

    When both gram sets are empty the result is 1.0 iff the case-folded
    strings are equal, else 0.0.
    """
    ga = character_ngrams(a, cfg.gram_size, cfg.padding)
    gb = character_ngrams(b, cfg.gram_size, cfg.padding)
    if not ga and not gb:
        return 1.0 if a.casefold() == b.casefold() else 0.0
    union = len(ga | gb)
    if union == 0:
        return 0.0
    return len(ga & gb) / union


def similarity_matrix(table: ValueTable, cfg: SimilarityConfig = SimilarityConfig()) -> np.ndarray:
    """Dense n-by-n pairwise similarity matrix for all table values."""
    n = len(table)
    gram_sets = [character_ngrams(v, cfg.gram_size, cfg.padding) for v in table]
    vocab: dict[str, int] = {}
    rows: list[int] = []
    cols: list[int] = []
    for i, grams in enumerate(gram_sets):
        for g in grams:
            rows.append(i)
            cols.append(vocab.setdefault(g, len(vocab)))
    if vocab:
        incidence = sparse.csr_matrix(
            (np.ones(len(rows), dtype=np.float64), (rows, cols)), shape=(n, len(vocab))
        )
        inter = (incidence @ incidence.T).toarray()
    else:
        inter = np.zeros((n, n))
    sizes = np.array([len(g) for g in gram_sets], dtype=np.float64)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = np.where(union > 0, inter / union, 0.0)
    empties = np.flatnonzero(sizes == 0)
    if empties.size:
        folded = [v.casefold() for v in table]
        for i in empties:
            for j in range(n):
                sim[i, j] = sim[j, i] = 1.0 if folded[i] == folded[j] else 0.0
    np.fill_diagonal(sim, 1.0)
    return sim


@dataclass(frozen=True)
class MergeStep:
    """One agglomeration step of a run."""

    step: int
    cluster_a: int
    cluster_b: int
    similarity: float
    max_cluster_size: int
    merged_size: int


@dataclass(frozen=True)
class Checkpoint:
    """Shared-prefix state a capped run resumes from."""

    cap: int
    prefix_length: int
    member_sets: tuple[frozenset[int], ...]

    def max_size(self) -> int:
        return max((len(m) for m in self.member_sets), default=0)


@dataclass
class HACResult:
    partition: Partition
    trace: list[MergeStep]
    checkpoint: Checkpoint | None = None


class _Engine:
    """Slot-based agglomeration over a mutable linkage matrix.

    Initial cluster ids are the value ids; the cluster created at global
    step ``s`` gets id ``n + s``, so resumed runs produce the same ids as
    independent ones.
    """

    def __init__(self, base_sim: np.ndarray, cfg: SimilarityConfig, cap: int | None):
        n = base_sim.shape[0]
        self.n = n
        self.cfg = cfg
        self.cap = cap
        self.sim = base_sim.copy()
        self.active = [True] * n
        self.sizes = [1] * n
        self.min_id = list(range(n))
        self.members: list[set[int]] = [{i} for i in range(n)]
        self.cid = list(range(n))
        self.gen = [0] * n
        self.slot_of_cid = {i: i for i in range(n)}
        thr = cfg.stop_threshold
        self.neighbors: list[set[int]] = [set() for _ in range(n)]
        for i in range(n):
            for j in np.flatnonzero(base_sim[i] >= thr):
                if j != i:
                    self.neighbors[i].add(int(j))
        self.heap: list[tuple] = []
        self.trace: list[MergeStep] = []
        self.step = 0
        self.max_size = 1 if n else 0

    def _push(self, i: int, j: int) -> None:
        if self.cap is not None and self.sizes[i] + self.sizes[j] > self.cap:
            return
        s = self.sim[i, j]
        if s < self.cfg.stop_threshold:
            return
        m1, m2 = self.min_id[i], self.min_id[j]
        if m1 > m2:
            m1, m2 = m2, m1
        heapq.heappush(self.heap, (-s, m1, m2, i, self.gen[i], j, self.gen[j]))

    def build_heap(self) -> None:
        self.heap = []
        for i in range(self.n):
            if not self.active[i]:
                continue
            for j in self.neighbors[i]:
                if j > i:
                    self._push(i, j)

    def apply_merge(self, slot_a: int, slot_b: int, similarity: float) -> None:
        """Merge two slots, keeping the lower index. Records a trace step."""
        keep, drop = (slot_a, slot_b) if slot_a < slot_b else (slot_b, slot_a)
        wk, wd = self.sizes[keep], self.sizes[drop]
        if self.cfg.linkage == "single":
            np.maximum(self.sim[keep], self.sim[drop], out=self.sim[keep])
        elif self.cfg.linkage == "complete":
            np.minimum(self.sim[keep], self.sim[drop], out=self.sim[keep])
        else:
            self.sim[keep] *= wk
            self.sim[keep] += wd * self.sim[drop]
            self.sim[keep] /= wk + wd
        self.sim[:, keep] = self.sim[keep]

        # trace names the pair with the smaller min-member id first
        a_cid, b_cid = self.cid[keep], self.cid[drop]
        if self.min_id[drop] < self.min_id[keep]:
            a_cid, b_cid = b_cid, a_cid
        merged_size = wk + wd
        self.max_size = max(self.max_size, merged_size)
        self.trace.append(
            MergeStep(self.step, a_cid, b_cid, similarity, self.max_size, merged_size)
        )

        del self.slot_of_cid[self.cid[keep]]
        del self.slot_of_cid[self.cid[drop]]
        new_cid = self.n + self.step
        self.cid[keep] = new_cid
        self.slot_of_cid[new_cid] = keep
        self.step += 1

        self.sizes[keep] = merged_size
        self.min_id[keep] = min(self.min_id[keep], self.min_id[drop])
        self.members[keep] |= self.members[drop]
        self.members[drop] = set()
        self.active[drop] = False
        self.gen[keep] += 1
        self.gen[drop] += 1
        merged_nbrs = (self.neighbors[keep] | self.neighbors[drop]) - {keep, drop}
        self.neighbors[keep] = merged_nbrs
        self.neighbors[drop] = set()
        for nb in merged_nbrs:
            self.neighbors[nb].discard(drop)
            self.neighbors[nb].add(keep)
            self._push(keep, nb)

    def run(self) -> None:
        while self.heap:
            negs, _m1, _m2, i, gi, j, gj = heapq.heappop(self.heap)
            if self.gen[i] != gi or self.gen[j] != gj:
                continue
            self.apply_merge(i, j, -negs)

    def partition(self) -> Partition:
        sets = [self.members[i] for i in range(self.n) if self.active[i]]
        return Partition.from_member_sets(sets, self.n)

    def member_snapshot(self) -> tuple[frozenset[int], ...]:
        return tuple(
            frozenset(self.members[i]) for i in range(self.n) if self.active[i]
        )


def run_hac(
    table: ValueTable,
    cfg: SimilarityConfig = SimilarityConfig(),
    cap: int | None = None,
    base_sim: np.ndarray | None = None,
) -> HACResult:
    """Agglomerate ``table`` under ``cfg``; ``cap`` limits cluster size."""
    if cap is not None and cap < 1:
        raise ValueError("cap must be >= 1 or None")
    if base_sim is None:
        base_sim = similarity_matrix(table, cfg)
    eng = _Engine(base_sim, cfg, cap)
    eng.build_heap()
    eng.run()
    return HACResult(eng.partition(), eng.trace)


def run_joint(
    table: ValueTable,
    cfg: SimilarityConfig = SimilarityConfig(),
    caps: Iterable[int] = (),
    base_sim: np.ndarray | None = None,
) -> dict[int, HACResult]:
    """Execute the uncapped run once, then every capped variant from its
    checkpoint. Per-cap output is identical to an independent ``run_hac``.
    """
    n = len(table)
    caps = sorted(set(int(c) for c in caps))
    if any(c < 1 for c in caps):
        raise ValueError("caps must be >= 1")
    if base_sim is None:
        base_sim = similarity_matrix(table, cfg)
    full = _Engine(base_sim, cfg, None)
    full.build_heap()
    full.run()
    full_trace = full.trace

    results: dict[int, HACResult] = {}
    for cap in caps:
        prefix = 0
        while prefix < len(full_trace) and full_trace[prefix].merged_size <= cap:
            prefix += 1
        eng = _Engine(base_sim, cfg, cap)
        for st in full_trace[:prefix]:
            eng.apply_merge(eng.slot_of_cid[st.cluster_a], eng.slot_of_cid[st.cluster_b], st.similarity)
        checkpoint = Checkpoint(cap, prefix, eng.member_snapshot())
        eng.build_heap()
        eng.run()
        results[cap] = HACResult(eng.partition(), eng.trace, checkpoint)
    return results


def cluster_stats(partition: Partition) -> tuple[int, dict[int, int], int]:
    """(cluster count, size histogram, max size)."""
    hist: dict[int, int] = {}
    max_size = 0
    for c in partition.clusters:
        s = len(c)
        hist[s] = hist.get(s, 0) + 1
        max_size = max(max_size, s)
    return len(partition.clusters), hist, max_size


def dump_trace(trace: Sequence[MergeStep]) -> str:
    """Line-delimited ``step,a,b,sim,maxsize`` records."""
    lines = ["step,a,b,sim,maxsize"]
    for st in trace:
        lines.append(f"{st.step},{st.cluster_a},{st.cluster_b},{st.similarity:.6f},{st.max_cluster_size}")
    return "\n".join(lines) + "\n"
