"""Data model, metrics, and transitivity inference."""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valnorm.core import (
    ConflictingEvidence,
    GoldPartition,
    PairAssertion,
    Partition,
    TransitivityIndex,
    ValueTable,
    ValueTableMismatch,
    VerificationSet,
    canonical_string,
    is_gold_sequence,
    match_set_size,
    partition_from_matches,
    precision_recall,
)

BRANDS = ["Sony", "Sony Corp", "Vizio Corp", "Vizio", "Vizio Inc"]


def make_partition(member_sets, n):
    return Partition.from_member_sets(member_sets, n)


@pytest.fixture
def brands():
    table = ValueTable(BRANDS)
    coarse = make_partition([{0, 1, 2}, {3, 4}], 5)
    gold = GoldPartition(make_partition([{0, 1}, {2, 3, 4}], 5))
    return table, coarse, gold


def all_set_partitions(items):
    """Every partition of ``items`` (Bell-number many)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for sub in all_set_partitions(rest):
        for i in range(len(sub)):
            yield sub[:i] + [sub[i] + [first]] + sub[i + 1:]
        yield sub + [[first]]


class TestValueTable:
    def test_dedupes_preserving_order(self):
        table = ValueTable(["b", "a", "b", "c", "a"])
        assert list(table) == ["b", "a", "c"]
        assert table.id_of("c") == 2

    def test_ids_stable(self):
        table = ValueTable(BRANDS)
        assert [table.id_of(v) for v in BRANDS] == list(range(5))


class TestMatchSetSize:
    def test_two_brand_clusters(self, brands):
        _, coarse, _ = brands
        assert match_set_size(coarse) == 4  # three in the triple, one in the pair

    def test_all_singletons(self):
        assert match_set_size(Partition.singletons(5)) == 0

    def test_one_cluster_of_four_matches_enumeration(self):
        p = make_partition([{0, 1, 2, 3}], 4)
        brute = sum(
            1 for a, b in itertools.combinations(range(4), 2)
            if p.label_of(a) == p.label_of(b)
        )
        assert match_set_size(p) == brute == 6

    def test_matches_brute_force_on_all_partitions_of_six(self):
        for sets in all_set_partitions(range(6)):
            p = make_partition(sets, 6)
            brute = sum(
                1 for a, b in itertools.combinations(range(6), 2)
                if p.label_of(a) == p.label_of(b)
            )
            assert match_set_size(p) == brute


class TestPrecisionRecall:
    def test_half_half_on_brand_fixture(self, brands):
        _, coarse, gold = brands
        assert precision_recall(coarse, gold) == (0.5, 0.5)

    def test_identity(self, brands):
        _, _, gold = brands
        assert precision_recall(gold.partition, gold) == (1.0, 1.0)

    def test_singletons_have_full_precision_zero_recall(self, brands):
        _, _, gold = brands
        singles = Partition.singletons(5)
        gold_matches = sum(
            1 for a, b in itertools.combinations(range(5), 2)
            if gold.entity_of[a] == gold.entity_of[b]
        )
        assert gold_matches > 0
        assert precision_recall(singles, gold) == (1.0, 0.0)

    def test_table_size_mismatch_rejected(self, brands):
        _, _, gold = brands
        with pytest.raises(ValueTableMismatch):
            precision_recall(Partition.singletons(4), gold)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_bounds_and_self_identity(self, seed):
        rng = random.Random(seed)
        n = rng.randint(1, 12)
        labels = [rng.randrange(1 + n // 2) for _ in range(n)]
        gold = GoldPartition.from_entity_map(labels, n)
        other = [rng.randrange(1 + n // 2) for _ in range(n)]
        cand = GoldPartition.from_entity_map(other, n).partition
        p, r = precision_recall(cand, gold)
        assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0
        assert precision_recall(gold.partition, gold) == (1.0, 1.0)


class TestVerificationSet:
    def test_brand_action_sequence_union(self):
        # splitting the mixed triple, confirming the pair, merging the rest
        vs = VerificationSet()
        vs.record([
            PairAssertion(0, 1, True),    # kept together
            PairAssertion(0, 2, False),   # moved out
            PairAssertion(1, 2, False),
        ])
        vs.record([PairAssertion(3, 4, True)])
        vs.record([PairAssertion(3, 2, True), PairAssertion(4, 2, True)])
        assert len(vs) == 6
        assert len(vs.matches) == 4 and len(vs.non_matches) == 2

    def test_empty_union(self):
        vs = VerificationSet()
        vs.update(VerificationSet())
        assert len(vs) == 0

    def test_conflict_detected(self):
        vs = VerificationSet()
        vs.add_match(1, 2)
        with pytest.raises(ConflictingEvidence):
            vs.add_non_match(2, 1)

    def test_pair_assertion_canonical_order(self):
        pa = PairAssertion(5, 2, True)
        assert (pa.a, pa.b) == (2, 5)
        with pytest.raises(ValueError):
            PairAssertion(3, 3, True)


class TestTransitivityIndex:
    def test_match_chain_forms_one_component(self):
        vs = VerificationSet()
        vs.add_match(0, 1)
        vs.add_match(1, 2)
        idx = TransitivityIndex.build(vs, 3)
        assert idx.can_infer(PairAssertion(0, 2, True))

    def test_single_non_match_edge_inferable(self):
        vs = VerificationSet()
        vs.add_match(0, 1)
        vs.add_non_match(1, 2)
        idx = TransitivityIndex.build(vs, 3)
        assert idx.can_infer(PairAssertion(0, 2, False))
        assert not idx.can_infer(PairAssertion(0, 2, True))

    def test_unrelated_values_not_inferable(self):
        vs = VerificationSet()
        vs.add_match(0, 1)
        vs.add_match(0, 2)
        idx = TransitivityIndex.build(vs, 5)
        assert not idx.can_infer(PairAssertion(3, 4, True))
        assert not idx.can_infer(PairAssertion(3, 4, False))

    def test_brand_evidence_components(self):
        # values: Sony, Sony Corp, Vizio Corp, Vizo, Vizio
        vs = VerificationSet()
        vs.record([
            PairAssertion(0, 1, True),
            PairAssertion(0, 2, False),
            PairAssertion(1, 2, False),
            PairAssertion(3, 4, True),
            PairAssertion(3, 2, True),
            PairAssertion(4, 2, True),
        ])
        idx = TransitivityIndex.build(vs, 5)
        comps = {frozenset(m) for m in idx.components().values()}
        assert comps == {frozenset({0, 1}), frozenset({2, 3, 4})}
        assert idx.can_infer(PairAssertion(0, 3, False))

    def test_internal_non_match_is_a_conflict(self):
        vs = VerificationSet()
        vs.add_match(0, 1)
        vs.add_match(1, 2)
        vs.add_non_match(0, 2)
        with pytest.raises(ConflictingEvidence):
            TransitivityIndex.build(vs, 3)

    def _def7_oracle(self, vs, n, a, b, want_match):
        """Exhaustive path search: match paths, or exactly one non-match edge."""
        adj = {i: set() for i in range(n)}
        for x, y in vs.matches:
            adj[x].add(y)
            adj[y].add(x)

        def reach(src):
            seen = {src}
            stack = [src]
            while stack:
                cur = stack.pop()
                for nxt in adj[cur]:
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            return seen

        if want_match:
            return b in reach(a)
        ra, rb = reach(a), reach(b)
        return any(
            (x in ra and y in rb) or (x in rb and y in ra)
            for x, y in vs.non_matches
        )

    @given(st.integers(0, 10_000))
    @settings(max_examples=80, deadline=None)
    def test_can_infer_matches_def7_search(self, seed):
        rng = random.Random(seed)
        n = rng.randint(2, 8)
        labels = [rng.randrange(3) for _ in range(n)]  # consistent ground truth
        vs = VerificationSet()
        for a, b in itertools.combinations(range(n), 2):
            if rng.random() < 0.35:
                vs.add(a, b, labels[a] == labels[b])
        idx = TransitivityIndex.build(vs, n)
        for a, b in itertools.combinations(range(n), 2):
            for want in (True, False):
                assert idx.can_infer(PairAssertion(a, b, want)) == \
                    self._def7_oracle(vs, n, a, b, want)


class TestGoldSequence:
    def _full_evidence(self, gold):
        vs = VerificationSet()
        for a, b in itertools.combinations(range(gold.n_values), 2):
            vs.add(a, b, gold.entity_of[a] == gold.entity_of[b])
        return vs

    def test_brand_walkthrough_is_gold(self):
        gold = GoldPartition(make_partition([{0, 1}, {2, 3, 4}], 5))
        vs = VerificationSet()
        vs.record([
            PairAssertion(0, 1, True),
            PairAssertion(0, 2, False),
            PairAssertion(1, 2, False),
            PairAssertion(3, 4, True),
            PairAssertion(3, 2, True),
            PairAssertion(4, 2, True),
        ])
        assert is_gold_sequence(vs, gold)

    def test_empty_evidence_is_not_gold(self):
        gold = GoldPartition(make_partition([{0}, {1}], 2))
        assert not is_gold_sequence(VerificationSet(), gold)

    def test_matches_alone_cannot_certify_two_clusters(self):
        gold = GoldPartition(make_partition([{0, 1}, {2, 3}], 4))
        vs = VerificationSet()
        vs.add_match(0, 1)
        vs.add_match(2, 3)
        assert not is_gold_sequence(vs, gold)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_gold_sequence_implies_exact_reconstruction(self, seed):
        rng = random.Random(seed)
        n = rng.randint(2, 10)
        labels = [rng.randrange(1 + n // 3) for _ in range(n)]
        gold = GoldPartition.from_entity_map(labels, n)
        vs = self._full_evidence(gold)
        assert is_gold_sequence(vs, gold)
        rebuilt = partition_from_matches(vs, n)
        assert precision_recall(rebuilt, gold) == (1.0, 1.0)


def test_canonical_string_prefers_longest_then_smallest_id():
    table = ValueTable(["bb", "aaa", "ccc"])
    assert canonical_string(table, {0, 1, 2}) == "aaa"
    assert canonical_string(table, {0}) == "bb"
