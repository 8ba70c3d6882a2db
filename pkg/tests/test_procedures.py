"""Session state machine: tasks, actions, verification, charging, replay."""

import random
from itertools import combinations

import pytest

from valnorm.core import GoldPartition, Partition, ValueTable, is_gold_sequence
from valnorm.costmodel import GlobalParams, UserParams
from valnorm.procedures import (
    BTN_CLEAN_MIXED,
    BTN_MARK_VALUES,
    BTN_NEW_CLUSTER,
    BTN_OLD_CLUSTER,
    Action,
    ActionMismatch,
    BoxConflict,
    IncompleteSession,
    LinkOutOfWindow,
    Session,
    StaleTask,
    TASK_FIND_DOM,
    TASK_GLOBAL_MERGE,
    TASK_IS_PURE,
    TASK_LOCAL_MERGE,
    TASK_MARK_VALUES,
    PHASE_DONE,
    PHASE_LOCAL_MERGE,
    PHASE_SPLITTING,
)
from valnorm.simulator import TruthfulDriver

U = UserParams()
G = GlobalParams()


def drive(session: Session, gold: GoldPartition, seed: int = 0):
    driver = TruthfulDriver(gold, session.user, session.globals, random.Random(seed))
    while True:
        task = session.next_task()
        if task is None:
            return session.finalize()
        session.apply(driver.act(task))


def gold_of(labels):
    return GoldPartition.from_entity_map(labels, len(labels))


class TestSplitStage:
    def test_all_singletons_skip_straight_to_local_merge(self):
        table = ValueTable(["a", "b", "c"])
        session = Session(table, [[0], [1], [2]], U, G)
        task = session.next_task()
        assert session.phase == PHASE_LOCAL_MERGE
        assert task.kind == TASK_LOCAL_MERGE

    def test_first_task_is_the_pure_question(self):
        table = ValueTable(["a", "b", "c", "d"])
        session = Session(table, [[0, 1], [2], [3]], U, G)
        task = session.next_task()
        assert task.kind == TASK_IS_PURE
        assert task.value_ids == (0, 1)
        assert set(task.allowed_buttons) == {"yes", "no"}

    def test_pure_yes_asserts_every_intra_pair(self):
        table = ValueTable(["a", "b", "c", "d"])
        session = Session(table, [[0, 1, 2, 3]], U, G)
        task = session.next_task()
        session.apply(Action(task.id, yes=True, examined=4))
        assert session.verification.matches == {(a, b) for a, b in combinations(range(4), 2)}

    def test_split_verification_matches_the_brand_walkthrough(self):
        # mixed cluster {Sony, Sony Corp, Vizio Corp}: mark the stranger
        table = ValueTable(["Sony", "Sony Corp", "Vizio Corp", "Vizio", "Vizio Inc"])
        session = Session(table, [[0, 1, 2]], U, G)
        task = session.next_task()
        session.apply(Action(task.id, yes=False, examined=3))
        task = session.next_task()
        assert task.kind == TASK_FIND_DOM
        session.apply(Action(task.id, button=BTN_MARK_VALUES))
        task = session.next_task()
        assert task.kind == TASK_MARK_VALUES
        session.apply(Action(task.id, marked=(2,), button=BTN_NEW_CLUSTER))
        assert session.verification.matches == {(0, 1)}
        assert session.verification.non_matches == {(0, 2), (1, 2)}

    def test_minority_branch_finalizes_the_marked_side(self):
        # 2-of-5 dominating entity: the keepers are marked and finalized
        table = ValueTable(list("abcde"))
        session = Session(table, [[0, 1, 2, 3, 4]], U, G)
        task = session.next_task()
        session.apply(Action(task.id, yes=False, examined=2))
        task = session.next_task()
        session.apply(Action(task.id, button=BTN_MARK_VALUES))
        task = session.next_task()
        session.apply(Action(task.id, marked=(0, 1), button=BTN_OLD_CLUSTER))
        assert (0, 1) in session.verification.matches
        assert {(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)} <= \
            session.verification.non_matches
        # the remainder cluster comes back as the next pure question
        task = session.next_task()
        assert task.kind == TASK_IS_PURE
        assert task.value_ids == (2, 3, 4)

    def test_mixed_button_reroutes_to_a_nested_merge(self):
        table = ValueTable([f"v{i}" for i in range(12)])
        session = Session(table, [list(range(12))], U, G)
        task = session.next_task()
        session.apply(Action(task.id, yes=False, examined=2))
        task = session.next_task()
        session.apply(Action(task.id, button=BTN_CLEAN_MIXED))
        task = session.next_task()
        assert task.kind == TASK_LOCAL_MERGE
        assert task.phase == PHASE_SPLITTING  # nested work is split-stage work
        assert len(task.value_ids) == 12

    def test_marked_must_be_proper_subset(self):
        table = ValueTable(["a", "b", "c"])
        session = Session(table, [[0, 1, 2]], U, G)
        session.apply(Action(session.next_task().id, yes=False, examined=2))
        session.apply(Action(session.next_task().id, button=BTN_MARK_VALUES))
        task = session.next_task()
        with pytest.raises(ActionMismatch):
            session.apply(Action(task.id, marked=(0, 1, 2), button=BTN_NEW_CLUSTER))


class TestMergeStages:
    def _session_with_singletons(self, values):
        table = ValueTable(values)
        return table, Session(table, [[i] for i in range(len(values))], U, G)

    def test_local_merge_list_is_alphabetical_case_folded(self):
        table, session = self._session_with_singletons(["delta", "Alpha", "charlie", "bravo"])
        task = session.next_task()
        assert task.values == ("Alpha", "bravo", "charlie", "delta")

    def test_links_consolidate_and_assert_matches(self):
        table, session = self._session_with_singletons(["GE", "Ge", "Garmin"])
        task = session.next_task()
        order = list(task.value_ids)
        ge, ge2 = table.id_of("GE"), table.id_of("Ge")
        later, earlier = (ge, ge2) if order.index(ge) > order.index(ge2) else (ge2, ge)
        session.apply(Action(task.id, links=((later, earlier),)))
        assert (min(ge, ge2), max(ge, ge2)) in session.verification.matches
        grid = session.next_task()
        assert grid.kind == TASK_GLOBAL_MERGE
        assert len(grid.columns) == 2  # consolidated list has two entries

    def test_link_must_point_backwards(self):
        table, session = self._session_with_singletons(["a", "b", "c"])
        task = session.next_task()
        first, second = task.value_ids[0], task.value_ids[1]
        with pytest.raises(LinkOutOfWindow):
            session.apply(Action(task.id, links=((first, second),)))

    def test_grid_round_checks_merge_and_remove(self):
        values = ["Big Blue", "GE", "Gamevice", "Garmin", "IBM Corp"]
        labels = [0, 1, 2, 3, 0]
        table, session = self._session_with_singletons(values)
        session.apply(Action(session.next_task().id, links=()))
        grid = session.next_task()
        assert grid.kind == TASK_GLOBAL_MERGE
        assert len(grid.columns) == 3 and len(grid.rows) == 2
        bb, ibm = table.id_of("Big Blue"), table.id_of("IBM Corp")
        session.apply(Action(grid.id, checks=((bb, (ibm,)),)))
        result = drive(session, gold_of(labels))
        assert set(result.clusters) == {
            frozenset({bb, ibm}),
            frozenset({table.id_of("GE")}),
            frozenset({table.id_of("Gamevice")}),
            frozenset({table.id_of("Garmin")}),
        }

    def test_no_checks_on_six_values_takes_two_rounds(self):
        values = [f"item {c}" for c in "abcdef"]
        table, session = self._session_with_singletons(values)
        session.apply(Action(session.next_task().id, links=()))
        rounds = 0
        while True:
            task = session.next_task()
            if task is None:
                break
            assert task.kind == TASK_GLOBAL_MERGE
            rounds += 1
            session.apply(Action(task.id, checks=()))
        assert rounds == 2
        result = session.finalize()
        assert len(result.clusters) == 6
        assert is_gold_sequence(result.verification, gold_of(list(range(6))))

    def test_single_remaining_value_ends_without_a_grid(self):
        table, session = self._session_with_singletons(["only"])
        task = session.next_task()
        assert task.kind == TASK_LOCAL_MERGE
        session.apply(Action(task.id, links=()))
        assert session.next_task() is None
        assert session.finalize().clusters == [frozenset({0})]

    def test_box_conflict_rejected(self):
        values = [f"x{i}" for i in range(6)]
        table, session = self._session_with_singletons(values)
        session.apply(Action(session.next_task().id, links=()))
        grid = session.next_task()
        c0, c1 = grid.columns[0], grid.columns[1]
        row = grid.rows[0]
        with pytest.raises(BoxConflict):
            session.apply(Action(grid.id, checks=((c0, (row,)), (c1, (row,)))))

    def test_column_to_column_check_merges_columns(self):
        values = ["Acme", "ACME", "Zeta"]
        labels = [0, 0, 1]
        table, session = self._session_with_singletons(values)
        session.apply(Action(session.next_task().id, links=()))
        grid = session.next_task()
        cols = list(grid.columns)
        a, b = table.id_of("Acme"), table.id_of("ACME")
        later = cols[max(cols.index(a), cols.index(b))]
        earlier = cols[min(cols.index(a), cols.index(b))]
        session.apply(Action(grid.id, checks=((later, (earlier,)),)))
        result = drive(session, gold_of(labels))
        assert frozenset({a, b}) in set(result.clusters)


class TestEndToEnd:
    def test_recursive_split_then_merge_walkthrough(self):
        values = ["Sony", "Sony Corp", "Sony Inc", "Lg",
                  "Sonny", "SONY Corp", "Dell", "LG", "Apple"]
        labels = [0, 0, 0, 1, 0, 0, 2, 1, 3]
        table = ValueTable(values)
        gold = gold_of(labels)
        session = Session(table, [[0, 1, 2, 3], [4, 5, 6, 7, 8]], U, G)
        result = drive(session, gold)
        assert result.partition is not None
        expected = {
            frozenset({0, 1, 2, 4, 5}),
            frozenset({3, 7}),
            frozenset({6}),
            frozenset({8}),
        }
        assert set(result.clusters) == expected
        assert is_gold_sequence(result.verification, gold)

    def test_gold_input_needs_only_confirmations(self):
        values = ["aa", "ab", "zz zz", "zz zy", "qqq"]
        labels = [0, 0, 1, 1, 2]
        table = ValueTable(values)
        gold = gold_of(labels)
        clusters = [sorted(c.members) for c in gold.partition.clusters]
        session = Session(table, clusters, U, G)
        result = drive(session, gold)
        kinds = {e.task_kind for e in session.events}
        assert TASK_MARK_VALUES not in kinds  # never had to split anything
        from valnorm.core import precision_recall
        assert precision_recall(result.partition, gold) == (1.0, 1.0)

    def test_export_rows_use_longest_canonical(self):
        values = ["ab", "abcd", "q"]
        labels = [0, 0, 1]
        table = ValueTable(values)
        session = Session(table, [[0, 1], [2]], U, G)
        drive(session, gold_of(labels))
        rows = session.export_rows()
        assert ("ab", 0, "abcd") in rows and ("abcd", 0, "abcd") in rows


class TestChargingAndEvents:
    def test_ops_breakdown_sums_to_charge(self):
        values = [f"w{i}" for i in range(9)]
        labels = [i % 3 for i in range(9)]
        table = ValueTable(values)
        session = Session(table, [list(range(9))], U, G)
        drive(session, gold_of(labels))
        for event in session.events:
            assert event.charged_seconds == pytest.approx(sum(event.ops.values()))
        assert session.total_seconds == pytest.approx(
            sum(e.charged_seconds for e in session.events))

    def test_phase_seconds_partition_the_total(self):
        table = ValueTable([f"w{i}" for i in range(8)])
        session = Session(table, [[0, 1, 2, 3], [4, 5], [6], [7]], U, G)
        result = drive(session, gold_of([0, 0, 1, 1, 2, 2, 3, 3]))
        assert sum(result.phase_seconds.values()) == pytest.approx(result.total_seconds)

    def test_is_pure_charge_depends_on_examined_count(self):
        table = ValueTable(["a", "b", "c", "d"])
        s1 = Session(table, [[0, 1, 2, 3]], U, G)
        t1 = s1.next_task()
        s1.apply(Action(t1.id, yes=False, examined=2))
        s2 = Session(table, [[0, 1, 2, 3]], U, G)
        t2 = s2.next_task()
        s2.apply(Action(t2.id, yes=False, examined=4))
        diff = s2.events[0].charged_seconds - s1.events[0].charged_seconds
        assert diff == pytest.approx(2 * U.pure_scan_rate)

    def test_live_mode_records_observed_seconds(self):
        table = ValueTable(["a", "b"])
        session = Session(table, [[0, 1]], U, G, mode="live")
        task = session.next_task()
        session.apply(Action(task.id, yes=True, observed_seconds=7.5))
        assert session.events[0].charged_seconds == 7.5


class TestErrorsAndReplay:
    def test_stale_task_rejected(self):
        table = ValueTable(["a", "b"])
        session = Session(table, [[0, 1]], U, G)
        task = session.next_task()
        session.apply(Action(task.id, yes=True))
        with pytest.raises(StaleTask):
            session.apply(Action(task.id, yes=True))

    def test_wrong_button_rejected(self):
        table = ValueTable(["a", "b", "c"])
        session = Session(table, [[0, 1, 2]], U, G)
        session.apply(Action(session.next_task().id, yes=False, examined=2))
        task = session.next_task()
        with pytest.raises(ActionMismatch):
            session.apply(Action(task.id, button="no such button"))

    def test_finalize_before_done_raises(self):
        table = ValueTable(["a", "b"])
        session = Session(table, [[0, 1]], U, G)
        session.next_task()
        with pytest.raises(IncompleteSession):
            session.finalize()

    def test_replay_reproduces_everything(self):
        table, gold = _random_fixture(seed=31)
        clusters = [[i for i in range(len(table)) if i % 3 == k] for k in range(3)]
        session = Session(table, clusters, U, G, session_id="orig")
        driver = TruthfulDriver(gold, U, G, random.Random(5))
        actions = []
        while True:
            task = session.next_task()
            if task is None:
                break
            action = driver.act(task)
            actions.append(action.to_dict())
            session.apply(action)
        replayed = Session.replay(table, session.header(), actions, U, G)
        assert replayed.phase == session.phase == PHASE_DONE
        assert replayed.finalize().clusters == session.finalize().clusters
        assert replayed.total_seconds == pytest.approx(session.total_seconds)
        assert replayed.verification.matches == session.verification.matches
        assert replayed.verification.non_matches == session.verification.non_matches

    def test_action_dict_round_trip(self):
        action = Action("t3", checks=((4, (1, 2)), (7, ())), links=((1, 0),),
                        marked=(3, 4), scanned_rows=2)
        import json

        rebuilt = Action.from_dict(json.loads(json.dumps(action.to_dict())))
        assert rebuilt == action


def _random_fixture(seed: int):
    from valnorm.datagen import synthesize

    return synthesize(36, 9, seed=seed)
