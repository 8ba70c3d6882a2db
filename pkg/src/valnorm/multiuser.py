"""Team cleaning: balanced assignment, parallel sessions, shared merge.

After each user cleans an assigned share of the machine clusters, the
coordinator repeatedly takes the largest remaining representative list,
chunks it across users, and has every user scan the other lists against
three memorized column values at a time (rows similarity-sorted, stopping
early once every column has matched). Rounds are barrier-synchronized:
a round costs the slowest user's time.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .core import (
    ConflictingEvidence,
    GoldPartition,
    Partition,
    ValueTable,
    VerificationSet,
    is_gold_sequence,
    precision_recall,
)
from .costmodel import (
    GlobalParams,
    PurityModel,
    UserParams,
    average_purity_models,
    average_user_params,
    default_caps,
    rank_plans,
)
from .hac import SimilarityConfig, jaccard_similarity, run_joint
from .procedures import Action, Session, Task, _make_unit, _Unit
from .simulator import TruthfulDriver, generate_user, run_synthetic_calibration

TASK_SET_MERGE = "setMergeScan"
STATUS_WAITING = "waiting"
STATUS_DONE = "done"


@dataclass(frozen=True)
class UserPool:
    """A team of users plus the averaged model the shared planner uses."""

    params: tuple[UserParams, ...]
    models: tuple[PurityModel, ...]

    @property
    def k(self) -> int:
        return len(self.params)

    @property
    def averaged_params(self) -> UserParams:
        return average_user_params(self.params)

    @property
    def averaged_model(self) -> PurityModel:
        return average_purity_models(self.models)


def assign_clusters(cluster_sizes: Sequence[int], k: int) -> list[list[int]]:
    """Greedy largest-first assignment of cluster indexes to ``k`` users,
    balancing total value counts. Never splits a cluster."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = sorted(range(len(cluster_sizes)), key=lambda i: (-cluster_sizes[i], i))
    loads = [0] * k
    shares: list[list[int]] = [[] for _ in range(k)]
    for idx in order:
        slot = min(range(k), key=lambda s: (loads[s], s))
        shares[slot].append(idx)
        loads[slot] += cluster_sizes[idx]
    return shares


class TeamMergeCoordinator:
    """Barrier-synchronized merge of per-user representative lists."""

    def __init__(
        self,
        table: ValueTable,
        unit_lists: Sequence[Sequence[_Unit]],
        users: Sequence[UserParams],
        g: GlobalParams = GlobalParams(),
        sim_cfg: SimilarityConfig = SimilarityConfig(),
    ):
        if len(unit_lists) != len(users):
            raise ValueError("one unit list per user required")
        if len(users) < 2:
            raise ValueError("team merge needs at least 2 users")
        self.table = table
        self.users = list(users)
        self.globals = g
        self.sim_cfg = sim_cfg
        self.k = len(users)
        self.lists: list[list[_Unit]] = [list(l) for l in unit_lists]
        self.verification = VerificationSet()
        self.final_clusters: list[frozenset[int]] = []
        self.busy_seconds = [0.0] * self.k
        self.round_walls: list[float] = []
        self.round_no = 0
        self._queues: list[list[Task]] = [[] for _ in range(self.k)]
        self._pending: list[Task | None] = [None] * self.k
        self._round_busy = [0.0] * self.k
        self._matches: list[tuple[int, int]] = []  # (column rep, row rep)
        self._units_by_rep: dict[int, _Unit] = {}
        self._star: int | None = None
        self._task_seq = 0
        self.done = False
        self._start_round()

    # -- round machinery -------------------------------------------------------

    def _start_round(self) -> None:
        nonempty = [i for i, lst in enumerate(self.lists) if lst]
        if len(nonempty) <= 1:
            for i in nonempty:
                for unit in self.lists[i]:
                    self.final_clusters.append(unit.value_ids)
                self.lists[i] = []
            self.done = True
            return
        star = max(nonempty, key=lambda i: (len(self.lists[i]), -i))
        self._star = star
        star_units = self.lists[star]
        self._units_by_rep = {u.rep: u for lst in self.lists for u in lst}
        chunk_sizes = [len(star_units) // self.k] * self.k
        for i in range(len(star_units) % self.k):
            chunk_sizes[i] += 1
        self._matches = []
        self._round_busy = [0.0] * self.k
        offset = 0
        others = [j for j in nonempty if j != star]
        for slot in range(self.k):
            chunk = star_units[offset : offset + chunk_sizes[slot]]
            offset += chunk_sizes[slot]
            queue: list[Task] = []
            cols_per_task = self.users[slot].grid_columns
            for p in range(0, len(chunk), cols_per_task):
                cols = chunk[p : p + cols_per_task]
                for j in others:
                    rows = self._similarity_sorted(cols, self.lists[j])
                    self._task_seq += 1
                    queue.append(Task(
                        id=f"m{self._task_seq}",
                        kind=TASK_SET_MERGE,
                        phase="multiUserMerge",
                        value_ids=tuple(u.rep for u in cols + rows),
                        values=tuple(self.table[u.rep] for u in cols + rows),
                        columns=tuple(u.rep for u in cols),
                        column_values=tuple(self.table[u.rep] for u in cols),
                        rows=tuple(u.rep for u in rows),
                        row_values=tuple(self.table[u.rep] for u in rows),
                        allowed_buttons=("global merge",),
                        progress={"round": self.round_no, "slot": slot},
                    ))
            self._queues[slot] = queue
        self._pending = [None] * self.k

    def _similarity_sorted(self, cols: Sequence[_Unit], rows: Sequence[_Unit]) -> list[_Unit]:
        col_strings = [self.table[c.rep] for c in cols]

        def best_sim(u: _Unit) -> float:
            s = self.table[u.rep]
            return max(jaccard_similarity(s, c, self.sim_cfg) for c in col_strings)

        return sorted(rows, key=lambda u: (-best_sim(u), u.rep))

    def next_task(self, slot: int) -> Task | str:
        """The slot's next scan, ``'waiting'`` at a barrier, ``'done'`` at the end."""
        if self.done:
            return STATUS_DONE
        if self._pending[slot] is not None:
            return self._pending[slot]
        if self._queues[slot]:
            self._pending[slot] = self._queues[slot].pop(0)
            return self._pending[slot]
        self._maybe_finish_round()
        if self.done:
            return STATUS_DONE
        if self._queues[slot]:
            return self.next_task(slot)
        return STATUS_WAITING

    def apply(self, slot: int, action: Action) -> None:
        task = self._pending[slot]
        if task is None or task.id != action.task_id:
            raise ValueError(f"slot {slot} has no pending task {action.task_id}")
        u = self.users[slot]
        checks = action.checks_dict()
        n_rows = len(task.rows)
        scanned = action.scanned_rows if action.scanned_rows is not None else n_rows
        if not 0 <= scanned <= n_rows:
            raise ValueError("scanned_rows outside the displayed list")
        checked_rows = {t for targets in checks.values() for t in targets}
        for col, targets in checks.items():
            if col not in task.columns:
                raise ValueError(f"{col} is not a column of this scan")
            for t in targets:
                if t not in task.rows:
                    raise ValueError(f"checked value {t} is not a row of this scan")
        positions = {rep: i for i, rep in enumerate(task.rows)}
        if checked_rows:
            scanned = max(scanned, max(positions[t] for t in checked_rows) + 1)
        for col, targets in checks.items():
            for t in targets:
                self.verification.add_match(col, t)
                self._matches.append((col, t))
        for rep in task.rows[:scanned]:
            for col in task.columns:
                if rep not in checks.get(col, ()):
                    self.verification.add_non_match(col, rep)
        n_checks = sum(len(t) for t in checks.values())
        busy = (
            len(task.columns) * u.memorize_cost
            + scanned * u.recall_cost
            + (n_checks + 1) * u.button_cost()
        )
        self._round_busy[slot] += busy
        self.busy_seconds[slot] += busy
        self._pending[slot] = None

    def _maybe_finish_round(self) -> None:
        if any(q for q in self._queues) or any(p is not None for p in self._pending):
            return
        self._resolve_round()

    def _resolve_round(self) -> None:
        star = self._star
        self.round_walls.append(max(self._round_busy))
        merged_into: dict[int, set[int]] = {}
        row_owner: dict[int, int] = {}
        for col, row in self._matches:
            if row in row_owner and row_owner[row] != col:
                raise ConflictingEvidence((row_owner[row], row),
                                          f"value {row} matched to two different columns")
            row_owner[row] = col
            merged_into.setdefault(col, set()).add(row)
        matched_rows = set(row_owner)
        for unit in self.lists[star]:
            ids = unit.value_ids
            for row in merged_into.get(unit.rep, ()):
                ids = ids | self._units_by_rep[row].value_ids
            self.final_clusters.append(ids)
        self.lists[star] = []
        for j, lst in enumerate(self.lists):
            if lst:
                self.lists[j] = [u for u in lst if u.rep not in matched_rows]
        self.round_no += 1
        self._start_round()

    def result(self) -> list[frozenset[int]]:
        if not self.done:
            raise RuntimeError("team merge is not finished")
        return list(self.final_clusters)


class TeamScanDriver:
    """Truthful answers for set-merge scans, with the early stop once
    every memorized column has found its match in the current list."""

    def __init__(self, gold: GoldPartition):
        self.entity_of = gold.entity_of

    def act(self, task: Task) -> Action:
        col_entity = {c: self.entity_of[c] for c in task.columns}
        unmatched = dict(col_entity)
        checks: dict[int, list[int]] = {}
        scanned = 0
        for rep in task.rows:
            if not unmatched:
                break
            scanned += 1
            e = self.entity_of[rep]
            for col, ce in list(unmatched.items()):
                if ce == e:
                    checks.setdefault(col, []).append(rep)
                    del unmatched[col]
                    break
        return Action(
            task.id,
            checks=tuple((c, tuple(t)) for c, t in checks.items()),
            scanned_rows=scanned,
        )


@dataclass
class TeamReport:
    k: int
    wall_seconds: float
    stage_seconds: dict
    per_user_busy: list[float]
    selected_cap: int
    precision: float
    recall: float
    gold_sequence: bool
    partition: Partition | None
    round_walls: list[float] = field(default_factory=list)


def run_team_merge(
    table: ValueTable,
    unit_lists: Sequence[Sequence[_Unit]],
    users: Sequence[UserParams],
    gold: GoldPartition,
    g: GlobalParams = GlobalParams(),
    verification: VerificationSet | None = None,
) -> tuple[list[frozenset[int]], list[float], list[float], VerificationSet]:
    """Simulate the coordinator to completion with truthful scans."""
    coord = TeamMergeCoordinator(table, unit_lists, users, g)
    driver = TeamScanDriver(gold)
    while not coord.done:
        progressed = False
        for slot in range(coord.k):
            task = coord.next_task(slot)
            if isinstance(task, Task):
                coord.apply(slot, driver.act(task))
                progressed = True
        if not progressed and not coord.done:
            raise RuntimeError("team merge stalled with no runnable slot")
    if verification is not None:
        verification.update(coord.verification)
    return coord.result(), coord.busy_seconds, coord.round_walls, coord.verification


def run_team_pipeline(
    table: ValueTable,
    gold: GoldPartition,
    k: int,
    cfg: SimilarityConfig = SimilarityConfig(),
    g: GlobalParams = GlobalParams(),
    seed: int = 0,
    caps: Sequence[int] | None = None,
    calibrate: bool = True,
    fixed_cap: int | None = None,
    joint_results: dict | None = None,
) -> TeamReport:
    """Calibrate each user, pick one plan on the averaged model, clean the
    assigned shares in parallel, then run the shared merge rounds.

    Wall time sums the per-stage maxima; with ``k=1`` the pipeline is the
    plain single-user run.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = random.Random(seed)
    users = [generate_user(rng.randrange(2**31)) for _ in range(k)]
    n = len(table)
    if n == 0:
        return TeamReport(k, 0.0, {"calibration": 0.0, "clean": 0.0, "merge": 0.0},
                          [0.0] * k, 1, 1.0, 1.0, True, Partition([], 0))

    cal_wall = 0.0
    cal_busy = [0.0] * k
    fitted_params: list[UserParams] = []
    fitted_models: list[PurityModel] = []
    if calibrate:
        for slot, user in enumerate(users):
            result = run_synthetic_calibration(table, gold, user, cfg)
            fitted_params.append(result.user_params)
            fitted_models.append(result.purity_model)
            cal_busy[slot] = result.total_elapsed_seconds
            cal_wall = max(cal_wall, result.total_elapsed_seconds)
    else:
        fitted_params = [u.params for u in users]
        fitted_models = [PurityModel(1.0, -0.3)] * k

    pool = UserPool(tuple(fitted_params), tuple(fitted_models))
    avg_params = pool.averaged_params
    avg_model = pool.averaged_model

    caps = list(caps) if caps is not None else default_caps(n)
    joint = joint_results if joint_results is not None else run_joint(table, cfg, caps)
    if fixed_cap is not None:
        selected = fixed_cap
    else:
        sizes_by_cap = {c: joint[c].partition.sizes() for c in caps}
        selected = rank_plans(sizes_by_cap, avg_model, avg_params, g)[0].cap
    machine = joint[selected].partition if selected in joint else run_joint(table, cfg, [selected])[selected].partition

    shares = assign_clusters(machine.sizes(), k)
    sessions: list[Session] = []
    unit_lists: list[list[_Unit]] = []
    clean_wall = 0.0
    verification = VerificationSet()
    busy = [0.0] * k
    for slot, share in enumerate(shares):
        clusters = [sorted(machine.clusters[i].members) for i in share]
        session = Session(table, clusters, users[slot].params, g,
                          session_id=f"team-{slot}")
        driver = TruthfulDriver(gold, users[slot].params, g,
                                random.Random(users[slot].seed))
        while True:
            task = session.next_task()
            if task is None:
                break
            session.apply(driver.act(task))
        result = session.finalize()
        verification.update(result.verification)
        unit_lists.append([_make_unit(table, c) for c in result.clusters])
        clean_wall = max(clean_wall, result.total_seconds)
        busy[slot] += result.total_seconds
        sessions.append(session)

    merge_walls: list[float] = []
    if k == 1:
        final_clusters = [u.value_ids for u in unit_lists[0]]
    else:
        final_clusters, merge_busy, merge_walls, merge_ver = run_team_merge(
            table, unit_lists, [u.params for u in users], gold, g)
        verification.update(merge_ver)
        for slot in range(k):
            busy[slot] += merge_busy[slot]

    partition = Partition.from_member_sets(final_clusters, n)
    precision, recall = precision_recall(partition, gold)
    gold_seq = is_gold_sequence(verification, gold)
    wall = cal_wall + clean_wall + sum(merge_walls)
    for slot in range(k):
        busy[slot] += cal_busy[slot]
    return TeamReport(
        k=k,
        wall_seconds=wall,
        stage_seconds={"calibration": cal_wall, "clean": clean_wall,
                       "merge": sum(merge_walls)},
        per_user_busy=busy,
        selected_cap=selected,
        precision=precision,
        recall=recall,
        gold_sequence=gold_seq,
        partition=partition,
        round_walls=merge_walls,
    )
