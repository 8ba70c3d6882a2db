"""Event-sourced state machine for the human cleaning procedures.

A :class:`Session` walks one user through splitting every machine cluster
into pure clusters and then merging pure clusters that refer to the same
entity (one local-merge pass over the sorted representative list, then
grid-based global-merge rounds). The session emits one :class:`Task` at a
time, consumes :class:`Action` objects (from the simulator or a UI),
charges operation costs, and accumulates the verification evidence that
certifies the final partition.

Replaying a session's recorded actions against a fresh session reproduces
phase, partition, verification set and charged seconds exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, asdict
from itertools import combinations
from typing import Iterable, Sequence

from .core import Partition, ValueTable, VerificationSet, canonical_string
from .costmodel import GlobalParams, UserParams

# GUI buttons, named as shown to the user
BTN_YES = "yes"
BTN_NO = "no"
BTN_MARK_VALUES = "mark values"
BTN_CLEAN_MIXED = "clean mixed cluster"
BTN_NEW_CLUSTER = "create/clean new cluster"          # marked values leave, old cluster is clean
BTN_OLD_CLUSTER = "create new cluster / clean old cluster"  # marked values form the clean cluster
BTN_LINK = "link"
BTN_DONE_LOCAL = "done local merging"
BTN_GLOBAL_MERGE = "global merge"

TASK_IS_PURE = "isPureQuestion"
TASK_FIND_DOM = "findDomAndMark"
TASK_MARK_VALUES = "markValues"
TASK_LOCAL_MERGE = "localMergeScan"
TASK_GLOBAL_MERGE = "globalMergeGrid"

PHASE_SPLITTING = "splitting"
PHASE_LOCAL_MERGE = "localMerge"
PHASE_GLOBAL_MERGE = "globalMerge"
PHASE_DONE = "done"


class ActionMismatch(Exception):
    """The submitted action does not fit the pending task."""


class StaleTask(Exception):
    """The action references a task that is no longer pending."""


class BoxConflict(ActionMismatch):
    """One row was checked under two different columns."""


class LinkOutOfWindow(ActionMismatch):
    """A link target is not an earlier value of the displayed list."""


class IncompleteSession(Exception):
    """Finalize was called before the session reached the done phase."""


@dataclass(frozen=True)
class Task:
    """One unit of work shown to the user."""

    id: str
    kind: str
    phase: str
    value_ids: tuple[int, ...]
    values: tuple[str, ...]
    allowed_buttons: tuple[str, ...]
    cluster_ref: str | None = None
    columns: tuple[int, ...] = ()
    column_values: tuple[str, ...] = ()
    rows: tuple[int, ...] = ()
    row_values: tuple[str, ...] = ()
    progress: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Action:
    """A user's response to a task. Only the fields the task kind needs
    are set; ``observed_seconds`` carries live-mode timing."""

    task_id: str
    yes: bool | None = None
    examined: int | None = None
    button: str | None = None
    marked: tuple[int, ...] | None = None
    links: tuple[tuple[int, int], ...] | None = None
    checks: tuple[tuple[int, tuple[int, ...]], ...] | None = None
    scanned_rows: int | None = None
    observed_seconds: float | None = None

    def to_dict(self) -> dict:
        d = {"task_id": self.task_id}
        for name in ("yes", "examined", "button", "marked", "links", "checks",
                     "scanned_rows", "observed_seconds"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        kwargs = dict(d)
        if "marked" in kwargs:
            kwargs["marked"] = tuple(kwargs["marked"])
        if "links" in kwargs:
            kwargs["links"] = tuple((a, b) for a, b in kwargs["links"])
        if "checks" in kwargs:
            kwargs["checks"] = tuple((int(c), tuple(t)) for c, t in kwargs["checks"])
        return cls(**kwargs)

    def checks_dict(self) -> dict[int, tuple[int, ...]]:
        return {c: t for c, t in (self.checks or ())}


@dataclass(frozen=True)
class Event:
    """Audit record of one applied action."""

    seq: int
    phase: str
    task_id: str
    task_kind: str
    action: dict
    charged_seconds: float
    ops: dict
    new_assertions: int


@dataclass
class SessionResult:
    clusters: list[frozenset[int]]
    total_seconds: float
    verification: VerificationSet
    phase_seconds: dict
    partition: Partition | None


@dataclass
class _Unit:
    """A pure cluster plus its exported representative value."""

    rep: int
    value_ids: frozenset[int]


def _make_unit(table: ValueTable, ids: Iterable[int]) -> _Unit:
    ids = frozenset(ids)
    rep = min(ids, key=lambda v: (-len(table[v]), v))
    return _Unit(rep, ids)


def _alpha_key(table: ValueTable, unit: _Unit) -> tuple[str, int]:
    return (table[unit.rep].casefold(), unit.rep)


class _MergeFlow:
    """Local merge followed by global-merge grid rounds over units."""

    def __init__(self, table: ValueTable, units: list[_Unit], columns: int):
        self.table = table
        self.columns = max(2, columns)
        self.order = sorted(units, key=lambda u: _alpha_key(table, u))
        self.stage = "local" if self.order else "done"
        self.grid: list[_Unit] = []
        self.out: list[frozenset[int]] = []

    def local_list(self) -> list[_Unit]:
        return self.order

    def apply_links(self, links: Sequence[tuple[int, int]]) -> list[tuple[int, int, bool]]:
        pos = {u.rep: i for i, u in enumerate(self.order)}
        parent = {u.rep: u.rep for u in self.order}

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        assertions = []
        for cur, earlier in links:
            if cur not in pos or earlier not in pos:
                raise ActionMismatch(f"link references values not on the list: {(cur, earlier)}")
            if pos[earlier] >= pos[cur]:
                raise LinkOutOfWindow(f"link target {earlier} is not earlier than {cur}")
            assertions.append((cur, earlier, True))
            ra, rb = find(cur), find(earlier)
            if ra != rb:
                parent[ra] = rb
        groups: dict[int, list[_Unit]] = {}
        for u in self.order:
            groups.setdefault(find(u.rep), []).append(u)
        consolidated = []
        for members in groups.values():
            ids = frozenset().union(*(u.value_ids for u in members))
            consolidated.append(_make_unit(self.table, ids))
        self.grid = sorted(consolidated, key=lambda u: _alpha_key(self.table, u))
        self.stage = "grid"
        self._maybe_finish()
        return assertions

    def _maybe_finish(self) -> None:
        if self.stage == "grid" and len(self.grid) <= 1:
            if self.grid:
                self.out.append(self.grid.pop().value_ids)
            self.stage = "done"

    def grid_round(self) -> tuple[list[_Unit], list[_Unit]]:
        b = self.grid[: min(self.columns, len(self.grid))]
        return b, self.grid[len(b):]

    def apply_grid(self, checks: dict[int, tuple[int, ...]]) -> list[tuple[int, int, bool]]:
        cols, rows = self.grid_round()
        col_ids = [u.rep for u in cols]
        row_ids = {u.rep for u in rows}
        by_rep = {u.rep: u for u in self.grid}
        parent = {u.rep: u.rep for u in cols + rows}

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        seen_rows: dict[int, int] = {}
        assertions: list[tuple[int, int, bool]] = []
        for col, targets in checks.items():
            if col not in col_ids:
                raise ActionMismatch(f"{col} is not a column of this grid")
            for t in targets:
                earlier_cols = col_ids[: col_ids.index(col)]
                if t not in row_ids and t not in earlier_cols:
                    raise ActionMismatch(f"checked value {t} is not on this grid")
                # a row refers to one entity; column-column links may share a target
                if t in row_ids:
                    if t in seen_rows and seen_rows[t] != col:
                        raise BoxConflict(f"value {t} checked under two columns")
                    seen_rows[t] = col
                assertions.append((col, t, True))
                ra, rb = find(col), find(t)
                if ra != rb:
                    parent[ra] = rb
        shown = col_ids + [u.rep for u in rows]
        for col in col_ids:
            rc = find(col)
            for other in shown:
                if other != col and find(other) != rc:
                    assertions.append((col, other, False))
        groups: dict[int, list[int]] = {}
        for rep in parent:
            groups.setdefault(find(rep), []).append(rep)
        merged_reps: set[int] = set()
        for members in sorted(groups.values(), key=min):
            if any(m in col_ids for m in members):
                self.out.append(frozenset().union(*(by_rep[m].value_ids for m in members)))
                merged_reps.update(members)
        self.grid = [u for u in self.grid if u.rep not in merged_reps]
        self._maybe_finish()
        return assertions


class Session:
    """One user's cleaning run over a set of machine clusters.

    ``clusters`` may cover only part of the table (team pipelines assign
    each user a share); metrics against a gold partition are only defined
    for full coverage.
    """

    def __init__(
        self,
        table: ValueTable,
        clusters: Sequence[Iterable[int]],
        user: UserParams,
        globals_: GlobalParams = GlobalParams(),
        session_id: str = "session",
        mode: str = "simulation",
    ):
        if mode not in ("simulation", "live"):
            raise ValueError("mode must be 'simulation' or 'live'")
        self.table = table
        self.user = user
        self.globals = globals_
        self.session_id = session_id
        self.mode = mode
        self.verification = VerificationSet()
        self.events: list[Event] = []
        self.phase_seconds = {PHASE_SPLITTING: 0.0, PHASE_LOCAL_MERGE: 0.0, PHASE_GLOBAL_MERGE: 0.0}
        self._outputs: list[_Unit] = []
        self._queue: deque[tuple[str, tuple[int, ...]]] = deque()
        self._work: tuple[str, tuple[int, ...]] | None = None
        self._work_stage = ""
        self._nested: _MergeFlow | None = None
        self._main: _MergeFlow | None = None
        self._task: Task | None = None
        self._task_seq = 0
        self._work_seq = 0
        self._input_clusters: list[tuple[int, ...]] = []
        seen: set[int] = set()
        for members in clusters:
            ids = tuple(sorted(members))
            if not ids:
                continue
            if seen.intersection(ids):
                raise ValueError("input clusters overlap")
            seen.update(ids)
            self._input_clusters.append(ids)
            if len(ids) == 1:
                self._outputs.append(_make_unit(table, ids))
            else:
                self._queue.append(self._new_work(ids))
        self.phase = PHASE_SPLITTING if self._queue else self._enter_merge()

    # -- construction helpers -------------------------------------------------

    def _new_work(self, ids: tuple[int, ...]) -> tuple[str, tuple[int, ...]]:
        self._work_seq += 1
        return (f"c{self._work_seq}", ids)

    def _enter_merge(self) -> str:
        self._main = _MergeFlow(self.table, list(self._outputs), self.user.grid_columns)
        if self._main.stage == "done":
            return PHASE_DONE
        return PHASE_LOCAL_MERGE

    # -- task serving ----------------------------------------------------------

    def next_task(self) -> Task | None:
        """The pending task; idempotent until an action is applied."""
        if self._task is not None:
            return self._task
        if self.phase == PHASE_DONE:
            return None
        if self.phase == PHASE_SPLITTING:
            self._task = self._next_split_task()
            if self._task is None:
                self.phase = self._enter_merge()
                return self.next_task() if self.phase != PHASE_DONE else None
            return self._task
        self._task = self._next_merge_task(self._main, nested=False)
        if self._task is None:
            self.phase = PHASE_DONE
        return self._task

    def _next_split_task(self) -> Task | None:
        while True:
            if self._nested is not None:
                task = self._next_merge_task(self._nested, nested=True)
                if task is not None:
                    return task
                self._outputs.extend(_make_unit(self.table, ids) for ids in self._nested.out)
                self._nested = None
                continue
            if self._work is not None:
                work_id, ids = self._work
                values = tuple(self.table[v] for v in ids)
                if self._work_stage == "dom":
                    return Task(
                        id=self._task_id(), kind=TASK_FIND_DOM, phase=PHASE_SPLITTING,
                        value_ids=ids, values=values,
                        allowed_buttons=(BTN_MARK_VALUES, BTN_CLEAN_MIXED),
                        cluster_ref=work_id, progress=self._progress(),
                    )
                return Task(
                    id=self._task_id(), kind=TASK_MARK_VALUES, phase=PHASE_SPLITTING,
                    value_ids=ids, values=values,
                    allowed_buttons=(BTN_NEW_CLUSTER, BTN_OLD_CLUSTER),
                    cluster_ref=work_id, progress=self._progress(),
                )
            if not self._queue:
                return None
            self._work = self._queue.popleft()
            self._work_stage = "pure"
            work_id, ids = self._work
            return Task(
                id=self._task_id(), kind=TASK_IS_PURE, phase=PHASE_SPLITTING,
                value_ids=ids, values=tuple(self.table[v] for v in ids),
                allowed_buttons=(BTN_YES, BTN_NO),
                cluster_ref=work_id, progress=self._progress(),
            )

    def _next_merge_task(self, flow: _MergeFlow | None, nested: bool) -> Task | None:
        if flow is None or flow.stage == "done":
            return None
        phase = PHASE_SPLITTING if nested else (
            PHASE_LOCAL_MERGE if flow.stage == "local" else PHASE_GLOBAL_MERGE
        )
        if flow.stage == "local":
            units = flow.local_list()
            return Task(
                id=self._task_id(), kind=TASK_LOCAL_MERGE, phase=phase,
                value_ids=tuple(u.rep for u in units),
                values=tuple(self.table[u.rep] for u in units),
                allowed_buttons=(BTN_LINK, BTN_DONE_LOCAL),
                progress=self._progress(),
            )
        cols, rows = flow.grid_round()
        return Task(
            id=self._task_id(), kind=TASK_GLOBAL_MERGE, phase=phase,
            value_ids=tuple(u.rep for u in cols + rows),
            values=tuple(self.table[u.rep] for u in cols + rows),
            columns=tuple(u.rep for u in cols),
            column_values=tuple(self.table[u.rep] for u in cols),
            rows=tuple(u.rep for u in rows),
            row_values=tuple(self.table[u.rep] for u in rows),
            allowed_buttons=(BTN_GLOBAL_MERGE,),
            progress=self._progress(),
        )

    def _task_id(self) -> str:
        self._task_seq += 1
        return f"t{self._task_seq}"

    def _progress(self) -> dict:
        return {
            "phase": self.phase,
            "clusters_remaining": len(self._queue) + (1 if self._work else 0),
            "outputs": len(self._outputs),
        }

    # -- action handling -------------------------------------------------------

    def apply(self, action: Action) -> None:
        task = self.next_task()
        if task is None:
            raise StaleTask("session is done")
        if action.task_id != task.id:
            raise StaleTask(f"expected action for task {task.id}, got {action.task_id}")
        before = len(self.verification)
        handler = {
            TASK_IS_PURE: self._apply_is_pure,
            TASK_FIND_DOM: self._apply_find_dom,
            TASK_MARK_VALUES: self._apply_mark,
            TASK_LOCAL_MERGE: self._apply_local,
            TASK_GLOBAL_MERGE: self._apply_grid,
        }[task.kind]
        ops = handler(task, action)
        charged = sum(ops.values())
        if self.mode == "live" and action.observed_seconds is not None:
            charged = action.observed_seconds
            ops = {"observed": charged}
        self.phase_seconds[task.phase] = self.phase_seconds.get(task.phase, 0.0) + charged
        self.events.append(Event(
            seq=len(self.events), phase=task.phase, task_id=task.id, task_kind=task.kind,
            action=action.to_dict(), charged_seconds=charged, ops=ops,
            new_assertions=len(self.verification) - before,
        ))
        self._task = None

    def _apply_is_pure(self, task: Task, action: Action) -> dict:
        if action.yes is None:
            raise ActionMismatch("is-pure task needs a yes/no answer")
        u = self.user
        examined = action.examined if action.examined is not None else len(task.value_ids)
        if not 1 <= examined <= len(task.value_ids):
            raise ActionMismatch("examined count outside the displayed cluster")
        ops = {
            "isPure": u.pure_scan_rate * examined + u.pure_scan_base,
            "focus": u.focus_cost,
            "select": u.select_cost,
        }
        if action.yes:
            ids = task.value_ids
            self._outputs.append(_make_unit(self.table, ids))
            for a, b in combinations(ids, 2):
                self.verification.add_match(a, b)
            self._work = None
            self._work_stage = ""
        else:
            self._work_stage = "dom"
        return ops

    def _apply_find_dom(self, task: Task, action: Action) -> dict:
        if action.button not in (BTN_MARK_VALUES, BTN_CLEAN_MIXED):
            raise ActionMismatch(f"unexpected button {action.button!r}")
        u = self.user
        ops = {
            "findDom": u.find_dom_cost(len(task.value_ids)),
            "focus": u.focus_cost,
            "select": u.select_cost,
        }
        if action.button == BTN_CLEAN_MIXED:
            units = [_make_unit(self.table, (v,)) for v in task.value_ids]
            self._nested = _MergeFlow(self.table, units, self.user.grid_columns)
            self._work = None
            self._work_stage = ""
        else:
            self._work_stage = "mark"
        return ops

    def _apply_mark(self, task: Task, action: Action) -> dict:
        if action.button not in (BTN_NEW_CLUSTER, BTN_OLD_CLUSTER):
            raise ActionMismatch(f"unexpected button {action.button!r}")
        marked = frozenset(action.marked or ())
        ids = frozenset(task.value_ids)
        if not marked or not marked < ids:
            raise ActionMismatch("marked values must be a nonempty proper subset")
        u = self.user
        size = len(ids)
        ops = {
            "focus": (size + 1) * u.focus_cost,
            "match": size * u.match_cost,
            "select": (len(marked) + 1) * u.select_cost,
        }
        if action.button == BTN_NEW_CLUSTER:
            finalized, rest = ids - marked, marked
        else:
            finalized, rest = marked, ids - marked
        for a, b in combinations(sorted(finalized), 2):
            self.verification.add_match(a, b)
        for a in finalized:
            for b in rest:
                self.verification.add_non_match(a, b)
        self._outputs.append(_make_unit(self.table, finalized))
        self._work = None
        self._work_stage = ""
        if len(rest) == 1:
            self._outputs.append(_make_unit(self.table, rest))
        else:
            self._queue.appendleft(self._new_work(tuple(sorted(rest))))
        return ops

    def _flow_for(self, task: Task) -> _MergeFlow:
        return self._nested if self._nested is not None and task.phase == PHASE_SPLITTING else self._main

    def _apply_local(self, task: Task, action: Action) -> dict:
        flow = self._flow_for(task)
        links = action.links or ()
        u = self.user
        assertions = flow.apply_links(links)
        for a, b, is_match in assertions:
            self.verification.add(a, b, is_match)
        k = len(links)
        return {
            "memorize": len(task.value_ids) * u.memorize_cost,
            "focus": (2 * k + 1) * u.focus_cost,
            "select": (3 * k + 1) * u.select_cost,
        }

    def _apply_grid(self, task: Task, action: Action) -> dict:
        flow = self._flow_for(task)
        checks = action.checks_dict()
        u = self.user
        assertions = flow.apply_grid(checks)
        for a, b, is_match in assertions:
            self.verification.add(a, b, is_match)
        n_checks = sum(len(t) for t in checks.values())
        return {
            "memorize": len(task.columns) * u.memorize_cost,
            "recall": len(task.rows) * u.recall_cost,
            "focus": (n_checks + 1) * u.focus_cost,
            "select": (n_checks + 1) * u.select_cost,
        }

    # -- results ---------------------------------------------------------------

    @property
    def total_seconds(self) -> float:
        return sum(e.charged_seconds for e in self.events)

    def finalize(self) -> SessionResult:
        if self.phase != PHASE_DONE and self.next_task() is not None:
            raise IncompleteSession(f"session still in phase {self.phase}")
        clusters = list(self._main.out) if self._main else []
        covered = sum(len(c) for c in clusters)
        partition = None
        if covered == len(self.table):
            partition = Partition.from_member_sets(clusters, len(self.table))
        return SessionResult(
            clusters=clusters,
            total_seconds=self.total_seconds,
            verification=self.verification,
            phase_seconds=dict(self.phase_seconds),
            partition=partition,
        )

    def export_rows(self) -> list[tuple[str, int, str]]:
        """(value, cluster id, canonical string) rows for the final clusters."""
        result = self.finalize()
        rows = []
        ordered = sorted(result.clusters, key=min)
        for cid, members in enumerate(ordered):
            canon = canonical_string(self.table, members)
            for v in sorted(members):
                rows.append((self.table[v], cid, canon))
        return rows

    # -- persistence -----------------------------------------------------------

    def header(self) -> dict:
        return {
            "session_id": self.session_id,
            "mode": self.mode,
            "clusters": [list(c) for c in self._input_clusters],
        }

    @classmethod
    def replay(
        cls,
        table: ValueTable,
        header: dict,
        actions: Iterable[dict],
        user: UserParams,
        globals_: GlobalParams = GlobalParams(),
    ) -> "Session":
        session = cls(
            table, header["clusters"], user, globals_,
            session_id=header.get("session_id", "session"),
            mode=header.get("mode", "simulation"),
        )
        for record in actions:
            session.apply(Action.from_dict(record))
        session.next_task()  # settle lazy phase transitions
        return session
