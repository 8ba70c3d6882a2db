"""Synthetic users that execute cleaning sessions correctly.

A generated user has fixed operation costs drawn from narrow uniform
ranges, an explicit short-term memory of limited capacity, and answers
every task truthfully against the gold partition. Driving a session with
such a user always ends at the gold partition, which the report checks.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import calibration as cal
from .core import (
    GoldPartition,
    Partition,
    ValueTable,
    VerificationSet,
    is_gold_sequence,
    precision_recall,
)
from .costmodel import GlobalParams, PurityModel, UserParams, purity
from .procedures import (
    BTN_CLEAN_MIXED,
    BTN_MARK_VALUES,
    BTN_NEW_CLUSTER,
    BTN_OLD_CLUSTER,
    Action,
    Session,
    Task,
    TASK_FIND_DOM,
    TASK_GLOBAL_MERGE,
    TASK_IS_PURE,
    TASK_LOCAL_MERGE,
    TASK_MARK_VALUES,
)


@dataclass(frozen=True)
class SyntheticUser:
    params: UserParams
    seed: int


def generate_user(seed: int, stm_capacity: int = 7) -> SyntheticUser:
    """Draw one deterministic user; cost ranges are fixed, derived
    find-dominating parameters follow the STM capacity."""
    rng = random.Random(seed)
    match_cost = rng.uniform(0.8, 1.2)
    recall_cost = rng.uniform(0.3, 0.5)
    pure_rate = rng.uniform(0.1, 0.4)
    pure_base = rng.uniform(0.3, 1.0)
    dom_rate = rng.uniform(0.2, 0.4)
    params = UserParams(
        focus_cost=0.5,
        select_cost=0.5,
        match_cost=match_cost,
        memorize_cost=recall_cost,
        recall_cost=recall_cost,
        pure_scan_rate=pure_rate,
        pure_scan_base=pure_base,
        dom_scan_rate=dom_rate,
        dom_paper_quad=dom_rate / (stm_capacity * 100),
        dom_paper_base=0.99 * dom_rate * stm_capacity,
        stm_capacity=stm_capacity,
    )
    return SyntheticUser(params, seed)


class STM:
    """Short-term memory: ordered (entity, value) slots, oldest evicted.

    Replacing the value stored for an entity keeps that slot's age.
    """

    def __init__(self, capacity: int = 7):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.slots: list[list[int]] = []  # [entity, value] in insertion order

    def memorize(self, value: int, entity: int) -> tuple[int | None, int | None]:
        """Store (entity, value). Returns (entity, previous value) on a hit,
        (None, evicted value) otherwise."""
        for slot in self.slots:
            if slot[0] == entity:
                previous = slot[1]
                slot[1] = value
                return entity, previous
        evicted = None
        if len(self.slots) == self.capacity:
            evicted = self.slots.pop(0)[1]
        self.slots.append([value, entity][::-1])
        return None, evicted

    def recall(self, entity: int) -> int | None:
        """Value currently stored for the entity, if any."""
        for slot in self.slots:
            if slot[0] == entity:
                return slot[1]
        return None

    def clear(self) -> None:
        self.slots = []


class TruthfulDriver:
    """Answers session tasks correctly against the gold partition."""

    def __init__(self, gold: GoldPartition, user: UserParams, g: GlobalParams,
                 rng: random.Random):
        self.entity_of = gold.entity_of
        self.user = user
        self.globals = g
        self.rng = rng
        self._dom_cache: dict[str, tuple[int, float]] = {}

    def _entity(self, value_id: int) -> int:
        return self.entity_of[value_id]

    def act(self, task: Task) -> Action:
        if task.kind == TASK_IS_PURE:
            return self._is_pure(task)
        if task.kind == TASK_FIND_DOM:
            return self._find_dom(task)
        if task.kind == TASK_MARK_VALUES:
            return self._mark(task)
        if task.kind == TASK_LOCAL_MERGE:
            return self._local(task)
        if task.kind == TASK_GLOBAL_MERGE:
            return self._grid(task)
        raise ValueError(f"unknown task kind {task.kind}")

    def _is_pure(self, task: Task) -> Action:
        ids = task.value_ids
        first = self._entity(ids[0])
        for i, v in enumerate(ids[1:], start=2):
            if self._entity(v) != first:
                return Action(task.id, yes=False, examined=i)
        return Action(task.id, yes=True, examined=len(ids))

    def _dominating(self, task: Task) -> tuple[int, float]:
        key = task.cluster_ref or task.id
        if key not in self._dom_cache:
            counts: dict[int, int] = {}
            for v in task.value_ids:
                e = self._entity(v)
                counts[e] = counts.get(e, 0) + 1
            best = max(counts.values())
            candidates = sorted(e for e, c in counts.items() if c == best)
            dom = candidates[0] if len(candidates) == 1 else self.rng.choice(candidates)
            self._dom_cache[key] = (dom, best / len(task.value_ids))
        return self._dom_cache[key]

    def _find_dom(self, task: Task) -> Action:
        _, alpha = self._dominating(task)
        button = BTN_CLEAN_MIXED if alpha < self.globals.mixed_threshold else BTN_MARK_VALUES
        return Action(task.id, button=button)

    def _mark(self, task: Task) -> Action:
        dom, alpha = self._dominating(task)
        if alpha >= self.globals.majority_threshold:
            marked = tuple(v for v in task.value_ids if self._entity(v) != dom)
            button = BTN_NEW_CLUSTER
        else:
            marked = tuple(v for v in task.value_ids if self._entity(v) == dom)
            button = BTN_OLD_CLUSTER
        return Action(task.id, marked=marked, button=button)

    def _local(self, task: Task) -> Action:
        stm = STM(self.user.stm_capacity)
        links = []
        for v in task.value_ids:
            entity, previous = stm.memorize(v, self._entity(v))
            if entity is not None:
                links.append((v, previous))
        return Action(task.id, links=tuple(links))

    def _grid(self, task: Task) -> Action:
        checks: dict[int, list[int]] = {}
        col_entities: dict[int, int] = {}
        for col in task.columns:
            e = self._entity(col)
            if e in col_entities.values():
                owner = next(c for c, ce in col_entities.items() if ce == e)
                checks.setdefault(col, []).append(owner)
            else:
                col_entities[col] = e
        for row in task.rows:
            e = self._entity(row)
            for col, ce in col_entities.items():
                if ce == e:
                    checks.setdefault(col, []).append(row)
                    break
        return Action(task.id, checks=tuple((c, tuple(t)) for c, t in checks.items()))


@dataclass
class SimulationReport:
    total_seconds: float
    phase_seconds: dict
    event_count: int
    precision: float
    recall: float
    gold_sequence: bool
    partition: Partition | None
    verification: VerificationSet
    clusters: list[frozenset[int]] = field(default_factory=list)


def simulate_session(
    table: ValueTable,
    clusters: Sequence[Iterable[int]],
    gold: GoldPartition,
    user: SyntheticUser | UserParams,
    g: GlobalParams = GlobalParams(),
    seed: int | None = None,
) -> SimulationReport:
    """Run one correct user through a full session over ``clusters``."""
    params = user.params if isinstance(user, SyntheticUser) else user
    if seed is None:
        seed = user.seed if isinstance(user, SyntheticUser) else 0
    session = Session(table, clusters, params, g)
    driver = TruthfulDriver(gold, params, g, random.Random(seed))
    while True:
        task = session.next_task()
        if task is None:
            break
        session.apply(driver.act(task))
    result = session.finalize()
    if result.partition is not None:
        precision, recall = precision_recall(result.partition, gold)
        gold_seq = is_gold_sequence(result.verification, gold)
    else:
        precision = recall = float("nan")
        gold_seq = False
    return SimulationReport(
        total_seconds=result.total_seconds,
        phase_seconds=result.phase_seconds,
        event_count=len(session.events),
        precision=precision,
        recall=recall,
        gold_sequence=gold_seq,
        partition=result.partition,
        verification=result.verification,
        clusters=result.clusters,
    )


@dataclass
class MonteCarloStats:
    mean_seconds: float
    min_seconds: float
    max_seconds: float
    n_users: int
    all_exact: bool
    reports: list[SimulationReport]


def monte_carlo(
    table: ValueTable,
    clusters: Sequence[Iterable[int]],
    gold: GoldPartition,
    n_users: int,
    seed: int,
    g: GlobalParams = GlobalParams(),
) -> MonteCarloStats:
    """Aggregate simulated cleaning time over independently drawn users."""
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    rng = random.Random(seed)
    seeds = [rng.randrange(2**31) for _ in range(n_users)]
    reports = [
        simulate_session(table, clusters, gold, generate_user(s), g) for s in seeds
    ]
    totals = [r.total_seconds for r in reports]
    return MonteCarloStats(
        mean_seconds=sum(totals) / len(totals),
        min_seconds=min(totals),
        max_seconds=max(totals),
        n_users=n_users,
        all_exact=all(r.precision == 1.0 and r.recall == 1.0 and r.gold_sequence for r in reports),
        reports=reports,
    )


class CalibrationResponder:
    """Produces noiseless answers and model timings for calibration tasks.

    Timings follow the fitted forms exactly, so round-tripping through the
    fits recovers the user's parameters. The is-pure timing prices impure
    clusters at the purity the fit will assume, which the responder derives
    from its own truthful purity marks.
    """

    def __init__(self, gold: GoldPartition, user: SyntheticUser | UserParams,
                 seed: int | None = None):
        self.entity_of = gold.entity_of
        self.params = user.params if isinstance(user, SyntheticUser) else user
        if seed is None:
            seed = user.seed if isinstance(user, SyntheticUser) else 0
        self.rng = random.Random(seed)
        self._marks: dict[int, list[float]] = {c: [] for c in cal.PURITY_CAPS}
        self._model: PurityModel | None = None

    def _dom_values(self, ids: Sequence[int]) -> list[int]:
        counts: dict[int, int] = {}
        for v in ids:
            e = self.entity_of[v]
            counts[e] = counts.get(e, 0) + 1
        best = max(counts.values())
        candidates = sorted(e for e, c in counts.items() if c == best)
        dom = candidates[0] if len(candidates) == 1 else self.rng.choice(candidates)
        return [v for v in ids if self.entity_of[v] == dom]

    def _purity_model(self) -> PurityModel:
        if self._model is None:
            alphas = {
                c: (sum(v) / len(v) if v else 1.0) for c, v in self._marks.items()
            }
            self._model = cal.fit_purity(alphas[10], alphas[20])
        return self._model

    def respond(self, task: cal.CalibrationTask) -> cal.Observation:
        p = self.params
        button = p.button_cost()
        ids = task.value_ids
        if task.kind == cal.KIND_MATCH_PAIR:
            same = len(ids) < 2 or self.entity_of[ids[0]] == self.entity_of[ids[1]]
            return cal.Observation(task.id, elapsed_seconds=p.match_cost + button,
                                   answer_yes=same)
        if task.kind == cal.KIND_PURITY_MARK:
            marked = self._dom_values(ids)
            self._marks[task.cap].append(len(marked) / len(ids))
            elapsed = p.find_dom_cost(len(ids)) + len(marked) * p.select_cost + button
            return cal.Observation(task.id, elapsed_seconds=elapsed,
                                   marked_ids=tuple(marked))
        if task.kind == cal.KIND_IS_PURE:
            pure = len({self.entity_of[v] for v in ids}) == 1
            alpha = 1.0 if pure else purity(self._purity_model(), 20)
            elapsed = p.is_pure_cost(len(ids), alpha) + button
            return cal.Observation(task.id, elapsed_seconds=elapsed, answer_yes=pure)
        if task.kind == cal.KIND_FIND_DOM_SMALL:
            elapsed = p.dom_scan_rate * len(ids) + button
            return cal.Observation(task.id, elapsed_seconds=elapsed,
                                   selected_id=self._dom_values(ids)[0])
        if task.kind == cal.KIND_FIND_DOM_LARGE:
            elapsed = p.dom_paper_quad * len(ids) ** 2 + p.dom_paper_base + button
            return cal.Observation(task.id, elapsed_seconds=elapsed,
                                   selected_id=self._dom_values(ids)[0])
        raise ValueError(f"unknown calibration task kind {task.kind}")


def run_synthetic_calibration(
    table: ValueTable,
    gold: GoldPartition,
    user: SyntheticUser,
    cfg=None,
    seed: int | None = None,
) -> cal.CalibrationResult:
    """Full calibration transcript for one synthetic user."""
    from .hac import SimilarityConfig

    cfg = cfg or SimilarityConfig()
    plan = cal.build_plan(table, cfg, stm_capacity=user.params.stm_capacity,
                          seed=user.seed if seed is None else seed)
    responder = CalibrationResponder(gold, user, seed=seed)
    observations = [responder.respond(t) for t in plan.tasks]
    return cal.run_fits(plan, observations, base=user.params)
