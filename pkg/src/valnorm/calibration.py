"""Short interactive calibration: purity sampling plus operation timing.

A calibration plan is a fixed sequence of 18 tasks: 3 value-pair matches,
3 purity-marking clusters per sampled cap (10 and 20), 3 is-pure clusters,
3 small find-dominating clusters (within STM) and 3 large ones (beyond
STM). Observed answers and elapsed seconds feed closed-form fits that
recover the user's operation costs and the purity power law.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ValueTable
from .costmodel import PurityModel, UserParams, purity
from .hac import SimilarityConfig, run_joint

log = logging.getLogger(__name__)

PURITY_CAPS = (10, 20)
SAMPLES_PER_CAP = 3

KIND_MATCH_PAIR = "matchPair"
KIND_PURITY_MARK = "purityMark"
KIND_IS_PURE = "isPureCluster"
KIND_FIND_DOM_SMALL = "findDomSmall"
KIND_FIND_DOM_LARGE = "findDomLarge"


class DegenerateFit(Exception):
    """Purity samples carry no slope information."""


class SingularFit(Exception):
    """A least-squares system is rank deficient."""


@dataclass(frozen=True)
class CalibrationTask:
    """One display the user reacts to, timed from render to button press."""

    id: str
    kind: str
    value_ids: tuple[int, ...]
    values: tuple[str, ...]
    cap: int | None = None          # purity-mark tasks record their cap
    synthesized: bool = False       # cluster was assembled, not a real output


@dataclass(frozen=True)
class Observation:
    """The user's answer to one task plus the measured elapsed seconds."""

    task_id: str
    elapsed_seconds: float
    answer_yes: bool | None = None
    marked_ids: tuple[int, ...] = ()
    selected_id: int | None = None


@dataclass
class CalibrationPlan:
    tasks: list[CalibrationTask]
    notes: list[str] = field(default_factory=list)


@dataclass
class CalibrationResult:
    user_params: UserParams
    purity_model: PurityModel
    total_elapsed_seconds: float
    diagnostics: dict


def _sample_purity_clusters(clusters: list[frozenset[int]], cap: int, rng: random.Random,
                            notes: list[str]) -> list[frozenset[int]]:
    """Three clusters of size == cap, or the three largest; pad by reuse."""
    exact = sorted((c for c in clusters if len(c) == cap), key=min)
    if len(exact) >= SAMPLES_PER_CAP:
        return rng.sample(exact, SAMPLES_PER_CAP)
    ranked = sorted(clusters, key=lambda c: (-len(c), min(c)))
    ranked = [c for c in ranked if len(c) > 1]
    if not ranked:
        notes.append(f"cap {cap}: only singletons, purity defaults to 1.0")
        return []
    picked = ranked[:SAMPLES_PER_CAP]
    while len(picked) < SAMPLES_PER_CAP:
        notes.append(f"cap {cap}: fewer than {SAMPLES_PER_CAP} clusters, reusing the largest")
        picked.append(ranked[0])
    return picked


def build_plan(
    table: ValueTable,
    cfg: SimilarityConfig = SimilarityConfig(),
    stm_capacity: int = 7,
    seed: int = 0,
) -> CalibrationPlan:
    """Generate the fixed task sequence for one user on one dataset."""
    rng = random.Random(seed)
    notes: list[str] = []
    tasks: list[CalibrationTask] = []
    n = len(table)
    counter = 0

    def new_task(kind: str, ids: Sequence[int], cap: int | None = None,
                 synthesized: bool = False) -> None:
        nonlocal counter
        ids = tuple(ids)
        tasks.append(CalibrationTask(
            id=f"cal-{counter}", kind=kind, value_ids=ids,
            values=tuple(table[v] for v in ids), cap=cap, synthesized=synthesized,
        ))
        counter += 1

    for _ in range(3):
        if n >= 2:
            a, b = rng.sample(range(n), 2)
        else:
            a = b = 0
        new_task(KIND_MATCH_PAIR, (min(a, b), max(a, b)) if a != b else (0,))

    joint = run_joint(table, cfg, caps=PURITY_CAPS)
    clusters_by_cap = {cap: joint[cap].partition.member_sets() for cap in PURITY_CAPS}
    for cap in PURITY_CAPS:
        for members in _sample_purity_clusters(clusters_by_cap[cap], cap, rng, notes):
            new_task(KIND_PURITY_MARK, sorted(members), cap=cap)

    pool = sorted((c for c in clusters_by_cap[PURITY_CAPS[-1]] if len(c) > 1),
                  key=lambda c: (-len(c), min(c)))

    # is-pure timing: three non-singleton clusters, different sizes if possible
    chosen: list[frozenset[int]] = []
    for c in pool:
        if len(chosen) == 3:
            break
        if all(len(c) != len(x) for x in chosen) or len(pool) < 6:
            chosen.append(c)
    while len(chosen) < 3 and pool:
        chosen.append(pool[len(chosen) % len(pool)])
    if len(chosen) < 3:
        notes.append("no non-singleton clusters; synthesizing is-pure displays")
        ids = sorted(range(n))
        while len(chosen) < 3:
            k = min(n, 2 + len(chosen))
            chosen.append(frozenset(rng.sample(ids, k)) if n >= k else frozenset(ids))
    for c in chosen:
        new_task(KIND_IS_PURE, sorted(c))

    small = [c for c in pool if 2 <= len(c) <= stm_capacity]
    for i in range(3):
        if i < len(small):
            new_task(KIND_FIND_DOM_SMALL, sorted(small[i]))
        else:
            k = min(n, max(2, stm_capacity - i))
            members = rng.sample(range(n), k) if n >= k else list(range(n))
            notes.append("synthesized a small find-dominating display")
            new_task(KIND_FIND_DOM_SMALL, sorted(members), synthesized=True)

    large = [c for c in pool if len(c) > stm_capacity]
    used_sizes: set[int] = set()
    large_picked: list[tuple[list[int], bool]] = []
    for c in large:
        if len(large_picked) == 3:
            break
        if len(c) not in used_sizes:
            large_picked.append((sorted(c), False))
            used_sizes.add(len(c))
    # union real clusters to reach three distinct over-STM sizes
    fill = stm_capacity + 1
    while len(large_picked) < 3:
        target = fill + 2 * len(large_picked)
        members: list[int] = []
        for c in sorted(pool, key=min):
            for v in sorted(c):
                if v not in members:
                    members.append(v)
                if len(members) >= target:
                    break
            if len(members) >= target:
                break
        if len(members) < min(target, n):
            members = list(range(min(n, target)))
        if len(members) <= stm_capacity or len(members) in used_sizes:
            members = list(range(min(n, max(target, stm_capacity + 1 + len(large_picked)))))
        if not members or len(members) <= stm_capacity:
            notes.append("dataset too small for an over-STM display; reusing all values")
            members = list(range(n))
        used_sizes.add(len(members))
        notes.append("synthesized a large find-dominating display by unioning clusters")
        large_picked.append((members, True))
    for members, synth in large_picked:
        new_task(KIND_FIND_DOM_LARGE, members, synthesized=synth)

    return CalibrationPlan(tasks=tasks, notes=notes)


def fit_purity(alpha_10: float, alpha_20: float) -> PurityModel:
    """Log-log least squares through (1, 1), (10, a10), (20, a20)."""
    for a in (alpha_10, alpha_20):
        if not 0.0 < a <= 1.0:
            raise ValueError("purity samples must lie in (0, 1]")
    if alpha_10 == 1.0 and alpha_20 == 1.0:
        return PurityModel(1.0, 0.0)
    xs = np.log([1.0, 10.0, 20.0])
    ys = np.log([1.0, alpha_10, alpha_20])
    slope, intercept = np.polyfit(xs, ys, 1)
    return PurityModel(scale=float(math.exp(intercept)), exponent=float(min(0.0, slope)))


def fit_match_cost(timings: Sequence[float], u_base: UserParams) -> float:
    """Mean match time after removing the focus+select overhead."""
    overhead = u_base.button_cost()
    vals = []
    for t in timings:
        if t < overhead:
            log.warning("match timing %.3fs below button overhead; flooring at 0", t)
        vals.append(max(0.0, t - overhead))
    return sum(vals) / len(vals)


def fit_is_pure(
    observations: Sequence[tuple[int, bool, float]],
    purity_model: PurityModel,
    u_base: UserParams,
) -> tuple[float, float]:
    """Fit (rate, base) of the is-pure scan from (size, answer, seconds) rows.

    A yes answer means the whole cluster was scanned; a no answer is
    priced at the model purity for cap 20.
    """
    overhead = u_base.button_cost()
    alpha_no = purity(purity_model, 20)
    xs = []
    ys = []
    for size, yes, t in observations:
        a = 1.0 if yes else alpha_no
        xs.append(a * size)
        ys.append(t - overhead)
    if len(set(xs)) == 1:
        # rank deficient: no slope information
        return 0.0, sum(ys) / len(ys)
    design = np.column_stack([xs, np.ones(len(xs))])
    (rate, base), *_ = np.linalg.lstsq(design, np.array(ys), rcond=None)
    return max(0.0, float(rate)), float(base)


def fit_find_dom(
    small_obs: Sequence[tuple[int, float]],
    large_obs: Sequence[tuple[int, float]],
    u_base: UserParams,
) -> tuple[float, float, float]:
    """Fit (in-STM rate, paper quad rate, paper base) from (size, seconds)."""
    overhead = u_base.button_cost()
    rate = sum(max(0.0, t - overhead) / size for size, t in small_obs) / len(small_obs)
    sizes = [s for s, _ in large_obs]
    ys = [t - overhead for _, t in large_obs]
    if len(set(sizes)) == 1:
        return rate, 0.0, max(0.0, sum(ys) / len(ys))
    design = np.column_stack([np.array(sizes, dtype=float) ** 2, np.ones(len(sizes))])
    (quad, base), *_ = np.linalg.lstsq(design, np.array(ys), rcond=None)
    return rate, max(0.0, float(quad)), max(0.0, float(base))


def run_fits(
    plan: CalibrationPlan,
    observations: Sequence[Observation],
    base: UserParams = UserParams(),
) -> CalibrationResult:
    """Turn a finished calibration transcript into fitted parameters."""
    by_id = {t.id: t for t in plan.tasks}
    obs_by_id = {o.task_id: o for o in observations}
    missing = [t.id for t in plan.tasks if t.id not in obs_by_id]
    if missing:
        raise ValueError(f"observations missing for tasks: {missing}")

    purities: dict[int, list[float]] = {cap: [] for cap in PURITY_CAPS}
    match_times: list[float] = []
    pure_rows: list[tuple[int, bool, float]] = []
    small_rows: list[tuple[int, float]] = []
    large_rows: list[tuple[int, float]] = []
    total = 0.0
    for o in observations:
        task = by_id[o.task_id]
        total += o.elapsed_seconds
        if task.kind == KIND_MATCH_PAIR:
            match_times.append(o.elapsed_seconds)
        elif task.kind == KIND_PURITY_MARK:
            purities[task.cap].append(len(o.marked_ids) / len(task.value_ids))
        elif task.kind == KIND_IS_PURE:
            pure_rows.append((len(task.value_ids), bool(o.answer_yes), o.elapsed_seconds))
        elif task.kind == KIND_FIND_DOM_SMALL:
            small_rows.append((len(task.value_ids), o.elapsed_seconds))
        elif task.kind == KIND_FIND_DOM_LARGE:
            large_rows.append((len(task.value_ids), o.elapsed_seconds))

    alphas = {
        cap: (sum(vals) / len(vals) if vals else 1.0) for cap, vals in purities.items()
    }
    model = fit_purity(alphas[10], alphas[20])
    match_cost = fit_match_cost(match_times, base)
    pure_rate, pure_base = fit_is_pure(pure_rows, model, base)
    dom_rate, dom_quad, dom_base = fit_find_dom(small_rows, large_rows, base)

    params = UserParams(
        focus_cost=base.focus_cost,
        select_cost=base.select_cost,
        match_cost=match_cost,
        memorize_cost=base.memorize_cost,
        recall_cost=base.recall_cost,
        pure_scan_rate=pure_rate,
        pure_scan_base=pure_base,
        dom_scan_rate=dom_rate,
        dom_paper_quad=dom_quad,
        dom_paper_base=dom_base,
        stm_capacity=base.stm_capacity,
        grid_columns=base.grid_columns,
        row_examine_fraction=base.row_examine_fraction,
    )
    residuals = {
        "is_pure": [
            params.is_pure_cost(s, 1.0 if yes else purity(model, 20)) + base.button_cost() - t
            for s, yes, t in pure_rows
        ],
    }
    diagnostics = {
        "alpha_samples": alphas,
        "notes": list(plan.notes),
        "residuals": residuals,
    }
    return CalibrationResult(params, model, total, diagnostics)
