"""Closed-form human-effort cost model and plan ranking.

All costs are real-valued seconds. Operation prices live in
:class:`UserParams`; list-shrinkage and grid-hit behavior in
:class:`GlobalParams`; the purity curve (how clean a capped clustering's
output is, as a function of the cap) in :class:`PurityModel`.

Split costs dispatch on purity into three regimes: a majority of the
cluster belongs to the dominating entity (mark the strangers), a minority
does (mark the keepers), or the cluster is so mixed (purity below
``mixed_threshold``) that it is cheaper to run a nested merge pass over its
values. Negative intermediate operation counts, which the formulas can
produce on tiny lists, are floored at zero term by term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

PURITY_EPS = 1e-6


class InvalidPurity(ValueError):
    """Purity outside (0, 1]."""


@dataclass(frozen=True)
class UserParams:
    """Per-user operation costs (seconds) and interaction constants."""

    focus_cost: float = 0.5          # shift attention to an object
    select_cost: float = 0.5         # click / keypress on an object
    match_cost: float = 1.0          # decide whether two values co-refer
    memorize_cost: float = 0.4       # store a (entity, value) pair in STM
    recall_cost: float = 0.4         # probe STM for a value's entity
    pure_scan_rate: float = 0.2      # per-value rate of the is-pure scan
    pure_scan_base: float = 0.5      # fixed overhead of the is-pure scan
    dom_scan_rate: float = 0.3       # per-value rate of find-dominating, in-STM
    dom_paper_quad: float = 0.3 / 700.0  # quadratic rate once paper+pen is needed
    dom_paper_base: float = 0.99 * 0.3 * 7.0  # fixed overhead of paper+pen counting
    stm_capacity: int = 7
    grid_columns: int = 3
    row_examine_fraction: float = 1.0  # share of rows read before all columns hit

    def __post_init__(self):
        for name in (
            "focus_cost", "select_cost", "match_cost", "memorize_cost", "recall_cost",
            "pure_scan_rate", "pure_scan_base", "dom_scan_rate", "dom_paper_quad",
            "dom_paper_base",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.stm_capacity < 1:
            raise ValueError("stm_capacity must be >= 1")
        if self.grid_columns < 1:
            raise ValueError("grid_columns must be >= 1")
        if not 0.0 < self.row_examine_fraction <= 1.0:
            raise ValueError("row_examine_fraction must lie in (0, 1]")

    def is_pure_cost(self, size: float, purity: float) -> float:
        """Expected seconds to answer whether a cluster is pure."""
        return self.pure_scan_rate * purity * size + self.pure_scan_base

    def find_dom_cost(self, size: float) -> float:
        """Seconds to find the dominating entity of a cluster."""
        if size <= self.stm_capacity:
            return self.dom_scan_rate * size
        return self.dom_paper_quad * size * size + self.dom_paper_base

    def button_cost(self) -> float:
        return self.focus_cost + self.select_cost


@dataclass(frozen=True)
class GlobalParams:
    """Dataset-independent tuning constants."""

    shrink_factor: float = 0.98      # fraction of a list surviving local merge
    hit_factor: float = 0.1          # fraction of rows matching each grid column
    mixed_threshold: float = 0.1     # below: reroute the cluster to a nested merge
    majority_threshold: float = 0.5  # at or above: mark non-dominating values

    def __post_init__(self):
        if not 0.0 < self.shrink_factor < 1.0:
            raise ValueError("shrink_factor must lie in (0, 1)")
        if not 0.0 < self.hit_factor < 1.0:
            raise ValueError("hit_factor must lie in (0, 1)")
        if not self.mixed_threshold < self.majority_threshold:
            raise ValueError("mixed_threshold must be below majority_threshold")


@dataclass(frozen=True)
class PurityModel:
    """Power-law purity curve ``scale * cap ** exponent``, clamped to (0, 1]."""

    scale: float = 1.0
    exponent: float = 0.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be > 0")
        if self.exponent > 0:
            raise ValueError("exponent must be <= 0")


def purity(model: PurityModel, cap: int) -> float:
    """Predicted cluster purity for a run capped at ``cap``."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    value = model.scale * cap ** model.exponent
    return min(1.0, max(PURITY_EPS, value))


def split_depth(size: float, alpha: float) -> int:
    """Number of split iterations needed for a cluster of the given size
    and purity; each iteration peels one entity off the remainder."""
    if alpha <= 0.0 or alpha > 1.0:
        raise InvalidPurity(f"purity {alpha} outside (0, 1]")
    if size <= 1:
        return 0
    if alpha >= 1.0 - PURITY_EPS:
        return 0
    depth = math.floor(-math.log(size) / math.log(1.0 - alpha))
    return int(min(size - 1, depth))


def cost_split_cluster(size: float, alpha: float, u: UserParams, g: GlobalParams) -> float:
    """Expected seconds to split one machine cluster into pure clusters."""
    if alpha <= 0.0 or alpha > 1.0:
        raise InvalidPurity(f"purity {alpha} outside (0, 1]")
    if size < 1:
        raise ValueError("cluster size must be >= 1")
    if size == 1:
        return 0.0
    button = u.button_cost()
    depth = split_depth(size, alpha)
    if alpha >= g.mixed_threshold:
        # per-value select happens for the marked fraction only
        marked_fraction = (1.0 - alpha) if alpha >= g.majority_threshold else alpha
        total = 0.0
        for j in range(1, depth + 1):
            s_j = (1.0 - alpha) ** (j - 1) * size
            total += u.is_pure_cost(s_j, alpha) + button
            total += u.find_dom_cost(s_j) + button
            total += s_j * (u.focus_cost + u.match_cost + marked_fraction * u.select_cost)
            total += button
        return total
    # very mixed: answer pure/dominating once, then local+global merge the values
    total = u.is_pure_cost(size, alpha) + button
    total += u.find_dom_cost(size) + button
    total += cost_local_merge(size, u, g)
    shrunk = g.shrink_factor * size
    for j in range(1, depth + 1):
        rows = max(0.0, 3.0 * (1.0 - alpha) ** (3 * (j - 1)) * shrunk - 3.0)
        boxes = sum(alpha * (1.0 - alpha) ** (3 * (j - 1) + k) * shrunk for k in (1, 2, 3))
        boxes = max(0.0, boxes - 1.0)
        total += 3.0 * u.memorize_cost + rows * u.recall_cost + boxes * button + button
    return total


def cost_local_merge(list_size: float, u: UserParams, g: GlobalParams) -> float:
    """Expected seconds for one local-merge pass over a sorted list."""
    if list_size < 0:
        raise ValueError("list size must be >= 0")
    link_ops = 3.0 * u.focus_cost + 2.0 * u.select_cost
    return (
        list_size * u.memorize_cost
        + list_size * (1.0 - g.shrink_factor) * link_ops
        + u.button_cost()
    )


def cost_global_merge(list_size: float, u: UserParams, g: GlobalParams) -> float:
    """Expected seconds for the grid-based global merge of a list."""
    if list_size < 0:
        raise ValueError("list size must be >= 0")
    iterations = math.floor(1.0 / (3.0 * g.hit_factor))
    total = 0.0
    for j in range(1, iterations + 1):
        rows = max(0.0, list_size - 3.0 * (j - 1) * g.hit_factor * list_size - 3.0)
        boxes = max(0.0, g.hit_factor * list_size - 1.0)
        total += (
            3.0 * u.memorize_cost
            + rows * u.recall_cost
            + 3.0 * boxes * u.button_cost()
            + u.button_cost()
        )
    return total


@dataclass(frozen=True)
class PlanEstimate:
    """Predicted human effort of cleaning one capped clustering's output."""

    cap: int
    estimated_seconds: float
    per_cluster_costs: tuple[float, ...]
    split_output_count: float      # list size entering local merge
    local_merge_output_count: float  # list size entering global merge
    cluster_count: int
    max_cluster_size: int
    purity: float
    size_histogram: tuple[tuple[int, int], ...] = ()


def cost_plan(
    cluster_sizes: Sequence[int],
    model: PurityModel,
    cap: int,
    u: UserParams,
    g: GlobalParams,
) -> PlanEstimate:
    """Total predicted cleaning seconds for a capped clustering's output.

    Every cluster is priced at the model purity for this cap; the split
    outputs feed one local merge and one global merge of the shrunk list.
    """
    alpha = purity(model, cap)
    per_cluster = tuple(cost_split_cluster(s, alpha, u, g) for s in cluster_sizes)
    split_outputs = float(sum(split_depth(s, alpha) + 1 for s in cluster_sizes))
    shrunk = g.shrink_factor * split_outputs
    total = sum(per_cluster) + cost_local_merge(split_outputs, u, g) + cost_global_merge(shrunk, u, g)
    hist: dict[int, int] = {}
    for s in cluster_sizes:
        hist[s] = hist.get(s, 0) + 1
    return PlanEstimate(
        cap=cap,
        estimated_seconds=total,
        per_cluster_costs=per_cluster,
        split_output_count=split_outputs,
        local_merge_output_count=shrunk,
        cluster_count=len(cluster_sizes),
        max_cluster_size=max(cluster_sizes, default=0),
        purity=alpha,
        size_histogram=tuple(sorted(hist.items())),
    )


def rank_plans(
    sizes_by_cap: dict[int, Sequence[int]],
    model: PurityModel,
    u: UserParams,
    g: GlobalParams,
) -> list[PlanEstimate]:
    """Estimates for every candidate cap, cheapest first (ties: smaller cap)."""
    estimates = [cost_plan(sizes, model, cap, u, g) for cap, sizes in sizes_by_cap.items()]
    estimates.sort(key=lambda e: (e.estimated_seconds, e.cap))
    return estimates


def default_caps(n_values: int, limit: int = 100) -> list[int]:
    """Candidate cap set: 1..min(n, limit) plus the uncapped n."""
    caps = set(range(1, min(n_values, limit) + 1))
    if n_values >= 1:
        caps.add(n_values)
    return sorted(caps)


def cost_multi_user_merge(
    list_sizes: Sequence[float],
    users: Sequence[UserParams],
    g: GlobalParams,
    mu: float | None = None,
) -> float:
    """Expected wall seconds of the barrier-synchronized team merge.

    One round per list beyond the last: the round's largest list is chunked
    across users, each scanning every other list per memorized column
    triple. Rounds cost the slowest user's time. ``mu`` overrides the
    row-examination fraction; bookkeeping of already-merged entities uses a
    running count of columns processed per round, seeded at zero.
    """
    k = len(users)
    if k < 2:
        raise ValueError("team merge needs at least 2 users")
    if len(list_sizes) != k:
        raise ValueError("one list size per user required")
    sizes = sorted((float(s) for s in list_sizes), reverse=True)
    xi = g.hit_factor
    total = 0.0
    removed = 0.0  # columns fully merged in earlier rounds
    for t in range(1, k):
        d_t = sizes[t - 1]
        remaining = max(0.0, 1.0 - removed * xi)
        scans = math.floor(d_t * remaining / (3.0 * k))
        round_max = 0.0
        for user in users:
            mu_u = user.row_examine_fraction if mu is None else mu
            busy = 0.0
            for i in range(0, scans + 1):
                busy += 3.0 * user.memorize_cost
                left = max(0.0, 1.0 - (removed + 3.0 * i) * xi)
                for j in range(t, k):  # row lists still in play this round
                    busy += (3.0 * xi + 1.0) * user.button_cost()
                    busy += mu_u * sizes[j] * left * user.recall_cost
            round_max = max(round_max, busy)
        total += round_max
        removed += 3.0 * (scans + 1)
    return total


def cost_team_pipeline(per_user_clean_costs: Sequence[float], team_merge_cost: float) -> float:
    """Wall seconds of the full team pipeline: slowest individual clean
    (split + local merge + global merge on the assigned share) plus the
    shared team merge."""
    if not per_user_clean_costs:
        raise ValueError("at least one user required")
    return max(per_user_clean_costs) + team_merge_cost


def average_user_params(params: Sequence[UserParams]) -> UserParams:
    """Fieldwise arithmetic mean of per-user cost parameters."""
    if not params:
        raise ValueError("at least one user required")
    k = len(params)

    def mean(attr: str) -> float:
        return sum(getattr(p, attr) for p in params) / k

    return UserParams(
        focus_cost=mean("focus_cost"),
        select_cost=mean("select_cost"),
        match_cost=mean("match_cost"),
        memorize_cost=mean("memorize_cost"),
        recall_cost=mean("recall_cost"),
        pure_scan_rate=mean("pure_scan_rate"),
        pure_scan_base=mean("pure_scan_base"),
        dom_scan_rate=mean("dom_scan_rate"),
        dom_paper_quad=mean("dom_paper_quad"),
        dom_paper_base=mean("dom_paper_base"),
        stm_capacity=round(mean("stm_capacity")),
        grid_columns=round(mean("grid_columns")),
        row_examine_fraction=mean("row_examine_fraction"),
    )


def average_purity_models(models: Sequence[PurityModel]) -> PurityModel:
    """Mean of the purity curves in (scale, exponent) space."""
    if not models:
        raise ValueError("at least one model required")
    k = len(models)
    return PurityModel(
        scale=sum(m.scale for m in models) / k,
        exponent=min(0.0, sum(m.exponent for m in models) / k),
    )
