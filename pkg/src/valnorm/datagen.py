"""Seeded synthetic datasets: entity names plus typo/abbreviation variants.

Entities are pseudo-word company-style names. A configurable share of
entities is grouped into families that share a base token, which makes
uncapped clustering chain them into large mixed clusters while capped
runs stay pure - the regime where plan choice matters.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass

from .core import GoldPartition, ValueTable

_SYLLABLES = [
    "ba", "ce", "dan", "dor", "el", "fen", "gar", "hol", "ix", "jo", "kan",
    "lor", "mi", "nor", "ost", "pra", "quin", "ril", "son", "tra", "ul",
    "vex", "wil", "xen", "yor", "zan", "bel", "cor", "dex", "fir",
]
_SUFFIXES = ["Corp", "Inc", "Ltd", "Co", "Systems", "Group", "Labs", ""]


@dataclass(frozen=True)
class TypoModel:
    """Per-variant edit probabilities."""

    substitute: float = 0.35
    delete: float = 0.25
    insert: float = 0.2
    case_flip: float = 0.5
    abbreviate: float = 0.15
    suffix_swap: float = 0.3
    scatter: float = 0.0  # corrupt the first character, breaking sort adjacency
    max_edits: int = 2


def _entity_name(rng: random.Random, family_base: str | None) -> str:
    word = family_base or ""
    if not word:
        word = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3))).capitalize()
    else:
        word = word + rng.choice(_SYLLABLES)
        word = word.capitalize()
    suffix = rng.choice(_SUFFIXES)
    return f"{word} {suffix}".strip()


def _edit(rng: random.Random, s: str, model: TypoModel) -> str:
    if rng.random() < model.scatter and len(s) >= 3:
        if rng.random() < 0.5:
            s = rng.choice(string.ascii_lowercase) + s
        else:
            s = rng.choice(string.ascii_lowercase) + s[1:]
    ops = []
    if rng.random() < model.substitute:
        ops.append("sub")
    if rng.random() < model.delete:
        ops.append("del")
    if rng.random() < model.insert:
        ops.append("ins")
    if rng.random() < model.case_flip:
        ops.append("case")
    if rng.random() < model.abbreviate:
        ops.append("abbr")
    if rng.random() < model.suffix_swap:
        ops.append("suffix")
    rng.shuffle(ops)
    for op in ops[: model.max_edits] or ["case"]:
        if len(s) < 3:
            break
        if op == "sub":
            i = rng.randrange(len(s))
            s = s[:i] + rng.choice(string.ascii_lowercase) + s[i + 1:]
        elif op == "del":
            i = rng.randrange(len(s))
            s = s[:i] + s[i + 1:]
        elif op == "ins":
            i = rng.randrange(len(s))
            s = s[:i] + rng.choice(string.ascii_lowercase) + s[i:]
        elif op == "case":
            if rng.random() < 0.5:
                s = s.upper() if rng.random() < 0.5 else s.lower()
            else:
                i = rng.randrange(len(s))
                s = s[:i] + s[i].swapcase() + s[i + 1:]
        elif op == "abbr":
            words = s.split()
            if len(words) > 1:
                i = rng.randrange(len(words))
                words[i] = words[i][: rng.randint(1, 3)].upper()
                s = " ".join(words)
        elif op == "suffix":
            words = s.split()
            if len(words) > 1:
                words[-1] = rng.choice([x for x in _SUFFIXES if x]) if rng.random() < 0.7 else ""
                s = " ".join(w for w in words if w)
    return s


def synthesize(
    n_values: int,
    n_entities: int,
    seed: int = 0,
    typo_model: TypoModel = TypoModel(),
    confusability: float = 0.5,
    family_size: int = 4,
) -> tuple[ValueTable, GoldPartition]:
    """Generate unique values with a gold clustering.

    ``confusability`` is the share of entities placed in name families
    sharing a base token; ``family_size`` bounds how many entities share
    one base.
    """
    if n_entities < 1 or n_entities > n_values:
        raise ValueError("need 1 <= n_entities <= n_values")
    rng = random.Random(seed)
    canonicals: list[str] = []
    used: set[str] = set()
    n_family_entities = int(n_entities * confusability)

    def fresh_name() -> str:
        while True:
            name = _entity_name(rng, None)
            if name.casefold() not in used:
                used.add(name.casefold())
                return name

    # hard families: distinct entities whose names differ by a light edit,
    # so similarity alone cannot tell them apart at any cluster size
    light = TypoModel(substitute=0.5, delete=0.35, insert=0.35, case_flip=0.0,
                      abbreviate=0.1, suffix_swap=0.25, max_edits=1)
    while len(canonicals) < n_family_entities:
        head = fresh_name()
        canonicals.append(head)
        members = rng.randint(2, max(2, family_size))
        attempts = 0
        while members > 1 and len(canonicals) < n_family_entities and attempts < 200:
            sibling = _edit(rng, head, light)
            attempts += 1
            if sibling and sibling.casefold() not in used:
                used.add(sibling.casefold())
                canonicals.append(sibling)
                members -= 1
    while len(canonicals) < n_entities:
        canonicals.append(fresh_name())

    # distribute the remaining value budget over entities, at least 1 each
    counts = [1] * n_entities
    for _ in range(n_values - n_entities):
        counts[rng.randrange(n_entities)] += 1

    values: list[str] = []
    entity_of: list[int] = []
    taken: set[str] = set(canonicals)  # variants must not shadow any canonical
    for e, canonical in enumerate(canonicals):
        variants = [canonical]
        attempts = 0
        while len(variants) < counts[e]:
            v = _edit(rng, canonical, typo_model)
            attempts += 1
            if v and v not in taken and v not in variants:
                variants.append(v)
                taken.add(v)
            elif attempts > 50 * counts[e]:
                v = f"{canonical} {len(variants)}"
                if v not in taken and v not in variants:
                    variants.append(v)
                    taken.add(v)
        values.extend(variants)
        entity_of.extend([e] * len(variants))

    order = list(range(len(values)))
    rng.shuffle(order)
    table = ValueTable(values[i] for i in order)
    gold = GoldPartition.from_entity_map([entity_of[i] for i in order], len(table))
    return table, gold


def random_partition(n_values: int, seed: int, mean_cluster: float = 4.0) -> list[list[int]]:
    """Random grouping of value ids, for exercising arbitrary inputs."""
    rng = random.Random(seed)
    ids = list(range(n_values))
    rng.shuffle(ids)
    clusters: list[list[int]] = []
    i = 0
    while i < n_values:
        size = 1 + min(int(rng.expovariate(1.0 / max(mean_cluster - 1, 0.5))), n_values - i - 1)
        clusters.append(sorted(ids[i : i + size]))
        i += size
    return clusters


def noisy_gold_partition(gold: GoldPartition, seed: int, swap_fraction: float = 0.2,
                         merge_fraction: float = 0.2) -> list[list[int]]:
    """Gold clusters with some values swapped between clusters and some
    cluster pairs merged; mimics a mediocre machine clustering."""
    rng = random.Random(seed)
    clusters = [sorted(c.members) for c in gold.partition.clusters]
    n_swaps = int(swap_fraction * gold.n_values / 2)
    for _ in range(n_swaps):
        if len(clusters) < 2:
            break
        a, b = rng.sample(range(len(clusters)), 2)
        if clusters[a]:
            v = clusters[a].pop(rng.randrange(len(clusters[a])))
            clusters[b].append(v)
    clusters = [c for c in clusters if c]
    n_merges = int(merge_fraction * len(clusters) / 2)
    for _ in range(n_merges):
        if len(clusters) < 2:
            break
        a, b = sorted(rng.sample(range(len(clusters)), 2), reverse=True)
        clusters[b].extend(clusters.pop(a))
    return [sorted(c) for c in clusters if c]
