"""Shared test helpers."""

import random

from valnorm.procedures import Task


class MinChoiceRandom(random.Random):
    """Random source whose choice() is deterministic (smallest element),
    so a driver interrupted and resumed behaves like an uninterrupted one."""

    def choice(self, seq):
        return min(seq)


def task_from_payload(payload: dict) -> Task:
    """Rebuild a Task from its JSON form served by the API."""
    t = dict(payload)
    for key in ("value_ids", "values", "columns", "column_values", "rows",
                "row_values", "allowed_buttons"):
        t[key] = tuple(tuple(x) if isinstance(x, list) else x for x in t.get(key, ()))
    return Task(**t)
