"""
JSON encoding of exact results and the optional JSON-lines run log.
"""

import json
import os
from datetime import datetime
from enum import Enum
from fractions import Fraction
from typing import Any

from pydantic import BaseModel

from .settings import Settings


def fraction_text(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def _sort_key(item: Any) -> str:
    return str(item)


class ExactEncoder(json.JSONEncoder):
    """Renders rationals as "a/b" strings; never emits floats."""

    def default(self, obj):
        if isinstance(obj, Fraction):
            return fraction_text(obj)
        if isinstance(obj, datetime):
            return obj.isoformat()
        if isinstance(obj, Enum):
            return obj.value
        if isinstance(obj, BaseModel):
            return obj.model_dump()
        if hasattr(obj, "to_json"):
            return obj.to_json()
        if isinstance(obj, (set, frozenset)):
            return sorted((_prepare(x) for x in obj), key=_sort_key)
        if isinstance(obj, tuple):
            return list(obj)
        return super().default(obj)

    def encode(self, obj):
        return super().encode(_prepare(obj))

    def iterencode(self, obj, _one_shot=False):
        return super().iterencode(_prepare(obj), _one_shot)


def _prepare(obj: Any) -> Any:
    # json handles ints natively and floats would slip through, so walk the tree first
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, float):
        return fraction_text(Fraction(obj))
    if isinstance(obj, Fraction):
        return fraction_text(obj)
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, str) else k: _prepare(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_prepare(x) for x in obj]
    if isinstance(obj, BaseModel):
        return _prepare(obj.model_dump())
    return obj


def dumps(obj: Any, **kwargs) -> str:
    return json.dumps(obj, cls=ExactEncoder, **kwargs)


def persist_log(run_id: str, entry: dict, settings: Settings) -> None:
    if not settings.logging_enabled:
        return
    os.makedirs(settings.log_dir, exist_ok=True)
    log_path = os.path.join(settings.log_dir, f"{run_id}.log")
    with open(log_path, "a") as f:
        f.write(dumps(entry) + "\n")
