import re
import sys
import types
from functools import lru_cache
from typing import Any, Union, get_args, get_origin

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

_DIGITS = re.compile(r"(\d+)")


def is_hint_optional(annotation: Any) -> bool:
    """
    Check if a type hint is optional
    """
    origin = get_origin(annotation)
    args = get_args(annotation)

    if origin is Union and type(None) in args:
        return True

    if sys.version_info >= (3, 10) and isinstance(annotation, types.UnionType):
        return type(None) in get_args(annotation)

    return False


@lru_cache(maxsize=None)
def natural_key(node_id: str) -> tuple:
    """
    Sort key that orders ``onu2`` before ``onu10``.
    """
    return tuple(int(part) if part.isdigit() else part for part in _DIGITS.split(node_id))


def us_to_ns(value_us: float) -> int:
    return int(round(value_us * NS_PER_US))


def ms_to_ns(value_ms: float) -> int:
    return int(round(value_ms * NS_PER_MS))


def s_to_ns(value_s: float) -> int:
    return int(round(value_s * NS_PER_S))


def ceil_div(numerator: int, denominator: int) -> int:
    return -(-numerator // denominator)
