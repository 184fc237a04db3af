import types
import typing
from typing import Any, Union, get_args, get_origin

from .base import Validator


def _matches(value: Any, hint: Any) -> bool:
    if hint is Any or hint is None:
        return True
    if hint is type(None):
        return value is None
    origin = get_origin(hint)
    if origin is Union or isinstance(hint, types.UnionType):
        return any(_matches(value, arg) for arg in get_args(hint))
    if origin is typing.Literal:
        return value in get_args(hint)
    if origin is not None:
        # Parametrised generics: only the container type is checked
        return isinstance(origin, type) and isinstance(value, origin)
    if not isinstance(hint, type):
        return True
    if hint is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if hint is int and isinstance(value, bool):
        return False
    return isinstance(value, hint)


def _describe(hint: Any) -> str:
    return getattr(hint, "__name__", None) or str(hint)


class TypeValidator(Validator):
    def validate(self, value: Any):
        if not _matches(value, self.expected):
            return f"{self.name} must be of type {_describe(self.expected)}, got {type(value).__name__}"
        return None


class RequiredValidator(Validator):
    def validate(self, value: Any):
        if self.expected and value is None:
            return f"{self.name} is required"
        return None
