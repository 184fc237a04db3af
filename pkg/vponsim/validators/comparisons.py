import operator
from collections.abc import Callable
from typing import Any

from .base import Validator


class _BoundValidator(Validator):
    holds: Callable[[Any, Any], bool]
    phrase: str

    def validate(self, value: Any):
        if value is None:
            return None
        try:
            if not self.holds(value, self.expected):
                return f"{self.name} must be {self.phrase} {self.expected}, got {value}"
        except TypeError:
            return f"{self.name} is not comparable (expected numeric type), got {type(value).__name__}"
        return None


class GreaterThan(_BoundValidator):
    holds = staticmethod(operator.gt)
    phrase = "greater than"


class GreaterThanOrEqual(_BoundValidator):
    holds = staticmethod(operator.ge)
    phrase = "greater than or equal"


class LessThan(_BoundValidator):
    holds = staticmethod(operator.lt)
    phrase = "less than"


class LessThanOrEqual(_BoundValidator):
    holds = staticmethod(operator.le)
    phrase = "less than or equal"
