from .base import Validator
from .collections import ChoicesValidator, LengthValidator, UniqueValidator
from .comparisons import GreaterThan, GreaterThanOrEqual, LessThan, LessThanOrEqual
from .strings import NodeIdValidator, RegexValidator
from .types import RequiredValidator, TypeValidator

__all__ = [
    "Validator",
    "GreaterThan",
    "GreaterThanOrEqual",
    "LessThan",
    "LessThanOrEqual",
    "ChoicesValidator",
    "LengthValidator",
    "UniqueValidator",
    "TypeValidator",
    "RequiredValidator",
    "RegexValidator",
    "NodeIdValidator",
]
