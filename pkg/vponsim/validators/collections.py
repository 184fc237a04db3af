from enum import Enum
from typing import Any

from .base import Validator


class ChoicesValidator(Validator):
    def validate(self, value: Any):
        if isinstance(self.expected, type) and issubclass(self.expected, Enum):
            if isinstance(value, self.expected):
                return None
            allowed = [member.value for member in self.expected]
            if value in allowed:
                return None
            return f"{self.name} must be one of {allowed}, got {value}"
        if value not in self.expected:
            return f"{self.name} must be one of {list(self.expected)}, got {value}"
        return None


class LengthValidator(Validator):
    def validate(self, value: Any):
        min_length, max_length = self.expected
        try:
            length = len(value)
        except TypeError:
            return f"{self.name} does not support length check, got {type(value).__name__}"
        if min_length is not None and length < min_length:
            return f"{self.name} must have at least {min_length} entries, got {length}"
        if max_length is not None and length > max_length:
            return f"{self.name} must have at most {max_length} entries, got {length}"
        return None


class UniqueValidator(Validator):
    """
    Rejects repeated entries; set expected to a key name to compare entries of a list of mappings
    """

    def validate(self, value: Any):
        if not self.expected or value is None:
            return None
        if isinstance(self.expected, str):
            items = [entry.get(self.expected) for entry in value if isinstance(entry, dict)]
        else:
            items = list(value)
        seen, repeated = set(), []
        for item in items:
            if item in seen and item not in repeated:
                repeated.append(item)
            seen.add(item)
        if repeated:
            return f"{self.name} has duplicate entries: {', '.join(map(str, repeated))}"
        return None
