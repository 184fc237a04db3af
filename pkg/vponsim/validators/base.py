from abc import ABC, abstractmethod
from typing import Any


class Validator(ABC):
    """
    Validator base class
    Subclass it and implement ``validate``; return an error message or None.

    Args:
        name (str): Name of the checked argument or dotted config key
        expected (Any): Rule parameter, e.g. the bound of a comparison
    """

    def __init__(self, **kwargs):
        self.name = kwargs.get("name")
        self.expected = kwargs.get("expected")

    @abstractmethod
    def validate(self, value: Any) -> str | None:
        raise NotImplementedError("Validator must implement this method")
