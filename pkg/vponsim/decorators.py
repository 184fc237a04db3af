import functools
import inspect
from collections.abc import Callable
from typing import get_type_hints

from vponsim.exceptions import GuardConfigurationError
from vponsim.guard import Guard


def guard(**validation_rules):
    """
    Decorator to check operation preconditions on the call arguments.

    Args:
        **validation_rules: Dictionary mapping argument names to their validation rules.
            Each rule is a dict with validator keywords as keys.

    Returns:
        Decorated function with argument validation. The rules stay available
        as ``preconditions`` on the returned function.

    Raises:
        GuardConfigurationError: If a rule names an argument the function does not take.
        GuardValidationError: If any precondition fails.

    Example:
        @guard(fraction={"gte": 0.0, "lte": 1.0})
        def background_load(channel: int, fraction: float):
            ...
    """

    def decorator(f: Callable):
        signature = inspect.signature(f)
        if unknown := sorted(set(validation_rules) - set(signature.parameters)):
            raise GuardConfigurationError(f"{f.__qualname__} has no argument(s) {', '.join(unknown)}")
        hints = get_type_hints(f)
        hints.pop("return", None)

        @functools.wraps(f)
        def checked(*args, **kwargs):
            bound = signature.bind(*args, **kwargs)
            bound.apply_defaults()
            Guard.validate_arguments(f.__qualname__, bound, hints, validation_rules)
            return f(*args, **kwargs)

        checked.preconditions = dict(validation_rules)
        return checked

    return decorator
