import copy
from collections import defaultdict
from inspect import BoundArguments
from typing import Any, Optional

from vponsim import validators
from vponsim.exceptions import GuardConfigurationError, GuardValidationError
from vponsim.utils import is_hint_optional

Validator = validators.Validator

# Schema directives handled by validate_mapping itself rather than by a validator
SCHEMA_DIRECTIVES = ("default", "fields", "items")

Schema = dict[str, dict[str, Any]]
LineIndex = dict[tuple, int]


class Guard:
    __registered_validators__: dict[str, type["Validator"]] = {}

    @classmethod
    def register_validator(cls, keyword: str):
        def decorator(validator: type["Validator"]):
            if keyword in SCHEMA_DIRECTIVES:
                raise GuardConfigurationError(f"{keyword} is a reserved schema directive")
            if keyword in cls.__registered_validators__:
                raise GuardConfigurationError(f"{keyword} is already registered")

            cls.__registered_validators__[keyword] = validator
            return validator

        return decorator

    @classmethod
    def get_validator(cls, keyword: str) -> Optional[type["Validator"]]:
        validator = cls.__registered_validators__.get(keyword, None)
        if not validator:
            raise GuardConfigurationError(f"Validator {keyword} is not registered")
        return validator

    @classmethod
    def _validate_argument(
        cls,
        configuration: dict[str, Any],
        argument: str,
        value: Any,
        bound: BoundArguments | None = None,
    ) -> list[str]:
        errors = []

        for rule_name, expected_config in configuration.items():
            if rule_name in SCHEMA_DIRECTIVES:
                continue
            validator_class = cls.get_validator(rule_name)

            expected_value, custom_error_message = split_custom_message(validator_class, expected_config)
            validator = validator_class(name=argument, expected=expected_value, bound=bound)

            if error := validator.validate(value=value):
                errors.append(custom_error_message or error)
                if rule_name in ("type", "required"):
                    # Later rules would only report the same bad value again
                    break
        return errors

    @classmethod
    def validate_arguments(
        cls, function_name: str, bound: BoundArguments, hints: dict[str, Any], guard_config: dict[str, Any]
    ) -> None:
        validation_errors = defaultdict(list)

        for argument, value in bound.arguments.items():
            argument_configuration = dict(guard_config.get(argument, {}))
            argument_hints = hints.get(argument)

            if "type" not in argument_configuration and argument_hints is not None:
                argument_configuration = {"type": argument_hints, **argument_configuration}

            if argument_hints is not None and not is_hint_optional(argument_hints):
                argument_configuration = {"required": True, **argument_configuration}

            if argument_errors := cls._validate_argument(argument_configuration, argument, value, bound):
                validation_errors[argument] = argument_errors

        if validation_errors:
            raise GuardValidationError(function_name=function_name, errors=dict(validation_errors))

    @classmethod
    def validate_mapping(
        cls,
        path: tuple,
        mapping: Any,
        schema: Schema,
        lines: LineIndex | None = None,
        errors: dict[str, list[str]] | None = None,
    ) -> dict[str, Any]:
        """
        Validate a config mapping against a schema and return it with defaults filled in.

        Args:
            path: Key path of the mapping inside the document, e.g. ``("policy",)``.
            mapping: Parsed mapping (None is treated as empty).
            schema: Key -> rule dict. Rules are validator keywords plus the directives
                ``default`` (value used when the key is absent), ``fields`` (nested
                mapping schema) and ``items`` (schema for each mapping in a list).
            lines: Optional key path -> source line index used in messages.
            errors: Collector shared across calls; failures are appended, not raised.

        Returns:
            The resolved mapping. Unknown keys are reported and dropped.
        """
        errors = errors if errors is not None else {}
        lines = lines or {}
        where = ".".join(str(part) for part in path)
        mapping = {} if mapping is None else mapping
        if not isinstance(mapping, dict):
            add_error(errors, lines, path, f"{where} must be a mapping, got {type(mapping).__name__}")
            return {}

        resolved: dict[str, Any] = {}
        for key in mapping:
            if key not in schema:
                add_error(errors, lines, (*path, key), f"unknown key '{key}'")

        for key, rules in schema.items():
            key_path = (*path, key)
            name = ".".join(str(part) for part in key_path)
            if key in mapping:
                value = mapping[key]
            elif "default" in rules:
                value = copy.deepcopy(rules["default"])
            else:
                value = None

            # an absent optional key is only checked for type and presence
            checked = rules if value is not None else {k: v for k, v in rules.items() if k in ("required", "type")}
            for message in cls._validate_argument(checked, name, value):
                add_error(errors, lines, key_path, message)

            if value is not None and "fields" in rules:
                value = cls.validate_mapping(key_path, value, rules["fields"], lines, errors)
            if isinstance(value, list) and "items" in rules:
                value = [
                    cls.validate_mapping((*key_path, index), item, rules["items"], lines, errors)
                    for index, item in enumerate(value)
                ]
            resolved[key] = value
        return resolved


def split_custom_message(validator_class: type["Validator"], expected_config: Any) -> tuple[Any, str | None]:
    """
    Separate ``(expected, "message")`` pairs from plain rule parameters.

    A length rule only takes the pair form around a ``(min, max)`` tuple, and a choices rule only
    around a collection or Enum, so ``("direct", "overlay")`` stays a set of two choices.
    """
    if not (isinstance(expected_config, tuple) and len(expected_config) == 2 and isinstance(expected_config[1], str)):
        return expected_config, None
    expected = expected_config[0]
    if validator_class is validators.LengthValidator and not isinstance(expected, tuple):
        return expected_config, None
    if validator_class is validators.ChoicesValidator and isinstance(expected, str):
        return expected_config, None
    return expected, expected_config[1]


def add_error(errors: dict[str, list[str]], lines: LineIndex, key_path: tuple, message: str) -> None:
    name = ".".join(str(part) for part in key_path)
    line = lines.get(key_path)
    if line is None and key_path:
        line = lines.get(key_path[:-1])
    prefix = f"line {line}: " if line is not None else ""
    errors.setdefault(name, []).append(prefix + message)


def register_default_validators():
    """
    Register default validators
    """
    Guard.register_validator("lt")(validators.LessThan)
    Guard.register_validator("lte")(validators.LessThanOrEqual)
    Guard.register_validator("gt")(validators.GreaterThan)
    Guard.register_validator("gte")(validators.GreaterThanOrEqual)
    Guard.register_validator("choices")(validators.ChoicesValidator)
    Guard.register_validator("type")(validators.TypeValidator)
    Guard.register_validator("required")(validators.RequiredValidator)
    Guard.register_validator("length")(validators.LengthValidator)
    Guard.register_validator("unique")(validators.UniqueValidator)
    Guard.register_validator("regex")(validators.RegexValidator)
    Guard.register_validator("node_id")(validators.NodeIdValidator)


register_default_validators()
