class GuardValidationError(Exception):
    def __init__(self, function_name: str, errors: dict[str, list[str]]):
        error_details = []
        for arg_name, error_list in errors.items():
            error_details.append(f"  - {arg_name}:")
            for error in error_list:
                error_details.append(f"    • {error}")

        self.errors = errors
        self.function_name = function_name
        message = f"Validation failed for {function_name}:\n" + "\n".join(error_details)
        super().__init__(message)


class ScenarioValidationError(GuardValidationError):
    """
    Raised when a scenario file, preset or override does not match the schema.
    Keys of ``errors`` are dotted config paths, e.g. ``policy.threshold_us``.
    """

    def __init__(self, source: str, errors: dict[str, list[str]]):
        self.source = source
        super().__init__(function_name=f"scenario '{source}'", errors=errors)


class GuardConfigurationError(Exception):
    pass


class SimulationError(Exception):
    pass


class SchedulingError(SimulationError):
    pass


class TopologyError(SimulationError):
    pass


class NoPathError(TopologyError):
    def __init__(self, src: str, dst: str, channel: int):
        self.src = src
        self.dst = dst
        self.channel = channel
        super().__init__(f"no path from {src} to {dst} on channel {channel}; wavelength blocked")


class ChannelConflictError(SimulationError):
    pass


class TuningError(SimulationError):
    pass


class CapacityError(SimulationError):
    pass


class ControllerError(SimulationError):
    pass


class InvariantViolation(SimulationError):
    pass
