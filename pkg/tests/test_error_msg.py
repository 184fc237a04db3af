import pytest

from vponsim import guard
from vponsim.exceptions import GuardValidationError, NoPathError, ScenarioValidationError
from vponsim.scenario import load_yaml, parse_scenario


def test_custom_error_msg():
    @guard(
        fraction={"lte": (1.0, "Background load cannot exceed the channel.")},
    )
    def reserve(fraction: float):
        pass

    with pytest.raises(GuardValidationError) as e:
        reserve(fraction=1.2)

    assert e.value.errors == {"fraction": ["Background load cannot exceed the channel."]}


def test_custom_error_msg_length():
    @guard(
        members={"length": ((1, 12), "A slice holds between 1 and 12 ONUs.")},
        name={"length": (1, None)},
    )
    def build(members: list, name: str):
        pass

    with pytest.raises(GuardValidationError) as e:
        build(members=[], name="olt1")

    assert e.value.errors == {"members": ["A slice holds between 1 and 12 ONUs."]}

    with pytest.raises(GuardValidationError) as e:
        build(members=["onu1"], name="")

    assert e.value.errors == {"name": ["name must have at least 1 entries, got 0"]}


def test_message_lists_function_and_bullets():
    @guard(cycle_ns={"gt": 0}, n_bursts={"gte": 0})
    def capacity(cycle_ns: int, n_bursts: int):
        pass

    with pytest.raises(GuardValidationError) as e:
        capacity(0, -1)

    message = str(e.value)
    assert message.startswith("Validation failed for test_message_lists_function_and_bullets.<locals>.capacity:")
    assert "  - cycle_ns:\n    • cycle_ns must be greater than 0, got 0" in message
    assert "  - n_bursts:" in message


def test_scenario_error_carries_line_number():
    text = """\
topology:
  splitters:
    - id: spl-a
      edge_olt: olt1
  onus:
    - id: onu1
      splitter: spl-a
wavelength:
  olts: {olt1: 5}
slices:
  - olt: olt1
    members: [onu1]
policy:
  thresold: 80
"""
    raw, lines = load_yaml(text, "typo.yaml")
    with pytest.raises(ScenarioValidationError) as e:
        parse_scenario(raw, "typo.yaml", lines)

    assert e.value.errors == {"policy.thresold": ["line 14: unknown key 'thresold'"]}
    assert "scenario 'typo.yaml'" in str(e.value)


def test_no_path_error_names_channel():
    error = NoPathError("onu1", "olt2", 6)

    assert str(error) == "no path from onu1 to olt2 on channel 6; wavelength blocked"
    assert (error.src, error.dst, error.channel) == ("onu1", "olt2", 6)
