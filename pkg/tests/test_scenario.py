import json
import math

import pytest
from hypothesis import given, strategies as st

from faultforge.errors import DecodeError, SchemaError
from faultforge.scenario import (
    CATEGORIES,
    CATEGORY_NAMES,
    FaultScenario,
    category,
    generate_scenarios,
    parse_scenario_file,
    write_scenario_file,
)

TAXONOMY = """FOG DUST_STORM FROST_COATING RAIN LENS_DISTORTION BARREL_DISTORTION FISH_EYE
LENS_VIGNETTING CHROMATIC_ABERRATION DEAD_PIXELS CAMERA_FAILURE CAMERA_BANDING SENSOR_HEAT
HW_OVERHEAT MOTION_BLUR CAMERA_SHAKE CAMERA_YAW PERSPECTIVE_DISTORTION GLARE_OCCLUSION
LOW_LIGHT_TUNNEL BRIGHT_REFLECTION COLOR_SHIFT_NIGHT""".split()


def test_registry_matches_taxonomy():
    assert len(CATEGORIES) == 22
    assert set(CATEGORY_NAMES) == set(TAXONOMY)


def test_registry_bijection():
    ids = [c.id for c in CATEGORIES]
    assert ids == list(range(len(CATEGORIES)))
    for c in CATEGORIES:
        assert category(c.name) is c
        assert category(c.id) is c
    assert len({c.name for c in CATEGORIES}) == len(CATEGORIES)


def test_unknown_category_names_valid_ones():
    with pytest.raises(KeyError, match="DUST_STORM"):
        category("SMOG")


def test_pipe_text_line():
    [s] = parse_scenario_file(b"FOG | 0.35 | Dense morning fog over wet asphalt | 42", "pipe_text")
    assert s.category.name == "FOG"
    assert s.strength == 0.35
    assert s.seed == 42
    assert s.description == "Dense morning fog over wet asphalt"


def test_pipe_text_strength_out_of_range():
    with pytest.raises(SchemaError) as exc:
        parse_scenario_file(b"FOG | 1.5 | too strong | 1", "pipe_text")
    assert exc.value.line_no == 1


def test_pipe_text_skips_blank_and_comment_lines():
    data = b"# header comment\n\nRAIN | 0.2 | drizzle | 3\n"
    assert len(parse_scenario_file(data, "pipe_text")) == 1


@pytest.mark.parametrize(
    "line, fmt",
    [
        (b"SMOG | 0.2 | haze | 1", "pipe_text"),
        (b"FOG | -0.01 | fog | 1", "pipe_text"),
        (b"FOG | 0.2 | fog", "pipe_text"),
        (b"FOG | 0.2 |   | 1", "pipe_text"),
        (b"FOG | 0.2 | fog | -1", "pipe_text"),
        (b'{"category":"FOG","description":"x","scenario_id":"a","seed":1}', "jsonl"),
        (b'{"category":"FOG","description":"x","scenario_id":"a","seed":1,"strength":2}', "jsonl"),
        (b'{"category":"FOG","description":"x","scenario_id":"a","seed":1,"strength":true}', "jsonl"),
        (b"not json", "jsonl"),
    ],
)
def test_schema_errors(line, fmt):
    with pytest.raises(SchemaError):
        parse_scenario_file(line, fmt)


def test_schema_error_reports_line_number():
    data = b"FOG | 0.1 | a | 1\n# c\nFOG | 7 | b | 2\n"
    with pytest.raises(SchemaError) as exc:
        parse_scenario_file(data, "pipe_text")
    assert exc.value.line_no == 3


def test_bad_utf8():
    with pytest.raises(DecodeError):
        parse_scenario_file(b"FOG | 0.1 | \xff\xfe | 1", "pipe_text")


def test_generate_first_strength():
    [s] = generate_scenarios("FOG", 1, 7)
    assert s.strength == pytest.approx(0.6180339887, abs=1e-15)


def test_generate_is_deterministic():
    a = write_scenario_file(generate_scenarios("RAIN", 50, 7))
    b = write_scenario_file(generate_scenarios("RAIN", 50, 7))
    assert a == b
    assert a != write_scenario_file(generate_scenarios("RAIN", 50, 8))


def test_generate_coverage_gap():
    strengths = sorted(s.strength for s in generate_scenarios("RAIN", 1000, 7))
    # oracle: brute-force gaps of fract((k+1)*0.6180339887); max is 0.0011863
    gaps = [b - a for a, b in zip(strengths, strengths[1:])]
    assert max(gaps) < 0.01
    assert max(gaps) == pytest.approx(0.0011862601, abs=1e-9)


def test_generate_ids_unique_and_strengths_in_unit_interval():
    batch = generate_scenarios("FOG", 500, 1)
    assert len({s.scenario_id for s in batch}) == 500
    assert all(0.0 <= s.strength < 1.0 for s in batch)


def test_generate_rejects_zero_count():
    with pytest.raises(ValueError):
        generate_scenarios("FOG", 0, 1)


def test_write_single_line():
    data = write_scenario_file(generate_scenarios("FOG", 1, 7))
    assert data.count(b"\n") == 1 and data.endswith(b"\n")
    pairs = json.loads(data, object_pairs_hook=list)
    assert [k for k, _ in pairs] == ["category", "description", "scenario_id", "seed", "strength"]


def test_write_empty_is_error():
    with pytest.raises(ValueError):
        write_scenario_file([])


scenarios = st.builds(
    FaultScenario,
    scenario_id=st.text(min_size=1, max_size=12).filter(lambda t: t.strip()),
    category=st.sampled_from(CATEGORIES),
    strength=st.floats(0.0, 1.0),
    description=st.text(min_size=1, max_size=40).filter(lambda t: t.strip()),
    seed=st.integers(0, 2**64 - 1),
)


@given(st.lists(scenarios, min_size=1, max_size=20))
def test_round_trip(batch):
    assert parse_scenario_file(write_scenario_file(batch)) == batch


@given(st.sampled_from(CATEGORIES), st.integers(1, 40), st.integers(0, 2**64 - 1))
def test_generated_batches_round_trip(cat, count, seed):
    batch = generate_scenarios(cat, count, seed)
    assert parse_scenario_file(write_scenario_file(batch)) == batch
    assert all(0.0 <= s.strength < 1.0 and not math.isnan(s.strength) for s in batch)
