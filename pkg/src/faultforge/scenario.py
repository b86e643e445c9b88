"""Fault scenarios: the category registry, scenario files, and a local generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, List

from .errors import DecodeError, SchemaError
from .rng import split_seed

CATEGORY_NAMES = (
    "FOG",
    "DUST_STORM",
    "FROST_COATING",
    "RAIN",
    "LENS_DISTORTION",
    "BARREL_DISTORTION",
    "FISH_EYE",
    "LENS_VIGNETTING",
    "CHROMATIC_ABERRATION",
    "DEAD_PIXELS",
    "CAMERA_FAILURE",
    "CAMERA_BANDING",
    "SENSOR_HEAT",
    "HW_OVERHEAT",
    "MOTION_BLUR",
    "CAMERA_SHAKE",
    "CAMERA_YAW",
    "PERSPECTIVE_DISTORTION",
    "GLARE_OCCLUSION",
    "LOW_LIGHT_TUNNEL",
    "BRIGHT_REFLECTION",
    "COLOR_SHIFT_NIGHT",
)

INV_GOLDEN = 0.6180339887
U64_MAX = (1 << 64) - 1


@dataclass(frozen=True, order=True)
class FaultCategory:
    id: int
    name: str

    def __str__(self) -> str:
        return self.name


CATEGORIES = tuple(FaultCategory(i, name) for i, name in enumerate(CATEGORY_NAMES))
_BY_NAME = {c.name: c for c in CATEGORIES}


def category(key) -> FaultCategory:
    """Look up a category by name, id, or pass through an existing one."""
    if isinstance(key, FaultCategory):
        return key
    if isinstance(key, int) and not isinstance(key, bool):
        if 0 <= key < len(CATEGORIES):
            return CATEGORIES[key]
        raise KeyError(f"no fault category with id {key}")
    try:
        return _BY_NAME[str(key).strip().upper()]
    except KeyError:
        raise KeyError(
            f"unknown fault category {key!r}; valid categories: {', '.join(CATEGORY_NAMES)}"
        ) from None


@dataclass(frozen=True)
class FaultScenario:
    scenario_id: str
    category: FaultCategory
    strength: float
    description: str
    seed: int

    def __post_init__(self):
        if not self.scenario_id:
            raise ValueError("scenario_id must be nonempty")
        if not self.description:
            raise ValueError("description must be nonempty")
        if not (0.0 <= self.strength <= 1.0):
            raise ValueError(f"strength {self.strength} outside [0, 1]")
        if not (0 <= self.seed <= U64_MAX):
            raise ValueError(f"seed {self.seed} is not a u64")

    @property
    def prompt(self) -> str:
        """Text used to condition image synthesis."""
        return self.description

    def folder_name(self) -> str:
        return f"{self.category.name}_{self.scenario_id}"


def strength_band(strength: float) -> str:
    if strength < 1 / 3:
        return "SLIGHT"
    if strength < 2 / 3:
        return "MODERATE"
    return "SEVERE"


def _describe(cat: FaultCategory, strength: float) -> str:
    label = cat.name.lower().replace("_", " ")
    return f"{strength_band(strength).lower()} {label} affecting the forward camera (strength {strength:.3f})"


def generate_scenarios(cat, count: int, master_seed: int) -> List[FaultScenario]:
    """Deterministic scenario batch for one category.

    Strengths follow the golden-ratio sequence ``fract((k + 1) / phi)`` which
    spreads evenly over [0, 1) for any prefix length.
    """
    cat = category(cat)
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    for k in range(count):
        strength = math.fmod((k + 1) * INV_GOLDEN, 1.0)
        out.append(
            FaultScenario(
                scenario_id=f"{strength_band(strength)}_{k:03d}",
                category=cat,
                strength=strength,
                description=_describe(cat, strength),
                seed=split_seed(master_seed, k),
            )
        )
    return out


def _to_record(s: FaultScenario) -> dict:
    return {
        "category": s.category.name,
        "description": s.description,
        "scenario_id": s.scenario_id,
        "seed": s.seed,
        "strength": s.strength,
    }


def write_scenario_file(scenarios: Iterable[FaultScenario]) -> bytes:
    """Canonical JSONL: one object per line, sorted keys, LF endings."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("cannot write an empty scenario list")
    lines = [
        json.dumps(_to_record(s), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        for s in scenarios
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _strength(value, line_no: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(line_no, f"strength must be a number, got {value!r}")
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise SchemaError(line_no, f"strength {value} outside [0, 1]")
    return value


def _seed(value, line_no: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= U64_MAX:
        raise SchemaError(line_no, f"seed must be a u64 integer, got {value!r}")
    return value


def _category(value, line_no: int) -> FaultCategory:
    if not isinstance(value, str):
        raise SchemaError(line_no, "category must be a name string")
    try:
        return _BY_NAME[value.strip()]
    except KeyError:
        raise SchemaError(line_no, f"unknown category {value!r}") from None


def _text(value, field: str, line_no: int) -> str:
    if not isinstance(value, str) or not value.strip():
        raise SchemaError(line_no, f"{field} must be a nonempty string")
    return value


def _parse_jsonl_line(line: str, line_no: int) -> FaultScenario:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(line_no, f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise SchemaError(line_no, "expected a JSON object")
    for key in ("category", "description", "scenario_id", "seed", "strength"):
        if key not in obj:
            raise SchemaError(line_no, f"missing field {key!r}")
    return FaultScenario(
        scenario_id=_text(obj["scenario_id"], "scenario_id", line_no),
        category=_category(obj["category"], line_no),
        strength=_strength(obj["strength"], line_no),
        description=_text(obj["description"], "description", line_no),
        seed=_seed(obj["seed"], line_no),
    )


def _parse_pipe_line(line: str, line_no: int, index: int) -> FaultScenario:
    parts = [p.strip() for p in line.split("|")]
    if len(parts) != 4:
        raise SchemaError(line_no, f"expected 'NAME | strength | description | seed', got {len(parts)} fields")
    name, strength_txt, description, seed_txt = parts
    try:
        strength = float(strength_txt)
    except ValueError:
        raise SchemaError(line_no, f"bad strength {strength_txt!r}") from None
    try:
        seed = int(seed_txt)
    except ValueError:
        raise SchemaError(line_no, f"bad seed {seed_txt!r}") from None
    strength = _strength(strength, line_no)
    return FaultScenario(
        scenario_id=f"{strength_band(strength)}_{index:03d}",
        category=_category(name, line_no),
        strength=strength,
        description=_text(description, "description", line_no),
        seed=_seed(seed, line_no),
    )


def parse_scenario_file(data: bytes, format: str = "jsonl") -> List[FaultScenario]:
    """Parse a scenario file.

    ``format`` is ``"jsonl"`` (canonical) or ``"pipe_text"``. Blank lines are
    skipped in both; ``#`` comment lines only in pipe text.  Out-of-range
    strengths are rejected, never clamped.
    """
    if format not in ("jsonl", "pipe_text"):
        raise ValueError(f"unknown scenario format {format!r}")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"scenario file is not valid UTF-8: {exc}") from None
    out: List[FaultScenario] = []
    for line_no, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if format == "pipe_text":
            if stripped.startswith("#"):
                continue
            out.append(_parse_pipe_line(stripped, line_no, len(out)))
        else:
            out.append(_parse_jsonl_line(stripped, line_no))
    return out
