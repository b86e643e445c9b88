"""Desk-scale lane-following stack: a classical lane-center estimator, a
synthetic track generator with exact ground truth, and the prediction JSONL
bridge for externally produced model outputs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import rng
from .errors import DecodeError, SchemaError
from .image import DEFAULT_SIZE, ImageBuffer, check_size

FALLBACK = (0.5, 0.75)
MIN_LANE_PIXELS = 10
THRESHOLD_SIGMAS = 1.0
FLAT_STD = 1e-9  # luma spread treated as a featureless frame

ROAD_VALUE = 40.0
STRIPE_VALUE = 230.0
STRIPE_WIDTH = 9.0
ROAD_NOISE_SIGMA = 4.0
LOOKAHEAD_Y = 0.75
TRUTH_X_RANGE = (0.2, 0.8)
MAX_SLANT = 0.3  # stripe columns per row, either direction


@dataclass(frozen=True)
class LanePoint:
    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"lane point ({self.x}, {self.y}) outside [0, 1]^2")

    def to_pixels(self, width: int = DEFAULT_SIZE, height: int = DEFAULT_SIZE) -> Tuple[float, float]:
        return self.x * width, self.y * height


@dataclass(frozen=True)
class PredictionRecord:
    image_id: str
    group: str
    truth: LanePoint
    prediction: LanePoint

    def __post_init__(self):
        if not self.group:
            raise ValueError("group must be nonempty")


def luma(image: ImageBuffer) -> np.ndarray:
    px = image.pixels.astype(np.float64)
    return 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]


def estimate_lane_center(image: ImageBuffer) -> LanePoint:
    """Intensity-weighted centroid of bright pixels in the bottom half of the frame.

    Pixels with luma >= mean + 1 std (over the bottom half) count as lane.  With
    fewer than 10 such pixels, or on a flat region with no contrast at all,
    the fixed prior (0.5, 0.75) is returned.
    """
    check_size(image)
    h, w = image.height, image.width
    top = h // 2
    region = luma(image)[top:]
    spread = region.std()
    if spread <= FLAT_STD:
        return LanePoint(*FALLBACK)
    cut = region.mean() + THRESHOLD_SIGMAS * spread
    rows, cols = np.nonzero(region >= cut)
    if rows.size < MIN_LANE_PIXELS:
        return LanePoint(*FALLBACK)
    weights = region[rows, cols]
    total = weights.sum()
    if total <= 0.0:
        return LanePoint(*FALLBACK)
    x = float((weights * cols).sum() / total) / w
    y = float((weights * (rows + top)).sum() / total) / h
    return LanePoint(min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0))


def render_track(center_x: float, slant: float, seed: int, size: int = DEFAULT_SIZE) -> ImageBuffer:
    """Dark road with one anti-aliased bright stripe centred on ``center_x`` px at the look-ahead row."""
    look_row = LOOKAHEAD_Y * size
    rows = np.arange(size, dtype=np.float64)[:, None]
    cols = np.arange(size, dtype=np.float64)[None, :]
    centre = center_x + slant * (rows - look_row)
    half = STRIPE_WIDTH / 2.0
    coverage = np.clip(np.minimum(cols + 0.5, centre + half) - np.maximum(cols - 0.5, centre - half), 0.0, 1.0)
    value = ROAD_VALUE + (STRIPE_VALUE - ROAD_VALUE) * coverage
    value = value + ROAD_NOISE_SIGMA * rng.normal_n(seed, 0, (size, size))
    gray = np.rint(np.clip(value, 0.0, 255.0)).astype(np.uint8)
    return ImageBuffer(np.repeat(gray[..., None], 3, axis=2))


def gen_synthetic_track(count: int, master_seed: int) -> List[Tuple[ImageBuffer, LanePoint]]:
    """``count`` 224x224 track frames with exact lane-center truth (y fixed at 0.75)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = TRUTH_X_RANGE
    out = []
    for k in range(count):
        seed = rng.split_seed(master_seed, k)
        u_x, u_slant = rng.uniform_n(seed, 1, 2)
        truth_x = lo + (hi - lo) * u_x
        slant = MAX_SLANT * (2.0 * u_slant - 1.0)
        image = render_track(truth_x * DEFAULT_SIZE, slant, seed)
        out.append((image, LanePoint(truth_x, LOOKAHEAD_Y)))
    return out


# --- prediction JSONL ----------------------------------------------------------

_FIELDS = ("image_id", "group", "gt_x", "gt_y", "pred_x", "pred_y")


def _coord(obj: dict, key: str, line_no: int) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(line_no, f"{key} must be a number")
    value = float(value)
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise SchemaError(line_no, f"{key}={value} outside [0, 1]")
    return value


def read_predictions(data: bytes) -> List[PredictionRecord]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"predictions file is not valid UTF-8: {exc}") from None
    records = []
    for line_no, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise SchemaError(line_no, "expected a JSON object")
        missing = [k for k in _FIELDS if k not in obj]
        if missing:
            raise SchemaError(line_no, f"missing field(s) {', '.join(missing)}")
        image_id, group = obj["image_id"], obj["group"]
        if not isinstance(image_id, str) or not isinstance(group, str) or not group:
            raise SchemaError(line_no, "image_id and group must be strings; group nonempty")
        records.append(
            PredictionRecord(
                image_id=image_id,
                group=group,
                truth=LanePoint(_coord(obj, "gt_x", line_no), _coord(obj, "gt_y", line_no)),
                prediction=LanePoint(_coord(obj, "pred_x", line_no), _coord(obj, "pred_y", line_no)),
            )
        )
    return records


def write_predictions(records) -> bytes:
    lines = []
    for r in records:
        obj = {
            "image_id": r.image_id,
            "group": r.group,
            "gt_x": r.truth.x,
            "gt_y": r.truth.y,
            "pred_x": r.prediction.x,
            "pred_y": r.prediction.y,
        }
        lines.append(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
    return "".join(line + "\n" for line in lines).encode("utf-8")
