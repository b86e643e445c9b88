import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faultforge.errors import SchemaError, UnsupportedSize
from faultforge.image import ImageBuffer
from faultforge.perception import (
    LanePoint,
    PredictionRecord,
    estimate_lane_center,
    gen_synthetic_track,
    read_predictions,
    render_track,
    write_predictions,
)


def blob_image(cx, cy, diameter=11, size=224):
    ys, xs = np.mgrid[0:size, 0:size]
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= (diameter / 2) ** 2
    px = np.zeros((size, size, 3), dtype=np.uint8)
    px[mask] = 255
    return ImageBuffer(px), mask


def test_centered_blob():
    img, _ = blob_image(112, 168)
    p = estimate_lane_center(img)
    assert (p.x, p.y) == (0.5, 0.75)


def test_offset_blob_matches_mask_centroid():
    img, mask = blob_image(56, 168)
    ys, xs = np.nonzero(mask)
    oracle_x = xs.mean() / 224  # uniform intensity, so weighted == plain centroid
    p = estimate_lane_center(img)
    assert p.x == pytest.approx(oracle_x, abs=1e-12)
    assert abs(p.x - 0.25) <= 1 / 224


def test_uniform_gray_falls_back():
    p = estimate_lane_center(ImageBuffer.filled(224, 224, (90, 90, 90)))
    assert (p.x, p.y) == (0.5, 0.75)


def test_too_few_pixels_falls_back():
    px = np.zeros((64, 64, 3), dtype=np.uint8)
    px[50, 10:19] = 255  # 9 pixels
    assert estimate_lane_center(ImageBuffer(px)) == LanePoint(0.5, 0.75)


def test_small_image_rejected():
    with pytest.raises(UnsupportedSize):
        estimate_lane_center(ImageBuffer.filled(6, 6, (0, 0, 0)))


def test_fixtures_deterministic():
    a = gen_synthetic_track(2, 5)
    b = gen_synthetic_track(2, 5)
    assert [(i.to_bytes(), t) for i, t in a] == [(i.to_bytes(), t) for i, t in b]


def test_fixture_geometry():
    frames = gen_synthetic_track(20, 9)
    for img, truth in frames:
        assert (img.width, img.height) == (224, 224)
        assert truth.y == 0.75
        assert 0.2 <= truth.x <= 0.8
        # the look-ahead row peaks at the truth column
        row = img.pixels[168, :, 0].astype(float)
        assert abs(np.argmax(row) - truth.x * 224) <= 5


def test_estimator_locks_onto_clean_stripe():
    frames = gen_synthetic_track(100, 3)
    dx = [abs(estimate_lane_center(img).x - t.x) for img, t in frames]
    assert np.mean(dx) < 0.02


@given(st.floats(60, 150), st.integers(1, 30), st.floats(-0.3, 0.3))
@settings(max_examples=25, deadline=None)
def test_translation_consistency(center, shift, slant):
    base = estimate_lane_center(render_track(center, slant, seed=1))
    moved = estimate_lane_center(render_track(center + shift, slant, seed=1))
    assert abs((moved.x - base.x) - shift / 224) <= 1.5 / 224


@given(st.integers(0, 2**32))
@settings(max_examples=20, deadline=None)
def test_estimate_in_unit_square(seed):
    rng = np.random.default_rng(seed)
    img = ImageBuffer(rng.integers(0, 256, size=(32, 40, 3), dtype=np.uint8))
    p = estimate_lane_center(img)
    assert 0 <= p.x <= 1 and 0 <= p.y <= 1


def test_read_single_record():
    line = b'{"image_id":"a","group":"FOG","gt_x":0.5,"gt_y":0.75,"pred_x":0.52,"pred_y":0.74}'
    [r] = read_predictions(line)
    assert r == PredictionRecord("a", "FOG", LanePoint(0.5, 0.75), LanePoint(0.52, 0.74))


def test_out_of_range_coordinate():
    line = b'{"image_id":"a","group":"FOG","gt_x":1.2,"gt_y":0.75,"pred_x":0.52,"pred_y":0.74}'
    with pytest.raises(SchemaError):
        read_predictions(line)


def test_missing_field_line_number():
    good = b'{"image_id":"a","group":"G","gt_x":0.5,"gt_y":0.5,"pred_x":0.5,"pred_y":0.5}\n'
    with pytest.raises(SchemaError) as exc:
        read_predictions(good + b'{"image_id":"b","group":"G","gt_x":0.5}\n')
    assert exc.value.line_no == 2


def test_round_trip_thousand_records():
    rng = np.random.default_rng(0)
    records = [
        PredictionRecord(f"img{i}", f"G{i % 7}", LanePoint(*rng.random(2)), LanePoint(*rng.random(2)))
        for i in range(1000)
    ]
    data = write_predictions(records)
    assert read_predictions(data) == records
    assert json.loads(data.splitlines()[0]).keys() == {"image_id", "group", "gt_x", "gt_y", "pred_x", "pred_y"}
