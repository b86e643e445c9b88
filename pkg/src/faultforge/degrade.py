"""Seeded, strength-parameterized procedural fault kernels.

Each kernel maps a clean frame to a degraded one for a single fault category.
Channel math happens in float64; the result is clamped to [0, 255] and rounded
half-to-even exactly once at the end.  All randomness comes from
:mod:`faultforge.rng`, keyed by the spec seed and a per-kernel stream id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict

import numpy as np
from scipy.ndimage import uniform_filter, uniform_filter1d

from . import rng
from .errors import DimensionMismatch
from .image import ImageBuffer, check_size
from .scenario import FaultCategory, FaultScenario, category


@dataclass(frozen=True)
class KernelConstants:
    fog_color: tuple = (200.0, 200.0, 200.0)
    fog_floor: float = 0.35
    dust_color: tuple = (180.0, 150.0, 110.0)
    dust_alpha: float = 0.8
    frost_cell: int = 16
    frost_blur_mask: float = 0.6
    rain_streaks: int = 200
    rain_length: tuple = (8.0, 20.0)
    rain_angle_jitter_deg: float = 10.0
    rain_alpha: float = 0.35
    rain_color: tuple = (220.0, 220.0, 225.0)
    rain_blur_above: float = 0.5
    motion_blur_half: int = 7  # kernel length 1 + 2*round(7*s), capped at 15
    shake_max_px: float = 6.0
    chroma_max_px: float = 5.0
    barrel_k: float = 0.5
    fisheye_k: float = 1.2
    lens_k: float = 0.35
    lens_chroma_px: float = 2.0
    perspective_inset: float = 0.25
    yaw_max_deg: float = 10.0
    dead_fraction: float = 0.05
    banding_amplitude: float = 40.0
    banding_period: tuple = (8.0, 32.0)
    heat_sigma: float = 12.0
    heat_tint: float = 10.0
    overheat_band: float = 0.2
    failure_band: float = 0.5
    failure_noise_at: float = 0.9
    glare_radius: float = 0.4
    glare_intensity: float = 220.0
    glare_quad_area: float = 0.15
    glare_quad_gray: float = 128.0
    lowlight_dim: float = 0.8
    lowlight_sigma: float = 10.0
    lowlight_vignette: float = 1.5
    night_blue: float = 40.0
    night_red: float = 20.0
    night_dim: float = 0.3


CONSTANTS = KernelConstants()

# per-kernel random stream ids
_S_FROST, _S_RAIN, _S_SHAKE, _S_DEAD, _S_BAND, _S_HEAT = 1, 2, 3, 4, 5, 6
_S_OVERHEAT, _S_FAILURE, _S_GLARE, _S_LOWLIGHT = 7, 8, 9, 10


@dataclass(frozen=True)
class DegradationSpec:
    category: FaultCategory
    strength: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "category", category(self.category))
        if not (0.0 <= self.strength <= 1.0):
            raise ValueError(f"strength {self.strength} outside [0, 1]")

    @classmethod
    def from_scenario(cls, scenario: FaultScenario) -> "DegradationSpec":
        return cls(scenario.category, scenario.strength, scenario.seed)


def _finish(x: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(x, 0.0, 255.0)).astype(np.uint8)


def _box3(x: np.ndarray) -> np.ndarray:
    return uniform_filter(x, size=(3, 3, 1), mode="nearest")


@lru_cache(maxsize=8)
def _grid(h: int, w: int):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ys.setflags(write=False)
    xs.setflags(write=False)
    return ys, xs


def _bilinear(x: np.ndarray, src_x: np.ndarray, src_y: np.ndarray) -> np.ndarray:
    """Sample ``x`` at real coordinates, replicating edge pixels outside the frame."""
    h, w = x.shape[:2]
    sx = np.clip(src_x, 0.0, w - 1.0)
    sy = np.clip(src_y, 0.0, h - 1.0)
    # clamping the base index to w-2/h-2 keeps the +1 neighbour in range; the
    # fractional weight then reaches exactly 1 on the last row/column
    x0 = np.minimum(sx.astype(np.intp), w - 2)
    y0 = np.minimum(sy.astype(np.intp), h - 2)
    fx = sx - x0
    fy = sy - y0
    flat = x.reshape(-1, x.shape[2])
    i = y0 * w + x0
    return (
        flat[i] * ((1 - fx) * (1 - fy))[..., None]
        + flat[i + 1] * (fx * (1 - fy))[..., None]
        + flat[i + w] * ((1 - fx) * fy)[..., None]
        + flat[i + w + 1] * (fx * fy)[..., None]
    )


def _translate(x: np.ndarray, dx: int, dy: int) -> np.ndarray:
    h, w = x.shape[:2]
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return x[rows][:, cols]


def _vignette(x: np.ndarray, s: float) -> np.ndarray:
    h, w = x.shape[:2]
    ys, xs = _grid(h, w)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    r2 = ((xs - cx) ** 2 + (ys - cy) ** 2) / (cx * cx + cy * cy)
    return x * (1.0 - s * r2)[..., None]


def _chromatic(x: np.ndarray, d: int) -> np.ndarray:
    if d == 0:
        return x
    out = x.copy()
    out[..., 0] = _translate(x[..., 0:1], d, 0)[..., 0]
    out[..., 2] = _translate(x[..., 2:3], -d, 0)[..., 0]
    return out


def _radial(x: np.ndarray, k: float) -> np.ndarray:
    h, w = x.shape[:2]
    ys, xs = _grid(h, w)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    dx, dy = xs - cx, ys - cy
    r2 = (dx * dx + dy * dy) / (cx * cx + cy * cy)
    factor = 1.0 + k * r2
    return _bilinear(x, cx + dx * factor, cy + dy * factor)


def _gaussian(seed: int, stream: int, shape) -> np.ndarray:
    return rng.normal_n(seed, stream, shape)


def _homography(src, dst) -> np.ndarray:
    """3x3 matrix mapping each ``src`` point onto the matching ``dst`` point."""
    a, b = [], []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        b.extend([u, v])
    h = np.linalg.solve(np.array(a, dtype=np.float64), np.array(b, dtype=np.float64))
    return np.append(h, 1.0).reshape(3, 3)


def _in_triangle(px, py, a, b, c) -> np.ndarray:
    def side(p, q):
        return (px - q[0]) * (p[1] - q[1]) - (p[0] - q[0]) * (py - q[1])

    d1, d2, d3 = side(a, b), side(b, c), side(c, a)
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(neg & pos)


# --- kernels -----------------------------------------------------------------
# Each takes (float image, strength, seed, constants) and returns a float image.


def _fog(x, s, seed, c):
    h = x.shape[0]
    rows = np.arange(h, dtype=np.float64)
    alpha = (s * (c.fog_floor + (1.0 - c.fog_floor) * (1.0 - rows / h)))[:, None, None]
    return (1.0 - alpha) * x + alpha * np.asarray(c.fog_color)


def _dust_storm(x, s, seed, c):
    alpha = c.dust_alpha * s
    return (1.0 - alpha) * x + alpha * np.asarray(c.dust_color)


def _value_noise(h: int, w: int, seed: int, cell: int) -> np.ndarray:
    gh, gw = h // cell + 2, w // cell + 2
    lattice = rng.uniform_n(seed, _S_FROST, gh * gw).reshape(gh, gw)
    ys, xs = _grid(h, w)
    gx, gy = xs / cell, ys / cell
    ix, iy = np.floor(gx).astype(np.intp), np.floor(gy).astype(np.intp)
    tx, ty = gx - ix, gy - iy
    tx = tx * tx * (3 - 2 * tx)
    ty = ty * ty * (3 - 2 * ty)
    top = lattice[iy, ix] * (1 - tx) + lattice[iy, ix + 1] * tx
    bottom = lattice[iy + 1, ix] * (1 - tx) + lattice[iy + 1, ix + 1] * tx
    return top * (1 - ty) + bottom * ty


def _frost_coating(x, s, seed, c):
    h, w = x.shape[:2]
    m = _value_noise(h, w, seed, c.frost_cell)
    blended = x + (s * m)[..., None] * (255.0 - x)
    return np.where((m > c.frost_blur_mask)[..., None], _box3(blended), blended)


def _rain(x, s, seed, c):
    h, w = x.shape[:2]
    n = int(round(c.rain_streaks * s))
    out = x.copy()
    if n:
        u = rng.uniform_n(seed, _S_RAIN, 4 * n).reshape(n, 4)
        color = np.asarray(c.rain_color)
        lo, hi = c.rain_length
        for cx, cy, ul, ua in u:
            cx, cy = cx * w, cy * h
            half = 0.5 * (lo + (hi - lo) * ul)
            theta = math.radians(90.0 + c.rain_angle_jitter_deg * (2.0 * ua - 1.0))
            ex, ey = half * math.cos(theta), half * math.sin(theta)
            x0, x1 = cx - ex, cx + ex
            y0, y1 = cy - ey, cy + ey
            c0 = max(int(math.floor(min(x0, x1))) - 1, 0)
            c1 = min(int(math.ceil(max(x0, x1))) + 2, w)
            r0 = max(int(math.floor(min(y0, y1))) - 1, 0)
            r1 = min(int(math.ceil(max(y0, y1))) + 2, h)
            if c0 >= c1 or r0 >= r1:
                continue
            py, px = np.mgrid[r0:r1, c0:c1].astype(np.float64)
            vx, vy = x1 - x0, y1 - y0
            t = np.clip(((px - x0) * vx + (py - y0) * vy) / (vx * vx + vy * vy), 0.0, 1.0)
            dist = np.hypot(px - (x0 + t * vx), py - (y0 + t * vy))
            a = (c.rain_alpha * np.clip(1.0 - dist, 0.0, 1.0))[..., None]
            patch = out[r0:r1, c0:c1]
            out[r0:r1, c0:c1] = patch * (1.0 - a) + color * a
    if s > c.rain_blur_above:
        out = _box3(out)
    return out


def _motion_blur(x, s, seed, c):
    k = 1 + 2 * int(round(c.motion_blur_half * s))
    if k == 1:
        return x
    return uniform_filter1d(x, size=k, axis=1, mode="nearest")


def _camera_shake(x, s, seed, c):
    m = int(round(c.shake_max_px * s))
    u = rng.uniform_n(seed, _S_SHAKE, 6).reshape(3, 2)
    copies = [_translate(x, int(round((2 * ux - 1) * m)), int(round((2 * uy - 1) * m))) for ux, uy in u]
    return sum(copies) / 3.0


def _lens_vignetting(x, s, seed, c):
    return _vignette(x, s)


def _chromatic_aberration(x, s, seed, c):
    return _chromatic(x, int(round(c.chroma_max_px * s)))


def _barrel_distortion(x, s, seed, c):
    return _radial(x, c.barrel_k * s)


def _fish_eye(x, s, seed, c):
    return _radial(x, c.fisheye_k * s)


def _lens_distortion(x, s, seed, c):
    return _chromatic(_radial(x, c.lens_k * s), int(round(c.lens_chroma_px * s)))


def _perspective_distortion(x, s, seed, c):
    h, w = x.shape[:2]
    m = int(round(c.perspective_inset * s * w))
    if m == 0:
        return x
    rect = [(0, 0), (w - 1, 0), (w - 1, h - 1), (0, h - 1)]
    quad = [(m, 0), (w - 1 - m, 0), (w - 1, h - 1), (0, h - 1)]
    inv = _homography(quad, rect)
    ys, xs = _grid(h, w)
    denom = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / denom
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / denom
    return _bilinear(x, sx, sy)


def _camera_yaw(x, s, seed, c):
    h, w = x.shape[:2]
    ys, xs = _grid(h, w)
    shear = math.tan(math.radians(c.yaw_max_deg * s))
    return _bilinear(x, xs + shear * (ys - h / 2.0), ys)


def _dead_pixels(x, s, seed, c):
    h, w = x.shape[:2]
    count = int(math.floor(c.dead_fraction * s * w * h))
    out = x.copy()
    if count:
        order = np.argsort(rng.bits(seed, _S_DEAD, np.arange(w * h, dtype=np.uint64)), kind="stable")
        flat = out.reshape(-1, 3)
        flat[order[:count]] = 0.0
    return out


def _camera_banding(x, s, seed, c):
    lo, hi = c.banding_period
    period = lo + (hi - lo) * rng.uniform_n(seed, _S_BAND, 1)[0]
    rows = np.arange(x.shape[0], dtype=np.float64)
    return x + (c.banding_amplitude * s * np.sin(2.0 * np.pi * rows / period))[:, None, None]


def _sensor_heat(x, s, seed, c):
    out = x + c.heat_sigma * s * _gaussian(seed, _S_HEAT, x.shape)
    out[..., 0] += c.heat_tint * s
    out[..., 2] += c.heat_tint * s
    return out


def _hw_overheat(x, s, seed, c):
    out = _sensor_heat(x, s, seed, c)
    h = x.shape[0]
    rows = min(int(round(c.overheat_band * s * h)), h - 1)
    if rows:
        u = rng.uniform_n(seed, _S_OVERHEAT, 1)[0]
        start = 1 + int(u * (h - rows))
        out[start:start + rows] = out[start - 1]
    return out


def _camera_failure(x, s, seed, c):
    h, w = x.shape[:2]
    if s >= c.failure_noise_at:
        return np.floor(rng.uniform_n(seed, _S_FAILURE, h * w * 3) * 256.0).reshape(x.shape)
    rows = int(round(c.failure_band * s * h))
    out = x.copy()
    if rows:
        u = rng.uniform_n(seed, _S_FAILURE, 1)[0]
        start = int(u * (h - rows + 1))
        out[start:start + rows] = 0.0
    return out


def _blob(x, s, cx, cy, c):
    h, w = x.shape[:2]
    radius = c.glare_radius * s * w
    ys, xs = _grid(h, w)
    d = np.hypot(xs - cx, ys - cy)
    falloff = np.where(d < radius, (1.0 - d / radius) ** 2, 0.0)
    return x + (c.glare_intensity * s * falloff)[..., None]


def _glare_occlusion(x, s, seed, c):
    h, w = x.shape[:2]
    u = rng.uniform_n(seed, _S_GLARE, 15)
    out = _blob(x, s, u[0] * w, u[1] * h, c)
    area = c.glare_quad_area * s * w * h
    aspect = 0.5 + 1.5 * u[2]
    qw = math.sqrt(area * aspect)
    qh = area / qw
    qx, qy = u[3] * w, u[4] * h
    # rectangle corners pulled inward by up to a quarter of each half-extent
    signs = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    corners = [
        (qx + sx * qw / 2 * (1 - 0.25 * u[5 + 2 * i]), qy + sy * qh / 2 * (1 - 0.25 * u[6 + 2 * i]))
        for i, (sx, sy) in enumerate(signs)
    ]
    ys, xs = _grid(h, w)
    inside = np.zeros((h, w), dtype=bool)
    for i in range(4):
        inside |= _in_triangle(xs, ys, (qx, qy), corners[i], corners[(i + 1) % 4])
    out[inside] = c.glare_quad_gray
    return out


def _bright_reflection(x, s, seed, c):
    h, w = x.shape[:2]
    u = rng.uniform_n(seed, _S_GLARE, 2)
    return _blob(x, s, u[0] * w, h * (2.0 + u[1]) / 3.0, c)


def _low_light_tunnel(x, s, seed, c):
    out = x * (1.0 - c.lowlight_dim * s) + c.lowlight_sigma * s * _gaussian(seed, _S_LOWLIGHT, x.shape)
    return _vignette(out, min(1.0, c.lowlight_vignette * s))


def _color_shift_night(x, s, seed, c):
    out = x.copy()
    out[..., 2] += c.night_blue * s
    out[..., 0] -= c.night_red * s
    return out * (1.0 - c.night_dim * s)


KERNELS: Dict[str, Callable] = {
    "FOG": _fog,
    "DUST_STORM": _dust_storm,
    "FROST_COATING": _frost_coating,
    "RAIN": _rain,
    "LENS_DISTORTION": _lens_distortion,
    "BARREL_DISTORTION": _barrel_distortion,
    "FISH_EYE": _fish_eye,
    "LENS_VIGNETTING": _lens_vignetting,
    "CHROMATIC_ABERRATION": _chromatic_aberration,
    "DEAD_PIXELS": _dead_pixels,
    "CAMERA_FAILURE": _camera_failure,
    "CAMERA_BANDING": _camera_banding,
    "SENSOR_HEAT": _sensor_heat,
    "HW_OVERHEAT": _hw_overheat,
    "MOTION_BLUR": _motion_blur,
    "CAMERA_SHAKE": _camera_shake,
    "CAMERA_YAW": _camera_yaw,
    "PERSPECTIVE_DISTORTION": _perspective_distortion,
    "GLARE_OCCLUSION": _glare_occlusion,
    "LOW_LIGHT_TUNNEL": _low_light_tunnel,
    "BRIGHT_REFLECTION": _bright_reflection,
    "COLOR_SHIFT_NIGHT": _color_shift_night,
}


def apply_fault(image: ImageBuffer, spec: DegradationSpec, constants: KernelConstants = CONSTANTS) -> ImageBuffer:
    """Return the degraded frame for ``spec``; same size as ``image``.

    Strength 0 returns the input unchanged for every category.
    """
    check_size(image)
    if spec.strength == 0.0:
        return image
    kernel = KERNELS[spec.category.name]
    out = kernel(image.pixels.astype(np.float64), float(spec.strength), spec.seed, constants)
    return ImageBuffer(_finish(out))


def degradation_magnitude(original: ImageBuffer, degraded: ImageBuffer) -> float:
    """Mean absolute per-channel difference scaled to [0, 1]."""
    if (original.width, original.height) != (degraded.width, degraded.height):
        raise DimensionMismatch(
            f"{original.width}x{original.height} vs {degraded.width}x{degraded.height}"
        )
    diff = np.abs(original.pixels.astype(np.int16) - degraded.pixels.astype(np.int16))
    return float(diff.mean() / 255.0)
