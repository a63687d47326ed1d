"""Procedural 28x28 grayscale digit rendering.

Each digit glyph is sketched as a handful of polylines and elliptic arcs in
a unit box, then rasterised per sample with a random affine jitter
(rotation, scale, translation), point-level wobble, a random stroke width,
and a random brightness.  Strokes are stamped as Gaussian tubes: a pixel's
intensity is ``brightness * exp(-d^2 / (2 sigma^2))`` where ``d`` is its
distance to the nearest stroke point.  The background stays exactly zero.
"""

from __future__ import annotations

import numpy as np

IMAGE_SIZE = 28

_GLYPH_EXTENT = 20.0  # nominal glyph height/width in pixels before jitter


def _line(p0: tuple[float, float], p1: tuple[float, float], n: int = 32) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1.0 - t) * np.asarray(p0) + t * np.asarray(p1)


def _arc(
    center: tuple[float, float],
    radii: tuple[float, float],
    a0: float,
    a1: float,
    n: int = 48,
) -> np.ndarray:
    """Elliptic arc; angle 0 points right and angles increase downward."""
    a = np.linspace(a0, a1, n)
    cx, cy = center
    rx, ry = radii
    return np.column_stack([cx + rx * np.cos(a), cy + ry * np.sin(a)])


_PI = np.pi

# Stroke sketches per digit, in a unit box with y growing downward.
_GLYPHS: dict[int, list[np.ndarray]] = {
    0: [_arc((0.5, 0.5), (0.3, 0.42), 0.0, 2.0 * _PI, 96)],
    1: [_line((0.33, 0.26), (0.55, 0.08), 20), _line((0.55, 0.08), (0.55, 0.92), 48)],
    2: [
        _arc((0.5, 0.32), (0.3, 0.24), -_PI, 0.35, 56),
        _line((0.78, 0.4), (0.2, 0.88), 40),
        _line((0.2, 0.88), (0.82, 0.88), 36),
    ],
    3: [
        _arc((0.42, 0.3), (0.3, 0.21), -2.3, 1.25, 52),
        _arc((0.42, 0.7), (0.32, 0.22), -1.25, 2.3, 52),
    ],
    4: [
        _line((0.58, 0.08), (0.17, 0.55), 40),
        _line((0.17, 0.55), (0.85, 0.55), 40),
        _line((0.63, 0.25), (0.63, 0.92), 44),
    ],
    5: [
        _line((0.75, 0.1), (0.25, 0.1), 32),
        _line((0.25, 0.1), (0.28, 0.46), 28),
        _arc((0.45, 0.67), (0.3, 0.24), -1.9, 1.9, 56),
    ],
    6: [
        _arc((0.78, 0.62), (0.52, 0.55), -1.8, -_PI, 56),
        _arc((0.48, 0.7), (0.22, 0.2), 0.0, 2.0 * _PI, 64),
    ],
    7: [_line((0.18, 0.12), (0.8, 0.12), 36), _line((0.8, 0.12), (0.38, 0.9), 48)],
    8: [
        _arc((0.5, 0.3), (0.22, 0.2), 0.0, 2.0 * _PI, 64),
        _arc((0.5, 0.7), (0.27, 0.23), 0.0, 2.0 * _PI, 72),
    ],
    9: [
        _arc((0.52, 0.32), (0.24, 0.22), 0.0, 2.0 * _PI, 64),
        _line((0.75, 0.36), (0.58, 0.9), 44),
    ],
}

MAX_CLASSES = len(_GLYPHS)


def _glyph_points(digit: int) -> np.ndarray:
    return np.concatenate(_GLYPHS[digit], axis=0)


def _render_one(points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(-0.12, 0.12)
    scale = rng.uniform(0.8, 1.1)
    shift = rng.uniform(-1.5, 1.5, size=2)
    sigma = rng.uniform(0.9, 1.3)
    brightness = rng.uniform(0.75, 1.0)

    centered = (points - 0.5) * (scale * _GLYPH_EXTENT)
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    rot = np.array([[cos_a, -sin_a], [sin_a, cos_a]])
    px = centered @ rot.T + (IMAGE_SIZE - 1) / 2.0 + shift
    px += rng.normal(0.0, 0.15, size=px.shape)

    grid = np.arange(IMAGE_SIZE, dtype=np.float64)
    # pixel (row, col) sits at (x=col, y=row)
    dx = px[:, 0][:, None] - grid[None, :]
    dy = px[:, 1][:, None] - grid[None, :]
    d2 = (
        (dx * dx)[:, None, :]  # (P, 1, W) over columns
        + (dy * dy)[:, :, None]  # (P, H, 1) over rows
    ).min(axis=0)
    canvas = brightness * np.exp(-d2 / (2.0 * sigma * sigma))
    canvas[canvas < 0.02] = 0.0
    return np.round(canvas * 255.0).astype(np.uint8)


def render_digits(
    per_class: int, num_classes: int = 10, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Render ``per_class`` samples of each digit glyph.

    Returns ``(images, labels)`` where ``images`` is uint8 of shape
    ``(num_classes * per_class, 28, 28, 1)`` in class-major order and
    ``labels`` holds the 1-based class ids (digit ``k`` gets label ``k+1``).
    """
    if not 2 <= num_classes <= MAX_CLASSES:
        raise ValueError(f"num_classes must be in 2..{MAX_CLASSES}, got {num_classes}")
    if per_class < 1:
        raise ValueError(f"per_class must be positive, got {per_class}")
    rng = np.random.default_rng(seed)
    images = np.empty((num_classes * per_class, IMAGE_SIZE, IMAGE_SIZE, 1), dtype=np.uint8)
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    row = 0
    for digit in range(num_classes):
        points = _glyph_points(digit)
        for _ in range(per_class):
            images[row, :, :, 0] = _render_one(points, rng)
            labels[row] = digit + 1
            row += 1
    return images, labels
