"""Image error metrics, skew measurement and the rig conditioning study."""

from __future__ import annotations

import math

import numpy as np

from rollsim.geometry import rot_y
from rollsim.numerics import camera_block, condition_number


def mae(a, b, mask=None) -> float:
    diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if mask is not None:
        diff = diff[mask]
    return float(diff.mean()) if diff.size else math.nan


def psnr(a, b, mask=None, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if mask is not None:
        diff = diff[mask]
    mse = float(np.mean(diff**2)) if diff.size else math.nan
    if mse == 0:
        return math.inf
    return 10 * math.log10(peak**2 / mse)


def edge_positions(image, level: float | None = None) -> np.ndarray:
    """Sub-pixel column of the first ``level`` crossing in each row (NaN if none).

    ``level`` defaults to the midpoint of the image's intensity range.
    """
    image = np.asarray(image, dtype=float)
    if level is None:
        level = 0.5 * (image.min() + image.max())
    out = np.full(image.shape[0], np.nan)
    above = image >= level
    for y, row in enumerate(image):
        flips = np.flatnonzero(above[y, 1:] != above[y, :-1])
        if flips.size:
            i = flips[0]
            a, b = row[i], row[i + 1]
            out[y] = i + (level - a) / (b - a)
    return out


def skew_slope(image, rows=None) -> float:
    """Least-squares slope (pixels per row) of the dominant vertical edge."""
    x = edge_positions(image)
    y = np.arange(len(x)) if rows is None else np.asarray(rows)
    ok = np.isfinite(x)
    if ok.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(y[ok], x[ok], 1)
    return float(slope)


def rig_design(n_cameras: int, n_points: int = 5, seed: int = 0, yaw: float = np.pi / 2):
    """Per-camera design blocks for a rig of cameras at the origin.

    Camera ``i`` is yawed by ``i * yaw``; each sees ``n_points`` random points
    in a narrow frustum 4-8 m ahead of it.  Returns the list of (2N, 6)
    blocks in the rig's motion parameters.
    """
    rng = np.random.default_rng(seed)
    blocks = []
    for i in range(n_cameras):
        R = rot_y(i * yaw)
        local = np.column_stack(
            [rng.uniform(-0.5, 0.5, n_points), rng.uniform(-0.5, 0.5, n_points), rng.uniform(4, 8, n_points)]
        )
        world = local @ R  # camera-to-world is R^T
        blocks.append(camera_block(R, np.zeros(3), world))
    return blocks


def conditioning_table(n_points: int = 5, seed: int = 0) -> list[dict]:
    """Condition numbers of single-camera blocks and their orthogonal two-camera stack."""
    blocks = rig_design(2, n_points, seed)
    rows = [{"rig": f"camera_{i}", "rows": len(b), "kappa": condition_number(b)} for i, b in enumerate(blocks)]
    stacked = np.vstack(blocks)
    rows.append({"rig": "two_camera", "rows": len(stacked), "kappa": condition_number(stacked)})
    return rows
