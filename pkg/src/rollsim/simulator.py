"""Rolling-shutter projection, frame synthesis and rectification.

Pixel centres sit at integer coordinates: row ``y`` covers
``[y - 0.5, y + 0.5)``, so a continuous image coordinate belongs to line
``round(coordinate)``.

Every line of a frame is rendered independently; exposure samples are
generated from ``(seed, frame index, line index, sample index)`` only, so a
frame is bit-identical whatever the number of worker threads.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from rollsim.distortion import RadialDistortion, distort, invert_radius
from rollsim.errors import (
    AnchorOutOfRange,
    MultipleSolutions,
    NotImagedThisFrame,
    OutsideValidityWindow,
    OutsideWorkingRadius,
    PointBehindCamera,
)
from rollsim.geometry import Intrinsics, Pose, inverse, project
from rollsim.motion import MotionModel
from rollsim.shutter import ShutterMode, ShutterTiming, row_start_time

log = logging.getLogger(__name__)

NO_DISTORTION = RadialDistortion()


# -- scenes -------------------------------------------------------------------


def bilinear(image: np.ndarray, x, y, fill: float = 0.0):
    """Sample ``image`` at continuous pixel coordinates.

    Returns ``(values, valid)``; coordinates outside ``[0, W-1] x [0, H-1]``
    are invalid and get ``fill`` instead of a clamped value.
    """
    H, W = image.shape
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    valid = (x >= 0) & (x <= W - 1) & (y >= 0) & (y <= H - 1)
    xs = np.where(valid, x, 0.0)
    ys = np.where(valid, y, 0.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bottom = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    out = top * (1 - fy) + bottom * fy
    return np.where(valid, out, fill), valid


@dataclass(frozen=True, eq=False)
class TexturedPlane:
    """Rectangular textured plane.

    ``pose`` maps plane-local coordinates to world coordinates; the plane is
    local ``z = 0`` with local x to the right and y down the texture,
    spanning ``extent = (width, height)`` metres centred on the origin.
    """

    pose: Pose
    extent: tuple[float, float]
    texture: np.ndarray
    background: float = 0.0

    def __post_init__(self):
        tex = np.array(self.texture, dtype=float)
        if tex.ndim != 2:
            raise ValueError("texture must be a 2-D grayscale array")
        if tex.size and (tex.min() < 0 or tex.max() > 1):
            raise ValueError("texture radiance must lie in [0, 1]")
        if not (self.extent[0] > 0 and self.extent[1] > 0):
            raise ValueError("plane extent must be positive")
        tex.setflags(write=False)
        object.__setattr__(self, "texture", tex)

    @property
    def normal(self) -> np.ndarray:
        return self.pose.rotation[:, 2]

    @property
    def origin(self) -> np.ndarray:
        return self.pose.translation

    def shade(self, pose: Pose, rays: np.ndarray, pixels=None, camera=None):
        """Radiance and camera z-depth along camera-space rays ``(x, y, 1)``."""
        C = pose.center
        dirs = rays @ pose.rotation  # R^T d for each row
        n = self.normal
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            s = ((self.origin - C) @ n) / denom
        hit = np.isfinite(s) & (s > 0)
        s = np.where(hit, s, 0.0)
        local = (C + s[:, None] * dirs - self.origin) @ self.pose.rotation
        w, h = self.extent
        inside = hit & (np.abs(local[:, 0]) <= w / 2) & (np.abs(local[:, 1]) <= h / 2)
        Ht, Wt = self.texture.shape
        u = np.clip((local[:, 0] / w + 0.5) * Wt - 0.5, 0, Wt - 1)
        v = np.clip((local[:, 1] / h + 0.5) * Ht - 0.5, 0, Ht - 1)
        values, _ = bilinear(self.texture, u, v)
        radiance = np.where(inside, values, self.background)
        depth = np.where(inside, s, np.inf)
        return radiance, depth


@dataclass(frozen=True, eq=False)
class PointSet:
    """Points splatted to their nearest pixel; the nearest point wins."""

    points: np.ndarray
    radiance: np.ndarray
    background: float = 0.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        rad = np.array(self.radiance, dtype=float).reshape(-1)
        if len(rad) != len(pts):
            raise ValueError("need one radiance value per point")
        if rad.size and (rad.min() < 0 or rad.max() > 1):
            raise ValueError("radiance must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radiance", rad)

    def shade(self, pose: Pose, rays: np.ndarray, pixels: np.ndarray, camera: Camera):
        out = np.full(len(pixels), self.background)
        depth = np.full(len(pixels), np.inf)
        if not len(self.points):
            return out, depth
        Xc = pose.apply(self.points)
        z = Xc[:, 2]
        front = z > 0
        n = Xc[front, :2] / z[front, None]
        inside = np.sum(n * n, axis=1) <= camera.distortion.r_max**2
        n = n[inside]
        z = z[front][inside]
        rad = self.radiance[front][inside]
        q = np.rint(camera.K.to_pixel(distort(camera.distortion, n))).astype(np.int64)
        stride = camera.width + 1
        keys = q[:, 1] * stride + q[:, 0]
        order = np.lexsort((z, keys))
        keys, first = np.unique(keys[order], return_index=True)
        winners = order[first]
        want = pixels[:, 1].astype(np.int64) * stride + pixels[:, 0].astype(np.int64)
        pos = np.searchsorted(keys, want)
        pos_c = np.minimum(pos, len(keys) - 1)
        found = (pos < len(keys)) & (keys[pos_c] == want)
        out[found] = rad[winners[pos_c[found]]]
        depth[found] = z[winners[pos_c[found]]]
        return out, depth


@dataclass(frozen=True, eq=False)
class Procedural:
    """Radiance from a pure function of ray origin (3,) and world directions (N, 3)."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def shade(self, pose: Pose, rays: np.ndarray, pixels=None, camera=None):
        dirs = rays @ pose.rotation
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        radiance = np.clip(np.asarray(self.fn(pose.center, dirs), dtype=float), 0.0, 1.0)
        return radiance, np.full(len(rays), np.inf)


def direction_pattern(lon_freq: float = 12.0, lat_freq: float = 9.0) -> Callable:
    """Smooth environment pattern depending on view direction only."""

    def fn(origin, dirs):
        lon = np.arctan2(dirs[:, 0], dirs[:, 2])
        lat = np.arcsin(np.clip(dirs[:, 1], -1, 1))
        return 0.5 + 0.25 * np.sin(lon_freq * lon) * np.cos(lat_freq * lat) + 0.2 * np.sin(
            0.5 * lon_freq * lon + 0.7 * lat_freq * lat
        )

    return fn


def direction_checker(lon_cells: int = 24, lat_cells: int = 12) -> Callable:
    def fn(origin, dirs):
        lon = np.arctan2(dirs[:, 0], dirs[:, 2])
        lat = np.arcsin(np.clip(dirs[:, 1], -1, 1))
        a = np.floor(lon / (2 * np.pi) * lon_cells)
        b = np.floor(lat / np.pi * lat_cells)
        return np.where((a + b) % 2 == 0, 0.8, 0.2)

    return fn


PROCEDURALS = {"direction_pattern": direction_pattern, "direction_checker": direction_checker}


# -- camera and frames ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Camera:
    K: Intrinsics
    width: int
    height: int
    distortion: RadialDistortion = NO_DISTORTION

    def pixel_grid(self) -> np.ndarray:
        """(H, W, 2) integer pixel coordinates ``(x, y)``."""
        ys, xs = np.mgrid[0 : self.height, 0 : self.width]
        return np.stack([xs, ys], axis=-1)

    def rays(self) -> np.ndarray:
        """(H, W, 3) camera-space rays ``(x, y, 1)`` through pixel centres.

        Pixels whose distorted radius lies outside the image of the working
        disk get NaN rays.
        """
        nd = self.K.to_normalized(self.pixel_grid().astype(float))
        if self.distortion.is_identity:
            nu = nd
        else:
            rho = np.sqrt(np.sum(nd * nd, axis=-1))
            r, ok = invert_radius(self.distortion, rho)
            scale = np.divide(r, rho, out=np.ones_like(rho), where=rho > 0)
            nu = np.where(ok[..., None], nd * scale[..., None], np.nan)
        return np.concatenate([nu, np.ones(nu.shape[:-1] + (1,))], axis=-1)


@dataclass(eq=False)
class Frame:
    """Image plus per-line capture metadata.

    ``row_times`` and ``row_poses`` are indexed by physical scan line: rows
    for vertical sweeps, columns for horizontal ones.  ``row_poses`` rows are
    the 12-number pose serialization.
    """

    image: np.ndarray
    row_times: np.ndarray
    row_poses: np.ndarray | None = None
    timing: ShutterTiming | None = None
    fi: int = 0
    tau0: float = 0.0
    valid: np.ndarray | None = None
    depth: np.ndarray | None = None

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def pose(self, line: int) -> Pose:
        return Pose.from_row(self.row_poses[line])


def _line_pixels(t: ShutterTiming, camera: Camera, line: int) -> np.ndarray:
    if t.scans_columns:
        ys = np.arange(camera.height)
        return np.stack([np.full_like(ys, line), ys], axis=1)
    xs = np.arange(camera.width)
    return np.stack([xs, np.full_like(xs, line)], axis=1)


def _check_lines(t: ShutterTiming, camera: Camera):
    n = camera.width if t.scans_columns else camera.height
    if n != t.height:
        raise ValueError(f"timing has {t.height} lines but the image has {n} along the sweep")


def exposure_sample_times(
    start: float, te: float, n: int, seed: int | None = None, fi: int = 0, line: int = 0
) -> np.ndarray:
    """Stratified sample times in ``[start, start + te)``; the first stratum starts at ``start``.

    Without a seed the samples sit at the left edge of each stratum, so a
    single sample is the exposure start.  With a seed each sample is jittered
    within its stratum by a generator keyed on ``(seed, fi, line)``.
    """
    if n < 1:
        raise ValueError("exposure_samples must be >= 1")
    k = np.arange(n, dtype=float)
    if seed is not None and n > 1:
        k = k + np.random.default_rng([seed, fi, line]).random(n)
    return start + float(te) * k / n


def _apply_fcam(x: np.ndarray, gamma: float | None) -> np.ndarray:
    if gamma is None:
        return x
    return np.clip(x, 0.0, 1.0) ** (1.0 / gamma)


def synthesize_rs_frame(
    scene,
    m: MotionModel,
    K: Intrinsics,
    d: RadialDistortion | None,
    t: ShutterTiming,
    tau0: float = 0.0,
    fi: int = 0,
    exposure_samples: int = 1,
    *,
    width: int,
    image_height: int | None = None,
    gamma: float | None = None,
    seed: int | None = None,
    threads: int = 1,
    with_depth: bool = False,
    rays: np.ndarray | None = None,
) -> Frame:
    """Render one frame, each line integrating over its own exposure window.

    Line ``y`` averages ``exposure_samples`` renders at poses sampled in
    ``[t_y, t_y + te]`` with ``t_y = row_start_time(t, tau0, y, fi)``; the
    camera response (identity, or ``gamma``) is applied to the mean.  A
    :attr:`ShutterMode.GLOBAL` timing renders a global-shutter frame.
    """
    d = d or NO_DISTORTION
    if image_height is None:
        if t.scans_columns:
            raise ValueError("image_height is required for column sweeps")
        image_height = t.height
    camera = Camera(K, width, image_height, d)
    _check_lines(t, camera)
    if rays is None:
        rays = camera.rays()
    n_lines = t.height

    def render_line(line):
        start = float(row_start_time(t, tau0, line, fi))
        pixels = _line_pixels(t, camera, line)
        line_rays = rays[pixels[:, 1], pixels[:, 0]]
        ok = np.all(np.isfinite(line_rays), axis=1)
        safe = np.where(ok[:, None], line_rays, [0.0, 0.0, 1.0])
        acc = np.zeros(len(pixels))
        depth0 = None
        pose0 = None
        for s in exposure_sample_times(start, t.te, exposure_samples, seed, fi, line):
            pose = m.pose_at(s)
            radiance, depth = scene.shade(pose, safe, pixels, camera)
            acc = acc + np.where(ok, radiance, 0.0)
            if pose0 is None:
                pose0, depth0 = pose, np.where(ok, depth, np.inf)
        values = _apply_fcam(acc / exposure_samples, gamma)
        return start, pose0.to_row(), values, depth0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(render_line, range(n_lines)))
    else:
        results = [render_line(line) for line in range(n_lines)]

    image = np.zeros((image_height, width))
    depth = np.full((image_height, width), np.inf) if with_depth else None
    for line, (_, _, values, dep) in enumerate(results):
        if t.scans_columns:
            image[:, line] = values
            if with_depth:
                depth[:, line] = dep
        else:
            image[line] = values
            if with_depth:
                depth[line] = dep
    return Frame(
        image=image,
        row_times=np.array([r[0] for r in results]),
        row_poses=np.array([r[1] for r in results]),
        timing=t,
        fi=fi,
        tau0=tau0,
        depth=depth,
    )


def render_gs_frame(
    scene,
    m: MotionModel,
    K: Intrinsics,
    d: RadialDistortion | None,
    t: ShutterTiming,
    tau0: float = 0.0,
    fi: int = 0,
    exposure_samples: int = 1,
    *,
    anchor_row: int = 0,
    **kwargs,
) -> Frame:
    """Global-shutter oracle: every line exposed together at the anchor line's start time."""
    if not 0 <= anchor_row < t.height:
        raise AnchorOutOfRange(f"anchor row {anchor_row} outside [0, {t.height})")
    shift = float(row_start_time(t, 0.0, anchor_row, 0))
    return synthesize_rs_frame(
        scene, m, K, d, t.with_mode(ShutterMode.GLOBAL), tau0 + shift, fi, exposure_samples, **kwargs
    )


# -- rolling-shutter point projection --------------------------------------------


def _line_time(t: ShutterTiming, tau0: float, fi: int, coord: float) -> float:
    """Continuous-line version of :func:`row_start_time`."""
    if t.mode is ShutterMode.GLOBAL:
        return tau0 + fi * float(t.frame_period)
    return tau0 + float(t.scan_index(coord)) * float(t.tr) + fi * float(t.frame_period)


def rs_project_point(
    X,
    m: MotionModel,
    K: Intrinsics,
    d: RadialDistortion | None,
    t: ShutterTiming,
    tau0: float = 0.0,
    fi: int = 0,
    tol: float | None = None,
    *,
    width: int | None = None,
    all_roots: bool = False,
    check_multiple: bool = True,
    max_iter: int = 50,
):
    """Pixel and capture time of a world point seen by a moving rolling-shutter camera.

    Solves ``t* = row_start_time(line(p(t*)))`` where ``p(t)`` projects ``X``
    with the pose at ``t``.  A fixed-point iteration on the line index runs
    first; if it cycles, bisection on the continuous residual
    ``g(t) = line_time(coord(p(t))) - t`` brackets the root, which is then
    snapped to the exposing line.  With ``check_multiple`` every line is
    tested and more than one solution raises :class:`MultipleSolutions`
    (or, with ``all_roots``, all ``(pixel, time)`` pairs are returned).
    """
    d = d or NO_DISTORTION
    X = np.asarray(X, dtype=float)
    if tol is None:
        tol = float(t.tr) / 100 if t.tr else 1e-9
    n_lines = t.height
    axis = 0 if t.scans_columns else 1

    def pixel_at(time):
        try:
            return project(m.pose_at(time), K, X, d)
        except (PointBehindCamera, OutsideWorkingRadius, OutsideValidityWindow):
            return None

    def on_sensor(p):
        if p is None:
            return False
        c = p[axis]
        if not -0.5 <= c < n_lines - 0.5:
            return False
        if width is not None:
            other = p[1 - axis]
            return -0.5 <= other < width - 0.5
        return True

    def line_of(p):
        return int(np.floor(p[axis] + 0.5))

    def solution_at(line):
        time = _line_time(t, tau0, fi, line)
        p = pixel_at(time)
        if on_sensor(p) and line_of(p) == line:
            return p, time
        return None

    if t.mode is ShutterMode.GLOBAL:
        time = _line_time(t, tau0, fi, 0)
        p = pixel_at(time)
        if not on_sensor(p):
            raise NotImagedThisFrame("point not on the sensor during the exposure")
        return [(p, time)] if all_roots else (p, time)

    found = _fixed_point(
        lambda line: _line_time(t, tau0, fi, line), pixel_at, on_sensor, line_of, n_lines, max_iter
    )
    if found is None:
        found = _bisect_line(t, tau0, fi, pixel_at, axis, solution_at, n_lines, tol)

    if check_multiple or all_roots:
        roots = [s for s in map(solution_at, range(n_lines)) if s is not None]
        if len(roots) > 1:
            if all_roots:
                return roots
            raise MultipleSolutions(roots)
        if roots and found is None:
            found = roots[0]
    if found is None:
        raise NotImagedThisFrame("no line of this frame images the point")
    return [found] if all_roots else found


def _fixed_point(time_of_line, pixel_at, on_sensor, line_of, n_lines, max_iter):
    """Iterate ``line <- line_of(p(time_of_line(line)))`` from the middle line."""
    line = n_lines // 2
    seen = set()
    for _ in range(max_iter):
        time = time_of_line(line)
        p = pixel_at(time)
        if p is None:
            return None
        nxt = line_of(p)
        if nxt == line:
            return (p, time) if on_sensor(p) else None
        seen.add(line)
        nxt = min(max(nxt, 0), n_lines - 1)
        if nxt in seen:
            return None
        line = nxt
    return None


def _bisect_line(t, tau0, fi, pixel_at, axis, solution_at, n_lines, tol):
    lo_t = _line_time(t, tau0, fi, 0)
    hi_t = _line_time(t, tau0, fi, n_lines - 1)
    if hi_t < lo_t:
        lo_t, hi_t = hi_t, lo_t

    def g(time):
        p = pixel_at(time)
        if p is None:
            return math.nan
        return _line_time(t, tau0, fi, p[axis]) - time

    grid = np.linspace(lo_t, hi_t, 65)
    vals = [g(s) for s in grid]
    for a, b, ga, gb in zip(grid, grid[1:], vals, vals[1:]):
        if not (np.isfinite(ga) and np.isfinite(gb)) or ga * gb > 0:
            continue
        while b - a > tol:
            mid = 0.5 * (a + b)
            gm = g(mid)
            if not np.isfinite(gm):
                break
            if ga * gm <= 0:
                b, gb = mid, gm
            else:
                a, ga = mid, gm
        p = pixel_at(0.5 * (a + b))
        if p is None:
            continue
        guess = int(np.floor(p[axis] + 0.5))
        for line in (guess, guess - 1, guess + 1):
            if 0 <= line < n_lines:
                sol = solution_at(line)
                if sol is not None:
                    return sol
    return None


# -- rectification ---------------------------------------------------------------


def _anchor_time(frame: Frame, t: ShutterTiming, anchor_row: int) -> float:
    if not 0 <= anchor_row < t.height:
        raise AnchorOutOfRange(f"anchor row {anchor_row} outside [0, {t.height})")
    if len(frame.row_times) != t.height:
        raise ValueError(f"frame carries {len(frame.row_times)} line times, timing has {t.height}")
    return float(frame.row_times[anchor_row])


def _rectified_frame(frame, image, valid, m, t_anchor, t):
    pose = m.pose_at(t_anchor).to_row()
    return Frame(
        image=image,
        row_times=np.full(t.height, t_anchor),
        row_poses=np.tile(pose, (t.height, 1)),
        timing=frame.timing,
        fi=frame.fi,
        tau0=frame.tau0,
        valid=valid,
    )


def rotation_warp(
    frame: Frame,
    m: MotionModel,
    K: Intrinsics,
    t: ShutterTiming,
    anchor_row: int,
    d: RadialDistortion | None = None,
    *,
    redistort: bool = True,
    iterations: int = 20,
):
    """Source coordinates in ``frame`` for every pixel of the anchor-pose view.

    Line ``y`` of the rolling-shutter frame relates to the anchor view by the
    homography ``K R(t_anchor) R(t_y)^-1 K^-1``.  For each output pixel the
    source line is found by iterating ``y <- line(H(y)^-1 q)``.  Distortion is
    removed from the output pixel first when ``redistort`` is set and is
    always applied to the source coordinates.

    Returns ``(x, y, valid)`` arrays of the frame's shape.
    """
    d = d or NO_DISTORTION
    t_anchor = _anchor_time(frame, t, anchor_row)
    R_a = m.pose_at(t_anchor).rotation
    n_lines = t.height
    rel = np.empty((n_lines, 3, 3))
    ident = np.zeros(n_lines, dtype=bool)
    for y in range(n_lines):
        R_y = m.pose_at(float(frame.row_times[y])).rotation
        if y == anchor_row or np.array_equal(R_y, R_a):
            rel[y] = np.eye(3)
            ident[y] = True
        else:
            rel[y] = R_y @ R_a.T

    H, W = frame.image.shape
    axis = 0 if t.scans_columns else 1
    camera = Camera(K, W, H, d if redistort else NO_DISTORTION)
    q = camera.pixel_grid().astype(float)
    rays = camera.rays()
    ok_ray = np.all(np.isfinite(rays), axis=-1)
    rays = np.where(ok_ray[..., None], rays, [0.0, 0.0, 1.0])

    line = np.clip(np.rint(q[..., axis]).astype(int), 0, n_lines - 1)
    p = q.copy()
    good = ok_ray.copy()
    for _ in range(iterations):
        r = np.einsum("...ij,...j->...i", rel[line], rays)
        front = r[..., 2] > 0
        z = np.where(front, r[..., 2], 1.0)
        n = r[..., :2] / z[..., None]
        r2 = np.sum(n * n, axis=-1)
        inside = r2 <= d.r_max**2
        nd = n * d.factor(np.where(inside, r2, 0.0))[..., None]
        p = np.where(ident[line][..., None], q, K.to_pixel(nd))
        good = ok_ray & (ident[line] | (front & inside))
        new_line = np.clip(np.rint(p[..., axis]).astype(int), 0, n_lines - 1)
        if np.array_equal(new_line, line):
            break
        line = np.where(good, new_line, line)
    good &= np.abs(p[..., axis] - line) <= 1.0
    return p[..., 0], p[..., 1], good


def rectify_rotation_only(
    frame: Frame,
    m: MotionModel,
    K: Intrinsics,
    t: ShutterTiming,
    anchor_row: int,
    d: RadialDistortion | None = None,
    *,
    redistort: bool = True,
) -> Frame:
    """Warp every line to the anchor line's pose with per-line rotation homographies.

    Exact for a camera rotating about its centre; sources falling outside the
    frame are marked invalid on the returned frame rather than clamped.
    """
    if not m.rotation_only:
        raise ValueError("rectify_rotation_only needs a motion model with constant translation")
    x, y, good = rotation_warp(frame, m, K, t, anchor_row, d, redistort=redistort)
    values, inside = bilinear(frame.image, x, y)
    valid = good & inside
    image = np.where(valid, values, 0.0)
    return _rectified_frame(frame, image, valid, m, _anchor_time(frame, t, anchor_row), t)


def depth_warp(
    frame: Frame,
    m: MotionModel,
    K: Intrinsics,
    t: ShutterTiming,
    depth: np.ndarray,
    anchor_row: int,
    d: RadialDistortion | None = None,
):
    """Where each source pixel lands in the anchor view, given its capture depth.

    Returns ``(x, y, z, ok)``: target coordinates, camera z-depth at the
    anchor pose, and a mask of pixels with usable depth.
    """
    d = d or NO_DISTORTION
    t_anchor = _anchor_time(frame, t, anchor_row)
    depth = np.asarray(depth, dtype=float)
    H, W = frame.image.shape
    if depth.shape != (H, W):
        raise ValueError(f"depth map shape {depth.shape} does not match frame {(H, W)}")
    P_a = m.pose_at(t_anchor)
    camera = Camera(K, W, H, d)
    grid = camera.pixel_grid()
    rays = camera.rays()
    has_depth = np.isfinite(depth) & (depth > 0) & np.all(np.isfinite(rays), axis=-1)

    qx = np.full((H, W), np.nan)
    qy = np.full((H, W), np.nan)
    qz = np.full((H, W), np.nan)
    ok = np.zeros((H, W), dtype=bool)
    for line in range(t.height):
        P_y = m.pose_at(float(frame.row_times[line]))
        sel = (slice(None), line) if t.scans_columns else (line, slice(None))
        src = grid[sel]
        dep = np.where(has_depth[sel], depth[sel], 1.0)
        if np.array_equal(P_y.rotation, P_a.rotation) and np.array_equal(
            P_y.translation, P_a.translation
        ):
            qx[sel], qy[sel], qz[sel] = src[:, 0], src[:, 1], dep
            ok[sel] = has_depth[sel]
            continue
        Xc = rays[sel] * dep[:, None]
        Xa = P_a.apply(inverse(P_y).apply(Xc))
        front = Xa[:, 2] > 0
        z = np.where(front, Xa[:, 2], 1.0)
        n = Xa[:, :2] / z[:, None]
        r2 = np.sum(n * n, axis=1)
        inside = r2 <= d.r_max**2
        pix = K.to_pixel(n * d.factor(np.where(inside, r2, 0.0))[:, None])
        qx[sel], qy[sel], qz[sel] = pix[:, 0], pix[:, 1], Xa[:, 2]
        ok[sel] = has_depth[sel] & front & inside
    return qx, qy, qz, ok


def rectify_known_depth(
    frame: Frame,
    m: MotionModel,
    K: Intrinsics,
    t: ShutterTiming,
    depth: np.ndarray,
    anchor_row: int,
    d: RadialDistortion | None = None,
) -> Frame:
    """Forward-splat every pixel to the anchor pose using its depth.

    Each source pixel lands on the nearest target pixel; where several land
    on the same target the one nearest the anchor camera wins.  Targets that
    receive nothing are flagged in the returned frame's ``valid`` mask.
    """
    qx, qy, qz, ok = depth_warp(frame, m, K, t, depth, anchor_row, d)
    H, W = frame.image.shape
    tx = np.rint(np.where(ok, qx, -1)).astype(np.int64)
    ty = np.rint(np.where(ok, qy, -1)).astype(np.int64)
    use = ok & (tx >= 0) & (tx < W) & (ty >= 0) & (ty < H)
    keys = (ty * W + tx)[use]
    z = qz[use]
    values = frame.image[use]
    order = np.lexsort((z, keys))
    keys, first = np.unique(keys[order], return_index=True)
    winners = order[first]
    image = np.zeros(H * W)
    valid = np.zeros(H * W, dtype=bool)
    zbuf = np.full(H * W, np.inf)
    image[keys] = values[winners]
    valid[keys] = True
    zbuf[keys] = z[winners]
    out = _rectified_frame(
        frame, image.reshape(H, W), valid.reshape(H, W), m, _anchor_time(frame, t, anchor_row), t
    )
    out.depth = zbuf.reshape(H, W)
    return out


# -- flashing illuminant -------------------------------------------------------------


@dataclass(frozen=True)
class FlashingLight:
    """Periodic illuminant seen directly by a lensless sensor."""

    frequency: float
    waveform: str = "sine"
    duty: float = 0.5
    low: float = 0.2
    high: float = 0.8
    phase: float = 0.0  # in cycles

    def __post_init__(self):
        if self.waveform not in ("sine", "square"):
            raise ValueError("waveform must be 'sine' or 'square'")
        if not self.frequency > 0:
            raise ValueError("flash frequency must be positive")
        if not 0 <= self.low <= self.high <= 1:
            raise ValueError("need 0 <= low <= high <= 1")

    def __call__(self, time):
        cycles = np.asarray(time, dtype=float) * self.frequency + self.phase
        if self.waveform == "sine":
            level = 0.5 + 0.5 * np.cos(2 * np.pi * cycles)
        else:
            level = (np.mod(cycles, 1.0) < self.duty).astype(float)
        return self.low + (self.high - self.low) * level


def synthesize_flash_frames(
    light: Callable,
    t: ShutterTiming,
    width: int,
    n_frames: int = 2,
    tau0: float = 0.0,
    exposure_samples: int = 16,
    *,
    seed: int | None = None,
    noise_sigma: float = 0.0,
    noise_seed: int = 0,
) -> list[Frame]:
    """Frames of a uniformly lit sensor under a time-varying illuminant.

    Each row averages ``light`` over its exposure with the same sampling as
    :func:`synthesize_rs_frame`, producing the horizontal banding used for
    line-rate calibration.  ``noise_sigma`` adds Gaussian pixel noise drawn
    from a generator keyed on ``(noise_seed, frame index)``.
    """
    if t.scans_columns:
        raise ValueError("flash banding synthesis supports row sweeps only")
    frames = []
    for fi in range(n_frames):
        starts = [float(row_start_time(t, tau0, y, fi)) for y in range(t.height)]
        rows = np.array(
            [
                float(np.mean(light(exposure_sample_times(s, t.te, exposure_samples, seed, fi, y))))
                for y, s in enumerate(starts)
            ]
        )
        image = np.repeat(rows[:, None], width, axis=1)
        if noise_sigma > 0:
            rng = np.random.default_rng([noise_seed, fi])
            image = image + rng.normal(0.0, noise_sigma, image.shape)
        frames.append(Frame(image=image, row_times=np.array(starts), timing=t, fi=fi, tau0=tau0))
    return frames
