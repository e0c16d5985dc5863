"""Experiment configuration: YAML (or JSON) documents validated into module objects.

Every block is checked against its constructor's invariants before any work
starts; unknown keys are rejected.  Errors carry a dotted field path, e.g.
``timing.tr_s``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from rollsim.distortion import RadialDistortion
from rollsim.errors import ConfigError, InvalidDistortion, RollsimError
from rollsim.geometry import Intrinsics, Pose, so3_exp
from rollsim.motion import (
    PiecewiseLinearKeyframes,
    PolynomialPerDof,
    RotationConstAngVel,
    Static,
    TranslationConstAccel,
    UNBOUNDED,
    TranslationConstVel,
    frame_window,
)
from rollsim.shutter import SOLVE, ShutterTiming, complete_timing
from rollsim.simulator import PROCEDURALS, FlashingLight, PointSet, Procedural, TexturedPlane

TOP_LEVEL = {
    "seed",
    "threads",
    "width",
    "image_height",
    "frames",
    "tau0",
    "exposure_samples",
    "jitter",
    "gamma",
    "anchor_row",
    "intrinsics",
    "distortion",
    "timing",
    "motion",
    "scene",
    "output",
    "analysis",
    "calibration",
}


class _Block:
    """Dict wrapper that tracks the path and which keys were consumed."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", f"expected a mapping, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.used = set()

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data

    def get(self, key, default=None, kind=None, required=False):
        if key not in self.data:
            if required:
                raise ConfigError(self._p(key), "required field missing")
            return default
        self.used.add(key)
        value = self.data[key]
        if kind is not None and value is not None:
            value = self._coerce(key, value, kind)
        return value

    def _coerce(self, key, value, kind):
        try:
            if kind is float:
                if isinstance(value, bool):
                    raise TypeError
                return float(value)
            if kind is int:
                if isinstance(value, bool) or int(value) != value:
                    raise TypeError
                return int(value)
            if kind is bool:
                if not isinstance(value, bool):
                    raise TypeError
                return value
            if kind == "vec3":
                v = np.asarray(value, dtype=float)
                if v.shape != (3,):
                    raise TypeError
                return v
            if kind == "floats":
                return [float(v) for v in value]
            if kind is str:
                if not isinstance(value, str):
                    raise TypeError
                return value
        except (TypeError, ValueError):
            name = kind if isinstance(kind, str) else kind.__name__
            raise ConfigError(self._p(key), f"expected {name}, got {value!r}") from None
        return value

    def block(self, key, required=False):
        raw = self.get(key, required=required)
        if raw is None:
            return None
        return _Block(raw, self._p(key))

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(self._p(extra[0]), "unknown key")


def _guard(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError, InvalidDistortion, RollsimError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_pose(value, path) -> Pose:
    """12 numbers (rotation row-major then translation) or a mapping with
    ``axis_angle`` and one of ``translation`` / ``center``."""
    if isinstance(value, dict):
        b = _Block(value, path)
        w = b.get("axis_angle", [0.0, 0.0, 0.0], "vec3")
        R = so3_exp(w)
        if b.has("center") and b.has("translation"):
            raise ConfigError(path, "give either center or translation, not both")
        if b.has("center"):
            pose = _guard(path, Pose.from_center, R, b.get("center", kind="vec3"))
        else:
            pose = _guard(path, Pose, R, b.get("translation", [0.0, 0.0, 0.0], "vec3"))
        b.finish()
        return pose
    values = np.asarray(value, dtype=float).reshape(-1) if isinstance(value, list) else None
    if values is None or values.size != 12:
        raise ConfigError(path, "pose must be 12 numbers or a mapping")
    return _guard(path, Pose.from_row, values)


def parse_intrinsics(b: _Block) -> Intrinsics:
    K = _guard(
        b.path,
        Intrinsics,
        fx=b.get("fx", kind=float, required=True),
        fy=b.get("fy", kind=float, required=True),
        cx=b.get("cx", kind=float, required=True),
        cy=b.get("cy", kind=float, required=True),
        s=b.get("s", 0.0, float),
    )
    b.finish()
    return K


def parse_distortion(b: _Block | None) -> RadialDistortion:
    if b is None:
        return RadialDistortion()
    k = b.get("radial_k", [], "floats")
    d = _guard(
        b.path,
        RadialDistortion,
        tuple(k),
        r_max=b.get("r_max", 1.0, float),
        max_order=b.get("max_order", max(3, len(k)), int),
    )
    b.finish()
    return d


def _timing_value(b: _Block, key):
    value = b.get(key, required=True)
    if isinstance(value, str):
        if value != SOLVE:
            raise ConfigError(b._p(key), f"expected a number or '{SOLVE}', got {value!r}")
        return SOLVE
    return b._coerce(key, value, float)


def parse_timing(b: _Block) -> ShutterTiming:
    values = {k: _timing_value(b, f"{k}_s") for k in ("te", "tr", "tf")}
    values["fps"] = _timing_value(b, "fps")
    height = b.get("height", kind=int, required=True)
    mode = b.get("mode", "rolling", str)
    sweep = b.get("sweep", "down", str)
    b.finish()
    for k, v in values.items():
        if v != SOLVE and v < 0:
            key = k if k == "fps" else f"{k}_s"
            raise ConfigError(f"{b.path}.{key}", f"must be non-negative, got {v}")
    if any(v == SOLVE for v in values.values()):
        return _guard(b.path, complete_timing, height=height, mode=mode, sweep=sweep, **values)
    return _guard(b.path, ShutterTiming, height=height, mode=mode, sweep=sweep, **values)


def parse_motion(b: _Block | None, default_window):
    if default_window is None:
        default_window = UNBOUNDED
    if b is None:
        return Static(Pose(), window=default_window)
    kind = b.get("type", required=True)
    window = b.get("window", default_window)
    if window is not None:
        window = tuple(b._coerce("window", window, "floats"))
        if len(window) != 2:
            raise ConfigError(b._p("window"), "window needs [start, end]")
    t0 = b.get("t0", 0.0, float)
    pose = parse_pose(b.get("pose", [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]), b._p("pose"))
    common = {"window": window, "t0": t0}
    if kind == "static":
        m = _guard(b.path, Static, pose, **common)
    elif kind == "translation_const_vel":
        m = _guard(
            b.path, TranslationConstVel, pose.rotation, pose.translation, b.get("velocity", kind="vec3", required=True), **common
        )
    elif kind == "translation_const_accel":
        m = _guard(
            b.path,
            TranslationConstAccel,
            pose.rotation,
            pose.translation,
            b.get("velocity", [0, 0, 0], "vec3"),
            b.get("acceleration", kind="vec3", required=True),
            **common,
        )
    elif kind == "rotation_const_ang_vel":
        m = _guard(
            b.path, RotationConstAngVel, pose.rotation, pose.translation, b.get("omega", kind="vec3", required=True), **common
        )
    elif kind == "polynomial":
        coeffs = b.get("coefficients", required=True)
        m = _guard(b.path, PolynomialPerDof, coeffs, pose.rotation, **common)
    elif kind == "keyframes":
        if b.has("csv"):
            from rollsim.io import read_keyframes_csv

            m = _guard(b.path, read_keyframes_csv, b.get("csv", kind=str), b.get("window"))
        else:
            keys = b.get("keys", required=True)
            times = [k[0] for k in keys]
            poses = [parse_pose(list(k[1:]), f"{b.path}.keys[{i}]") for i, k in enumerate(keys)]
            m = _guard(b.path, PiecewiseLinearKeyframes, times, poses, b.get("window"))
    else:
        raise ConfigError(b._p("type"), f"unknown motion type {kind!r}")
    b.finish()
    return m


def make_texture(b: _Block, seed: int) -> np.ndarray:
    kind = b.get("kind", "random", str)
    if kind == "file":
        from rollsim.io import read_image

        tex, _ = _guard(b._p("path"), read_image, b.get("path", kind=str, required=True))
    else:
        size = b.get("size", [64, 64])
        try:
            rows, cols = (int(v) for v in size)
        except (TypeError, ValueError):
            raise ConfigError(b._p("size"), "size needs [rows, cols]") from None
        lo, hi = b.get("low", 0.2, float), b.get("high", 0.8, float)
        if kind == "random":
            rng = np.random.default_rng(b.get("seed", seed, int))
            tex = lo + (hi - lo) * rng.random((rows, cols))
        elif kind == "edge":
            tex = np.where(np.arange(cols)[None, :] < cols // 2, lo, hi) * np.ones((rows, 1))
        elif kind == "stripes":
            period = b.get("period", 8, int)
            tex = np.where((np.arange(cols)[None, :] // (period // 2)) % 2 == 0, lo, hi) * np.ones((rows, 1))
        elif kind == "checker":
            cell = b.get("cell", 8, int)
            yy, xx = np.mgrid[0:rows, 0:cols]
            tex = np.where(((yy // cell) + (xx // cell)) % 2 == 0, lo, hi)
        else:
            raise ConfigError(b._p("kind"), f"unknown texture kind {kind!r}")
    b.finish()
    return np.asarray(tex, dtype=float)


def parse_scene(b: _Block | None, seed: int):
    if b is None:
        raise ConfigError("scene", "required block missing")
    kind = b.get("type", required=True)
    if kind == "textured_plane":
        pose = parse_pose(b.get("pose", required=True), b._p("pose"))
        extent = b.get("extent", required=True)
        tb = b.block("texture") or _Block({}, b._p("texture"))
        scene = _guard(b.path, TexturedPlane, pose, tuple(float(v) for v in extent), make_texture(tb, seed))
    elif kind == "point_set":
        if b.has("points"):
            pts = np.asarray(b.get("points"), dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 4:
                raise ConfigError(b._p("points"), "points need rows of x, y, z, radiance")
            scene = _guard(b.path, PointSet, pts[:, :3], pts[:, 3])
        else:
            rb = b.block("random", required=True)
            rng = np.random.default_rng(rb.get("seed", seed, int))
            n = rb.get("n", 500, int)
            lo = np.asarray(rb.get("box_min", [-2, -2, 4], "vec3"))
            hi = np.asarray(rb.get("box_max", [2, 2, 8], "vec3"))
            rb.finish()
            scene = PointSet(rng.uniform(lo, hi, (n, 3)), rng.uniform(0.2, 1.0, n))
    elif kind == "procedural":
        name = b.get("name", "direction_pattern", str)
        if name not in PROCEDURALS:
            raise ConfigError(b._p("name"), f"unknown procedural {name!r}; choose from {sorted(PROCEDURALS)}")
        params = b.get("params", {}) or {}
        scene = Procedural(_guard(b._p("params"), PROCEDURALS[name], **params))
    else:
        raise ConfigError(b._p("type"), f"unknown scene type {kind!r}")
    b.finish()
    return scene


@dataclass
class OutputConfig:
    format: str = "png"
    bit_depth: int = 8
    ground_truth: bool = False
    depth: bool = False


@dataclass
class ExperimentConfig:
    raw: dict
    seed: int = 0
    threads: int = 1
    width: int = 320
    image_height: int | None = None
    frames: int = 1
    tau0: float = 0.0
    exposure_samples: int = 1
    jitter: bool = False
    gamma: float | None = None
    anchor_row: int | None = None
    intrinsics: Intrinsics | None = None
    distortion: RadialDistortion = field(default_factory=RadialDistortion)
    timing: ShutterTiming | None = None
    motion: object = None
    scene: object = None
    output: OutputConfig = field(default_factory=OutputConfig)
    analysis: dict | None = None
    calibration: dict | None = None

    @property
    def sha256(self) -> str:
        """Hash of the effective configuration; thread count excluded."""
        doc = {k: v for k, v in self.raw.items() if k != "threads"}
        doc["seed"] = self.seed
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def anchor(self) -> int:
        if self.anchor_row is not None:
            return self.anchor_row
        return self.timing.height // 2


def load_config(source, *, seed: int | None = None, threads: int | None = None) -> ExperimentConfig:
    """Parse and validate a config file path, YAML text or mapping."""
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError("<file>", f"config file {str(source)!r} not found")
        try:
            raw = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"cannot parse {path}: {exc}") from None
    root = _Block(raw if raw is not None else {}, "")
    cfg = ExperimentConfig(raw=raw)
    file_seed = root.get("seed", 0, int)
    file_threads = root.get("threads", 1, int)
    cfg.seed = seed if seed is not None else file_seed
    cfg.threads = threads if threads is not None else file_threads
    if cfg.threads < 1:
        raise ConfigError("threads", "must be >= 1")
    cfg.width = root.get("width", 320, int)
    cfg.image_height = root.get("image_height", None, int)
    cfg.frames = root.get("frames", 1, int)
    cfg.tau0 = root.get("tau0", 0.0, float)
    cfg.exposure_samples = root.get("exposure_samples", 1, int)
    cfg.jitter = root.get("jitter", False, bool)
    cfg.gamma = root.get("gamma", None, float)
    cfg.anchor_row = root.get("anchor_row", None, int)
    for name, lo in (("width", 1), ("frames", 1), ("exposure_samples", 1)):
        if getattr(cfg, name) < lo:
            raise ConfigError(name, f"must be >= {lo}")
    if cfg.gamma is not None and not cfg.gamma > 0:
        raise ConfigError("gamma", "must be positive")

    tb = root.block("timing")
    cfg.timing = parse_timing(tb) if tb is not None else None
    ib = root.block("intrinsics")
    cfg.intrinsics = parse_intrinsics(ib) if ib is not None else None
    cfg.distortion = parse_distortion(root.block("distortion"))
    if cfg.anchor_row is not None and cfg.timing is not None and not 0 <= cfg.anchor_row < cfg.timing.height:
        raise ConfigError("anchor_row", f"outside [0, {cfg.timing.height})")

    default_window = None
    if cfg.timing is not None:
        default_window = frame_window(cfg.timing, cfg.tau0, 0, cfg.frames)
    mb = root.block("motion")
    cfg.motion = parse_motion(mb, default_window)

    if root.has("scene"):
        cfg.scene = parse_scene(root.block("scene"), cfg.seed)

    ob = root.block("output")
    if ob is not None:
        cfg.output = OutputConfig(
            format=ob.get("format", "png", str),
            bit_depth=ob.get("bit_depth", 8, int),
            ground_truth=ob.get("ground_truth", False, bool),
            depth=ob.get("depth", False, bool),
        )
        if cfg.output.format not in ("png", "pgm"):
            raise ConfigError("output.format", "must be 'png' or 'pgm'")
        if cfg.output.bit_depth not in (8, 16):
            raise ConfigError("output.bit_depth", "must be 8 or 16")
        ob.finish()

    ab = root.block("analysis")
    if ab is not None:
        kind = ab.get("kind", required=True)
        if kind not in ("conditioning", "calibration", "optimizer"):
            raise ConfigError("analysis.kind", f"unknown analysis {kind!r}")
        cfg.analysis = {"kind": kind, **{k: ab.get(k) for k in list(ab.data) if k != "kind"}}

    cb = root.block("calibration")
    if cb is not None:
        light = _guard(
            "calibration",
            FlashingLight,
            frequency=cb.get("flash_hz", kind=float, required=True),
            waveform=cb.get("waveform", "square", str),
            duty=cb.get("duty", 0.5, float),
        )
        cfg.calibration = {
            "light": light,
            "frames": cb.get("frames", 2, int),
            "exposure_samples": cb.get("exposure_samples", 16, int),
            "noise_sigma": cb.get("noise_sigma", 0.0, float),
            "use_fps": cb.get("use_fps", False, bool),
        }
        cb.finish()

    root.finish()
    return cfg


def require(cfg: ExperimentConfig, *names):
    for name in names:
        if getattr(cfg, name) is None:
            raise ConfigError(name, "required block missing")
