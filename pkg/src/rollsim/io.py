"""File formats: PNG/PGM frames, per-row CSV sidecars, design systems, traces."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np
from PIL import Image, PngImagePlugin

from rollsim.geometry import Pose
from rollsim.motion import PiecewiseLinearKeyframes

POSE_COLUMNS = [f"r{i}{j}" for i in range(3) for j in range(3)] + ["tx", "ty", "tz"]


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def quantize(image: np.ndarray, bit_depth: int = 8) -> np.ndarray:
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    peak = (1 << bit_depth) - 1
    q = np.rint(np.clip(image, 0.0, 1.0) * peak)
    return q.astype(np.uint8 if bit_depth == 8 else np.uint16)


def write_png(path, image: np.ndarray, bit_depth: int = 8, meta: dict | None = None):
    q = quantize(image, bit_depth)
    img = Image.fromarray(q if bit_depth == 8 else q.astype("<u2"))
    info = PngImagePlugin.PngInfo()
    for key, value in sorted((meta or {}).items()):
        info.add_text(key, str(value))
    img.save(path, format="PNG", pnginfo=info)


def read_png(path) -> tuple[np.ndarray, dict]:
    """Grayscale PNG as floats in [0, 1], plus its text chunks."""
    with Image.open(path) as img:
        meta = dict(getattr(img, "text", {}) or {})
        mode = img.mode
        arr = np.array(img)
    if mode in ("L", "P"):
        peak = 255.0
    elif mode in ("I;16", "I;16B", "I;16L", "I"):
        peak = 65535.0
    else:
        raise ValueError(f"unsupported PNG mode {mode!r}; expected grayscale")
    return arr.astype(float) / peak, meta


def write_pgm(path, image: np.ndarray, bit_depth: int = 8, meta: dict | None = None):
    """ASCII (P2) PGM; metadata goes into ``# key=value`` comment lines."""
    q = quantize(image, bit_depth)
    H, W = q.shape
    lines = ["P2"]
    lines += [f"# {k}={v}" for k, v in sorted((meta or {}).items())]
    lines += [f"{W} {H}", str((1 << bit_depth) - 1)]
    lines += [" ".join(str(int(v)) for v in row) for row in q]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> tuple[np.ndarray, dict]:
    meta = {}
    tokens = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key:
                meta[key] = value
            continue
        tokens += line.split()
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: not an ASCII PGM (P2) file")
    W, H, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array(tokens[4 : 4 + W * H], dtype=float)
    if data.size != W * H:
        raise ValueError(f"{path}: expected {W * H} samples, found {data.size}")
    return data.reshape(H, W) / maxval, meta


def read_image(path) -> tuple[np.ndarray, dict]:
    if str(path).lower().endswith(".pgm"):
        return read_pgm(path)
    return read_png(path)


def write_image(path, image, bit_depth=8, meta=None):
    if str(path).lower().endswith(".pgm"):
        write_pgm(path, image, bit_depth, meta)
    else:
        write_png(path, image, bit_depth, meta)


def _header_comments(f, meta):
    for key, value in sorted((meta or {}).items()):
        f.write(f"# {key}={value}\n")


def _read_rows(path):
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(line for line in f if not line.startswith("#"))]
    return rows[0], rows[1:]


def write_sidecar(path, row_times, row_poses, meta: dict | None = None):
    """Per-line metadata: ``row, t_start`` and the 12 pose numbers."""
    with open(path, "w", newline="") as f:
        _header_comments(f, meta)
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["row", "t_start", *POSE_COLUMNS])
        for i, (t, pose) in enumerate(zip(row_times, row_poses)):
            w.writerow([i, repr(float(t)), *(repr(float(v)) for v in pose)])


def read_sidecar(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(row_times, row_poses)`` with poses as (N, 12)."""
    header, rows = _read_rows(path)
    if header[:2] != ["row", "t_start"] or len(header) != 14:
        raise ValueError(f"{path}: unexpected sidecar header {header}")
    data = np.array(rows, dtype=float).reshape(-1, 14)
    if not np.array_equal(data[:, 0], np.arange(len(data))):
        raise ValueError(f"{path}: row indices must run 0..N-1")
    return data[:, 1], data[:, 2:]


def read_keyframes_csv(path, window=None) -> PiecewiseLinearKeyframes:
    """Keyframe trajectory from ``t`` plus 12 pose numbers per line (header optional)."""
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(line for line in f if not line.startswith("#")) if r]
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 13:
        raise ValueError(f"{path}: keyframe rows need t plus 12 pose numbers")
    poses = tuple(Pose.from_row(r[1:]) for r in data)
    return PiecewiseLinearKeyframes(tuple(data[:, 0]), poses, window)


def write_keyframes_csv(path, times, poses):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", *POSE_COLUMNS])
        for t, p in zip(times, poses):
            w.writerow([repr(float(t)), *(repr(v) for v in p.to_row())])


def write_design_csv(path, system, meta: dict | None = None):
    """Dense ``A | B | W`` rows."""
    n = system.A.shape[1]
    with open(path, "w", newline="") as f:
        _header_comments(f, meta)
        w = csv.writer(f, lineterminator="\n")
        w.writerow([*(f"a{j}" for j in range(n)), "b", "w"])
        for a, b, wt in zip(system.A, system.B, system.W):
            w.writerow([*(repr(float(v)) for v in a), repr(float(b)), repr(float(wt))])


def read_design_csv(path):
    from rollsim.numerics import DesignSystem

    header, rows = _read_rows(path)
    if header[-2:] != ["b", "w"]:
        raise ValueError(f"{path}: design CSV must end with columns b, w")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return DesignSystem(data[:, :-2], data[:, -2], data[:, -1])


def write_trace_csv(path, trace, meta: dict | None = None):
    """Optimizer trace: ``iter, theta_0..theta_{n-1}, f, grad_norm``."""
    n = np.atleast_1d(trace.thetas[0]).size
    with open(path, "w", newline="") as f:
        _header_comments(f, meta)
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iter", *(f"theta_{j}" for j in range(n)), "f", "grad_norm"])
        for row in trace.rows():
            w.writerow([row[0], *(repr(v) for v in row[1:])])
