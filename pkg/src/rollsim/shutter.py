"""Shutter timing for global and rolling shutter sensors.

A rolling-shutter frame satisfies ``1/fps = H*tr + tf + te`` and row ``y`` of
frame ``fi`` starts exposing at ``tau0 + y*tr + fi/fps``.  All arithmetic is
written so that :class:`fractions.Fraction` inputs stay exact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from numbers import Integral, Real

import numpy as np

from rollsim.errors import InfeasibleTiming, Overconstrained, RowOutOfRange, Underconstrained

CONSISTENCY_RTOL = 1e-12
SOLVE = "solve"


class ShutterMode(str, enum.Enum):
    GLOBAL = "global"
    ROLLING = "rolling"


# "down"/"up" scan rows, "right"/"left" scan columns
SWEEPS = ("down", "up", "right", "left")


@dataclass(frozen=True)
class ShutterTiming:
    te: Real
    tr: Real
    tf: Real
    height: int
    fps: Real
    mode: ShutterMode = ShutterMode.ROLLING
    sweep: str = "down"

    def __post_init__(self):
        object.__setattr__(self, "mode", ShutterMode(self.mode))
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        if not isinstance(self.height, Integral) or self.height <= 0:
            raise ValueError(f"height must be a positive integer, got {self.height!r}")
        for name in ("te", "tr", "tf"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps!r}")
        if self.mode is ShutterMode.ROLLING:
            gap = self.consistency_gap()
            if abs(gap) > CONSISTENCY_RTOL * self.frame_period:
                raise ValueError(
                    f"rolling timing violates 1/fps = H*tr + tf + te "
                    f"(1/fps={float(self.frame_period):.9g}, "
                    f"sum={float(self.frame_period - gap):.9g})"
                )

    @property
    def frame_period(self):
        return 1 / self.fps

    @property
    def readout(self):
        """Time for the shutter to sweep all lines, ``H * tr``."""
        return self.height * self.tr

    @property
    def scans_columns(self) -> bool:
        return self.sweep in ("right", "left")

    def consistency_gap(self):
        return self.frame_period - (self.height * self.tr + self.tf + self.te)

    def scan_index(self, y):
        """Order in which physical line ``y`` is exposed."""
        if self.sweep in ("up", "left"):
            return self.height - 1 - y
        return y

    def with_mode(self, mode) -> ShutterTiming:
        return replace(self, mode=ShutterMode(mode))

    def to_config(self) -> dict:
        return {
            "te_s": float(self.te),
            "tr_s": float(self.tr),
            "tf_s": float(self.tf),
            "height": int(self.height),
            "fps": float(self.fps),
            "mode": self.mode.value,
            "sweep": self.sweep,
        }


def row_start_time(t: ShutterTiming, tau0, y: int, fi: int = 0):
    """Exposure start of line ``y`` in frame ``fi``.

    Global shutter starts every line together at ``tau0 + fi/fps``.
    """
    if not 0 <= y < t.height:
        raise RowOutOfRange(f"row {y} outside [0, {t.height})")
    if fi < 0:
        raise ValueError("frame index must be non-negative")
    if t.mode is ShutterMode.GLOBAL:
        return tau0 + fi * t.frame_period
    return tau0 + t.scan_index(y) * t.tr + fi * t.frame_period


def row_start_times(t: ShutterTiming, tau0: float, fi: int = 0) -> np.ndarray:
    """Float exposure start of every line, indexed by physical line."""
    return np.array([float(row_start_time(t, tau0, y, fi)) for y in range(t.height)])


def complete_timing(
    *, te=SOLVE, tr=SOLVE, tf=SOLVE, fps=SOLVE, height: int, mode="rolling", sweep="down"
) -> ShutterTiming:
    """Solve the frame-rate identity for the one quantity marked ``"solve"``.

    ``None`` is accepted as an alternative unknown marker.
    """
    values = {"te": te, "tr": tr, "tf": tf, "fps": fps}
    unknown = [k for k, v in values.items() if v is None or (isinstance(v, str) and v == SOLVE)]
    if not unknown:
        raise Overconstrained("no quantity marked 'solve'")
    if len(unknown) > 1:
        raise Underconstrained(f"more than one unknown: {', '.join(unknown)}")
    (name,) = unknown
    H = height
    if name == "fps":
        period = H * tr + tf + te
        if not period > 0:
            raise InfeasibleTiming("frame period H*tr + tf + te must be positive")
        solved = 1 / period
    elif name == "tf":
        solved = 1 / fps - H * tr - te
    elif name == "te":
        solved = 1 / fps - H * tr - tf
    else:
        solved = (1 / fps - tf - te) / H
    if solved < 0:
        raise InfeasibleTiming(f"solved {name} = {float(solved):.6g} is negative")
    values[name] = solved
    return ShutterTiming(height=H, mode=mode, sweep=sweep, **values)
