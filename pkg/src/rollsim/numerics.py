"""Linear least squares, conditioning, first-order optimizers and line-rate calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from rollsim.errors import AmbiguousPhase, Diverged, NoDominantBand, RankDeficient

RANK_EPS = 1e-10


# -- linear systems -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DesignSystem:
    """Over-determined system ``A @ theta = B`` with one weight per equation.

    Weights multiply residuals, so the solved problem is
    ``min || diag(W) (A theta - B) ||_2``.
    """

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(-1)
        W = np.ones(len(B)) if self.W is None else np.asarray(self.W, dtype=float).reshape(-1)
        m, n = A.shape
        if B.shape != (m,) or W.shape != (m,):
            raise ValueError(f"inconsistent shapes: A {A.shape}, B {B.shape}, W {W.shape}")
        if m < n:
            raise ValueError(f"system is under-determined ({m} equations, {n} unknowns)")
        if not np.all(np.isfinite(W)) or np.any(W < 0):
            raise ValueError("weights must be finite and non-negative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "W", W)

    @property
    def weighted(self) -> tuple[np.ndarray, np.ndarray]:
        return self.W[:, None] * self.A, self.W * self.B


def singular_values(A) -> np.ndarray:
    """Descending singular values.

    Matrices with at most one non-zero per row and column (scaled
    permutations, diagonals) are answered exactly from their entries.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    nz = A != 0
    if np.all(nz.sum(axis=0) <= 1) and np.all(nz.sum(axis=1) <= 1):
        s = np.zeros(min(A.shape))
        vals = np.sort(np.abs(A[nz]))[::-1]
        s[: len(vals)] = vals
        return s
    return np.linalg.svd(A, compute_uv=False)


def solve_least_squares(sys: DesignSystem, eps: float = RANK_EPS) -> tuple[np.ndarray, float]:
    """SVD solution of the weighted system; returns ``(theta, residual_norm)``."""
    WA, WB = sys.weighted
    U, s, Vt = np.linalg.svd(WA, full_matrices=False)
    if s[0] == 0 or s[-1] < eps * s[0]:
        raise RankDeficient(f"sigma_min/sigma_max = {s[-1] / s[0] if s[0] else 0:.3g} < {eps}")
    theta = Vt.T @ ((U.T @ WB) / s)
    residual = float(np.linalg.norm(WA @ theta - WB))
    return theta, residual


def condition_number(A, W=None, eps: float = RANK_EPS) -> float:
    """``sigma_max / sigma_min`` of ``A`` (or ``diag(W) @ A``); ``inf`` when numerically singular."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if W is not None:
        A = np.asarray(W, dtype=float).reshape(-1, 1) * A
    s = singular_values(A)
    if s[0] == 0:
        raise ValueError("condition number of the zero matrix is undefined")
    if s[-1] < eps * s[0]:
        return math.inf
    return max(float(s[0] / s[-1]), 1.0)


def camera_block(rotation, translation, points) -> np.ndarray:
    """Linearized normalized-projection rows for a small rig motion.

    The rig moves world points by ``X + w x X + v``; a camera with extrinsics
    ``(rotation, translation)`` sees them at ``R X + T``.  Returns the
    (2N, 6) Jacobian of the normalized coordinates w.r.t. ``(w, v)``.
    """
    R = np.asarray(rotation, dtype=float)
    T = np.asarray(translation, dtype=float)
    rows = []
    for X in np.asarray(points, dtype=float):
        x, y, z = R @ X + T
        J_pi = np.array([[1 / z, 0.0, -x / z**2], [0.0, 1 / z, -y / z**2]])
        Xx = np.array([[0.0, -X[2], X[1]], [X[2], 0.0, -X[0]], [-X[1], X[0], 0.0]])
        rows.append(J_pi @ np.hstack([-R @ Xx, R]))
    return np.vstack(rows)


# -- optimizers -----------------------------------------------------------------

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class OptimizerConfig:
    gamma: float
    beta: float = 0.0
    max_iters: int = 10_000
    grad_tol: float = 1e-8
    divergence_bound: float = 1e8

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 <= self.beta < 1:
            raise ValueError("beta must lie in [0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass
class Trace:
    thetas: list = field(default_factory=list)
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.thetas) - 1

    @property
    def theta(self) -> np.ndarray:
        return self.thetas[-1]

    def record(self, theta, value, grad):
        self.thetas.append(theta)
        self.values.append(float(value))
        self.grad_norms.append(float(np.linalg.norm(grad)))

    def rows(self):
        """``(iter, *theta, f, |grad|)`` tuples, one per iterate."""
        for i, (th, v, g) in enumerate(zip(self.thetas, self.values, self.grad_norms)):
            yield (i, *map(float, np.atleast_1d(th)), v, g)


def _run(f: Objective, theta0, cfg: OptimizerConfig, beta: float, momentum: bool) -> Trace:
    theta = np.array(theta0, dtype=float)
    prev = theta
    trace = Trace()
    value, grad = f(theta)
    trace.record(theta, value, grad)
    for _ in range(cfg.max_iters):
        if trace.grad_norms[-1] <= cfg.grad_tol:
            trace.converged = True
            break
        new = theta - cfg.gamma * grad
        if momentum:
            new = new + beta * (theta - prev)
        prev, theta = theta, new
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > cfg.divergence_bound:
            raise Diverged(
                f"iterate norm exceeded {cfg.divergence_bound:g} after {trace.iterations + 1} steps",
                trace,
            )
        value, grad = f(theta)
        trace.record(theta, value, grad)
    else:
        trace.converged = trace.grad_norms[-1] <= cfg.grad_tol
    return trace


def gradient_descent(f: Objective, theta0, cfg: OptimizerConfig) -> Trace:
    """Steepest descent with fixed step ``cfg.gamma``; ``cfg.beta`` is ignored."""
    return _run(f, theta0, cfg, 0.0, momentum=False)


def heavy_ball(f: Objective, theta0, cfg: OptimizerConfig) -> Trace:
    """Polyak momentum: ``theta_n = theta_{n-1} - gamma grad + beta (theta_{n-1} - theta_{n-2})``.

    The first step has no momentum (``theta_{-1} = theta_0``).  The momentum
    term is added to the plain gradient step, so with ``beta == 0`` it only
    adds a signed zero and the iterates match :func:`gradient_descent`.
    """
    return _run(f, theta0, cfg, cfg.beta, momentum=True)


def tuned_quadratic_steps(mu: float, L: float) -> dict:
    """Textbook-optimal fixed parameters for a quadratic with curvatures in [mu, L]."""
    sq_mu, sq_L = math.sqrt(mu), math.sqrt(L)
    return {
        "gd_gamma": 2.0 / (L + mu),
        "hb_gamma": 4.0 / (sq_L + sq_mu) ** 2,
        "hb_beta": ((sq_L - sq_mu) / (sq_L + sq_mu)) ** 2,
    }


# -- line-rate calibration ------------------------------------------------------

SIGNIFICANCE_DB = 6.0
N_HARMONICS = 5


@dataclass(frozen=True)
class CalibrationResult:
    n_r: float  # rows per second
    t_r: float  # seconds
    t_f: float | None  # seconds, minimal non-negative representative
    band_frequency: float  # cycles per row
    flash_period: float
    tf_ambiguous: bool
    peak_db: float  # spectral peak over median floor
    fit_r2: float

    def to_report(self) -> dict:
        return {
            "n_r": self.n_r,
            "t_r": self.t_r,
            "t_f": self.t_f,
            "t_f_modulo": self.flash_period if self.tf_ambiguous else None,
            "t_f_ambiguous": self.tf_ambiguous,
            "band_cycles_per_row": self.band_frequency,
            "confidence": {"peak_over_floor_db": self.peak_db, "fit_r2": self.fit_r2},
        }


def row_profile(frame) -> np.ndarray:
    """Per-row mean intensity of a frame (a :class:`Frame` or a 2-D array)."""
    image = getattr(frame, "image", frame)
    return np.asarray(image, dtype=float).mean(axis=1)


def _harmonic_basis(f: float, n: int, harmonics: int) -> np.ndarray:
    y = np.arange(n)
    cols = [np.ones(n)]
    for k in range(1, harmonics + 1):
        cols += [np.cos(2 * np.pi * k * f * y), np.sin(2 * np.pi * k * f * y)]
    return np.stack(cols, axis=1)


def _fit(profiles, f, harmonics):
    """Least-squares harmonic fit per profile; returns (total residual, coefficient list)."""
    n = len(profiles[0])
    basis = _harmonic_basis(f, n, harmonics)
    coeffs, sse = [], 0.0
    for s in profiles:
        c, *_ = np.linalg.lstsq(basis, s, rcond=None)
        sse += float(np.sum((basis @ c - s) ** 2))
        coeffs.append(c)
    return sse, coeffs


def dominant_band_frequency(profiles, pad: int = 16) -> tuple[float, float]:
    """Windowed-spectrum peak with parabolic interpolation.

    Returns ``(cycles_per_row, peak_over_floor_db)``.  Spectra of all
    profiles are summed.  Raises :class:`NoDominantBand` when the peak is
    below the significance threshold.
    """
    n = len(profiles[0])
    window = np.hanning(n)
    nfft = pad * (1 << (n - 1).bit_length())
    power = np.zeros(nfft // 2 + 1)
    scale = 0.0
    for s in profiles:
        x = s - s.mean()
        x = window * (x - np.sum(window * x) / np.sum(window))
        power += np.abs(np.fft.rfft(x, nfft)) ** 2
        scale = max(scale, float(np.abs(s).max()))
    freqs = np.fft.rfftfreq(nfft)
    band = freqs >= 1.0 / n
    if scale == 0 or power[band].max() <= (1e-12 * scale) ** 2 * n:
        raise NoDominantBand("row profile is flat")
    idx = int(np.flatnonzero(band)[np.argmax(power[band])])
    floor = float(np.median(power[band]))
    peak_db = 10 * math.log10(power[idx] / floor) if floor > 0 else math.inf
    if peak_db < SIGNIFICANCE_DB:
        raise NoDominantBand(f"spectral peak only {peak_db:.2f} dB above the median floor")
    delta = 0.0
    if 0 < idx < len(power) - 1:
        a, b, c = np.log(power[idx - 1 : idx + 2])
        denom = a - 2 * b + c
        if denom < 0:
            delta = 0.5 * (a - c) / denom
    return float((idx + delta) / nfft), peak_db


def calibrate_line_rate(
    frames,
    flash_freq: float,
    *,
    exposure: float = 0.0,
    fps: float | None = None,
    harmonics: int = N_HARMONICS,
    strict: bool = False,
) -> CalibrationResult:
    """Estimate line rate and frame delay from flash-banded frames.

    Each frame collapses to its per-row mean.  The band frequency (cycles per
    row) is located on a windowed spectrum and then refined by a harmonic
    least-squares fit shared by all frames; ``n_r = flash_freq / f_band``.

    The frame delay follows from the band phase advance between consecutive
    frames, which measures the frame period modulo the flash period ``P``:
    ``t_f = (dphi / (2 pi flash_freq) - H t_r - exposure) mod P``.  With a
    known ``fps`` the frame period is unwrapped and the result is
    unambiguous; otherwise ``tf_ambiguous`` is set (or :class:`AmbiguousPhase`
    raised when ``strict``).  Rows are assumed to be exposed top to bottom.
    """
    if not flash_freq > 0:
        raise ValueError("flash_freq must be positive")
    profiles = [row_profile(fr) for fr in frames]
    if not profiles:
        raise ValueError("need at least one frame")
    n = len(profiles[0])
    if any(len(p) != n for p in profiles):
        raise ValueError("frames differ in height")

    f0, peak_db = dominant_band_frequency(profiles)
    half_bin = 1.0 / n
    res = minimize_scalar(
        lambda f: _fit(profiles, f, harmonics)[0],
        bounds=(max(f0 - half_bin, 0.5 / n), min(f0 + half_bin, 0.5)),
        method="bounded",
        options={"xatol": 1e-13, "maxiter": 500},
    )
    f_band = float(res.x)
    sse, coeffs = _fit(profiles, f_band, harmonics)
    sst = sum(float(np.sum((p - p.mean()) ** 2)) for p in profiles)
    r2 = 1.0 - sse / sst if sst > 0 else 0.0

    n_r = flash_freq * (1.0 / f_band)
    t_r = 1.0 / n_r
    period = 1.0 / flash_freq

    t_f = None
    ambiguous = True
    if len(profiles) >= 2:
        # a cos(th) + b sin(th) = A cos(th + phi) with phi = atan2(-b, a)
        phases = np.array([math.atan2(-c[2], c[1]) for c in coeffs])
        advance = np.angle(np.mean(np.exp(1j * np.diff(phases))))
        frame_period_mod = (advance / (2 * np.pi) % 1.0) * period
        if fps is not None:
            k = round((1.0 / fps - frame_period_mod) / period)
            frame_period = frame_period_mod + k * period
            t_f = frame_period - n * t_r - exposure
            ambiguous = False
        else:
            t_f = (frame_period_mod - n * t_r - exposure) % period
    if ambiguous and strict:
        raise AmbiguousPhase(f"t_f only determined modulo the flash period {period:.6g} s")
    return CalibrationResult(
        n_r=n_r,
        t_r=t_r,
        t_f=t_f,
        band_frequency=f_band,
        flash_period=period,
        tf_ambiguous=ambiguous,
        peak_db=peak_db,
        fit_r2=r2,
    )
