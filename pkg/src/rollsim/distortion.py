"""Brown-Conrady radial distortion in normalized image space.

Forward model, with ``r`` the radius of the undistorted normalized point::

    p_d = p_u * (1 + k1 r^2 + k2 r^4 + k3 r^6 + ...)

The inverse power series maps distorted points back, with ``rho`` the
radius of the distorted point::

    p_u = p_d * (1 + k1' rho^2 + k2' rho^4 + ...)

Its coefficients are not a closed-form function of ``k``; :func:`fit_inverse`
estimates them by weighted least squares against the numerical inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rollsim.errors import (
    DegenerateFit,
    InvalidDistortion,
    NoConvergence,
    OutsideWorkingRadius,
    RankDeficient,
)

RADIUS_SLACK = 1e-12
FIXED_POINT_ITERS = 25
NEWTON_ITERS = 60


def _series(coeffs, u):
    """1 + c1 u + c2 u^2 + ... by Horner's rule."""
    acc = np.zeros_like(u)
    for c in reversed(coeffs):
        acc = (acc + c) * u
    return acc + 1.0


@dataclass(frozen=True)
class RadialDistortion:
    """Radial coefficients ``k`` valid on the disk ``r <= r_max``.

    Construction rejects coefficient sets for which ``r * factor(r)`` is not
    strictly increasing on ``[0, r_max]``; that is what makes the map
    invertible on the working disk.
    """

    k: tuple[float, ...] = ()
    r_max: float = 1.0
    max_order: int = 3

    def __post_init__(self):
        k = tuple(float(c) for c in self.k)
        object.__setattr__(self, "k", k)
        if len(k) > self.max_order:
            raise InvalidDistortion(f"{len(k)} coefficients exceed max_order={self.max_order}")
        if not self.r_max > 0:
            raise InvalidDistortion("r_max must be positive")
        if not all(np.isfinite(k)):
            raise InvalidDistortion("coefficients must be finite")
        if not k:
            return
        u_max = self.r_max**2
        # d/dr [r f(r)] = 1 + sum (2i+1) k_i u^i with u = r^2
        deriv = [1.0] + [(2 * i + 1) * c for i, c in enumerate(k, start=1)]
        # negligible top terms only move roots far outside the disk; the grid check below still sees them
        trimmed = np.polynomial.polynomial.polytrim(deriv, tol=1e-12)
        roots = np.polynomial.polynomial.polyroots(trimmed)
        real = roots[np.abs(roots.imag) < 1e-12].real
        bad = real[(real >= 0) & (real <= u_max)]
        grid = np.linspace(0.0, u_max, 2001)
        if bad.size or np.any(np.polynomial.polynomial.polyval(grid, deriv) <= 0):
            r_bad = float(np.sqrt(bad.min())) if bad.size else float("nan")
            raise InvalidDistortion(
                f"distortion {k} is not monotone on [0, {self.r_max}] (turns at r={r_bad:.6g})"
            )

    @property
    def is_identity(self) -> bool:
        return all(c == 0.0 for c in self.k)

    def factor(self, r2):
        return _series(self.k, np.asarray(r2, dtype=float))

    @property
    def rho_max(self) -> float:
        """Radius of the image of the working disk."""
        return float(self.r_max * self.factor(self.r_max**2))

    def to_config(self) -> dict:
        return {"radial_k": list(self.k), "r_max": self.r_max}


@dataclass(frozen=True)
class InverseRadialDistortion:
    kprime: tuple[float, ...]
    rho_max: float
    fit_residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kprime", tuple(float(c) for c in self.kprime))
        if not self.rho_max > 0:
            raise ValueError("rho_max must be positive")

    def factor(self, rho2):
        return _series(self.kprime, np.asarray(rho2, dtype=float))

    def to_config(self) -> dict:
        return {
            "radial_kprime": list(self.kprime),
            "rho_max": self.rho_max,
            "fit_residual": self.fit_residual,
        }


def distort(d: RadialDistortion, pu) -> np.ndarray:
    """Apply the forward model to normalized point(s) of shape (..., 2)."""
    pu = np.asarray(pu, dtype=float)
    r2 = np.sum(pu * pu, axis=-1)
    if np.any(r2 > (d.r_max * (1 + RADIUS_SLACK)) ** 2):
        raise OutsideWorkingRadius(
            f"radius {np.sqrt(r2.max()):.6g} exceeds working radius {d.r_max}"
        )
    if d.is_identity:
        return pu.copy()
    return pu * d.factor(r2)[..., None]


def invert_radius(d: RadialDistortion, rho, tol: float = 1e-13):
    """Solve ``r * factor(r^2) = rho`` elementwise.

    Returns ``(r, ok)``; ``ok`` is False where ``rho`` lies outside the image
    of the working disk or the iteration budget ran out.
    """
    rho = np.asarray(rho, dtype=float)
    if d.is_identity:
        return rho.copy(), np.ones(rho.shape, dtype=bool)
    inside = rho <= d.rho_max * (1 + RADIUS_SLACK)
    rho_c = np.where(inside, rho, 0.0)

    def residual(r):
        return r * d.factor(r * r) - rho_c

    r = rho_c.copy()
    done = np.abs(residual(r)) <= tol
    for _ in range(FIXED_POINT_ITERS):
        if done.all():
            break
        r = np.where(done, r, rho_c / d.factor(r * r))
        done = np.abs(residual(r)) <= tol

    # Newton on the monotone radial function, kept inside a bisection bracket
    deriv = [1.0] + [(2 * i + 1) * c for i, c in enumerate(d.k, start=1)]
    lo = np.zeros_like(r)
    hi = np.full_like(r, d.r_max)
    r = np.clip(r, lo, hi)
    for _ in range(NEWTON_ITERS):
        g = residual(r)
        done = np.abs(g) <= tol
        if done.all():
            break
        lo = np.where(g < 0, r, lo)
        hi = np.where(g > 0, r, hi)
        r_new = r - g / np.polynomial.polynomial.polyval(r * r, deriv)
        outside = (r_new <= lo) | (r_new >= hi)
        r_new = np.where(outside, 0.5 * (lo + hi), r_new)
        r = np.where(done, r, r_new)
    ok = inside & (np.abs(residual(r)) <= tol)
    return np.where(ok, r, np.nan), ok


def undistort_numeric(d: RadialDistortion, pd, tol: float = 1e-12) -> np.ndarray:
    """Numerically invert :func:`distort` so that ``distort(d, result)`` is within ``tol`` of ``pd``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    pd = np.asarray(pd, dtype=float)
    if d.is_identity:
        return pd.copy()
    rho = np.sqrt(np.sum(pd * pd, axis=-1))
    r, ok = invert_radius(d, rho, tol)
    if not np.all(ok):
        bad = rho[~ok] if rho.ndim else rho
        raise NoConvergence(
            f"cannot invert distortion at radius {np.max(bad):.6g} "
            f"(image of working disk ends at {d.rho_max:.6g})"
        )
    scale = np.divide(r, rho, out=np.ones_like(rho), where=rho > 0)
    return pd * scale[..., None]


def fit_inverse(
    d: RadialDistortion, order: int = 3, rho_max: float | None = None, n_samples: int = 2001
) -> InverseRadialDistortion:
    """Least-squares inverse coefficients over ``rho`` in ``(0, rho_max]``.

    Residuals are weighted by ``rho`` so the fit minimizes the absolute
    round-trip error in normalized units, the same quantity reported as
    ``fit_residual`` (its maximum over the samples).
    """
    from rollsim.numerics import DesignSystem, solve_least_squares

    if order < 1:
        raise ValueError("order must be >= 1")
    if rho_max is None:
        rho_max = d.rho_max
    if not 0 < rho_max <= d.rho_max * (1 + RADIUS_SLACK):
        raise OutsideWorkingRadius(
            f"rho_max={rho_max} outside (0, {d.rho_max:.6g}], the image of the working disk"
        )
    if d.is_identity:
        return InverseRadialDistortion((0.0,) * order, rho_max, 0.0)

    rho = np.linspace(rho_max / n_samples, rho_max, n_samples)
    r, ok = invert_radius(d, rho, tol=1e-14)
    if not ok.all():
        raise DegenerateFit("numerical inverse failed on the sample set")
    s = (rho / rho_max) ** 2
    # columns in scaled radius keep the design well conditioned
    A = np.stack([s**j for j in range(1, order + 1)], axis=1)
    B = r / rho - 1.0
    try:
        c, _ = solve_least_squares(DesignSystem(A, B, rho))
    except RankDeficient as exc:
        raise DegenerateFit(str(exc)) from exc
    kprime = tuple(float(cj / rho_max ** (2 * j)) for j, cj in enumerate(c, start=1))
    inv = InverseRadialDistortion(kprime, rho_max)
    resid = float(np.max(np.abs(rho * inv.factor(rho * rho) - r)))
    return InverseRadialDistortion(kprime, rho_max, resid)


def apply_inverse(inv: InverseRadialDistortion, pd) -> np.ndarray:
    pd = np.asarray(pd, dtype=float)
    rho2 = np.sum(pd * pd, axis=-1)
    if np.any(rho2 > (inv.rho_max * (1 + RADIUS_SLACK)) ** 2):
        raise OutsideWorkingRadius(
            f"radius {np.sqrt(rho2.max()):.6g} exceeds fitted radius {inv.rho_max}"
        )
    return pd * inv.factor(rho2)[..., None]
