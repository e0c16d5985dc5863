import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rollsim.errors import AmbiguousPhase, Diverged, NoDominantBand, RankDeficient
from rollsim.geometry import hat, rot_y
from rollsim.numerics import (
    DesignSystem,
    OptimizerConfig,
    calibrate_line_rate,
    camera_block,
    condition_number,
    dominant_band_frequency,
    gradient_descent,
    heavy_ball,
    solve_least_squares,
    tuned_quadratic_steps,
)
from rollsim.objectives import BumpyWell, Quadratic, Rosenbrock
from rollsim.shutter import complete_timing
from rollsim.simulator import FlashingLight, synthesize_flash_frames


def test_least_squares_exact_system():
    A = np.array([[1.0, 0], [0, 2], [1, 1]])
    theta = np.array([3.0, -1.0])
    got, res = solve_least_squares(DesignSystem(A, A @ theta))
    assert np.allclose(got, theta) and res < 1e-12


def test_weights_scale_residuals():
    A = np.ones((2, 1))
    got, _ = solve_least_squares(DesignSystem(A, [0.0, 1.0], [1.0, 3.0]))
    # minimises (t)^2 + 9 (t - 1)^2
    assert got[0] == pytest.approx(0.9)


def test_rank_deficient():
    A = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankDeficient):
        solve_least_squares(DesignSystem(A, [1.0, 2.0, 3.0]))
    assert condition_number(A) == math.inf


def test_underdetermined_rejected():
    with pytest.raises(ValueError):
        DesignSystem(np.ones((1, 2)), [1.0])


@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_least_squares_matches_normal_equations(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n + 4, n))
    B = rng.normal(size=n + 4)
    W = rng.uniform(0.5, 2.0, n + 4)
    got, _ = solve_least_squares(DesignSystem(A, B, W))
    WA = W[:, None] * A
    ref = np.linalg.solve(WA.T @ WA, WA.T @ (W * B))
    assert np.allclose(got, ref, atol=1e-8)


def test_condition_number_identity_and_diagonal():
    assert condition_number(np.eye(6)) == 1.0
    assert condition_number(np.diag([2.0, 8.0, 0.5])) == 16.0
    assert condition_number(np.eye(2), W=[1.0, 4.0]) == 4.0


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=6))
def test_condition_number_bounded_below(diag):
    k = condition_number(np.diag(diag))
    assert k >= 1.0
    assert k == pytest.approx(max(diag) / min(diag), rel=1e-12)


def test_camera_block_matches_finite_differences():
    R, T = rot_y(0.4), np.array([0.1, -0.2, 0.3])
    pts = np.array([[0.5, 0.2, 5.0], [-0.3, 0.4, 6.0]])

    def normalized(params):
        w, v = params[:3], params[3:]
        out = []
        for X in pts:
            Xc = R @ (X + hat(w) @ X + v) + T
            out += list(Xc[:2] / Xc[2])
        return np.array(out)

    J = camera_block(R, T, pts)
    h = 1e-6
    fd = np.stack([(normalized(h * e) - normalized(-h * e)) / (2 * h) for e in np.eye(6)], axis=1)
    assert np.allclose(J, fd, atol=1e-8)


@pytest.mark.parametrize("f", [Quadratic(np.array([[3.0, 1.0], [1.0, 2.0]]), [1.0, -1.0]), Rosenbrock()])
def test_gradients_match_finite_differences(f):
    x = np.array([0.3, -0.7])
    _, g = f(x)
    h = 1e-6
    fd = [(f(x + h * e)[0] - f(x - h * e)[0]) / (2 * h) for e in np.eye(2)]
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-6)


@given(st.floats(-10, 10))
def test_bump_gradient(x):
    f = BumpyWell()
    h = 1e-6
    fd = (f([x + h])[0] - f([x - h])[0]) / (2 * h)
    assert f([x])[1][0] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_gd_hand_computed_steps():
    f = Quadratic.diagonal(2.0)
    tr = gradient_descent(f, [1.0], OptimizerConfig(0.25, max_iters=2, grad_tol=0))
    assert [float(t[0]) for t in tr.thetas] == [1.0, 0.5, 0.25]


def test_heavy_ball_hand_computed_steps():
    f = Quadratic.diagonal(2.0)
    tr = heavy_ball(f, [1.0], OptimizerConfig(0.25, beta=0.5, max_iters=2, grad_tol=0))
    # theta_1 = 0.5; theta_2 = 0.5 - 0.25 + 0.5 (0.5 - 1) = 0
    assert [float(t[0]) for t in tr.thetas] == [1.0, 0.5, 0.0]


@given(st.floats(0.001, 0.019), st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_beta_zero_is_gradient_descent(gamma, x0):
    f = Quadratic.diagonal(1.0, 100.0)
    cfg = OptimizerConfig(gamma, beta=0.0, max_iters=300)
    a, b = gradient_descent(f, x0, cfg), heavy_ball(f, x0, cfg)
    assert len(a.thetas) == len(b.thetas)
    assert all(np.array_equal(p, q) for p, q in zip(a.thetas, b.thetas))
    assert a.values == b.values and a.grad_norms == b.grad_norms


def test_tuned_momentum_beats_gd():
    f = Quadratic.diagonal(1.0, 100.0)
    s = tuned_quadratic_steps(1.0, 100.0)
    assert s["gd_gamma"] == pytest.approx(2 / 101)
    assert s["hb_beta"] == pytest.approx((9 / 11) ** 2)
    gd = gradient_descent(f, [1.0, 1.0], OptimizerConfig(s["gd_gamma"]))
    hb = heavy_ball(f, [1.0, 1.0], OptimizerConfig(s["hb_gamma"], s["hb_beta"]))
    assert gd.converged and hb.converged
    assert hb.iterations < gd.iterations


def test_divergence_is_reported():
    f = Quadratic.diagonal(1.0)
    with pytest.raises(Diverged) as info:
        gradient_descent(f, [1.0], OptimizerConfig(3.0))
    assert info.value.trace.iterations > 0


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(0.1, beta=1.0)


def flash_frames(tr=2e-5, freq=200.0, H=1000, n=3, **kw):
    t = complete_timing(te=2e-4, tr=tr, tf=1e-3, fps="solve", height=H)
    light = FlashingLight(freq, "square")
    return t, synthesize_flash_frames(light, t, 4, n, **kw)


def test_dominant_band_of_pure_sine():
    y = np.arange(512)
    f, db = dominant_band_frequency([np.cos(2 * np.pi * 0.0371 * y)])
    assert f == pytest.approx(0.0371, rel=2e-3)
    assert db > 20


def test_flat_profile_has_no_band():
    with pytest.raises(NoDominantBand):
        dominant_band_frequency([np.ones(100)])
    rng = np.random.default_rng(0)
    with pytest.raises(NoDominantBand):
        calibrate_line_rate([rng.normal(size=(400, 2)) * 0 + 0.5], 100.0)


def test_calibration_closed_loop_with_fps():
    t, frames = flash_frames()
    res = calibrate_line_rate(frames, 200.0, exposure=float(t.te), fps=float(t.fps))
    assert res.t_r == pytest.approx(2e-5, rel=0.01)
    assert res.n_r == pytest.approx(1 / res.t_r)
    assert not res.tf_ambiguous
    assert res.t_f == pytest.approx(1e-3, rel=0.05)


def test_calibration_without_fps_is_modulo_period():
    t, frames = flash_frames(freq=400.0, tr=1e-5, H=720)
    res = calibrate_line_rate(frames, 400.0, exposure=float(t.te))
    assert res.tf_ambiguous
    period = 1 / 400.0
    diff = abs(res.t_f - (1e-3 % period))
    assert min(diff, period - diff) < 0.05 * 1e-3
    with pytest.raises(AmbiguousPhase):
        calibrate_line_rate(frames, 400.0, exposure=float(t.te), strict=True)


def test_calibration_tolerates_noise():
    t, frames = flash_frames(noise_sigma=0.02, noise_seed=5)
    res = calibrate_line_rate(frames, 200.0, exposure=float(t.te), fps=float(t.fps))
    assert res.t_r == pytest.approx(2e-5, rel=0.01)
    report = res.to_report()
    assert {"n_r", "t_r", "t_f", "confidence"} <= set(report)
