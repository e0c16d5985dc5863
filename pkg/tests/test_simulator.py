import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rollsim.analysis import edge_positions
from rollsim.distortion import RadialDistortion
from rollsim.errors import AnchorOutOfRange, MultipleSolutions, NotImagedThisFrame
from rollsim.geometry import Intrinsics, Pose, inverse, project, rot_y
from rollsim.motion import RotationConstAngVel, Static, TranslationConstVel
from rollsim.shutter import complete_timing
from rollsim.simulator import (
    Frame,
    FlashingLight,
    PointSet,
    Procedural,
    TexturedPlane,
    bilinear,
    depth_warp,
    direction_pattern,
    exposure_sample_times,
    rectify_known_depth,
    rectify_rotation_only,
    render_gs_frame,
    rotation_warp,
    rs_project_point,
    synthesize_flash_frames,
    synthesize_rs_frame,
)

W, H = 64, 48
K = Intrinsics(60.0, 60.0, 31.5, 23.5)
TIMING = complete_timing(te=1e-4, tr=1e-4, tf=1e-3, fps="solve", height=H)


def plane(texture=None, z=2.0, extent=(4.0, 3.0)):
    if texture is None:
        texture = np.random.default_rng(0).uniform(0.1, 0.9, (24, 32))
    return TexturedPlane(Pose(np.eye(3), [0, 0, z]), extent, texture)


def test_bilinear_exact_and_interpolated():
    img = np.arange(12, dtype=float).reshape(3, 4)
    v, ok = bilinear(img, np.array([0.0, 3.0, 1.5]), np.array([0.0, 2.0, 0.5]))
    assert ok.all()
    assert v[0] == 0.0 and v[1] == 11.0
    assert v[2] == pytest.approx((1 + 2 + 5 + 6) / 4)
    v, ok = bilinear(img, np.array([-0.1, 3.01]), np.array([0.0, 0.0]), fill=-1)
    assert not ok.any() and np.all(v == -1)


def test_exposure_samples_deterministic_and_stratified():
    a = exposure_sample_times(1.0, 0.01, 8, seed=3, fi=1, line=5)
    b = exposure_sample_times(1.0, 0.01, 8, seed=3, fi=1, line=5)
    assert np.array_equal(a, b)
    assert np.all((a >= 1.0) & (a < 1.01))
    assert np.all(np.floor((a - 1.0) / 0.01 * 8) == np.arange(8))
    assert np.array_equal(exposure_sample_times(2.0, 0.1, 1), [2.0])


def test_static_rs_equals_gs_bitwise():
    m = Static(Pose(rot_y(0.05), [0.1, 0, 0]))
    kw = dict(width=W, seed=4)
    rs = synthesize_rs_frame(plane(), m, K, RadialDistortion((-0.1,)), TIMING, 0.0, 0, 4, **kw)
    gs = render_gs_frame(plane(), m, K, RadialDistortion((-0.1,)), TIMING, 0.0, 0, 4, anchor_row=10, **kw)
    assert np.array_equal(rs.image, gs.image)


def test_thread_count_does_not_change_pixels():
    m = TranslationConstVel(velocity=[3.0, 0.5, 0.0])
    a = synthesize_rs_frame(plane(), m, K, None, TIMING, 0.0, 1, 3, width=W, seed=9, threads=1)
    b = synthesize_rs_frame(plane(), m, K, None, TIMING, 0.0, 1, 3, width=W, seed=9, threads=6)
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.row_poses, b.row_poses)


def test_gs_lines_share_one_time():
    m = TranslationConstVel(velocity=[1.0, 0, 0])
    gs = render_gs_frame(plane(), m, K, None, TIMING, 0.0, 0, 1, anchor_row=7, width=W)
    assert np.all(gs.row_times == pytest.approx(7 * float(TIMING.tr)))
    assert len(set(gs.row_times)) == 1


def test_sidecar_poses_match_row_times():
    m = TranslationConstVel(velocity=[1.0, 0, 0])
    fr = synthesize_rs_frame(plane(), m, K, None, TIMING, 0.5, 2, width=W)
    for y in (0, 20, H - 1):
        assert fr.pose(y).allclose(m.pose_at(fr.row_times[y]))
    assert fr.row_times[0] == pytest.approx(0.5 + 2 / float(TIMING.fps))


def test_skew_matches_per_row_projection_sweep():
    vx, Z = 40.0, 2.0
    tex = np.where(np.arange(256)[None, :] < 128, 0.2, 0.8) * np.ones((8, 1))
    scene = plane(tex, z=Z, extent=(8.0, 3.0))
    m = TranslationConstVel(velocity=[vx, 0, 0])
    fr = synthesize_rs_frame(scene, m, K, None, TIMING, width=W)
    measured = edge_positions(fr.image)
    # oracle: the edge is the world line x=0 on the plane; project it at each row's time
    oracle = np.array([project(m.pose_at(t), K, [0.0, 0.0, Z])[0] for t in fr.row_times])
    # texture is piecewise constant in texels: edge sits within half a pixel of the oracle
    assert np.abs(measured - oracle).max() < 0.75
    slope = np.polyfit(np.arange(H), measured, 1)[0]
    assert slope == pytest.approx(K.fx * vx * float(TIMING.tr) / Z, rel=0.01)


def test_point_set_nearest_wins():
    pts = np.array([[0, 0, 2.0], [0, 0, 1.0], [0, 0, 3.0]])
    scene = PointSet(pts, [0.2, 0.9, 0.5])
    fr = synthesize_rs_frame(scene, Static(), K, None, TIMING, width=W, with_depth=True)
    y, x = 24, 32  # principal point rounds to (32, 24)
    assert fr.image[y, x] == 0.9
    assert fr.depth[y, x] == 1.0
    assert np.count_nonzero(fr.image) == 1


def test_rs_project_point_static_matches_projection():
    X = np.array([0.3, -0.2, 2.0])
    p, t = rs_project_point(X, Static(), K, None, TIMING, width=W)
    assert np.allclose(p, project(Pose(), K, X))
    assert t == pytest.approx(round(p[1]) * float(TIMING.tr))


@given(st.floats(-0.5, 0.5), st.floats(-0.4, 0.4), st.floats(-5, 5), st.floats(-5, 5))
def test_rs_project_point_is_self_consistent(x, y, vx, vy):
    m = TranslationConstVel(velocity=[vx, vy, 0.0])
    X = np.array([x, y, 2.0])
    try:
        p, t = rs_project_point(X, m, K, None, TIMING, width=W)
    except NotImagedThisFrame:
        return
    line = int(np.floor(p[1] + 0.5))
    assert t == pytest.approx(line * float(TIMING.tr), abs=1e-15)
    assert np.allclose(p, project(m.pose_at(t), K, X))


def test_point_tracking_the_scan_gives_multiple_solutions():
    Z = 2.0
    # image y moves exactly one row per line delay, keeping pace with the shutter
    vy = Z / (K.fy * float(TIMING.tr))
    m = TranslationConstVel(velocity=[0, vy, 0])
    # starts on row 0 at t = 0
    X = np.array([0.0, -K.cy / K.fy * Z + 1e-9, Z])
    roots = rs_project_point(X, m, K, None, TIMING, width=W, all_roots=True)
    assert len(roots) > 1
    with pytest.raises(MultipleSolutions) as info:
        rs_project_point(X, m, K, None, TIMING, width=W)
    assert len(info.value.solutions) == len(roots)


def test_point_outside_view_not_imaged():
    with pytest.raises(NotImagedThisFrame):
        rs_project_point([5.0, 0, 1.0], Static(), K, None, TIMING, width=W)


def yaw_case(omega=1.5):
    scene = Procedural(direction_pattern())
    m = RotationConstAngVel(omega=[0, omega, 0])
    rs = synthesize_rs_frame(scene, m, K, None, TIMING, width=W)
    gs = render_gs_frame(scene, m, K, None, TIMING, anchor_row=H // 2, width=W)
    return m, rs, gs


def test_rotation_rectification_static_is_identity():
    fr = synthesize_rs_frame(plane(), Static(), K, None, TIMING, width=W)
    out = rectify_rotation_only(fr, Static(), K, TIMING, 5)
    assert out.valid.all()
    assert np.array_equal(out.image, fr.image)


def test_rotation_rectification_improves_and_fixes_anchor():
    m, rs, gs = yaw_case()
    out = rectify_rotation_only(rs, m, K, TIMING, H // 2)
    v = out.valid
    before = np.abs(rs.image - gs.image)[v].mean()
    after = np.abs(out.image - gs.image)[v].mean()
    assert after * 5 < before
    x, y, ok = rotation_warp(rs, m, K, TIMING, H // 2)
    grid_x = np.arange(W, dtype=float)
    assert np.abs(x[H // 2] - grid_x).max() < 1e-6
    assert np.abs(y[H // 2] - H // 2).max() < 1e-6


def test_rotation_rectification_rejects_translation():
    m = TranslationConstVel(velocity=[1, 0, 0])
    fr = synthesize_rs_frame(plane(), m, K, None, TIMING, width=W)
    with pytest.raises(ValueError):
        rectify_rotation_only(fr, m, K, TIMING, 0)
    with pytest.raises(AnchorOutOfRange):
        rectify_rotation_only(fr, Static(), K, TIMING, H)


def test_depth_warp_matches_plane_homography():
    Z = 2.0
    m = TranslationConstVel(rot_y(0.02), [0.05, 0, 0], velocity=[2.0, -0.5, 0.3])
    fr = synthesize_rs_frame(plane(z=Z, extent=(8, 6)), m, K, None, TIMING, width=W, with_depth=True)
    anchor = 20
    qx, qy, _, ok = depth_warp(fr, m, K, TIMING, fr.depth, anchor)
    P_a = m.pose_at(fr.row_times[anchor])
    n_w, d_w = np.array([0, 0, 1.0]), Z  # world plane n.X = d
    errs = []
    for y in range(H):
        P_y = m.pose_at(fr.row_times[y])
        rel = P_a.rotation @ P_y.rotation.T
        t_rel = P_a.translation - rel @ P_y.translation
        n_c = P_y.rotation @ n_w
        d_c = d_w + n_c @ P_y.translation
        Hm = K.matrix @ (rel + np.outer(t_rel, n_c) / d_c) @ K.inverse_matrix
        src = np.stack([np.arange(W), np.full(W, y), np.ones(W)])
        dst = Hm @ src
        dst = dst[:2] / dst[2]
        sel = ok[y]
        errs.append(np.abs(dst[0][sel] - qx[y][sel]).max(initial=0))
        errs.append(np.abs(dst[1][sel] - qy[y][sel]).max(initial=0))
    assert ok.mean() > 0.99
    assert max(errs) < 1e-3


def test_known_depth_static_is_identity():
    fr = synthesize_rs_frame(plane(), Static(), K, None, TIMING, width=W, with_depth=True)
    out = rectify_known_depth(fr, Static(), K, TIMING, fr.depth, 3)
    assert out.valid.all()
    assert np.array_equal(out.image, fr.image)


def test_known_depth_improves_translation():
    m = TranslationConstVel(velocity=[60.0, 0, 0])
    scene = plane(z=2.0, extent=(8, 6))
    fr = synthesize_rs_frame(scene, m, K, None, TIMING, width=W, with_depth=True)
    gs = render_gs_frame(scene, m, K, None, TIMING, anchor_row=24, width=W)
    out = rectify_known_depth(fr, m, K, TIMING, fr.depth, 24)
    v = out.valid
    assert np.abs(out.image - gs.image)[v].mean() < np.abs(fr.image - gs.image)[v].mean()


def test_flash_light_waveforms():
    sq = FlashingLight(100.0, "square", duty=0.25, low=0.0, high=1.0)
    assert sq(0.0) == 1.0 and sq(0.003) == 0.0
    sine = FlashingLight(50.0, "sine", low=0.2, high=0.8)
    assert sine(0.0) == pytest.approx(0.8) and sine(0.01) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        FlashingLight(10.0, "triangle")


def test_flash_frames_are_row_constant():
    frames = synthesize_flash_frames(FlashingLight(300.0), TIMING, 8, n_frames=2)
    assert len(frames) == 2
    for fr in frames:
        assert fr.image.shape == (H, 8)
        assert np.all(fr.image == fr.image[:, :1])
