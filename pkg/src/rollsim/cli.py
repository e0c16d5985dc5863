"""``rollsim`` command line: simulate, rectify, analyze, calibrate.

Each command prints one JSON summary line on stdout and writes a
human-readable ``report.txt`` next to its artifacts.  Exit codes: 0 success,
1 runtime failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from rollsim import io
from rollsim.analysis import conditioning_table, mae, psnr, rig_design, skew_slope
from rollsim.config import ExperimentConfig, load_config, require
from rollsim.errors import ConfigError, RollsimError
from rollsim.motion import Static, TranslationConstVel
from rollsim.numerics import (
    DesignSystem,
    OptimizerConfig,
    calibrate_line_rate,
    gradient_descent,
    heavy_ball,
    tuned_quadratic_steps,
)
from rollsim.objectives import BUILTIN, BumpyWell, Quadratic
from rollsim.simulator import (
    Frame,
    TexturedPlane,
    rectify_known_depth,
    rectify_rotation_only,
    render_gs_frame,
    synthesize_flash_frames,
    synthesize_rs_frame,
)

log = logging.getLogger("rollsim")

# Bump demo: plain GD stalls behind the bump, momentum carries over it.
BUMP_DEMO = {"gamma": 0.5, "beta": 0.8, "start": 8.0}


class CommandError(RollsimError):
    """Runtime failure reported with exit code 1."""


def _finite(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    return _finite(obj)


class Outputs:
    """Tracks written artifacts so the summary can list their hashes."""

    def __init__(self, root, cfg: ExperimentConfig):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.files: list[Path] = []

    @property
    def meta(self):
        return {"config_sha256": self.cfg.sha256, "seed": self.cfg.seed}

    def path(self, name) -> Path:
        p = self.root / name
        self.files.append(p)
        return p

    def hashes(self):
        return {p.name: io.file_sha256(p) for p in self.files}

    def finish(self, command, results: dict, report_lines: list[str]):
        report = self.path("report.txt")
        header = [f"rollsim {command}", f"config_sha256: {self.cfg.sha256}", f"seed: {self.cfg.seed}", ""]
        report.write_text("\n".join(header + report_lines) + "\n")
        summary = {
            "command": command,
            "status": "ok",
            "config_sha256": self.cfg.sha256,
            "seed": self.cfg.seed,
            "results": results,
            "files": self.hashes(),
        }
        print(json.dumps(_clean(summary), sort_keys=True))
        return 0


def _frame_name(kind, fi, fmt):
    return f"{kind}_{fi:03d}.{fmt}"


def _expected_skew(cfg: ExperimentConfig):
    """Closed-form per-row shift for lateral constant velocity past a fronto-parallel plane."""
    m, scene, t = cfg.motion, cfg.scene, cfg.timing
    if not isinstance(m, TranslationConstVel) or not isinstance(scene, TexturedPlane):
        return None
    if t.sweep != "down" or t.mode.value != "rolling":
        return None
    if abs(m.velocity[2]) > 0 or abs(m.velocity[1]) > 0:
        return None
    n_cam = m.R0 @ scene.normal
    if not np.allclose(np.abs(n_cam), [0, 0, 1], atol=1e-12):
        return None
    Z = float((m.R0 @ scene.origin + m.T0)[2])
    return cfg.intrinsics.fx * m.velocity[0] * float(t.tr) / Z


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, seed=args.seed, threads=args.threads)
    require(cfg, "intrinsics", "timing", "scene")
    out = Outputs(args.out, cfg)
    fmt = cfg.output.format
    want_gt = args.ground_truth or cfg.output.ground_truth
    common = dict(
        width=cfg.width,
        image_height=cfg.image_height,
        gamma=cfg.gamma,
        seed=cfg.seed if cfg.jitter else None,
        threads=cfg.threads,
    )
    results = {"frames": cfg.frames}
    lines = [f"frames: {cfg.frames}  size: {cfg.width} x {cfg.image_height or cfg.timing.height}"]
    expected = _expected_skew(cfg)
    for fi in range(cfg.frames):
        log.info("rendering frame %d", fi)
        frame = synthesize_rs_frame(
            cfg.scene, cfg.motion, cfg.intrinsics, cfg.distortion, cfg.timing, cfg.tau0, fi,
            cfg.exposure_samples, with_depth=cfg.output.depth, **common,
        )
        meta = {**out.meta, "frame": fi, "kind": "rolling"}
        io.write_image(out.path(_frame_name("rs", fi, fmt)), frame.image, cfg.output.bit_depth, meta)
        io.write_sidecar(out.path(f"rs_{fi:03d}.csv"), frame.row_times, frame.row_poses, meta)
        if cfg.output.depth:
            np.save(out.path(f"depth_{fi:03d}.npy"), frame.depth, allow_pickle=False)
        if want_gt:
            gs = render_gs_frame(
                cfg.scene, cfg.motion, cfg.intrinsics, cfg.distortion, cfg.timing, cfg.tau0, fi,
                cfg.exposure_samples, anchor_row=cfg.anchor, **common,
            )
            # same metadata as the RS frame so equal content gives equal bytes
            io.write_image(out.path(_frame_name("gs", fi, fmt)), gs.image, cfg.output.bit_depth, meta)
            if fi == 0:
                results["gs_identical_to_rs"] = bool(np.array_equal(gs.image, frame.image))
        if expected is not None and fi == 0:
            measured = skew_slope(frame.image)
            rel = abs(measured - expected) / abs(expected) if expected else math.nan
            results["skew"] = {"measured_px_per_row": measured, "expected_px_per_row": expected, "rel_error": rel}
            lines.append(f"skew slope: measured {measured:.6g} px/row, closed form {expected:.6g}, rel error {rel:.3g}")
    if "gs_identical_to_rs" in results:
        lines.append(f"GS oracle identical to RS frame 0: {results['gs_identical_to_rs']}")
    lines.append("")
    lines += [f"{p.name}  {h}" for p, h in zip(out.files, out.hashes().values())]
    return out.finish("simulate", results, lines)


def _load_frame(args, cfg):
    frame_path = Path(args.frame)
    if not frame_path.exists():
        raise CommandError(f"frame file not found: {frame_path}")
    sidecar = Path(args.sidecar) if args.sidecar else frame_path.with_suffix(".csv")
    if not sidecar.exists():
        raise CommandError(f"sidecar file not found: {sidecar}")
    image, meta = io.read_image(frame_path)
    try:
        times, poses = io.read_sidecar(sidecar)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    lines = image.shape[1] if cfg.timing.scans_columns else image.shape[0]
    if len(times) != lines or len(times) != cfg.timing.height:
        raise CommandError(
            f"sidecar {sidecar} has {len(times)} rows but the frame has {lines} lines "
            f"(timing height {cfg.timing.height})"
        )
    for y in (0, len(times) // 2, len(times) - 1):
        expected = cfg.motion.pose_at(float(times[y])).to_row()
        if not np.allclose(expected, poses[y], rtol=0, atol=1e-9):
            raise CommandError(f"sidecar {sidecar} row {y} pose disagrees with the configured motion")
    frame = Frame(image=image, row_times=times, row_poses=poses, timing=cfg.timing)
    return frame, meta


def cmd_rectify(args) -> int:
    cfg = load_config(args.config, seed=args.seed, threads=args.threads)
    require(cfg, "intrinsics", "timing")
    frame, meta = _load_frame(args, cfg)
    out = Outputs(args.out, cfg)
    anchor = cfg.anchor
    if args.depth:
        depth = np.load(args.depth, allow_pickle=False)
        rect = rectify_known_depth(frame, cfg.motion, cfg.intrinsics, cfg.timing, depth, anchor, cfg.distortion)
        method = "known_depth"
    elif cfg.motion.rotation_only:
        rect = rectify_rotation_only(frame, cfg.motion, cfg.intrinsics, cfg.timing, anchor, cfg.distortion)
        method = "rotation_only"
    else:
        raise CommandError("motion has a translating component; rectification needs --depth")

    name = Path(args.frame).name.replace("rs_", "rect_", 1)
    if name == Path(args.frame).name:
        name = "rect_" + name
    out_meta = {**meta, **out.meta}
    bit_depth = 16 if frame.image.dtype == np.uint16 else cfg.output.bit_depth
    io.write_image(out.path(name), rect.image, bit_depth, out_meta)
    io.write_image(out.path("valid_" + name), rect.valid.astype(float), 8, out_meta)

    coverage = float(rect.valid.mean())
    results = {"method": method, "anchor_row": anchor, "coverage": coverage}
    lines = [f"method: {method}", f"anchor row: {anchor}", f"coverage: {coverage:.4f}"]
    if args.ground_truth:
        gt, _ = io.read_image(args.ground_truth)
        if gt.shape != frame.image.shape:
            raise CommandError(f"ground truth {args.ground_truth} has shape {gt.shape}, frame {frame.image.shape}")
        v = rect.valid
        results.update(
            mae_rectified=mae(rect.image, gt, v),
            mae_unrectified=mae(frame.image, gt, v),
            psnr_rectified=psnr(rect.image, gt, v),
            psnr_unrectified=psnr(frame.image, gt, v),
        )
        for key in ("mae_rectified", "mae_unrectified", "psnr_rectified", "psnr_unrectified"):
            lines.append(f"{key}: {_finite(results[key])}")
    return out.finish("rectify", results, lines)


def _analyze_conditioning(cfg, out, params):
    n_points = int(params.get("n_points", 5))
    seeds = params.get("seeds", [cfg.seed])
    rows, lines = [], ["seed  rig          rows  kappa"]
    for seed in seeds:
        table = conditioning_table(n_points, int(seed))
        for r in table:
            rows.append({"seed": int(seed), **r})
            lines.append(f"{seed:<5} {r['rig']:<12} {r['rows']:<5} {r['kappa']:.6g}")
        blocks = rig_design(2, n_points, int(seed))
        stacked = np.vstack(blocks)
        system = DesignSystem(stacked, np.zeros(len(stacked)))
        io.write_design_csv(out.path(f"design_two_camera_seed{seed}.csv"), system, out.meta)
    with open(out.path("kappa.csv"), "w") as f:
        f.write(f"# config_sha256={cfg.sha256}\n# seed={cfg.seed}\n")
        f.write("seed,rig,rows,kappa\n")
        for r in rows:
            f.write(f"{r['seed']},{r['rig']},{r['rows']},{r['kappa']!r}\n")
    two_lower = all(
        next(r for r in rows if r["seed"] == s and r["rig"] == "two_camera")["kappa"]
        < min(r["kappa"] for r in rows if r["seed"] == s and r["rig"] != "two_camera")
        for s in seeds
    )
    lines.append(f"two-camera kappa below every single camera: {two_lower}")
    return {"table": rows, "two_camera_lower": two_lower}, lines


def _run_calibration(cfg, frames):
    cal = cfg.calibration
    t = cfg.timing
    fps = float(t.fps) if cal["use_fps"] else None
    exposure = float(t.te)
    return calibrate_line_rate(frames, cal["light"].frequency, exposure=exposure, fps=fps)


def _analyze_calibration(cfg, out, params):
    require(cfg, "timing", "calibration")
    cal = cfg.calibration
    frames = synthesize_flash_frames(
        cal["light"], cfg.timing, cfg.width, cal["frames"], cfg.tau0, cal["exposure_samples"],
        seed=cfg.seed if cfg.jitter else None, noise_sigma=cal["noise_sigma"], noise_seed=cfg.seed,
    )
    res = _run_calibration(cfg, frames)
    true_tr, true_tf = float(cfg.timing.tr), float(cfg.timing.tf)
    period = res.flash_period
    tf_err = None
    if res.t_f is not None:
        ref = true_tf % period if res.tf_ambiguous else true_tf
        diff = abs(res.t_f - ref)
        if res.tf_ambiguous:
            diff = min(diff, period - diff)
        tf_err = diff / true_tf if true_tf else diff
    results = {
        **res.to_report(),
        "true_t_r": true_tr,
        "true_t_f": true_tf,
        "t_r_rel_error": abs(res.t_r - true_tr) / true_tr,
        "t_f_rel_error": tf_err,
    }
    _write_calibration_report(out, results)
    lines = [f"{k}: {_finite(v)}" for k, v in results.items() if k != "confidence"]
    return results, lines


def _write_calibration_report(out, report):
    text = json.dumps(_clean({**out.meta, **report}), indent=2, sort_keys=True)
    out.path("calibration.json").write_text(text + "\n")


def _analyze_optimizer(cfg, out, params):
    name = params.get("objective", "quadratic_kappa100")
    if name not in BUILTIN or not isinstance(BUILTIN[name], Quadratic):
        raise ConfigError("analysis.objective", f"expected a quadratic objective, got {name!r}")
    f = BUILTIN[name]
    mu, L = f.curvature_range
    steps = tuned_quadratic_steps(mu, L)
    theta0 = np.asarray(params.get("start", [1.0] * len(f.A)), dtype=float)
    tol = float(params.get("grad_tol", 1e-8))
    gd = gradient_descent(f, theta0, OptimizerConfig(steps["gd_gamma"], grad_tol=tol))
    hb = heavy_ball(f, theta0, OptimizerConfig(steps["hb_gamma"], steps["hb_beta"], grad_tol=tol))
    io.write_trace_csv(out.path("trace_gd.csv"), gd, out.meta)
    io.write_trace_csv(out.path("trace_hb.csv"), hb, out.meta)

    bump = BumpyWell()
    b = {**BUMP_DEMO, **params.get("bump", {})}
    cfg_b = OptimizerConfig(b["gamma"], b["beta"], max_iters=2000)
    bgd = gradient_descent(bump, [b["start"]], cfg_b)
    bhb = heavy_ball(bump, [b["start"]], cfg_b)
    io.write_trace_csv(out.path("trace_bump_gd.csv"), bgd, out.meta)
    io.write_trace_csv(out.path("trace_bump_hb.csv"), bhb, out.meta)

    results = {
        "objective": name,
        "curvature_range": [mu, L],
        "tuned": steps,
        "gd_iterations": gd.iterations,
        "hb_iterations": hb.iterations,
        "gd_converged": gd.converged,
        "hb_converged": hb.converged,
        "bump": {**b, "gd_final_x": float(bgd.theta[0]), "hb_final_x": float(bhb.theta[0])},
    }
    lines = [
        f"objective {name}, curvatures [{mu:g}, {L:g}]",
        f"GD  gamma={steps['gd_gamma']:.6g}: {gd.iterations} iterations to |grad| <= {tol:g}",
        f"HB  gamma={steps['hb_gamma']:.6g} beta={steps['hb_beta']:.6g}: {hb.iterations} iterations",
        f"bump demo gamma={b['gamma']} beta={b['beta']} start={b['start']}: "
        f"GD ends at x={bgd.theta[0]:.6g}, HB ends at x={bhb.theta[0]:.6g}",
    ]
    return results, lines


def cmd_analyze(args) -> int:
    cfg = load_config(args.config, seed=args.seed, threads=args.threads)
    if cfg.analysis is None:
        raise ConfigError("analysis", "required block missing")
    out = Outputs(args.out, cfg)
    kind = cfg.analysis["kind"]
    runner = {
        "conditioning": _analyze_conditioning,
        "calibration": _analyze_calibration,
        "optimizer": _analyze_optimizer,
    }[kind]
    results, lines = runner(cfg, out, cfg.analysis)
    return out.finish(f"analyze {kind}", results, lines)


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config, seed=args.seed, threads=args.threads)
    require(cfg, "timing", "calibration")
    frames = []
    for p in args.frames:
        if not Path(p).exists():
            raise CommandError(f"frame file not found: {p}")
        frames.append(io.read_image(p)[0])
    out = Outputs(args.out, cfg)
    res = _run_calibration(cfg, frames)
    report = res.to_report()
    _write_calibration_report(out, report)
    lines = [f"{k}: {_finite(v)}" for k, v in report.items() if k != "confidence"]
    return out.finish("calibrate", report, lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rollsim", description="Rolling-shutter simulation and analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (YAML)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker threads (does not affect results)")

    p = sub.add_parser("simulate", help="render rolling-shutter frames")
    common(p)
    p.add_argument("--ground-truth", action="store_true", help="also render the global-shutter oracle")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rectify", help="rectify a rendered frame to its anchor row")
    common(p)
    p.add_argument("--frame", required=True, help="input frame image")
    p.add_argument("--sidecar", help="per-row CSV (default: frame path with .csv)")
    p.add_argument("--ground-truth", metavar="IMAGE", help="reference image for error metrics")
    p.add_argument("--depth", help="per-pixel depth (.npy) for translating motion")
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("analyze", help="run the analysis selected in the config")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", help="estimate line delay from flash-banded frames")
    common(p)
    p.add_argument("--frames", nargs="+", required=True, help="consecutive frames, in order")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("ROLLSIM_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RollsimError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
