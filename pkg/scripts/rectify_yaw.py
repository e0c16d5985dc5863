"""Rotation-only rectification error for a range of yaw rates."""

import argparse

import numpy as np

from rollsim.analysis import mae, psnr
from rollsim.geometry import Intrinsics
from rollsim.motion import RotationConstAngVel
from rollsim.shutter import complete_timing
from rollsim.simulator import Procedural, direction_pattern, rectify_rotation_only, render_gs_frame, synthesize_rs_frame


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--anchor", type=int, default=120)
    args = ap.parse_args()

    K = Intrinsics(300.0, 300.0, 159.5, 119.5)
    t = complete_timing(te=0.0, tr=3e-5, tf=1e-3, fps="solve", height=240)
    scene = Procedural(direction_pattern())
    print("yaw_rad_s,mae_raw,mae_rectified,psnr_raw_db,psnr_rectified_db,coverage")
    for w in args.rates:
        m = RotationConstAngVel(omega=[0.0, w, 0.0])
        rs = synthesize_rs_frame(scene, m, K, None, t, width=320)
        gs = render_gs_frame(scene, m, K, None, t, anchor_row=args.anchor, width=320)
        out = rectify_rotation_only(rs, m, K, t, args.anchor)
        v = out.valid
        print(
            f"{w},{mae(rs.image, gs.image, v):.4g},{mae(out.image, gs.image, v):.4g},"
            f"{psnr(rs.image, gs.image, v):.2f},{psnr(out.image, gs.image, v):.2f},{np.mean(v):.4f}"
        )


if __name__ == "__main__":
    main()
