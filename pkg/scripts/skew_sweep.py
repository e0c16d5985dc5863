"""Measured skew slope against fx*vx*tr/Z over a sweep of lateral speeds."""

import argparse

import numpy as np

from rollsim.analysis import skew_slope
from rollsim.geometry import Intrinsics, Pose
from rollsim.motion import TranslationConstVel
from rollsim.shutter import complete_timing
from rollsim.simulator import TexturedPlane, synthesize_rs_frame


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depth", type=float, default=3.0)
    ap.add_argument("--tr", type=float, default=3e-5)
    ap.add_argument("--speeds", type=float, nargs="+", default=[2, 5, 10, 20, 40])
    args = ap.parse_args()

    K = Intrinsics(300.0, 300.0, 159.5, 119.5)
    t = complete_timing(te=0.0, tr=args.tr, tf=1e-3, fps="solve", height=240)
    tex = np.where(np.arange(64)[None, :] < 32, 0.2, 0.8) * np.ones((4, 1))
    scene = TexturedPlane(Pose(np.eye(3), [0, 0, args.depth]), (20.0, 10.0), tex)
    print("vx_m_s,closed_form_px_per_row,measured_px_per_row,rel_error")
    for vx in args.speeds:
        fr = synthesize_rs_frame(scene, TranslationConstVel(velocity=[vx, 0, 0]), K, None, t, width=320)
        closed = K.fx * vx * args.tr / args.depth
        measured = skew_slope(fr.image)
        print(f"{vx},{closed:.6g},{measured:.6g},{abs(measured - closed) / closed:.3g}")


if __name__ == "__main__":
    main()
