"""Condition number of single cameras against the stacked rig, versus yaw separation."""

import numpy as np

from rollsim.analysis import rig_design
from rollsim.numerics import condition_number


def main():
    print("yaw_deg,kappa_cam0,kappa_cam1,kappa_stack (median over 20 seeds)")
    for deg in (0, 15, 30, 60, 90, 135, 180):
        rows = []
        for seed in range(20):
            blocks = rig_design(2, 5, seed, yaw=np.radians(deg))
            rows.append([condition_number(b) for b in blocks] + [condition_number(np.vstack(blocks))])
        med = np.median(np.array(rows), axis=0)
        print(f"{deg},{med[0]:.1f},{med[1]:.1f},{med[2]:.1f}")


if __name__ == "__main__":
    main()
