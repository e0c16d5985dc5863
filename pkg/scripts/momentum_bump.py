"""Where gradient descent and heavy-ball end up on the bumpy well, over a (gamma, beta) grid.

Also prints tuned iteration counts on diagonal quadratics of growing condition number.
"""

import numpy as np

from rollsim.errors import Diverged
from rollsim.numerics import OptimizerConfig, gradient_descent, heavy_ball, tuned_quadratic_steps
from rollsim.objectives import BumpyWell, Quadratic


def final_x(run, f, x0, cfg):
    try:
        return float(run(f, [x0], cfg).theta[0])
    except Diverged:
        return float("nan")


def main():
    f = BumpyWell()
    print("gamma,beta,gd_final_x,hb_final_x,hb_crossed")
    for gamma in (0.1, 0.25, 0.5, 1.0):
        for beta in (0.0, 0.5, 0.8, 0.9):
            cfg = OptimizerConfig(gamma, beta, max_iters=3000)
            gd, hb = final_x(gradient_descent, f, 8.0, cfg), final_x(heavy_ball, f, 8.0, cfg)
            print(f"{gamma},{beta},{gd:.4f},{hb:.4f},{hb < f.c}")
    print()
    print("kappa,gd_iterations,hb_iterations")
    for kappa in (10, 100, 1000, 10000):
        q = Quadratic.diagonal(1.0, float(kappa))
        s = tuned_quadratic_steps(1.0, float(kappa))
        gd = gradient_descent(q, [1.0, 1.0], OptimizerConfig(s["gd_gamma"], max_iters=200000))
        hb = heavy_ball(q, [1.0, 1.0], OptimizerConfig(s["hb_gamma"], s["hb_beta"], max_iters=200000))
        print(f"{kappa},{gd.iterations},{hb.iterations}")


if __name__ == "__main__":
    np.set_printoptions(precision=4)
    main()
