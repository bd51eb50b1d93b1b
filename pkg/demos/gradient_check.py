#!/usr/bin/env python3
"""Verify the analytic backward pass against central finite differences.

First runs the randomized batch check, then walks one small configuration
by hand: builds the finite-difference gradient for every coordinate and
prints the largest gap against the analytic gradient.
"""

import argparse

import numpy as np

from cosground import (
    TransformModel,
    backward,
    fd_gradients,
    relative_errors,
    run_gradcheck,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=25)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    result = run_gradcheck(trials=args.trials, seed=args.seed)
    print(f"randomized check: {result.trials} trials, "
          f"{result.coords_checked} coordinates, "
          f"max rel err {result.max_rel_err:.3e} "
          f"({'PASS' if result.passed else 'FAIL'} at {result.tolerance:.0e})")

    # one configuration in slow motion
    rng = np.random.default_rng(0)
    model = TransformModel(weight=rng.normal(size=(6, 4)) * 0.5,
                           bias=rng.normal(size=6) * 0.1)
    text = rng.normal(size=4)
    props = rng.normal(size=(5, 6))
    gt = 2

    loss_value, grads = backward(model, text, props, gt)
    fd_w, fd_b = fd_gradients(model, text, props, gt)
    rel_w = relative_errors(grads.d_weight, fd_w)
    rel_b = relative_errors(grads.d_bias, fd_b)

    print(f"\nsingle case: loss {loss_value:.6f}")
    print(f"analytic d_bias:    {np.array2string(grads.d_bias, precision=6)}")
    print(f"finite-diff d_bias: {np.array2string(fd_b, precision=6)}")
    print(f"max rel err, weight: {rel_w.max():.3e}  bias: {rel_b.max():.3e}")

    # a deliberately broken gradient is caught immediately
    broken = grads.d_weight.copy()
    broken[0, 0] *= 1.5
    print(f"corrupted d_weight[0,0] rel err: {relative_errors(broken, fd_w).max():.3e}")


if __name__ == "__main__":
    main()
