#!/usr/bin/env python3
"""Compare analytic gradients against central finite differences.

Draws random batches at small sizes (finite differences lose precision as
the loss surface grows), checks every parameter entry, and reports the
worst relative error seen. Exit status is non-zero if any draw exceeds
the tolerance.
"""

import argparse
import sys
import time

import numpy as np

from anaseq.model import (ModelParameters, batch_loss_and_grads,
                          max_relative_error, numerical_gradients)


def run_check(rng, max_steps, max_dim, max_hidden, seed):
    batch = int(rng.integers(1, 3))
    steps = int(rng.integers(2, max_steps + 1))
    dim = int(rng.integers(2, max_dim + 1))
    hidden = int(rng.integers(2, max_hidden + 1))
    params = ModelParameters.init(dim, hidden, seed=seed)
    x = rng.normal(size=(batch, steps, dim))
    y = rng.integers(0, 2, (batch, steps)).astype(float)
    valid = np.ones((batch, steps))
    if batch > 1:
        valid[-1, -1] = 0.0
    cmask = rng.integers(0, 2, (batch, steps)).astype(float) \
        if seed % 2 else None
    _, analytic = batch_loss_and_grads(params, x, y, valid, cmask)
    numeric = numerical_gradients(
        params, lambda p: batch_loss_and_grads(p, x, y, valid, cmask)[0])
    shape = f"B={batch} T={steps} D={dim} H={hidden} " \
            f"{'masked' if cmask is not None else 'unmasked'}"
    return max_relative_error(analytic, numeric), shape


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=25)
    parser.add_argument("--max-steps", type=int, default=6)
    parser.add_argument("--max-dim", type=int, default=4)
    parser.add_argument("--max-hidden", type=int, default=4)
    parser.add_argument("--tolerance", type=float, default=1e-4)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    start = time.perf_counter()
    worst = 0.0
    worst_shape = ""
    failures = 0
    for trial in range(args.trials):
        error, shape = run_check(rng, args.max_steps, args.max_dim,
                                 args.max_hidden, trial)
        marker = ""
        if error >= args.tolerance:
            failures += 1
            marker = "  <-- exceeds tolerance"
        print(f"trial {trial:3d}  {shape:36s} rel err {error:.3e}{marker}")
        if error > worst:
            worst, worst_shape = error, shape

    elapsed = time.perf_counter() - start
    print(f"\nworst relative error {worst:.3e} ({worst_shape})")
    print(f"{args.trials} trials in {elapsed:.1f}s, "
          f"{failures} above {args.tolerance:g}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
