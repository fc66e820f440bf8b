"""Timing comparison of the compiled and pure-Python jet kernels.

Measures, per backend:

* plain jet evaluation (value, gradient, diagonal second derivative),
* jet evaluation plus reverse sweep for a scalar loss gradient,
* one full training iteration of the adversarial solver.

Usage: python benchmarks/bench_backends.py [--dim 1] [--width 50]
       [--depth 3] [--batch 128] [--repeats 200]
"""

import argparse
import time

import numpy as np

import mfglab.backends as backends
from mfglab import nets, tape
from mfglab.mfg import SolverConfig, make_test_problem, train_mfgan
from mfglab.tape import Var


def time_call(fn, repeats):
    fn()  # warm up allocators and, on first use, lazy imports
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_backend(name, args):
    backends.set_backend(name)
    net = nets.Mlp(widths=(args.dim,) + (args.width,) * args.depth + (1,),
                   periodic=True)
    params = net.init_params(seed=0)
    rng = np.random.default_rng(1)
    x = rng.random((args.batch, args.dim))

    t_jet = time_call(lambda: nets.jet_batch(net, params, x), args.repeats)

    def loss_grad():
        theta = Var(params)
        val, grad, diag = nets.jet_batch_var(net, theta, x)
        loss = (val * val).mean() + (grad * grad).mean() + (diag * diag).mean()
        tape.backward(loss)
        return theta.grad

    t_grad = time_call(loss_grad, args.repeats)

    problem, _ = make_test_problem(args.dim)
    cfg = SolverConfig(dim=args.dim, outer_iters=args.train_iters,
                       eval_every=0, width=args.width, depth=args.depth,
                       batch_d=args.batch, batch_g=args.batch, seed=0)
    t0 = time.perf_counter()
    train_mfgan(problem, cfg)
    t_train = (time.perf_counter() - t0) / args.train_iters
    return t_jet, t_grad, t_train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=1)
    ap.add_argument("--width", type=int, default=50)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--train-iters", type=int, default=200)
    args = ap.parse_args()

    names = ["python"]
    if backends.HAVE_COMPILED:
        names.append("compiled")
    else:
        print("compiled backend not built; timing python only")

    print(f"dim={args.dim} width={args.width} depth={args.depth} "
          f"batch={args.batch} repeats={args.repeats}")
    print(f"{'backend':9s} {'jet eval':>12s} {'loss grad':>12s} {'train iter':>12s}")
    rows = {}
    for name in names:
        t_jet, t_grad, t_train = bench_backend(name, args)
        rows[name] = (t_jet, t_grad, t_train)
        print(f"{name:9s} {t_jet * 1e6:9.1f} us {t_grad * 1e6:9.1f} us "
              f"{t_train * 1e3:9.2f} ms")
    if len(rows) == 2:
        py, cc = rows["python"], rows["compiled"]
        print(f"{'speedup':9s} {py[0] / cc[0]:10.1f} x {py[1] / cc[1]:10.1f} x "
              f"{py[2] / cc[2]:10.2f} x")
    backends.set_backend("auto")


if __name__ == "__main__":
    main()
