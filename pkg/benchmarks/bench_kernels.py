"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` wall time per call for each kernel and backend
and the resulting speed-up.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from stochmech import kernels
from stochmech.phase_core import builtin_model


def _cases(rng):
    inv = builtin_model("inverted", {"m": 1.0, "lambda": 1.0})
    pend = builtin_model("pendulum", {"m": 1.0, "gl": 1.0})
    B, steps = 256, 1000
    x0 = rng.normal(size=(B, 1))
    p0 = rng.normal(size=(B, 1))
    dW = rng.normal(scale=np.sqrt(1e-3), size=(B, steps, 2))
    rho = rng.random((256, 256))
    vel = rng.normal(size=256)
    D = np.full(256, 0.01)

    def integrate(impl, model, scheme):
        return lambda: impl.integrate_block(model.code, model.kernel_params(), x0, p0, dW, 1e-3, steps,
                                            kernels.SCHEMES[scheme], kernels.GATINGS["unstable_only"],
                                            1.0, 1e-10, 100, model.periodic)

    def tangent(impl):
        def run():
            x, p, Y = np.array([0.3]), np.array([0.1]), np.eye(2)
            impl.tangent_leapfrog(pend.code, pend.kernel_params(), x, p, Y, 1e-3, 10_000, True)
        return run

    return {
        "integrate_block inverted split_step (256 paths x 1000 steps)":
            lambda impl: integrate(impl, inv, "split_step"),
        "integrate_block pendulum heun (256 paths x 1000 steps)":
            lambda impl: integrate(impl, pend, "heun"),
        "tangent_leapfrog pendulum (10000 steps)": tangent,
        "advect_lines van_leer 256x256 axis 0":
            lambda impl: (lambda: impl.advect_lines(rho, vel, 1e-3, 0.02, 0, True, kernels.LIMITERS["van_leer"])),
        "advect_lines van_leer 256x256 axis 1":
            lambda impl: (lambda: impl.advect_lines(rho, vel, 1e-3, 0.02, 1, True, kernels.LIMITERS["van_leer"])),
        "diffuse 256x256":
            lambda impl: (lambda: impl.diffuse(rho, D, D, 1e-3, 0.02, 0.02, True, False)),
    }


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    try:
        compiled = kernels.get_backend("compiled")
    except ImportError:
        compiled = None
    python = kernels.get_backend("python")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<62} {'python':>11} {'compiled':>11} {'speed-up':>9}")
    for label, make in _cases(rng).items():
        t_py = min(timeit.repeat(make(python), number=1, repeat=args.repeat))
        if compiled is None:
            print(f"{label:<62} {t_py * 1e3:9.2f}ms {'n/a':>11} {'n/a':>9}")
            continue
        t_c = min(timeit.repeat(make(compiled), number=1, repeat=args.repeat))
        print(f"{label:<62} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()
