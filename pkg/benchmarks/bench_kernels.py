"""Time the compiled and numpy QIF kernels on simulated designs and check they agree.

Usage: python benchmarks/bench_kernels.py [--n 200 500] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from gaplm.core import FitConfig
from gaplm.kernels import get_backend
from gaplm.qif import QIFProblem
from gaplm.simulate import generate


def inputs(design, n, structure, seed=0):
    ds, truth = generate(design, n, seed)
    config = FitConfig(structure=structure, family=truth.family)
    prob = QIFProblem.from_config(ds, config)
    a, v, da, dv = prob._observation_terms(prob.initial_estimate(), True)
    return prob, (prob.D, a, da, v, dv, prob.starts, prob.code, prob.K)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[200, 500])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    py = get_backend("python")
    try:
        cy = get_backend("cython")
    except ImportError:
        cy = None
        print("compiled extension not built; timing the numpy backend only")
    print(f"{'design':<10}{'n':>6}{'corr':>6}{'python ms':>12}{'cython ms':>12}{'speedup':>9}{'max diff':>11}")
    for design in ("example1", "example3"):
        for n in args.n:
            for structure in ("EC", "AR1"):
                prob, xs = inputs(design, n, structure)
                t_py = min(timeit.repeat(lambda: py.qif_blocks(*xs), number=1, repeat=args.repeat))
                row = f"{design:<10}{n:>6}{structure:>6}{1e3 * t_py:>12.3f}"
                if cy is not None:
                    t_cy = min(timeit.repeat(lambda: cy.qif_blocks(*xs), number=1, repeat=args.repeat))
                    s1, j1 = py.qif_blocks(*xs)
                    s2, j2 = cy.qif_blocks(*xs)
                    diff = max(np.abs(s1 - s2).max(), np.abs(j1 - j2).max())
                    row += f"{1e3 * t_cy:>12.3f}{t_py / t_cy:>9.2f}{diff:>11.1e}"
                print(row)


if __name__ == "__main__":
    main()
