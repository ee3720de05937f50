#!/usr/bin/env python3
"""Run one weak-consistency refinement study and print the per-level table.

Scenarios mirror the shipped acceptance runs:
  advection    1d upwind transport of a smooth bump
  burgers-1d   1d Rusanov on Riemann data
  burgers-2d   diagonal Burgers on a perturbed triangular mesh

Usage: python3 scripts/refinement_report.py --scenario advection --levels 4
"""
import argparse
import math

import numpy as np

from lwfv.consistency import lw_study
from lwfv.flux import burgers, rusanov, upwind_linear
from lwfv.mesh import perturbed_triangular_2d_family, uniform_1d_family
from lwfv.operators import bump_corpus_spacetime, polynomial_bump
from lwfv.solver import Problem
from lwfv.translations import interval_indicator
from lwfv.translations import smooth_function as datum


def build_scenario(name: str):
    if name == "advection":
        b = polynomial_bump([0.45], [0.3], k=3, amplitude=0.5)
        u0 = datum(lambda x: b.value(x, 0.0), lipschitz=b.grad_sup, name="bump")
        problem = Problem(flux=upwind_linear([1.0]), u0=u0, t_final=0.5,
                          boundary="periodic")
        return uniform_1d_family(10), problem, 0.5
    if name == "burgers-1d":
        problem = Problem(flux=rusanov(burgers((1.0,))),
                          u0=interval_indicator(0.1, 0.45),
                          t_final=0.5, boundary="periodic")
        return uniform_1d_family(16), problem, 0.45
    if name == "burgers-2d":
        d = 1.0 / math.sqrt(2.0)
        u0 = datum(
            lambda x: 0.5 + 0.25 * np.sin(2 * np.pi * x[..., 0])
            * np.sin(2 * np.pi * x[..., 1]),
            lipschitz=0.5 * np.pi * np.sqrt(2.0), name="sine-2d")
        problem = Problem(flux=rusanov(burgers((d, d))), u0=u0,
                          t_final=0.4, boundary="periodic")
        return perturbed_triangular_2d_family(4, jitter=0.3, seed=0), problem, 0.45
    raise SystemExit(f"unknown scenario {name!r}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="advection",
                    choices=["advection", "burgers-1d", "burgers-2d"])
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--phi-count", type=int, default=4)
    args = ap.parse_args()

    family, problem, cfl = build_scenario(args.scenario)
    dim = family.build(0).dim
    phis = bump_corpus_spacetime(dim, problem.t_final)[:args.phi_count]
    report = lw_study(family, problem, phis, args.levels, cfl=cfl)

    print(f"scenario {args.scenario}: flux {report.flux_name}, "
          f"u0 {report.u0_name}, {args.levels} levels, cfl {cfl}")
    print(f"{'level':>5} {'h':>12} {'max weak gap':>14} "
          f"{'max |R1|':>12} {'max |R|':>12}")
    for rec in report.levels:
        r1 = max(abs(r.r1) for r in rec.rows)
        rr = max(abs(r.r) for r in rec.rows)
        print(f"{rec.level:>5} {rec.h:>12.6f} {max(r.weak_gap for r in rec.rows):>14.6e} "
              f"{r1:>12.4e} {rr:>12.4e}")
    print("fitted decay slopes: "
          + "  ".join(f"{k} {v:.3f}" for k, v in sorted(report.slopes.items())))


if __name__ == "__main__":
    main()
