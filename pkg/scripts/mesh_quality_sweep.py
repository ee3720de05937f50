#!/usr/bin/env python3
"""Print regularity metrics per refinement level for each stock family.

A healthy family keeps theta_grad, theta, tau, and the face-count cap flat
under refinement; drifting values mean the uniform-decay machinery loses
its constants.

Usage: python3 scripts/mesh_quality_sweep.py --levels 4
"""
import argparse

from lwfv.mesh import (
    cartesian_2d_family,
    compute_quality,
    nonuniform_1d_family,
    perturbed_triangular_2d_family,
    refine,
    uniform_1d_family,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--jitter", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    families = [
        ("uniform-1d", uniform_1d_family(10)),
        ("nonuniform-1d", nonuniform_1d_family(10, ratio=2.0)),
        ("cartesian-2d", cartesian_2d_family(4)),
        ("triangular-2d",
         perturbed_triangular_2d_family(4, jitter=args.jitter, seed=args.seed)),
    ]
    for name, family in families:
        print(name)
        print(f"  {'level':>5} {'cells':>7} {'h':>10} {'theta_grad':>11} "
              f"{'theta':>9} {'tau':>9} {'N_E':>4}")
        for lvl, mesh in enumerate(refine(family, args.levels)):
            q = compute_quality(mesh)
            print(f"  {lvl:>5} {mesh.n_cells:>7} {mesh.h_max:>10.5f} "
                  f"{q.theta_grad:>11.6f} {q.theta:>9.5f} {q.tau:>9.5f} "
                  f"{q.n_faces_max:>4}")


if __name__ == "__main__":
    main()
