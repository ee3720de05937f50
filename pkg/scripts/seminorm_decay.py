#!/usr/bin/env python3
"""Tabulate translation-seminorm decay for the stock data on each family.

Shows T against both the Lipschitz bound 2 M h |domain| and the regularity
bound, per refinement level.

Usage: python3 scripts/seminorm_decay.py --levels 4
"""
import argparse
import math

import numpy as np

from lwfv.mesh import (
    cartesian_2d_family,
    nonuniform_1d_family,
    perturbed_triangular_2d_family,
    uniform_1d_family,
)
from lwfv.translations import (
    interval_indicator,
    smooth_function,
    translation_decay_study,
)


def stock_data(dim: int):
    if dim == 1:
        smooth = smooth_function(
            lambda x: 0.5 + 0.25 * np.sin(2 * np.pi * x[..., 0]),
            lipschitz=0.5 * np.pi, name="sine")
        return [smooth, interval_indicator(0.25, 0.65)]
    smooth = smooth_function(
        lambda x: 0.5 + 0.25 * np.sin(2 * np.pi * x[..., 0])
        * np.sin(2 * np.pi * x[..., 1]),
        lipschitz=0.5 * np.pi * np.sqrt(2.0), name="sine-2d")
    return [smooth]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=4)
    args = ap.parse_args()

    families = [
        ("uniform-1d", uniform_1d_family(10), 1),
        ("nonuniform-1d", nonuniform_1d_family(10, ratio=2.0), 1),
        ("cartesian-2d", cartesian_2d_family(4), 2),
        ("triangular-2d", perturbed_triangular_2d_family(4, jitter=0.3, seed=0), 2),
    ]
    for name, family, dim in families:
        for u in stock_data(dim):
            rows = translation_decay_study(family, u, args.levels)
            print(f"{name} / {u.name}")
            print(f"  {'level':>5} {'h':>10} {'T':>12} "
                  f"{'2Mh|domain|':>12} {'theta bound':>12}")
            for r in rows:
                lip = (" " * 12 if math.isnan(r.bound_lipschitz)
                       else f"{r.bound_lipschitz:>12.4e}")
                print(f"  {r.level:>5} {r.h:>10.5f} {r.T_value:>12.6e} "
                      f"{lip} {r.bound_l1:>12.4e}")
            print(f"  final / coarsest: {rows[-1].T_value / rows[0].T_value:.4f}")


if __name__ == "__main__":
    main()
