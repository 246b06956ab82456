#!/usr/bin/env python3
"""
Cantor-set geometry and a rescaled tower of solutions.

Each level of the tower copies the previous one into M smaller boxes,
scaled by tau in space and tau^2 in time. The boxes shrink to a Cantor set
whose box dimension is log M / log(1/tau). Everything geometric is exact.
"""

import math
from fractions import Fraction

from nsiweak.cantor import (box_dimension, level_boxes, placeholder_base, placeholder_params,
                            rescale_tower, switching_schedule, validate_params)


def main():
    p = placeholder_params()
    print(f"tau = {p.tau}, M = {p.M}, xi = {p.xi}")
    for chk in validate_params(p).checks:
        print(f"  {chk.name:20s} {chk.passed}")

    for j in range(4):
        L = level_boxes(p, j)
        first = L.boxes[0]
        print(f"level {j}: {len(L.boxes)} boxes, first x1-interval [{first.lo[0]}, {first.hi[0]}]")

    times, T0 = switching_schedule(Fraction(1), p.tau, 4)
    print(f"\nswitch times {[str(t) for t in times]}, blow-up time T0 = {T0}")

    deep = level_boxes(p, 8, check_params=False)
    fit = box_dimension(deep.boxes, [p.tau ** k for k in range(1, 9)])
    print(f"box dimension at depth 8: {fit.dimension:.6f} (log 2 / log 3 = {math.log(2) / math.log(3):.6f})")

    tw = rescale_tower(placeholder_base(), p, j_max=2)
    print("\ntower norms ||u(t)||_2:")
    for t in [0.0, 0.5, float(times[1]), float(times[2]) + 0.01, float(T0)]:
        print(f"  t = {t:.4f}  level {tw.level_at(t)}  norm {tw.norm(t, 2.0):.5f}")
    print(f"lp_scaling certified: {tw.report['lp_scaling'].passed}")


if __name__ == "__main__":
    main()
