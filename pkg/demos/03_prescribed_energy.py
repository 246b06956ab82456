#!/usr/bin/env python3
"""
A solution of the Navier-Stokes inequality with a prescribed energy profile.

Given a nonincreasing target e(t), the construction stacks stages on
shrinking rectangles. Each stage loses a fixed fraction of its energy and the
next stage takes over where the magnitudes allow the switch. Here we follow
e(t) = 1 - t/2 within eps = 0.2 and look at the certificate.
"""

import numpy as np

from nsiweak import EnergyProfile, Rect, synthesize


def main():
    U = Rect(0.0, 1.0, 1.0, 2.0)
    e = EnergyProfile.linear(1.0, 0.5)
    res = synthesize(U, 0.2, 1.0, e, nsi_samples=100, seed=0)
    c = res.constants
    print(f"stages K = {c['K']}, eta = {c['eta']:.3e}, zeta = {c['zeta']:.3e}, nu0 = {c['nu0']:.3e}")

    en = res.energy
    print(f"\n{'t':>6} {'||u(t)||':>10} {'e(t)':>8} {'deviation':>10}")
    for i in np.linspace(0, len(en["t"]) - 1, 11).astype(int):
        print(f"{en['t'][i]:6.2f} {en['norm'][i]:10.5f} {en['target'][i]:8.4f} {en['deviation'][i]:10.5f}")

    print("\ncertificate:")
    for chk in res.report.checks:
        print(f"  {'ok ' if chk.passed else 'FAIL'} {chk.name:28s} margin {chk.margin: .3e}")


if __name__ == "__main__":
    main()
