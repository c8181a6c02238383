#!/usr/bin/env python3
"""Sweep the fixed-point smallness knobs on the built-in scenario.

For a grid of lower-level scalings zeta_le and norm tilts, report the
measured operator-norm bound sum, the observed contraction ratio, and
the weighted residual of both Borel-plane solvers.  Useful for picking
knob values that push the bound sum below 1/2.

Usage:
    python scripts/solver_knob_sweep.py --zeta 1.0,0.5,0.25 --tilts 5,8,12
"""

import argparse
from dataclasses import replace

import numpy as np

from qsum.scenarios import Pipeline, example_scenario
from qsum.solver import TauFamily, accelerate, solve_w_k1, solve_w_k2


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--zeta", default="1.0,0.5,0.25",
                    help="comma-separated zeta_le values")
    ap.add_argument("--tilts", default="5,8,12",
                    help="comma-separated first-stage norm tilts")
    ap.add_argument("--eps-divisor", type=float, default=8.0)
    args = ap.parse_args()

    sc = example_scenario()
    pl = Pipeline(sc)
    spec = sc.spec
    eps = sc.pair_eps(0, spec.epsilon0 / args.eps_divisor)
    psi1, _ = pl.psi_k1_family(0, eps, pl.w1_radii())
    radii2 = pl.w2_radii()
    psi2 = TauFamily(sc.directions[0], radii2,
                     accelerate(psi1, spec, sc.domain(0),
                                radii2 * np.exp(1j * sc.directions[0])),
                     spec.m_max, spec.n_points, sc.L)

    print(f"eps = {eps:.4f}")
    print("stage zeta_le tilt   bound  contraction     residual  iterations")
    for z in (float(s) for s in args.zeta.split(",")):
        cfg = replace(sc.fp, zeta_le=z, max_iter=400)
        for tilt in (float(s) for s in args.tilts.split(",")):
            norm1 = replace(sc.norm_k1(), tilt=tilt)
            r = solve_w_k1(spec, psi1, replace(cfg, tol=1e-13), eps, norm1)
            print(f"k1    {z:7.3f} {tilt:4.0f} {r['bound_sum']:7.4f} "
                  f"{r['contraction_ratio']:12.4f} {r['residual']:12.3e} "
                  f"{r['iterations']:4d}")
        r = solve_w_k2(spec, psi2, replace(cfg, tol=1e-11), eps,
                       sc.norm_k2())
        print(f"k2    {z:7.3f}    - {r['bound_sum']:7.4f} "
              f"{r['contraction_ratio']:12.4f} {r['residual']:12.3e} "
              f"{r['iterations']:4d}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
