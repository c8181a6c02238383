"""Command-line front end: configuration, orchestration, serialization.

Subcommands
-----------
validate     structural checks of the problem, covering, and domains
formal       table of formal Fourier-side series coefficients
solve        one (sector, eps) pipeline run with diagnostics
asymptotics  cocycles, flatness fits, two-level split, expansion checks
chained      driver-forced scenario including the composed residual
example      built-in scenario end to end: solutions on all sectors,
             residual table, flatness fit table

Outputs are CSV tables plus a JSON run manifest.  Runs are
deterministic: identical config and seed give byte-identical CSVs.
Exit codes: 0 ok, 1 runtime error, 2 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .asymptotics import (CocycleSample, cocycle, check_q_gevrey_bound,
                          estimate_expansion, fit_flatness_order,
                          verify_formal_recursion, verify_two_level_split)
from .geometry import Sector, validate_associated_family, \
    validate_good_covering
from .mspace import Polynomial
from .scenarios import (ChainedForcing, Pipeline, PoleForcing, Scenario,
                        chained_scenario, example_covering, example_scenario)
from .solver import (FixedPointConfig, GaussianCoefficient, Level,
                     ProblemSpec, Term, chained_forcing_coefficients,
                     composed_residual, formal_coefficients, pde_residual,
                     validate_problem)

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# config parsing (complex numbers as [re, im] pairs)


def _cx(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(v[0], v[1])
    raise ValueError(f"expected number or [re, im] pair, got {v!r}")


def _poly(coeffs) -> Polynomial:
    return Polynomial(tuple(_cx(c) for c in coeffs))


def _coefficient(d: dict) -> GaussianCoefficient:
    kind = d.get("type", "gaussian")
    if kind != "gaussian":
        raise ValueError(f"unknown coefficient type {kind!r}")
    return GaussianCoefficient(amp=_cx(d.get("amp", 1.0)),
                               eps_linear=_cx(d.get("eps_linear", 0.0)),
                               width=float(d.get("width", 1.0)))


def _problem(d: dict, base: ProblemSpec) -> ProblemSpec:
    kw = {}
    for key in ("q", "k1", "k2", "d_D", "epsilon0", "m_max", "n_points",
                "beta", "mu", "qrd_direction", "qrd_half_opening",
                "qrd_min_modulus"):
        if key in d:
            kw[key] = type(getattr(base, key))(d[key])
    if "Q" in d:
        kw["Qpoly"] = _poly(d["Q"])
    if "R_D" in d:
        kw["RD"] = _poly(d["R_D"])
    if "levels" in d:
        levels = []
        for lv in d["levels"]:
            terms = tuple(Term(lambda_id=int(t.get("lambda", i)),
                               d=int(t["d"]), Delta=int(t["Delta"]),
                               R=_poly(t.get("R", [1.0])),
                               C=_coefficient(t.get("C", {})))
                          for i, t in enumerate(lv["terms"]))
            levels.append(Level(delta=int(lv["delta"]), terms=terms))
        kw["levels"] = tuple(levels)
    return replace(base, **kw)


def load_scenario(config_path: Optional[str]) -> Scenario:
    base = example_scenario()
    if config_path is None:
        return base
    with open(config_path) as fh:
        cfg = json.load(fh)
    if cfg.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ValueError("unsupported schema_version")
    if cfg.get("scenario") == "chained":
        base = chained_scenario()
    kw = {}
    if "problem" in cfg:
        kw["spec"] = _problem(cfg["problem"], base.spec)
    if "forcing" in cfg and isinstance(base.forcing, PoleForcing):
        f = cfg["forcing"]
        kw["forcing"] = PoleForcing(amp=_cx(f.get("amp", 1.0)),
                                    eps_linear=_cx(f.get("eps_linear", 0.0)),
                                    pole=_cx(f["pole"]),
                                    width=float(f.get("width", 1.0)))
    grids = cfg.get("grids", {})
    for key in ("t_max", "t_count", "L", "delta_tilde", "r_T", "rho_roots",
                "rho1", "alpha", "nu", "norm_shift", "eps_mod_count"):
        if key in grids:
            kw[key] = type(getattr(base, key))(grids[key])
    if "z_points" in grids:
        kw["z_points"] = tuple(_cx(z) for z in grids["z_points"])
    if "w1_log2_range" in grids:
        kw["w1_log2_range"] = tuple(grids["w1_log2_range"])
    if "w2_log2_range" in grids:
        kw["w2_log2_range"] = tuple(grids["w2_log2_range"])
    if "fixedpoint" in cfg:
        fp = cfg["fixedpoint"]
        kw["fp"] = replace(base.fp, **{k: type(getattr(base.fp, k))(v)
                                       for k, v in fp.items()})
    return replace(base, **kw)


# ---------------------------------------------------------------------------
# serialization helpers


def _fmt(v) -> str:
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _grid_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace):
        self.data = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "seed": args.seed,
            "config": args.config,
            "jobs": args.jobs,
            "numpy_version": np.__version__,
            "outputs": [],
            "wall_times_s": {},
            "results": {},
        }
        self._t0 = time.time()

    def output(self, path: Path):
        self.data["outputs"].append(str(path))

    def time(self, label: str):
        self.data["wall_times_s"][label] = round(time.time() - self._t0, 3)

    def write(self, out_dir: Path):
        path = out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True, default=_fmt)
        return path


def _error_record(out_dir: Path, kind: str, message: str, clause: str = ""):
    rec = {"error": {"kind": kind, "message": message, "clause": clause}}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "error.json", "w") as fh:
            json.dump(rec, fh, indent=2)
    except OSError:
        pass
    print(json.dumps(rec), file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(sc: Scenario, out: Path, man: Manifest, args) -> int:
    violations = validate_problem(sc.spec)
    cov_errors = validate_good_covering(sc.covering)
    doms = [sc.domain(p) for p in range(sc.n_sectors)]
    t_sector = Sector(bisecting_direction=0.0, half_opening=math.pi / 16.0,
                      radius=sc.t_max)
    fam_errors = validate_associated_family(
        sc.covering, doms, t_sector,
        params={"nu": sc.nu, "alpha": sc.alpha, "kappa": sc.spec.kappa,
                "k2": sc.spec.k2, "q": sc.spec.q,
                "epsilon0": sc.spec.epsilon0, "r_T": sc.r_T})
    rows = ([["problem", v] for v in violations]
            + [["covering", v] for v in cov_errors]
            + [["family", v] for v in fam_errors])
    write_csv(out / "validation.csv", ["scope", "violation"], rows)
    man.output(out / "validation.csv")
    man.data["results"]["violations"] = (violations + cov_errors
                                         + fam_errors)
    if rows:
        _error_record(out, "validation", "structural checks failed",
                      clause="; ".join(v for _, v in rows))
        return 2
    return 0


def cmd_formal(sc: Scenario, out: Path, man: Manifest, args) -> int:
    N = args.N
    spec = sc.spec
    eps = sc.pair_eps(0, spec.epsilon0 / 4.0)
    if isinstance(sc.forcing, PoleForcing):
        F = sc.forcing.series_coefficients(N + 1, spec.grid, eps, spec.q,
                                           spec.k1)
    else:
        bold = sc.forcing.bold_series(spec.grid)
        F = np.stack([g.values for g in chained_forcing_coefficients(
            sc.forcing.spec_bold, bold, N, eps, spec.k1).coefficients])
    series = formal_coefficients(spec, N, eps, F)
    j0 = int(np.argmin(np.abs(spec.grid)))
    rows = []
    for n, gf in enumerate(series.coefficients):
        Un = gf.values
        Fn = float(np.max(np.abs(F[n]))) if n < len(F) else 0.0
        rows.append([n, float(np.max(np.abs(Un))), Un[j0].real,
                     Un[j0].imag, Fn])
    write_csv(out / "formal_coefficients.csv",
              ["n", "sup_abs_U_n", "U_n_at_m0_re", "U_n_at_m0_im",
               "sup_abs_F_n"], rows)
    man.output(out / "formal_coefficients.csv")
    return 0


def _solve_diag_rows(run) -> list[list]:
    rows = []
    for label, diag in (("w_k1", run.k1_diag), ("w_k2", run.k2_diag),
                        ("driver", run.driver_diag)):
        if not diag:
            continue
        rows.append([label, diag.get("iterations"),
                     diag.get("contraction_ratio"), diag.get("residual"),
                     diag.get("residual_scale")])
    return rows


def cmd_solve(sc: Scenario, out: Path, man: Manifest, args) -> int:
    pl = Pipeline(sc)
    p = args.sector
    eps = (args.eps_modulus or sc.spec.epsilon0 / 8.0) \
        * np.exp(1j * sc.directions[p])
    run = pl.run(p, complex(eps), t_count=args.t_count)
    sol = run.solution
    rows = []
    for j, t in enumerate(sol.t_lattice):
        for i, z in enumerate(sol.z_points):
            rows.append([p, t, z.real, z.imag, sol.u_values[j, i].real,
                         sol.u_values[j, i].imag])
    write_csv(out / "solution.csv",
              ["sector", "t", "z_re", "z_im", "u_re", "u_im"], rows)
    write_csv(out / "solver_diagnostics.csv",
              ["stage", "iterations", "contraction_ratio", "residual",
               "residual_scale"], _solve_diag_rows(run))
    res = pde_residual(sc.spec, sol)
    ident = pl.identity_check(run)
    write_csv(out / "residuals.csv",
              ["sector", "max_rel_residual", "interior_rows",
               "acceleration_sup_rel_diff"],
              [[p, res["max_rel_residual"], res["interior_rows"],
                ident["sup_rel_diff"]]])
    for name in ("solution.csv", "solver_diagnostics.csv", "residuals.csv"):
        man.output(out / name)
    man.data["results"]["pde_residual"] = res["max_rel_residual"]
    man.data["results"]["acceleration_identity"] = ident["sup_rel_diff"]
    return 0


def _pair_list(args, sc: Scenario) -> list[int]:
    if args.pairs:
        return [int(s) for s in args.pairs.split(",")]
    return list(range(sc.n_sectors))


def _pair_cocycle(pl: Pipeline, pair: int, moduli, t_count: int
                  ) -> CocycleSample:
    sc = pl.sc
    a, b = [], []
    for mod in moduli:
        eps = sc.pair_eps(pair, mod)
        a.append(pl.run(pair, eps, t_count=t_count).solution)
        b.append(pl.run((pair + 1) % sc.n_sectors, eps,
                        t_count=t_count).solution)
    return cocycle(a, b, pair)


def cmd_asymptotics(sc: Scenario, out: Path, man: Manifest, args) -> int:
    pl = Pipeline(sc)
    moduli = sc.eps_moduli()[:args.moduli]
    pairs = _pair_list(args, sc)
    cocycles, fit_rows = [], []
    for pair in pairs:
        c = _pair_cocycle(pl, pair, moduli, args.t_count)
        cocycles.append(c)
        f = fit_flatness_order(c, sc.spec.q)
        fit_rows.append([pair, f["k_hat"], f["M_hat"], f["K_hat"], f["r2"],
                         f["n_used"]])
    split = verify_two_level_split(cocycles, sc.spec.q, sc.spec.k1,
                                   sc.spec.k2)
    write_csv(out / "flatness_fits.csv",
              ["pair", "k_hat", "M_hat", "K_hat", "r2", "n_used"], fit_rows)
    man.output(out / "flatness_fits.csv")
    man.data["results"]["split"] = {"I1": split["I1"], "I2": split["I2"],
                                    "both_nonempty": split["both_nonempty"]}
    man.time("flatness")

    # expansion across two sectors
    M = args.orders
    sols = {p: [pl.run(p, mod * np.exp(1j * sc.directions[p]),
                       t_count=args.t_count).solution
                for mod in sc.eps_moduli()]
            for p in (0, 1)}
    est = estimate_expansion(sols, M, field="u")
    fest = estimate_expansion(sols, M, field="f")
    rec = verify_formal_recursion(est, sc.spec, fest)
    samples = [(s.eps, s.u_values) for s in sols[0]]
    gb = check_q_gevrey_bound(samples, est, sc.spec.k1, sc.spec.q)
    rows = [[m, float(np.max(np.abs(est.h[m]))), est.cross_sector_dev[m],
             gb["eta_sequence"][m]] for m in range(M + 1)]
    write_csv(out / "expansion.csv",
              ["order", "sup_abs_h", "cross_sector_dev", "gevrey_eta"],
              rows)
    man.output(out / "expansion.csv")
    man.data["results"]["recursion_residual"] = rec["max_rel_residual"]
    man.data["results"]["gevrey_bounded"] = gb["bounded"]
    man.time("expansion")
    return 0


def cmd_chained(sc: Scenario, out: Path, man: Manifest, args) -> int:
    if not isinstance(sc.forcing, ChainedForcing):
        sc = chained_scenario()
    pl = Pipeline(sc)
    eps = (args.eps_modulus or sc.spec.epsilon0 / 8.0) \
        * np.exp(1j * sc.directions[0])
    run = pl.run(0, complex(eps), t_count=args.t_count)
    fc = sc.forcing
    bold = fc.bold_series(sc.spec.grid)
    res = composed_residual(sc.spec, fc.spec_bold, run.solution, bold,
                            sc.spec.k1)
    plain = pde_residual(sc.spec, run.solution)
    write_csv(out / "chained_residuals.csv",
              ["composed_max_rel_residual", "main_max_rel_residual",
               "interior_rows"],
              [[res["max_rel_residual"], plain["max_rel_residual"],
                res["interior_rows"]]])
    man.output(out / "chained_residuals.csv")
    man.data["results"]["composed_residual"] = res["max_rel_residual"]
    return 0


def cmd_example(sc: Scenario, out: Path, man: Manifest, args) -> int:
    pl = Pipeline(sc)
    mod = args.eps_modulus or sc.spec.epsilon0 / 8.0
    sol_rows, res_rows = [], []
    for p in range(sc.n_sectors):
        eps = mod * np.exp(1j * sc.directions[p])
        run = pl.run(p, complex(eps), t_count=args.t_count)
        sol = run.solution
        res = pde_residual(sc.spec, sol)
        res_rows.append([p, res["max_rel_residual"], res["interior_rows"],
                         run.k1_diag["contraction_ratio"],
                         run.k2_diag["contraction_ratio"]])
        for j, t in enumerate(sol.t_lattice):
            for i, z in enumerate(sol.z_points):
                sol_rows.append([p, t, z.real, z.imag,
                                 sol.u_values[j, i].real,
                                 sol.u_values[j, i].imag])
    write_csv(out / "solutions.csv",
              ["sector", "t", "z_re", "z_im", "u_re", "u_im"], sol_rows)
    write_csv(out / "residuals.csv",
              ["sector", "max_rel_residual", "interior_rows",
               "k1_contraction", "k2_contraction"], res_rows)
    man.time("solutions")

    moduli = sc.eps_moduli()[:args.moduli]
    fit_rows = []
    for pair in _pair_list(args, sc):
        c = _pair_cocycle(pl, pair, moduli, args.t_count)
        f = fit_flatness_order(c, sc.spec.q)
        fit_rows.append([pair, f["k_hat"], f["M_hat"], f["K_hat"], f["r2"],
                         f["n_used"]])
    write_csv(out / "flatness_fits.csv",
              ["pair", "k_hat", "M_hat", "K_hat", "r2", "n_used"], fit_rows)
    for name in ("solutions.csv", "residuals.csv", "flatness_fits.csv"):
        man.output(out / name)
    man.time("flatness")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsum", description=__doc__)
    ap.add_argument("--config", default=None, help="JSON config path")
    ap.add_argument("--out", default="qsum-out", help="output directory")
    ap.add_argument("--seed", type=int, default=0,
                    help="recorded in the manifest; runs are deterministic")
    ap.add_argument("--jobs", type=int, default=1)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("validate")
    p = sub.add_parser("formal")
    p.add_argument("--N", type=int, default=12)
    p = sub.add_parser("solve")
    p.add_argument("--sector", type=int, default=0)
    p.add_argument("--eps-modulus", type=float, default=None)
    p.add_argument("--t-count", type=int, default=None)
    p = sub.add_parser("asymptotics")
    p.add_argument("--pairs", default=None, help="comma-separated list")
    p.add_argument("--moduli", type=int, default=8)
    p.add_argument("--orders", type=int, default=5)
    p.add_argument("--t-count", type=int, default=5)
    p = sub.add_parser("chained")
    p.add_argument("--eps-modulus", type=float, default=None)
    p.add_argument("--t-count", type=int, default=None)
    p = sub.add_parser("example")
    p.add_argument("--pairs", default=None, help="comma-separated list")
    p.add_argument("--moduli", type=int, default=3)
    p.add_argument("--eps-modulus", type=float, default=None)
    # the residual table needs at least one interior lattice row after the
    # largest dilation shift, which requires t_count >= 6 here
    p.add_argument("--t-count", type=int, default=6)
    return ap


COMMANDS = {"validate": cmd_validate, "formal": cmd_formal,
            "solve": cmd_solve, "asymptotics": cmd_asymptotics,
            "chained": cmd_chained, "example": cmd_example}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.command == "chained" and args.config is None:
            sc = chained_scenario()
        else:
            sc = load_scenario(args.config)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        _error_record(out, "config", str(exc))
        return 2
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(args.command, args)
    try:
        code = COMMANDS[args.command](sc, out, man, args)
    except (ArithmeticError, ValueError) as exc:
        _error_record(out, "runtime", str(exc))
        return 1
    man.time("total")
    man.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
