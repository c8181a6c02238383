"""Tests for problem validation, root geometry, formal coefficients and the
Borel-plane fixed points."""

import dataclasses
import math

import numpy as np
import pytest

from qsum.mspace import Polynomial
from qsum.solver import (FixedPointConfig, GaussianCoefficient, Level,
                         ProblemSpec, Term, check_root_bounds, dilate_rows,
                         dilation_shift, formal_coefficients, pm_roots,
                         pm_values, solve_w_k1, solve_w_k2, t_lattice,
                         validate_problem)
from qsum.geometry import Sector

# ---------------------------------------------------------------------------
# validation


def test_example_problem_is_admissible(scenario):
    assert validate_problem(scenario.spec) == []


def test_validate_flags_delta_below_d(scenario):
    spec = scenario.spec
    lv = spec.levels
    bad_term = dataclasses.replace(lv[0].terms[0], Delta=0)
    levels = (Level(1, [bad_term]),) + lv[1:]
    report = validate_problem(dataclasses.replace(spec, levels=levels))
    assert any("Delta >= d" in r for r in report)


def test_validate_flags_q_zero_on_grid(scenario):
    # Q divisible by x makes Q(im) vanish at m = 0
    spec = dataclasses.replace(scenario.spec, Qpoly=Polynomial([0.0, 1.0, 0.0, 1.0]))
    report = validate_problem(spec)
    assert any("Q(im) vanishes" in r for r in report)


def test_validate_flags_unordered_deltas(scenario):
    spec = scenario.spec
    levels = (spec.levels[1], spec.levels[0])  # delta = 2 before delta = 1
    report = validate_problem(dataclasses.replace(spec, levels=levels))
    assert any("delta" in r for r in report)


def test_validate_flags_degree_inversion(scenario):
    spec = dataclasses.replace(scenario.spec, RD=Polynomial([1.0] * 5))
    report = validate_problem(spec)
    assert any("deg Q" in r for r in report)


# ---------------------------------------------------------------------------
# roots of P_m


def test_pm_roots_equally_spaced(scenario):
    spec = scenario.spec
    roots = pm_roots(spec, 0.7)
    assert roots.size == spec.d_D
    assert np.allclose(np.abs(roots), abs(roots[0]), rtol=1e-13)
    angles = np.sort(np.angle(roots))
    gaps = np.diff(angles)
    assert np.allclose(gaps, 2 * math.pi / spec.d_D, rtol=1e-10)


def test_pm_roots_modulus_closed_form(scenario):
    spec = scenario.spec
    q, k2, dd = spec.q, spec.k2, spec.d_D
    m = -1.3
    ratio = complex(spec.Qpoly.eval_im(m)) / complex(spec.RD.eval_im(m))
    power = ((dd + k2) * (dd + k2 - 1) - k2 * (k2 - 1)) / 2.0
    want = (abs(ratio) * q ** (power / k2)) ** (1.0 / dd)
    assert np.allclose(np.abs(pm_roots(spec, m)), want, rtol=1e-12)


def test_pm_roots_are_pm_zeros(scenario):
    spec = scenario.spec
    m = 2.1
    roots = pm_roots(spec, m)
    vals = pm_values(spec, roots, np.array([m]))[:, 0]
    scale = np.max(np.abs(pm_values(spec, np.abs(roots) * 1.5, np.array([m]))))
    assert np.max(np.abs(vals)) <= 1e-10 * scale


def test_pm_product_reproduces_polynomial(scenario):
    # P_m(tau) = -(R_D(im) / q^{(d_D+k2)(d_D+k2-1)/(2 k2)}) prod (tau - root)
    spec = scenario.spec
    q, k2, dd = spec.q, spec.k2, spec.d_D
    m = 0.4
    roots = pm_roots(spec, m)
    rng = np.random.default_rng(12)
    tau = rng.normal(size=10) + 1j * rng.normal(size=10)
    lead = -complex(spec.RD.eval_im(m)) \
        * q ** (-(dd + k2) * (dd + k2 - 1) / (2.0 * k2))
    want = lead * np.prod(tau[:, None] - roots[None, :], axis=1)
    got = pm_values(spec, tau, np.array([m]))[:, 0]
    assert np.max(np.abs(got - want)) <= 1e-10 * np.max(np.abs(want))


def test_pm_roots_rejects_vanishing_RD(scenario):
    spec = dataclasses.replace(scenario.spec, RD=Polynomial([0.0, 1.0]))
    with pytest.raises(ZeroDivisionError):
        pm_roots(spec, 0.0)


def test_root_bounds_on_example(scenario):
    spec = scenario.spec
    sector = Sector(0.0, math.pi / 8, radius=5.0)
    res = check_root_bounds(spec, sector, rho=0.1, n_samples=2000)
    assert res["M1_hat"] > 0.01
    assert res["CP_hat"] > 0.0
    assert 0 <= res["l0"] < spec.d_D


def test_root_bounds_flag_aligned_direction(scenario):
    spec = scenario.spec
    root_dir = float(np.angle(pm_roots(spec, 0.0)[0]))
    aligned = Sector(root_dir, math.pi / 8, radius=5.0)
    res = check_root_bounds(spec, aligned, rho=0.1, n_samples=4000)
    clear = check_root_bounds(spec, Sector(0.0, math.pi / 8, radius=5.0),
                              rho=0.1, n_samples=4000)
    assert res["M1_hat"] < clear["M1_hat"]


# ---------------------------------------------------------------------------
# formal coefficients


def test_formal_head_is_forcing_over_Q(scenario):
    spec = scenario.spec
    rng = np.random.default_rng(3)
    n_m = spec.grid.size
    F = rng.normal(size=(7, n_m)) + 1j * rng.normal(size=(7, n_m))
    series = formal_coefficients(spec, 6, eps=0.05 + 0.02j, forcing_coeffs=F)
    got0 = series.coefficients[0].values
    assert np.allclose(got0, F[0] / spec.Q_im(), rtol=1e-13)


def test_formal_coefficients_linear_in_forcing(scenario):
    spec = scenario.spec
    rng = np.random.default_rng(4)
    n_m = spec.grid.size
    F1 = rng.normal(size=(6, n_m)).astype(complex)
    F2 = rng.normal(size=(6, n_m)).astype(complex)
    eps = 0.03
    a = formal_coefficients(spec, 5, eps, F1).coeff_array()
    b = formal_coefficients(spec, 5, eps, F2).coeff_array()
    c = formal_coefficients(spec, 5, eps, 2.0 * F1 + 0.5 * F2).coeff_array()
    assert np.max(np.abs(c - 2.0 * a - 0.5 * b)) \
        <= 1e-10 * max(np.max(np.abs(c)), 1.0)


def test_formal_coefficients_match_equation(scenario):
    # substitute the series back into the T-coefficient recursion
    spec = scenario.spec
    rng = np.random.default_rng(5)
    n_m = spec.grid.size
    F = (rng.normal(size=(9, n_m)) + 1j * rng.normal(size=(9, n_m)))
    eps = 0.04 - 0.01j
    q, k2, dd = spec.q, spec.k2, spec.d_D
    U = formal_coefficients(spec, 8, eps, F).coeff_array()
    Q = spec.Q_im()
    RD = spec.RD_im()
    from qsum.mspace import SQRT2PI, _trapezoid_weights, convolution_rows
    wts = _trapezoid_weights(spec.m_max, spec.n_points)
    for n in range(2, 9):
        lhs = Q * U[n]
        rhs = F[n].astype(complex).copy()
        if n >= dd:
            rhs += RD * U[n - dd] * q ** ((dd / k2 + 1.0) * (n - dd) - n)
        for delta, term in spec.all_terms():
            if n >= term.d:
                g = (wts * term.R.eval_im(spec.grid))[None, :] * U[n - term.d][None, :]
                conv = convolution_rows(term.C.values(spec.grid, eps), g)[0]
                rhs += (eps ** (term.Delta - term.d)
                        * q ** (delta * (n - term.d) - n) * conv / SQRT2PI)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(lhs))


# ---------------------------------------------------------------------------
# lattices and dilations


def test_t_lattice_geometric():
    t = t_lattice(0.5, 4.0, 5)
    assert np.allclose(t[1:] / t[:-1], 0.5)   # ratio q^{-1/2}


def test_dilation_shift_requires_compatible_exponent():
    assert dilation_shift(1.5, 16) == 24
    with pytest.raises(ValueError):
        dilation_shift(1.0 / 3.0, 16)


def test_dilate_rows_shifts_and_clamps():
    v = np.arange(5.0)[:, None]
    assert np.allclose(dilate_rows(v, 2)[:, 0], [2, 3, 4, 4, 4])
    assert np.allclose(dilate_rows(v, -2)[:, 0], [0, 0, 0, 1, 2])


# ---------------------------------------------------------------------------
# fixed points


def test_zero_forcing_gives_zero_fixed_points(scenario, pipeline):
    sc = scenario
    spec = sc.spec
    eps = sc.pair_eps(0, 0.05)
    psi1, _ = pipeline.psi_k1_family(0, eps, pipeline.w1_radii())
    zero1 = psi1.with_values(np.zeros_like(psi1.values))
    r1 = solve_w_k1(spec, zero1, sc.fp, eps, sc.norm_k1())
    assert np.all(r1["w"].values == 0)
    assert r1["iterations"] <= 2


def test_fixed_point_linear_in_forcing(scenario, pipeline):
    sc = scenario
    spec = sc.spec
    eps = sc.pair_eps(0, 0.05)
    psi1, _ = pipeline.psi_k1_family(0, eps, pipeline.w1_radii())
    r = solve_w_k1(spec, psi1, sc.fp, eps, sc.norm_k1())
    r2 = solve_w_k1(spec, psi1.with_values(2.0 * psi1.values), sc.fp, eps,
                    sc.norm_k1())
    diff = np.max(np.abs(r2["w"].values - 2.0 * r["w"].values))
    assert diff <= 1e-10 * max(np.max(np.abs(r2["w"].values)), 1e-30)


def test_solver_reports_residual_and_bound(scenario, pipeline):
    sc = scenario
    spec = sc.spec
    eps = sc.pair_eps(0, 0.05)
    psi1, _ = pipeline.psi_k1_family(0, eps, pipeline.w1_radii())
    r = solve_w_k1(spec, psi1, sc.fp, eps, sc.norm_k1())
    assert r["residual"] <= 1e-6 * r["residual_scale"]
    assert r["bound_sum"] > 0
    assert 0 <= r["contraction_ratio"] < 1


def test_solve_w_k2_zero_forcing(scenario, pipeline):
    sc = scenario
    spec = sc.spec
    eps = sc.pair_eps(0, 0.05)
    psi1, _ = pipeline.psi_k1_family(0, eps, pipeline.w1_radii())
    zero = psi1.with_values(np.zeros_like(psi1.values))
    r = solve_w_k2(spec, zero, sc.fp, eps, sc.norm_k2())
    assert np.all(r["w"].values == 0)
