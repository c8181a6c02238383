"""Tests for cocycle measurement, flatness fitting, expansion estimation and
the Gevrey growth proxy."""

import dataclasses
import math

import numpy as np
import pytest

from qsum.asymptotics import (CocycleSample, ExpansionEstimate,
                              check_q_gevrey_bound, cocycle,
                              estimate_expansion, fit_flatness_order,
                              flatness_envelope, verify_formal_recursion,
                              verify_two_level_split)
from qsum.solver import SectorialSolution, t_lattice


def _flat_diffs(eps, k, q, M=1.0, K=1.0):
    lg = np.log(eps)
    return K * eps ** M * np.exp(-k * lg * lg / (2.0 * np.log(q)))


def _solution(eps, values, m_values=None, t=None, z=None, m_max=1.0):
    t = np.geomspace(0.5, 0.1, 4) if t is None else t
    vals = np.asarray(values, dtype=complex)
    mv = vals if m_values is None else np.asarray(m_values, dtype=complex)
    z = np.linspace(-1, 1, vals.shape[1]).astype(complex) if z is None else z
    return SectorialSolution(p=0, direction=0.0, eps=eps, t_lattice=t,
                             z_points=z, U_values=mv, F_values=mv.copy(),
                             u_values=vals, f_values=vals.copy(),
                             m_max=m_max, n_points=mv.shape[1])


# ---------------------------------------------------------------------------
# cocycle


def test_cocycle_of_identical_solutions_is_zero():
    rng = np.random.default_rng(0)
    eps = [0.1, 0.05]
    sols = [_solution(e, rng.normal(size=(4, 7))) for e in eps]
    c = cocycle(sols, [dataclasses.replace(s) for s in sols], 3)
    assert np.all(np.asarray(c.diff_norms) == 0)
    assert np.allclose(c.eps_values, eps)
    assert c.pair_index == 3


def test_cocycle_rejects_mismatched_eps():
    a = [_solution(0.1, np.ones((4, 7)))]
    b = [_solution(0.2, np.ones((4, 7)))]
    with pytest.raises(ValueError):
        cocycle(a, b, 0)


def test_cocycle_rejects_mismatched_counts():
    a = [_solution(0.1, np.ones((4, 7)))] * 2
    b = [_solution(0.1, np.ones((4, 7)))]
    with pytest.raises(ValueError):
        cocycle(a, b, 0)


def test_cocycle_sample_rejects_negative_norms():
    with pytest.raises(ValueError):
        CocycleSample(0, np.array([0.1]), np.array([-1.0]), np.array([1.0]))


# ---------------------------------------------------------------------------
# flatness fit


def test_fit_recovers_synthetic_flatness_order():
    q = 2.0
    for k_true in (1.0, 2.0):
        eps = np.geomspace(1e-1, 1e-4, 12)
        c = CocycleSample(0, eps, _flat_diffs(eps, k_true, q),
                          np.ones_like(eps))
        fit = fit_flatness_order(c, q)
        assert abs(fit["k_hat"] - k_true) <= 0.02 * k_true
        assert fit["r2"] > 0.999
        assert fit["n_used"] == 12


def test_fit_constant_diffs_gives_zero_order():
    eps = np.geomspace(1e-1, 1e-4, 10)
    c = CocycleSample(0, eps, np.full(10, 0.3), np.ones(10))
    fit = fit_flatness_order(c, 2.0)
    assert abs(fit["k_hat"]) <= 1e-8
    assert abs(fit["M_hat"]) <= 1e-8


def test_fit_all_below_floor_is_infinitely_flat():
    eps = np.geomspace(1e-1, 1e-3, 8)
    c = CocycleSample(0, eps, np.full(8, 1e-16), np.ones(8))
    fit = fit_flatness_order(c, 2.0, floor=1e-12)
    assert math.isinf(fit["k_hat"])
    assert fit["n_used"] == 0


def test_fit_excludes_floor_samples():
    q = 2.0
    eps = np.geomspace(0.5, 0.05, 12)
    d = _flat_diffs(eps, 2.0, q)
    d[-3:] = 1e-15                       # noise-floor tail
    fit = fit_flatness_order(CocycleSample(0, eps, d, np.ones(12)), q,
                             floor=1e-12)
    assert fit["n_used"] == 9
    assert abs(fit["k_hat"] - 2.0) <= 0.02 * 2.0


def test_fit_order_invariant_under_rescaling():
    q = 2.0
    eps = np.geomspace(1e-1, 1e-4, 10)
    d = _flat_diffs(eps, 1.5, q, M=2.0, K=0.7)
    f1 = fit_flatness_order(CocycleSample(0, eps, d, np.ones(10)), q)
    f2 = fit_flatness_order(CocycleSample(0, eps, 1e6 * d, np.ones(10)), q)
    assert abs(f1["k_hat"] - f2["k_hat"]) <= 1e-9
    assert abs(f1["M_hat"] - f2["M_hat"]) <= 1e-9


def test_envelope_evaluates_fitted_model():
    q = 2.0
    eps = np.geomspace(1e-1, 1e-4, 10)
    d = _flat_diffs(eps, 2.0, q, M=1.0, K=3.0)
    fit = fit_flatness_order(CocycleSample(0, eps, d, np.ones(10)), q)
    x = 3e-3
    assert np.isclose(flatness_envelope(fit, q, x),
                      _flat_diffs(x, 2.0, q, 1.0, 3.0), rtol=1e-6)


def test_two_level_split_recovers_classes():
    q, k1, k2 = 2.0, 1.0, 2.0
    eps = np.geomspace(1e-1, 1e-4, 10)
    cocs = [CocycleSample(i, eps, _flat_diffs(eps, k, q), np.ones(10))
            for i, k in enumerate([k2, k1, k2, k1])]
    res = verify_two_level_split(cocs, q, k1, k2)
    assert res["I1"] == [1, 3]
    assert res["I2"] == [0, 2]
    assert res["both_nonempty"]
    assert not res["flags"]


def test_two_level_split_flags_ambiguous_order():
    # k = 4/3 is equidistant (relatively) from the two levels
    q, k1, k2 = 2.0, 1.0, 2.0
    eps = np.geomspace(1e-1, 1e-4, 10)
    cocs = [CocycleSample(0, eps, _flat_diffs(eps, 4.0 / 3.0, q), np.ones(10))]
    res = verify_two_level_split(cocs, q, k1, k2)
    assert res["flags"]


# ---------------------------------------------------------------------------
# expansion estimation


def test_expansion_recovers_polynomial_dependence():
    rng = np.random.default_rng(7)
    base = rng.normal(size=(4, 7)) + 1j * rng.normal(size=(4, 7))
    eps = np.geomspace(0.2, 0.2 / 2 ** 7, 8)
    sols = {p: [_solution(e, (1.0 + e + 2.0 * e * e) * base) for e in eps]
            for p in (0, 1)}
    est = estimate_expansion(sols, M=2)
    # h stores m! c_m for u = sum c_m eps^m: [1, 1, 2 * 2!] times the profile
    assert np.allclose(est.h[0], base, rtol=1e-8)
    assert np.allclose(est.h[1], base, rtol=1e-6)
    assert np.allclose(est.h[2], 4.0 * base, rtol=1e-4)
    assert np.max(est.cross_sector_dev) <= 1e-10


def test_expansion_requires_enough_samples():
    eps = [0.1, 0.05, 0.025]
    sols = {0: [_solution(e, np.ones((4, 7))) for e in eps]}
    with pytest.raises(ValueError, match="samples"):
        estimate_expansion(sols, M=2)


def test_expansion_rejects_ill_conditioned_fit():
    # nearly coincident moduli make the Vandermonde system degenerate
    eps = 0.1 * (1.0 + 1e-13 * np.arange(9))
    sols = {0: [_solution(e, np.ones((4, 7))) for e in eps]}
    with pytest.raises(ValueError, match="ill-conditioned"):
        estimate_expansion(sols, M=6)


# ---------------------------------------------------------------------------
# formal recursion check


def test_recursion_head_matches_algebraic_solution(scenario):
    # u with U_0 = F_0 / Q and no t-dependence satisfies the order-0
    # coefficient identity exactly; the fitted expansion must reproduce it.
    spec = scenario.spec
    M = 3
    n_m = spec.grid.size
    F = np.stack([np.exp(-spec.grid ** 2) * (1.0 + 0.1 * mo * np.cos(spec.grid))
                  for mo in range(M + 1)]).astype(complex)
    t = t_lattice(0.4, spec.q, 8)
    z = np.linspace(-0.5, 0.5, 6).astype(complex)
    eps_vals = np.geomspace(0.1, 0.1 / 2 ** 7, 8)

    from qsum.mspace import inverse_fourier_rows
    sols = {0: [], 1: []}
    for e in eps_vals:
        fc = sum(F[mo] * e ** mo for mo in range(M + 1))
        U0 = fc / spec.Q_im()
        U = np.tile(U0, (t.size, 1))
        Fv = np.tile(fc, (t.size, 1))
        u = np.tile(inverse_fourier_rows(U0[None, :], spec.m_max,
                                         spec.n_points, z)[0], (t.size, 1))
        f = np.tile(inverse_fourier_rows(fc[None, :], spec.m_max,
                                         spec.n_points, z)[0], (t.size, 1))
        for p in (0, 1):
            sols[p].append(SectorialSolution(
                p=p, direction=0.0, eps=complex(e), t_lattice=t, z_points=z,
                U_values=U, F_values=Fv, u_values=u, f_values=f,
                m_max=spec.m_max, n_points=spec.n_points))
    est = estimate_expansion(sols, M=M, field="u")
    fest = estimate_expansion(sols, M=M, field="f")
    res = verify_formal_recursion(est, spec, fest)
    assert res["m_min"] == spec.d_D
    assert res["per_order"][0] <= 1e-8


def test_recursion_requires_enough_orders(scenario):
    eps = np.geomspace(0.1, 0.001, 8)
    sols = {0: [_solution(e, np.ones((4, 7))) for e in eps]}
    est = estimate_expansion(sols, M=1)
    with pytest.raises(ValueError):
        verify_formal_recursion(est, scenario.spec, est)


# ---------------------------------------------------------------------------
# Gevrey proxy


def _gevrey_case(alpha, M, eps, q=2.0, n_t=4, n_z=5):
    """One eps sample of f = sum_{n<=M+1} q^{alpha n(n-1)} eps^n with the
    order-<=M coefficients known exactly; the remainder after order N is
    then the single dominant term q^{alpha N(N+1)} eps^{N+1}."""
    cn = np.array([q ** (alpha * n * (n - 1)) for n in range(M + 2)])
    h = np.stack([math.factorial(n) * cn[n] * np.ones((n_t, n_z))
                  for n in range(M + 1)])
    est = ExpansionEstimate(
        orders=M, t_lattice=np.geomspace(0.5, 0.1, n_t),
        z_points=np.linspace(-1, 1, n_z).astype(complex), h=h, H=h.copy(),
        per_sector_h={}, per_sector_H={}, fit_residuals={},
        cross_sector_dev=np.zeros(M + 1), cond=1.0, m_max=6.0, n_points=n_z)
    vals = sum(cn[n] * eps ** n for n in range(M + 2)) * np.ones((n_t, n_z))
    return est, [(complex(eps), vals)]


def test_gevrey_bound_accepts_critical_growth():
    # coefficient growth q^{n(n-1)/2} is exactly the level-1 rate
    est, samples = _gevrey_case(0.5, 6, 2e-3)
    res = check_q_gevrey_bound(samples, est, 1.0, 2.0)
    assert res["bounded"]
    assert np.max(res["roots"]) <= 1.1
    assert np.min(res["roots"]) >= 0.9


def test_gevrey_bound_rejects_super_critical_growth():
    est, samples = _gevrey_case(2.0, 3, 7e-5)
    res = check_q_gevrey_bound(samples, est, 1.0, 2.0)
    assert not res["bounded"]
    assert np.max(res["roots"]) > 3.0 * res["median_root"]


def test_gevrey_roots_scale_invariant():
    est, samples = _gevrey_case(0.5, 6, 2e-3)
    r1 = check_q_gevrey_bound(samples, est, 1.0, 2.0)
    scaled_est = dataclasses.replace(est, h=est.h * 2.0 ** 40)
    scaled = [(e, v * 2.0 ** 40) for e, v in samples]
    r2 = check_q_gevrey_bound(scaled, scaled_est, 1.0, 2.0)
    assert np.array_equal(r1["roots"], r2["roots"])


def test_gevrey_roots_grow_when_tested_at_higher_level():
    # dividing by the slower level-2 rate must inflate the proxy roots
    est, samples = _gevrey_case(0.5, 6, 2e-3)
    r1 = check_q_gevrey_bound(samples, est, 1.0, 2.0)
    r2 = check_q_gevrey_bound(samples, est, 2.0, 2.0)
    assert np.max(r2["roots"]) > np.max(r1["roots"])
