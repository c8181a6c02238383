"""Borel-plane solvers for the two-level q-difference-differential problem.

Pipeline: the main equation in (T, m) is turned by a formal q-Borel
transform of order k1 into a convolution equation in the Borel variable
tau, solved by a fixed point in a q-exponentially weighted norm
(order kappa, shifted weight).  A q-Laplace transform of order kappa
("acceleration") produces the forcing of the order-k2 Borel equation,
whose fixed point divides by the polynomial P_m(tau).  A final
q-Laplace transform of order k2 along a sector-adapted ray, followed by
an inverse Fourier transform in m, assembles the sectorial solution
u(t, z, eps).

All tau grids are geometric with ratio q^{1/L}; every q-dilation that
appears has an exponent that is an integer multiple of 1/L, so dilation
is an exact node shift (reads below the grid clamp to the innermost
node, where the functions are analytic and nearly constant).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import LaplaceDomain, Sector, angle_dist, fold_angle, in_laplace_domain
from .mspace import (SQRT2PI, GridFunction, NormParams, Polynomial,
                     _trapezoid_weights, convolution_rows, e_weight,
                     exp_norm, grid_points, inverse_fourier_rows)
from .qkernels import (FormalSeries, RayQuadrature, ThetaParams,
                       laplace_ray_to_targets, theta)


# ---------------------------------------------------------------------------
# coefficient maps


@dataclass(frozen=True)
class GaussianCoefficient:
    """C(m, eps) = amp * (1 + eps_linear * eps) * exp(-m^2/(2 width^2)).

    The inverse Fourier transform has the closed form
    amp * (1 + eps_linear*eps) * width * exp(-width^2 z^2/2), used by
    the z-side residual oracles.
    """

    amp: complex = 1.0
    eps_linear: complex = 0.0
    width: float = 1.0

    def values(self, m: np.ndarray, eps: complex) -> np.ndarray:
        return (self.amp * (1.0 + self.eps_linear * eps)
                * np.exp(-(m * m) / (2.0 * self.width ** 2))).astype(complex)

    def z_profile(self, z: np.ndarray, eps: complex) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return (self.amp * (1.0 + self.eps_linear * eps) * self.width
                * np.exp(-(self.width ** 2) * z * z / 2.0))

    def eps_taylor_factor(self, order: int) -> complex:
        """d^order/d eps^order of the scalar eps factor at eps = 0."""
        if order == 0:
            return complex(self.amp)
        if order == 1:
            return complex(self.amp * self.eps_linear)
        return 0.0

    def m_profile(self, m: np.ndarray) -> np.ndarray:
        return np.exp(-(m * m) / (2.0 * self.width ** 2)).astype(complex)


# ---------------------------------------------------------------------------
# problem description


@dataclass(frozen=True)
class Term:
    lambda_id: int
    d: int
    Delta: int
    R: Polynomial
    C: GaussianCoefficient


@dataclass(frozen=True)
class Level:
    delta: int
    terms: tuple

    def __init__(self, delta: int, terms: Sequence[Term]):
        object.__setattr__(self, "delta", int(delta))
        object.__setattr__(self, "terms", tuple(terms))


@dataclass(frozen=True)
class ProblemSpec:
    q: float
    k1: int
    k2: int
    d_D: int
    Qpoly: Polynomial
    RD: Polynomial
    levels: tuple  # of Level
    epsilon0: float
    m_max: float = 20.0
    n_points: int = 401
    beta: float = 1.0
    mu: float = 3.0
    # sector containing Q(im)/R_D(im) (direction, half opening, min modulus)
    qrd_direction: float = math.pi
    qrd_half_opening: float = 0.5
    qrd_min_modulus: float = 1e-3
    two_level: bool = True  # False for the driver problem of a chained run

    @property
    def D(self) -> int:
        return len(self.levels) + 1

    @property
    def kappa(self) -> float:
        if not self.two_level:
            raise ValueError("single-level problem has no kappa")
        return 1.0 / (1.0 / self.k1 - 1.0 / self.k2)

    @property
    def grid(self) -> np.ndarray:
        return grid_points(self.m_max, self.n_points)

    def Q_im(self) -> np.ndarray:
        return self.Qpoly.eval_im(self.grid)

    def RD_im(self) -> np.ndarray:
        return self.RD.eval_im(self.grid)

    def all_terms(self):
        for lev in self.levels:
            for term in lev.terms:
                yield lev.delta, term


def validate_problem(spec: ProblemSpec) -> list[str]:
    """Check the structural admissibility inequalities; returns violations."""
    report: list[str] = []
    lv = spec.levels
    if not lv:
        report.append("no lower-order levels present")
        return report
    if lv[0].delta != 1:
        report.append(f"delta_1 = {lv[0].delta} != 1")
    for i in range(len(lv) - 1):
        if not lv[i].delta < lv[i + 1].delta:
            report.append(f"delta_{i+1} >= delta_{i+2} (must increase)")
    k = spec.k2
    if spec.two_level and not (0 < spec.k1 < spec.k2):
        report.append("need 0 < k1 < k2")
    for lev in lv:
        for t in lev.terms:
            tag = f"(lambda={t.lambda_id}, l: delta={lev.delta})"
            if not t.Delta >= t.d:
                report.append(f"Delta >= d violated at {tag}")
            if not t.d / k + 1 >= lev.delta:
                report.append(f"d/k+1 >= delta violated at {tag}")
            if not (spec.d_D - 1) / k + 1 >= lev.delta:
                report.append(f"(d_D-1)/k+1 >= delta violated at {tag}")
    degQ, degRD = spec.Qpoly.degree, spec.RD.degree
    if not degQ >= degRD:
        report.append(f"deg Q = {degQ} < deg R_D = {degRD}")
    for lev in lv:
        for t in lev.terms:
            if not degRD >= t.R.degree:
                report.append(f"deg R_D < deg R_l at (lambda={t.lambda_id})")
    m = spec.grid
    Q = spec.Q_im()
    RD = spec.RD_im()
    if np.any(np.abs(Q) < 1e-14):
        report.append("Q(im) vanishes on the grid")
    if np.any(np.abs(RD) < 1e-14):
        report.append("R_D(im) vanishes on the grid")
    if not spec.mu > degRD + 1:
        report.append(f"mu = {spec.mu} <= deg(R_D)+1 = {degRD + 1}")
    if np.all(np.abs(Q) > 0) and np.all(np.abs(RD) > 0):
        ratio = Q / RD
        bad_mod = np.abs(ratio) < spec.qrd_min_modulus * (1 - 1e-12)
        args = np.angle(ratio)
        bad_arg = np.array([angle_dist(a, spec.qrd_direction)
                            > spec.qrd_half_opening + 1e-12 for a in args])
        if np.any(bad_mod):
            report.append("|Q/R_D| drops below the configured sector modulus")
        if np.any(bad_arg):
            report.append("arg(Q/R_D) leaves the configured sector")
    return report


# ---------------------------------------------------------------------------
# tau families


@dataclass(frozen=True)
class TauFamily:
    """m-line functions sampled on a geometric ray in the Borel plane."""

    direction: float
    radii: np.ndarray
    values: np.ndarray  # (n_tau, n_m)
    m_max: float
    n_points: int
    L: int  # grid ratio is q^{1/L}

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (radii.size, self.n_points):
            raise ValueError("values must have shape (n_tau, n_m)")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "values", vals)

    @property
    def tau(self) -> np.ndarray:
        return self.radii * cmath.exp(1j * self.direction)

    @property
    def grid(self) -> np.ndarray:
        return grid_points(self.m_max, self.n_points)

    def with_values(self, values: np.ndarray) -> "TauFamily":
        return replace(self, values=values)


def geometric_radii(q: float, L: int, log2_min: float, log2_max: float) -> np.ndarray:
    """Nodes r = q^{j/L} spanning [q^{log2_min}, q^{log2_max}] (in log_q units)."""
    j0 = int(round(log2_min * L))
    j1 = int(round(log2_max * L))
    return q ** (np.arange(j0, j1 + 1) / L)


def dilation_shift(gamma: float, L: int) -> int:
    s = gamma * L
    si = int(round(s))
    if abs(s - si) > 1e-9:
        raise ValueError(f"dilation exponent {gamma} incompatible with grid L={L}")
    return si


def dilate_rows(values: np.ndarray, shift: int) -> np.ndarray:
    """(sigma_q^gamma w)(tau_j) = w(tau_{j+shift}); out-of-range clamps."""
    n = values.shape[0]
    idx = np.clip(np.arange(n) + shift, 0, n - 1)
    return values[idx]


# ---------------------------------------------------------------------------
# formal coefficients (recursion in n)


def formal_coefficients(spec: ProblemSpec, N: int, eps: complex,
                        forcing_coeffs: np.ndarray,
                        driver_level: Optional[float] = None,
                        initial: Optional[np.ndarray] = None) -> FormalSeries:
    """Coefficients U_n of the formal series solution of the (T, m) equation.

    Recursion (coefficient matching in T^n):
        Q(im) U_n = R_D(im) q^{(d_D/k + 1)(n - d_D) - n} U_{n-d_D}
                    + sum eps^{Delta-d} q^{delta (n-d) - n}
                      (1/sqrt(2 pi)) C *^{R} U_{n-d}
                    + F_n
    with k the driver level (k2 for the main problem, k1 for a chained
    driver).  Negative back-indices contribute zero; an explicit initial
    segment overrides the head of the recursion.
    """
    q = spec.q
    k = driver_level if driver_level is not None else spec.k2
    m = spec.grid
    Q = spec.Q_im()
    RD = spec.RD_im()
    wts = _trapezoid_weights(spec.m_max, spec.n_points)
    F = np.asarray(forcing_coeffs, dtype=complex)
    if F.shape[0] < N + 1:
        F = np.vstack([F, np.zeros((N + 1 - F.shape[0], m.size), dtype=complex)])
    U = np.zeros((N + 1, m.size), dtype=complex)
    head = 0 if initial is None else initial.shape[0]
    for n in range(N + 1):
        if n < head:
            U[n] = initial[n]
            continue
        rhs = F[n].copy()
        if n - spec.d_D >= 0:
            rhs += (RD * q ** ((spec.d_D / k + 1) * (n - spec.d_D) - n)
                    * U[n - spec.d_D])
        for delta, term in spec.all_terms():
            if n - term.d >= 0:
                g = wts * term.R.eval_im(m) * U[n - term.d]
                conv = convolution_rows(term.C.values(m, eps), g[None, :])[0]
                rhs += (eps ** (term.Delta - term.d)
                        * q ** (delta * (n - term.d) - n) * conv / SQRT2PI)
        U[n] = rhs / Q
    coeffs = [GridFunction(spec.m_max, spec.n_points, U[n], (spec.beta, spec.mu))
              for n in range(N + 1)]
    return FormalSeries(coeffs)


def chained_forcing_coefficients(spec_bold: ProblemSpec, bold_F: np.ndarray,
                                 N: int, eps: complex, k1: float) -> FormalSeries:
    """Coefficients of the forcing series generated by a driver problem.

    The driver problem runs at level k1; its formal solution coefficients
    become the F_n of the main problem.
    """
    return formal_coefficients(spec_bold, N, eps, bold_F, driver_level=k1)


# ---------------------------------------------------------------------------
# P_m and its roots


def _pm_prefactors(spec: ProblemSpec) -> tuple[float, float]:
    q, k2, dd = spec.q, spec.k2, spec.d_D
    a = q ** (-(k2 * (k2 - 1) / 2.0) / k2)           # (q^{1/k2})^{-k2(k2-1)/2}
    b = q ** (-((dd + k2) * (dd + k2 - 1) / 2.0) / k2)
    return a, b


def pm_values(spec: ProblemSpec, tau: np.ndarray, m: Optional[np.ndarray] = None
              ) -> np.ndarray:
    """P_m(tau) on the outer product of tau nodes and grid m values."""
    if m is None:
        m = spec.grid
    a, b = _pm_prefactors(spec)
    Q = spec.Qpoly.eval_im(m)
    RD = spec.RD.eval_im(m)
    tau = np.asarray(tau, dtype=complex)
    return a * Q[None, :] - b * RD[None, :] * (tau ** spec.d_D)[:, None]


def pm_roots(spec: ProblemSpec, m: float) -> np.ndarray:
    """The d_D roots of P_m: common modulus, equally spaced arguments."""
    RD = complex(spec.RD.eval_im(m))
    if RD == 0:
        raise ZeroDivisionError("R_D(im) = 0: roots undefined")
    Q = complex(spec.Qpoly.eval_im(m))
    q, k2, dd = spec.q, spec.k2, spec.d_D
    ratio = Q / RD
    power = ((dd + k2) * (dd + k2 - 1) - k2 * (k2 - 1)) / 2.0
    modulus = (abs(ratio) * q ** (power / k2)) ** (1.0 / dd)
    base_arg = cmath.phase(ratio) / dd
    ls = np.arange(dd)
    return modulus * np.exp(1j * (base_arg + 2.0 * math.pi * ls / dd))


def check_root_bounds(spec: ProblemSpec, sector: Sector, rho: float,
                      n_samples: int = 10000,
                      rng: Optional[np.random.Generator] = None) -> dict:
    """Empirical root-distance constants over the sector and the disc.

    Returns the sampled infima M1_hat, M2_hat (with the root index l0
    achieving the best minimum distance margin) and CP_hat; a direction
    is refused downstream when M1_hat <= 0.01.
    """
    rng = rng or np.random.default_rng(0)
    m_samples = rng.uniform(-spec.m_max, spec.m_max, size=n_samples)
    in_sector = rng.random(n_samples) < 0.5
    r_sec = np.exp(rng.uniform(np.log(1e-3), np.log(max(sector.radius, 10.0)
                                                    if math.isfinite(sector.radius)
                                                    else 10.0), n_samples))
    ang = (sector.bisecting_direction
           + rng.uniform(-1, 1, n_samples) * sector.half_opening)
    tau_sec = r_sec * np.exp(1j * ang)
    tau_disc = (rho * np.sqrt(rng.random(n_samples))
                * np.exp(1j * rng.uniform(-math.pi, math.pi, n_samples)))
    tau = np.where(in_sector, tau_sec, tau_disc)

    roots = np.stack([pm_roots(spec, mm) for mm in m_samples])  # (n, d_D)
    dist = np.abs(tau[:, None] - roots)
    m1 = float(np.min(dist / (1.0 + np.abs(tau))[:, None]))
    # per-root-index normalized distance; l0 maximizes the sampled min
    m2_per_l = np.min(dist / np.abs(roots), axis=0)
    l0 = int(np.argmax(m2_per_l))
    m2 = float(m2_per_l[l0])
    pm = np.array([pm_values(spec, np.array([t]), np.array([mm]))[0, 0]
                   for t, mm in zip(tau, m_samples)])
    RD = spec.RD.eval_im(m_samples)
    denom = (np.abs(RD) * (1.0 + np.abs(tau)) ** (spec.d_D - 1)
             * spec.qrd_min_modulus ** (1.0 / spec.d_D))
    cp = float(np.min(np.abs(pm) / denom))
    return {"M1_hat": m1, "M2_hat": m2, "l0": l0, "CP_hat": cp}


# ---------------------------------------------------------------------------
# fixed-point solvers


@dataclass(frozen=True)
class FixedPointConfig:
    ball_radius: float = 1e6
    max_iter: int = 200
    tol: float = 1e-12
    # weighted update level treated as the float-noise floor: the
    # exponential weights amplify round-off at the grid edges, so the
    # update norm stalls above tol even though the values converged
    stall_tol: float = 1e-5
    zeta_psi: float = 1.0
    zeta_le: float = 1.0


def _conv_term_rows(spec: ProblemSpec, term: Term, eps: complex,
                    rows: np.ndarray, wts: np.ndarray, m: np.ndarray,
                    zeta_le: float = 1.0) -> np.ndarray:
    """(C_{lambda,l} *^{R_l} rows) for every tau row, trapezoid in m."""
    g = (wts * term.R.eval_im(m))[None, :] * rows
    return zeta_le * convolution_rows(term.C.values(m, eps), g)


def _dilation_weight_gain(tau: np.ndarray, norm: NormParams, q: float,
                          shift: int, space: str) -> np.ndarray:
    """Per-row weight ratio picked up by the node-shift dilation.

    ``(sigma w)(tau_j) = w(tau_{j+shift})`` scales the weighted sup norm
    of each row by wt(tau_j) / wt(tau_{j+shift}); out-of-range indices
    clamp exactly as in dilate_rows.
    """
    base = np.abs(tau + norm.shift) if space == "shifted" else np.abs(tau)
    lg = np.log(base)
    lw = -norm.k * lg * lg / (2.0 * np.log(q)) - norm.tilt * lg
    idx = np.clip(np.arange(len(tau)) + shift, 0, len(tau) - 1)
    # the ratio legitimately overflows to inf when the weight degenerates
    # along the ray (e.g. the shifted weight near tau = -shift): no finite
    # operator-norm certificate exists there
    with np.errstate(over="ignore"):
        return np.exp(lw - lw[idx])


def _conv_kernel_gain(spec: ProblemSpec, term: Term, eps: complex,
                      wts: np.ndarray, wt_m: np.ndarray) -> np.ndarray:
    """Induced m-line norm of one convolution term, per output node.

    For the map w -> C * (R w) in the weighted sup norm the induced
    norm is max_m wt(m) * (|C| * (|R| / wt))(m); the trapezoid weights
    match the discretization of the actual operator.
    """
    m = spec.grid
    kern = np.abs(term.C.values(m, eps))
    g = (wts * np.abs(term.R.eval_im(m)) / wt_m)[None, :]
    return wt_m * np.abs(convolution_rows(kern, g)[0])


def _iterate_fixed_point(apply_map, w0: np.ndarray, norm_of, cfg: FixedPointConfig):
    w = w0
    prev_update = None
    contraction = 0.0
    stalled = 0
    iterations = 0
    for it in range(1, cfg.max_iter + 1):
        w_new = apply_map(w)
        upd = norm_of(w_new - w)
        scale = max(norm_of(w_new), 1.0)
        if not np.isfinite(upd) or norm_of(w_new) > cfg.ball_radius * 1e12:
            raise ArithmeticError("fixed-point iteration diverged (norm overflow)")
        if prev_update is not None and prev_update > 0:
            ratio = upd / prev_update
            if upd > cfg.stall_tol * scale:
                contraction = max(contraction, ratio)
            stalled = stalled + 1 if ratio >= 0.95 else 0
        prev_update = upd
        w = w_new
        iterations = it
        if upd <= cfg.tol * scale:
            break
        if it >= 5 and stalled >= 4:
            if upd <= cfg.stall_tol * scale:
                break  # converged to the weighted round-off floor
            raise ArithmeticError(
                "smallness violated: update norm not contracting")
    return w, iterations, contraction


def solve_w_k1(spec: ProblemSpec, psi_k1: TauFamily, cfg: FixedPointConfig,
               eps: complex, norm: NormParams,
               w0: Optional[np.ndarray] = None) -> dict:
    """Fixed point of the order-k1 Borel equation on a geometric ray.

    The map divides the equation by Q(im) tau^{k1} (up to the q-power
    bookkeeping); dilations are exact node shifts on the grid.
    ``w0`` overrides the starting iterate (default: the forcing term).
    """
    q, k1, dd = spec.q, spec.k1, spec.d_D
    kap = spec.kappa
    m = spec.grid
    Q = spec.Q_im()
    RD = spec.RD_im()
    wts = _trapezoid_weights(spec.m_max, spec.n_points)
    tau = psi_k1.tau
    L = psi_k1.L

    pref_main = q ** ((k1 * (k1 - 1) / 2.0 - (dd + k1) * (dd + k1 - 1) / 2.0) / k1)
    shift_main = dilation_shift(-dd / kap, L)
    taud_main = (tau ** dd)[:, None]
    ratio_RQ = (RD / Q)[None, :]

    term_data = []
    for delta, term in spec.all_terms():
        pref = q ** ((k1 * (k1 - 1) / 2.0
                      - (term.d + k1) * (term.d + k1 - 1) / 2.0) / k1)
        shift = dilation_shift(delta - term.d / k1 - 1.0, L)
        coef = (eps ** (term.Delta - term.d)) * pref * (tau ** term.d)[:, None]
        term_data.append((term, shift, coef))

    psi_scaled = cfg.zeta_psi * psi_k1.values
    forcing = psi_scaled / Q[None, :]

    def apply_map(w: np.ndarray) -> np.ndarray:
        out = pref_main * taud_main * ratio_RQ * dilate_rows(w, shift_main)
        for term, shift, coef in term_data:
            conv = _conv_term_rows(spec, term, eps, dilate_rows(w, shift),
                                   wts, m, cfg.zeta_le)
            out = out + coef * conv / (SQRT2PI * Q[None, :])
        return out + forcing

    fam0 = psi_k1.with_values(forcing)

    def norm_of(vals: np.ndarray) -> float:
        return exp_norm(fam0.with_values(vals), norm, q, space="shifted")

    start = forcing if w0 is None else w0
    w, iterations, contraction = _iterate_fixed_point(apply_map, start,
                                                      norm_of, cfg)
    # measured bound sum: per-term induced operator norms (weighted sup)
    wt_m = e_weight(m, norm.beta, norm.mu)
    gain_main = _dilation_weight_gain(tau, norm, q, shift_main, "shifted")
    bound = (abs(pref_main)
             * float(np.max(np.abs(tau) ** dd * gain_main))
             * float(np.max(np.abs(RD / Q))))
    for term, shift, coef in term_data:
        gain = _dilation_weight_gain(tau, norm, q, shift, "shifted")
        tau_gain = float(np.max(np.abs(coef[:, 0]) * gain))
        m_gain = float(np.max(_conv_kernel_gain(spec, term, eps, wts, wt_m)
                              / (SQRT2PI * np.abs(Q))))
        bound += cfg.zeta_le * tau_gain * m_gain
    family = psi_k1.with_values(w)
    res = residual_k1(spec, family, psi_k1, cfg, eps, norm)
    return {"w": family, "iterations": iterations,
            "contraction_ratio": contraction, "bound_sum": bound, **res}


def residual_k1(spec: ProblemSpec, w: TauFamily, psi_k1: TauFamily,
                cfg: FixedPointConfig, eps: complex, norm: NormParams) -> dict:
    """Weighted residual of the order-k1 Borel equation (both sides evaluated)."""
    q, k1, dd = spec.q, spec.k1, spec.d_D
    m = spec.grid
    Q = spec.Q_im()
    RD = spec.RD_im()
    wts = _trapezoid_weights(spec.m_max, spec.n_points)
    tau = w.tau
    L = w.L
    lhs = (Q[None, :] * (tau ** k1)[:, None] * w.values
           / q ** ((k1 * (k1 - 1) / 2.0) / k1))
    rhs = ((tau ** (dd + k1))[:, None] * RD[None, :]
           / q ** (((dd + k1) * (dd + k1 - 1) / 2.0) / k1)
           * dilate_rows(w.values, dilation_shift(-dd / spec.kappa, L)))
    for delta, term in spec.all_terms():
        shift = dilation_shift(delta - term.d / k1 - 1.0, L)
        conv = _conv_term_rows(spec, term, eps, dilate_rows(w.values, shift),
                               wts, m, cfg.zeta_le)
        rhs = rhs + (eps ** (term.Delta - term.d)
                     * (tau ** (term.d + k1))[:, None] * conv
                     / (q ** (((term.d + k1) * (term.d + k1 - 1) / 2.0) / k1)
                        * SQRT2PI))
    rhs = rhs + ((tau ** k1)[:, None] * cfg.zeta_psi * psi_k1.values
                 / q ** ((k1 * (k1 - 1) / 2.0) / k1))
    scale = exp_norm(w.with_values(lhs), norm, q, space="shifted")
    resid = exp_norm(w.with_values(lhs - rhs), norm, q, space="shifted")
    return {"residual": resid, "residual_scale": max(scale, 1e-300)}


def solve_w_k2(spec: ProblemSpec, psi_k2: TauFamily, cfg: FixedPointConfig,
               eps: complex, norm: NormParams,
               k_level: Optional[float] = None,
               w0: Optional[np.ndarray] = None) -> dict:
    """Fixed point of the root-divided Borel equation at level k2.

    ``k_level`` overrides the level (used by the chained driver problem,
    which runs the same equation shape at level k1); ``w0`` overrides
    the starting iterate (default: the forcing term).
    """
    q = spec.q
    k2 = float(k_level if k_level is not None else spec.k2)
    dd = spec.d_D
    m = spec.grid
    wts = _trapezoid_weights(spec.m_max, spec.n_points)
    tau = psi_k2.tau
    L = psi_k2.L

    a = q ** (-(k2 * (k2 - 1) / 2.0) / k2)
    b = q ** (-((dd + k2) * (dd + k2 - 1) / 2.0) / k2)
    P = (a * spec.Q_im()[None, :]
         - b * spec.RD_im()[None, :] * (tau ** dd)[:, None])
    if np.min(np.abs(P)) < 1e-12:
        raise ArithmeticError("root too close: P_m nearly vanishes at a node")

    term_data = []
    for delta, term in spec.all_terms():
        pref = q ** (-((term.d + k2) * (term.d + k2 - 1) / 2.0) / k2)
        shift = dilation_shift(delta - term.d / k2 - 1.0, L)
        coef = (eps ** (term.Delta - term.d)) * pref * (tau ** term.d)[:, None]
        term_data.append((term, shift, coef))

    forcing = a * cfg.zeta_psi * psi_k2.values / P

    def apply_map(w: np.ndarray) -> np.ndarray:
        out = forcing.copy()
        for term, shift, coef in term_data:
            conv = _conv_term_rows(spec, term, eps, dilate_rows(w, shift),
                                   wts, m, cfg.zeta_le)
            out = out + coef * conv / (SQRT2PI * P)
        return out

    fam0 = psi_k2.with_values(forcing)

    def norm_of(vals: np.ndarray) -> float:
        return exp_norm(fam0.with_values(vals), norm, q, space="plain")

    start = forcing if w0 is None else w0
    w, iterations, contraction = _iterate_fixed_point(apply_map, start,
                                                      norm_of, cfg)
    # measured bound sum: per-term induced operator norms (weighted sup)
    wt_m = e_weight(m, norm.beta, norm.mu)
    bound = 0.0
    for term, shift, coef in term_data:
        gain = _dilation_weight_gain(tau, norm, q, shift, "plain")
        m_gain = np.max(_conv_kernel_gain(spec, term, eps, wts, wt_m)[None, :]
                        / (SQRT2PI * np.abs(P)), axis=1)
        bound += cfg.zeta_le * float(np.max(np.abs(coef[:, 0]) * gain * m_gain))
    family = psi_k2.with_values(w)
    res = residual_k2(spec, family, psi_k2, cfg, eps, norm, k2)
    return {"w": family, "iterations": iterations,
            "contraction_ratio": contraction, "bound_sum": bound, **res}


def residual_k2(spec: ProblemSpec, w: TauFamily, psi_k2: TauFamily,
                cfg: FixedPointConfig, eps: complex, norm: NormParams,
                k2: float) -> dict:
    """Weighted residual of the order-k2 Borel equation."""
    q, dd = spec.q, spec.d_D
    m = spec.grid
    wts = _trapezoid_weights(spec.m_max, spec.n_points)
    tau = w.tau
    L = w.L
    a = q ** (-(k2 * (k2 - 1) / 2.0) / k2)
    b = q ** (-((dd + k2) * (dd + k2 - 1) / 2.0) / k2)
    P = (a * spec.Q_im()[None, :]
         - b * spec.RD_im()[None, :] * (tau ** dd)[:, None])
    lhs = P * w.values
    rhs = a * cfg.zeta_psi * psi_k2.values
    for delta, term in spec.all_terms():
        pref = q ** (-((term.d + k2) * (term.d + k2 - 1) / 2.0) / k2)
        shift = dilation_shift(delta - term.d / k2 - 1.0, L)
        conv = _conv_term_rows(spec, term, eps, dilate_rows(w.values, shift),
                               wts, m, cfg.zeta_le)
        rhs = rhs + (eps ** (term.Delta - term.d) * pref
                     * (tau ** term.d)[:, None] * conv / SQRT2PI)
    scale = exp_norm(w.with_values(lhs), norm, q, space="plain")
    resid = exp_norm(w.with_values(lhs - rhs), norm, q, space="plain")
    return {"residual": resid, "residual_scale": max(scale, 1e-300)}


# ---------------------------------------------------------------------------
# acceleration and assembly


def accelerate(family: TauFamily, spec: ProblemSpec, dom: LaplaceDomain,
               targets: np.ndarray, order: Optional[float] = None) -> np.ndarray:
    """q-Laplace transform of intermediate order kappa along the family's ray.

    Returns values of shape (n_targets, n_m).  Targets should pass the
    ray-avoidance test of ``dom`` (checked here for off-ray targets).
    """
    k = float(order if order is not None else spec.kappa)
    targets = np.asarray(targets, dtype=complex)
    for T in targets:
        if angle_dist(cmath.phase(T), family.direction) > 1e-9:
            if not in_laplace_domain(T, dom):
                raise ValueError(f"target {T} outside the Laplace domain")
    p = ThetaParams(spec.q, k)
    return laplace_ray_to_targets(family.values, family.radii,
                                  family.direction, p, targets)


def laplace_to_targets(family: TauFamily, spec: ProblemSpec, k: float,
                       targets: np.ndarray) -> np.ndarray:
    """q-Laplace of order k of a sampled family, at arbitrary targets."""
    p = ThetaParams(spec.q, float(k))
    return laplace_ray_to_targets(family.values, family.radii,
                                  family.direction, p,
                                  np.asarray(targets, dtype=complex))


def check_acceleration_identity(w_k1: TauFamily, w_k2: TauFamily,
                                spec: ProblemSpec, dom: LaplaceDomain,
                                overlap: Sector, eps: complex,
                                zeta_ratio: float = 1.0,
                                max_targets: int = 24) -> dict:
    """Compare accelerate(w_k1) against w_k2 on the common small sector.

    The two sides come from independent computations (an order-kappa
    quadrature of the first fixed point versus the second fixed point);
    their sup relative difference certifies the acceleration identity.
    ``zeta_ratio`` compensates differing forcing knobs, if any.
    """
    mask = (w_k2.radii < overlap.radius) & (w_k2.radii > 0)
    idx = np.where(mask)[0]
    if idx.size == 0:
        raise ValueError("empty overlap sector")
    if idx.size > max_targets:
        idx = idx[np.linspace(0, idx.size - 1, max_targets).astype(int)]
    targets = w_k2.tau[idx]
    acc = accelerate(w_k1, spec, dom, targets) * zeta_ratio
    ref = w_k2.values[idx]
    rel = np.abs(acc - ref) / (1.0 + np.abs(ref))
    return {"sup_rel_diff": float(np.max(rel)),
            "radii": w_k2.radii[idx],
            "per_tau_max": np.max(rel, axis=1)}


@dataclass(frozen=True)
class SectorialSolution:
    """u and its forcing on a q-geometric t lattice, z samples, one eps."""

    p: int
    direction: float
    eps: complex
    t_lattice: np.ndarray     # t_j = t_max q^{-j/2}, decreasing
    z_points: np.ndarray
    U_values: np.ndarray      # (n_t, n_m) Fourier-side solution at T = eps t
    F_values: np.ndarray      # (n_t, n_m) Fourier-side forcing at T = eps t
    u_values: np.ndarray      # (n_t, n_z)
    f_values: np.ndarray      # (n_t, n_z)
    m_max: float
    n_points: int


def t_lattice(t_max: float, q: float, count: int) -> np.ndarray:
    return t_max * q ** (-0.5 * np.arange(count))


def build_forcing(spec: ProblemSpec, psi_k2: TauFamily, dom: LaplaceDomain,
                  t_nodes: np.ndarray, z_points: np.ndarray, eps: complex
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Forcing f(t, z) via order-k2 q-Laplace of psi_k2 then inverse Fourier.

    Returns (F_values, f_values) with shapes (n_t, n_m) and (n_t, n_z).
    """
    T = eps * np.asarray(t_nodes, dtype=complex)
    for TT in T:
        if not in_laplace_domain(TT, dom):
            raise ValueError(f"eps*t = {TT} outside the Laplace domain")
    F = laplace_to_targets(psi_k2, spec, spec.k2, T)
    f = inverse_fourier_rows(F, spec.m_max, spec.n_points, z_points)
    return F, f


def assemble_solution(spec: ProblemSpec, w_k2: TauFamily, psi_k2: TauFamily,
                      dom: LaplaceDomain, p: int, t_nodes: np.ndarray,
                      z_points: np.ndarray, eps: complex) -> SectorialSolution:
    """Sectorial solution u(t,z) = inverse Fourier of the order-k2
    q-Laplace of the second Borel fixed point, plus the matching forcing."""
    T = eps * np.asarray(t_nodes, dtype=complex)
    for TT in T:
        if not in_laplace_domain(TT, dom):
            raise ValueError(f"eps*t = {TT} outside the Laplace domain")
    U = laplace_to_targets(w_k2, spec, spec.k2, T)
    u = inverse_fourier_rows(U, spec.m_max, spec.n_points, z_points)
    F, f = build_forcing(spec, psi_k2, dom, t_nodes, z_points, eps)
    return SectorialSolution(p=p, direction=w_k2.direction, eps=eps,
                             t_lattice=np.asarray(t_nodes, dtype=float),
                             z_points=np.asarray(z_points, dtype=complex),
                             U_values=U, F_values=F, u_values=u, f_values=f,
                             m_max=spec.m_max, n_points=spec.n_points)


# ---------------------------------------------------------------------------
# residual oracles on the (t, z) side


def _apply_main_operator(spec: ProblemSpec, U: np.ndarray, t: np.ndarray,
                         eps: complex, zeta_le: float = 1.0) -> np.ndarray:
    """P U on the Fourier side: rows j of the t lattice (t_j = t_max q^{-j/2}).

    P = Q(im) sigma_q - (eps t)^{d_D} sigma_q^{d_D/k2+1} R_D(im)
        - sum t^d eps^Delta sigma_q^{delta} (C *^{R} .)
    Rows outside the valid index range are NaN.
    """
    q = spec.q
    m = spec.grid
    wts = _trapezoid_weights(spec.m_max, spec.n_points)
    n_t = U.shape[0]
    out = np.full_like(U, np.nan)

    # sigma_q^gamma u(t_j) = u(q^gamma t_j) = row j - 2*gamma on the lattice
    def shifted(gamma: float) -> tuple[np.ndarray, np.ndarray]:
        s = gamma * 2.0
        si = int(round(s))
        if abs(s - si) > 1e-9:
            raise ValueError("t-lattice incompatible dilation")
        j = np.arange(n_t)
        src = j - si
        valid = (src >= 0) & (src < n_t)
        return src, valid

    src1, v1 = shifted(1.0)
    gamma_d = spec.d_D / spec.k2 + 1.0
    srcD, vD = shifted(gamma_d)
    valid = v1 & vD
    res = np.zeros_like(U)
    res[v1] = spec.Q_im()[None, :] * U[src1[v1]]
    res[vD] -= ((eps * t[vD]) ** spec.d_D)[:, None] * spec.RD_im()[None, :] \
        * U[srcD[vD]]
    for delta, term in spec.all_terms():
        srcL, vL = shifted(float(delta))
        valid &= vL
        g = (wts * term.R.eval_im(m))[None, :] * U[srcL[vL]]
        conv = zeta_le * convolution_rows(term.C.values(m, eps), g)
        res[vL] -= ((eps ** term.Delta) * (t[vL] ** term.d))[:, None] \
            * conv / SQRT2PI
    out[valid] = res[valid]
    return out


def pde_residual(spec: ProblemSpec, sol: SectorialSolution,
                 zeta_le: float = 1.0, zeta_psi: float = 1.0) -> dict:
    """Relative residual of the main (t,z) equation at interior lattice rows.

    All terms are evaluated on the Fourier side (derivatives in z are the
    multiplier im) and compared after inverse Fourier at the z samples.
    """
    t = sol.t_lattice
    PU = _apply_main_operator(spec, sol.U_values, t, sol.eps, zeta_le)
    n_t = t.size
    j = np.arange(n_t)
    src1 = j - 2
    vF = (src1 >= 0)
    rhs_m = np.full_like(sol.F_values, np.nan)
    rhs_m[vF] = zeta_psi * sol.F_values[src1[vF]]
    valid = ~np.isnan(PU[:, 0]) & vF
    if not valid.any():
        raise ValueError(
            "t lattice too short: the dilation shifts leave no interior rows")
    resid_m = PU[valid] - rhs_m[valid]
    resid_z = inverse_fourier_rows(resid_m, sol.m_max, sol.n_points, sol.z_points)
    lhs_z = inverse_fourier_rows(PU[valid], sol.m_max, sol.n_points, sol.z_points)
    rhs_z = inverse_fourier_rows(rhs_m[valid], sol.m_max, sol.n_points, sol.z_points)
    scale = max(float(np.max(np.abs(lhs_z))), float(np.max(np.abs(rhs_z))), 1e-300)
    return {"max_rel_residual": float(np.max(np.abs(resid_z))) / scale,
            "n_points": int(resid_z.size), "interior_rows": int(valid.sum())}


def composed_residual(spec: ProblemSpec, spec_bold: ProblemSpec,
                      sol: SectorialSolution, bold_F_series: np.ndarray,
                      k1: float, zeta_le: float = 1.0,
                      zeta_le_bold: float = 1.0) -> dict:
    """Residual of the chained equation: bold_P sigma_q^{-1} P u = sigma_q bold_f.

    ``bold_F_series`` holds the finite driver forcing coefficients
    (shape (N0+1, n_m)); the right side is its evaluation at T = eps q t.
    """
    t = sol.t_lattice
    eps = sol.eps
    PU = _apply_main_operator(spec, sol.U_values, t, eps, zeta_le)
    # G = sigma_q^{-1} P u, i.e. G(t_j) = (P u)(t_{j+2})
    n_t = t.size
    j = np.arange(n_t)
    srcG = j + 2
    G = np.full_like(PU, np.nan)
    vG = srcG < n_t
    G[vG] = PU[srcG[vG]]

    q = spec_bold.q
    m = spec_bold.grid
    wts = _trapezoid_weights(spec_bold.m_max, spec_bold.n_points)

    def shifted_rows(arr: np.ndarray, gamma: float):
        s = int(round(gamma * 2.0))
        src = j - s
        valid = (src >= 0) & (src < n_t)
        out = np.full_like(arr, np.nan)
        out[valid] = arr[src[valid]]
        return out

    lhs = spec_bold.Q_im()[None, :] * shifted_rows(G, 1.0)
    gamma_d = spec_bold.d_D / k1 + 1.0
    lhs = lhs - ((eps * t) ** spec_bold.d_D)[:, None] \
        * spec_bold.RD_im()[None, :] * shifted_rows(G, gamma_d)
    for delta, term in spec_bold.all_terms():
        rows = shifted_rows(G, float(delta))
        g = (wts * term.R.eval_im(m))[None, :] * np.nan_to_num(rows)
        conv = zeta_le_bold * convolution_rows(term.C.values(m, eps), g)
        conv[np.isnan(rows[:, 0])] = np.nan
        lhs = lhs - ((eps ** term.Delta) * (t ** term.d))[:, None] * conv / SQRT2PI

    # rhs: sigma_q bold_f on the Fourier side = sum_n bold_F_n (eps q t)^n
    Tq = eps * q * t
    n_idx = np.arange(bold_F_series.shape[0])
    rhs = np.tensordot(Tq[:, None] ** n_idx[None, :], bold_F_series, axes=([1], [0]))

    valid = ~np.isnan(lhs[:, 0])
    resid_m = lhs[valid] - rhs[valid]
    resid_z = inverse_fourier_rows(resid_m, sol.m_max, sol.n_points, sol.z_points)
    lhs_z = inverse_fourier_rows(lhs[valid], sol.m_max, sol.n_points, sol.z_points)
    rhs_z = inverse_fourier_rows(rhs[valid], sol.m_max, sol.n_points, sol.z_points)
    scale = max(float(np.max(np.abs(lhs_z))), float(np.max(np.abs(rhs_z))), 1e-300)
    return {"max_rel_residual": float(np.max(np.abs(resid_z))) / scale,
            "interior_rows": int(valid.sum())}
