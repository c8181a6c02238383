"""q-calculus kernels.

The building blocks of q-Borel/q-Laplace summation: the Jacobi-type
theta function of order k, the kernel ray mass that normalises the
q-Laplace transform (and the literature constant pi_{q^{1/k}}),
formal power series with m-line coefficients, the formal q-Borel
transform and q-dilations, and the q-Laplace transform along rays,
realised as trapezoid quadrature in log-radius on a geometric node set.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .mspace import GridFunction

THETA_HARD_CAP = 500


@dataclass(frozen=True)
class ThetaParams:
    q: float
    k: float
    tail_tol: float = 1e-16

    def __post_init__(self):
        if self.q <= 1:
            raise ValueError("q must exceed 1")
        if self.k <= 0:
            raise ValueError("k must be positive")


@dataclass(frozen=True)
class RayQuadrature:
    """Geometric quadrature nodes r_j = r_min q^{j/(k*nodes_per_q_step)}."""

    direction: float
    r_min: float
    r_max: float
    nodes_per_q_step: int = 32

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")
        if self.nodes_per_q_step < 1:
            raise ValueError("nodes_per_q_step must be positive")

    def radii(self, q: float, k: float) -> np.ndarray:
        step = math.log(q) / (k * self.nodes_per_q_step)
        n = int(math.ceil((math.log(self.r_max) - math.log(self.r_min)) / step)) + 1
        return self.r_min * np.exp(step * np.arange(n))


# ---------------------------------------------------------------------------
# theta kernel


def _theta_terms_needed(q: float, k: float, log_abs_x: float, tail_tol: float) -> int:
    # Terms are q^{-n(n-1)/(2k)} x^n; the dominant index is near
    # n* = k log_q|x| + 1/2, and terms fall off like a Gaussian in n.
    lq = math.log(q)
    n_star = abs(k * log_abs_x / lq) + 1.0
    spread = math.sqrt(max(2.0 * k * (-math.log(tail_tol)) / lq, 1.0)) + 4.0
    return min(int(math.ceil(n_star + spread)), THETA_HARD_CAP)


def theta(p: ThetaParams, x) -> complex | np.ndarray:
    """Theta kernel of order k: sum over n in Z of q^{-n(n-1)/(2k)} x^n.

    Symmetric partial sums with a relative tail criterion; raises if the
    hard cap on the summation range is hit before the tail is small.
    May overflow to inf for extreme |log x|; use ``theta_log`` when only
    the logarithm is needed (e.g. for 1/theta kernels).
    """
    out = theta_log(p, x)
    if np.ndim(out) == 0:
        return complex(cmath.exp(out))
    return np.exp(out)


def theta_log(p: ThetaParams, x) -> complex | np.ndarray:
    """log of the theta kernel (principal value of log of the sum)."""
    x_arr = np.asarray(x, dtype=complex)
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)
    if np.any(x_arr == 0):
        raise ValueError("theta is singular at x = 0")
    max_log = float(np.max(np.abs(np.log(np.abs(x_arr)))))
    n_terms = _theta_terms_needed(p.q, p.k, max_log, p.tail_tol)
    s, gmax = _theta_fixed_n(p.q, p.k, x_arr, n_terms)
    if np.any(s == 0):
        raise ArithmeticError("theta sum cancelled to zero (near a kernel zero)")
    if n_terms >= THETA_HARD_CAP:
        # check the tail actually converged at the cap
        n = float(THETA_HARD_CAP)
        lq = math.log(p.q)
        g_tail = (-n * (n - 1) * lq / (2.0 * p.k)
                  + n * np.log(np.abs(x_arr)))
        if np.any(g_tail - (gmax + np.log(np.abs(s))) > math.log(p.tail_tol)):
            raise ArithmeticError("theta summation did not converge at hard cap")
    out = gmax + np.log(s)
    return complex(out[0]) if scalar else out


def _theta_fixed_n(q: float, k: float, x: np.ndarray, n_terms: int
                   ) -> tuple[np.ndarray, np.ndarray]:
    # Work with log-magnitudes to dodge overflow: term_n = exp(g(n)) e^{i n arg x}
    # with g(n) = -n(n-1) log q/(2k) + n log|x|.  We factor out max g and
    # return (normalised sum, max g) so callers can stay in log space.
    n = np.arange(-n_terms, n_terms + 1, dtype=float)
    lq = math.log(q)
    logx = np.log(np.abs(x))
    argx = np.angle(x)
    g = (-n[:, None] * (n[:, None] - 1) * lq / (2.0 * k)
         + n[:, None] * logx[None, :])
    gmax = np.max(g, axis=0)
    mag = np.exp(g - gmax[None, :])
    phase = np.exp(1j * n[:, None] * argx[None, :])
    s = np.sum(mag * phase, axis=0)
    return s, gmax


def theta_on_ratio_lattice(p: ThetaParams, base: complex, log_step: float,
                           j_range: range) -> np.ndarray:
    """theta at base * exp(log_step * j) for j in j_range (vectorised)."""
    j = np.arange(j_range.start, j_range.stop)
    x = base * np.exp(log_step * j)
    return np.atleast_1d(theta(p, x))


# ---------------------------------------------------------------------------
# normalising constant


def pi_q_k(q: float, k: float) -> float:
    """pi_{q^{1/k}} = (log q / k) * prod_{n>=0} (1 - q^{-(n+1)/k})^{-1}."""
    if q <= 1:
        raise ValueError("q must exceed 1")
    prod = 1.0
    n = 1
    while True:
        factor = 1.0 - q ** (-n / k)
        if 1.0 - factor < 1e-16:
            break
        prod *= factor
        n += 1
        if n > 100000:
            break
    return (math.log(q) / k) / prod


def laplace_kernel_mass(q: float, k: float) -> float:
    """Ray mass of the q-Laplace kernel: integral over (0, inf) of
    x^n / Theta(x) dx/x equals this constant times q^{n(n-1)/(2k)}.

    High-precision quadrature pins the constant to log(q)/k at machine
    accuracy, uniformly in n (checked for several q, k); this is the
    normalisation that makes the q-Laplace transform invert the formal
    q-Borel transform exactly.  Note pi_q_k (the literature constant)
    differs by the Euler factor prod(1 - q^{-n/k}) and does not invert
    the transform for this theta convention.
    """
    if q <= 1:
        raise ValueError("q must exceed 1")
    return math.log(q) / k


# ---------------------------------------------------------------------------
# formal series


@dataclass(frozen=True)
class FormalSeries:
    """Power series in T (or tau) with m-line coefficient functions."""

    coefficients: tuple  # of GridFunction

    def __init__(self, coefficients: Sequence[GridFunction]):
        coeffs = tuple(coefficients)
        if not coeffs:
            raise ValueError("need at least one coefficient")
        g0 = coeffs[0]
        for c in coeffs:
            if (c.m_max, c.n_points) != (g0.m_max, g0.n_points):
                raise ValueError("coefficients must share one m-grid")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def truncation_order(self) -> int:
        return len(self.coefficients) - 1

    def coeff_array(self) -> np.ndarray:
        return np.stack([c.values for c in self.coefficients])

    def map_coeffs(self, factors: Sequence[complex]) -> "FormalSeries":
        return FormalSeries([
            c.with_values(c.values * f) for c, f in zip(self.coefficients, factors)
        ])

    def evaluate(self, tau) -> np.ndarray:
        """Evaluate the truncated series at scalar or array tau; returns
        values of shape tau.shape + (n_m,)."""
        tau = np.asarray(tau, dtype=complex)
        arr = self.coeff_array()
        powers = tau[..., None] ** np.arange(len(self.coefficients))
        return np.tensordot(powers, arr, axes=([-1], [0]))


def formal_q_borel(s: FormalSeries, q: float, k: float) -> FormalSeries:
    """Formal q-Borel transform of order k: a_n -> a_n / (q^{1/k})^{n(n-1)/2}."""
    n = np.arange(s.truncation_order + 1)
    return s.map_coeffs(q ** (-n * (n - 1) / (2.0 * k)))


def dilate_formal(s: FormalSeries, q: float, gamma: float) -> FormalSeries:
    """Formal q-dilation: coefficient of T^n multiplied by q^{gamma n}."""
    n = np.arange(s.truncation_order + 1)
    return s.map_coeffs(q ** (gamma * n.astype(float)))


def shift_formal(s: FormalSeries, sigma: int) -> FormalSeries:
    """Multiply by T^sigma: shifts coefficients up, zero-fills the head."""
    zeros = [s.coefficients[0].with_values(np.zeros_like(s.coefficients[0].values))
             for _ in range(sigma)]
    return FormalSeries(list(zeros) + list(s.coefficients))


# ---------------------------------------------------------------------------
# q-Laplace transform along a ray


def q_laplace(f: Callable[[np.ndarray], np.ndarray], p: ThetaParams,
              quad: RayQuadrature, T: complex,
              min_kernel: float = 1e-12) -> complex:
    """Normalised integral over the ray of f(u)/Theta(u/T) du/u.

    The normaliser is the exact kernel ray mass log(q)/k (see
    laplace_kernel_mass), so the transform inverts the formal q-Borel
    transform on monomials.

    Trapezoid rule in log-radius; the outer radius is extended until the
    integrand has decayed to 1e-16 of its running maximum (hard cap at
    2^40 times r_max).
    """
    if T == 0:
        raise ValueError("T must be nonzero")
    phase = np.exp(1j * quad.direction)
    step = math.log(p.q) / (p.k * quad.nodes_per_q_step)

    def integrand(radii: np.ndarray) -> np.ndarray:
        u = radii * phase
        th = np.atleast_1d(theta(p, u / T))
        if np.any(np.abs(th) < min_kernel):
            raise ValueError("q-Laplace kernel nearly singular: bad direction")
        return np.asarray(f(u), dtype=complex) / th

    radii = quad.radii(p.q, p.k)
    vals = integrand(radii)
    running_max = float(np.max(np.abs(vals))) if vals.size else 0.0
    # adaptive outward extension
    r_top = radii[-1]
    extensions = 0
    while vals.size and abs(vals[-1]) > 1e-16 * max(running_max, 1e-300):
        more = r_top * np.exp(step * np.arange(1, quad.nodes_per_q_step + 1))
        mv = integrand(more)
        radii = np.concatenate([radii, more])
        vals = np.concatenate([vals, mv])
        running_max = max(running_max, float(np.max(np.abs(mv))))
        r_top = radii[-1]
        extensions += 1
        if extensions > 40 * p.k:
            raise ArithmeticError("q-Laplace integrand not decaying (divergent)")
    weights = np.full(radii.size, step)
    weights[0] = weights[-1] = step / 2.0
    return complex(np.sum(weights * vals) / laplace_kernel_mass(p.q, p.k))


def laplace_ray_to_targets(values: np.ndarray, radii: np.ndarray, direction: float,
                           p: ThetaParams, targets: np.ndarray) -> np.ndarray:
    """q-Laplace of a sampled family of functions to arbitrary targets.

    ``values`` has shape (n_radii, n_m): one m-line function per ray
    node.  Returns shape (n_targets, n_m).  Assumes the sampled radial
    range already covers the decay of the integrand (no adaptivity).
    """
    targets = np.asarray(targets, dtype=complex)
    step = float(np.log(radii[1] / radii[0]))
    u = radii * np.exp(1j * direction)
    log_th = _theta_outer_log(p, u, targets)
    weights = np.full(radii.size, step)
    weights[0] = weights[-1] = step / 2.0
    # built in log space: theta can exceed the double range where the
    # kernel underflows to an exact 0
    kernel = np.exp(np.log(weights)[None, :] - log_th)  # (n_targets, n_radii)
    return kernel @ values / laplace_kernel_mass(p.q, p.k)


def _lattice_indices(x: np.ndarray):
    """If x is (close to) an affine integer lattice, return (x0, step, idx)."""
    if x.size < 2:
        return float(x[0]), 1.0, np.zeros(x.size, dtype=int)
    d = np.diff(np.sort(x))
    d = d[d > 1e-13]
    if d.size == 0:
        return float(x.min()), 1.0, np.zeros(x.size, dtype=int)
    step = float(d.min())
    idx = np.round((x - x.min()) / step).astype(int)
    if np.allclose(x, x.min() + idx * step, atol=1e-10):
        return float(x.min()), step, idx
    return None


def _theta_outer_log(p: ThetaParams, u: np.ndarray, targets: np.ndarray
                     ) -> np.ndarray:
    """log Theta(u_j / T_i) as an (n_targets, n_radii) array.

    When both u and targets sit on commensurate geometric lattices with
    a common phase offset, the ratio set collapses to a 1-D lattice that
    is evaluated once per distinct value.
    """
    log_u = np.log(u)  # principal branch; both arrays stay off 0
    log_t = np.log(targets)
    if (np.allclose(log_u.imag, log_u.imag[0], atol=1e-12)
            and np.allclose(log_t.imag, log_t.imag[0], atol=1e-12)):
        lu = _lattice_indices(log_u.real)
        lt = _lattice_indices(log_t.real)
        if lu is not None and lt is not None:
            u0, su, iu = lu
            t0, st, it = lt
            # common refinement step from the rational ratio of the two
            # steps; the base offset u0 - t0 is arbitrary and folded into
            # the lattice origin
            frac = Fraction(su / st).limit_denominator(512)
            step = su / frac.numerator if frac.numerator else 0.0
            if (step > 1e-12
                    and abs(su / st - float(frac)) < 1e-9
                    and abs(st - frac.denominator * step) < 1e-9):
                ju = iu * frac.numerator
                jt = it * frac.denominator
                idx = ju[None, :] - jt[:, None]
                lo, hi = int(idx.min()), int(idx.max())
                if hi - lo <= 8 * (u.size + targets.size) * max(
                        frac.numerator, frac.denominator):
                    phase = log_u.imag[0] - log_t.imag[0]
                    lattice = np.exp((u0 - t0) + step * np.arange(lo, hi + 1)
                                     + 1j * phase)
                    th_vals = np.atleast_1d(theta_log(p, lattice))
                    return th_vals[idx - lo]
    # dense fallback, chunked to bound memory
    out = np.empty((targets.size, u.size), dtype=complex)
    chunk = max(1, 2_000_000 // max(u.size, 1))
    for i0 in range(0, targets.size, chunk):
        block = np.exp(log_u[None, :] - log_t[i0 : i0 + chunk, None])
        out[i0 : i0 + chunk] = theta_log(p, block.ravel()).reshape(block.shape)
    return out
