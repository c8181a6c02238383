"""Function space on the Fourier m-line.

Functions of a real variable m live on a uniform symmetric grid and are
measured in an exponentially weighted sup norm: the weight
``(1+|m|)^mu * exp(beta*|m|)`` controls the strip of analyticity of the
inverse Fourier transform.  This module provides the weighted norms,
polynomial-weighted convolution, the inverse Fourier transform back to
the z variable, and the weighted q-exponential sup norms used for the
Borel-plane fixed points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

SQRT2PI = float(np.sqrt(2.0 * np.pi))


# ---------------------------------------------------------------------------
# grid


@lru_cache(maxsize=32)
def _grid_points(m_max: float, n_points: int) -> np.ndarray:
    pts = np.linspace(-m_max, m_max, n_points)
    pts.flags.writeable = False
    return pts


@lru_cache(maxsize=32)
def _trapezoid_weights(m_max: float, n_points: int) -> np.ndarray:
    h = 2.0 * m_max / (n_points - 1)
    w = np.full(n_points, h)
    w[0] = w[-1] = h / 2.0
    w.flags.writeable = False
    return w


def grid_points(m_max: float, n_points: int) -> np.ndarray:
    """Uniform symmetric grid on [-m_max, m_max] with an odd point count."""
    if n_points % 2 == 0 or n_points < 3:
        raise ValueError("n_points must be odd and >= 3")
    if m_max <= 0:
        raise ValueError("m_max must be positive")
    return _grid_points(float(m_max), int(n_points))


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class Polynomial:
    """Polynomial with complex coefficients in ascending degree order."""

    coefficients: tuple

    def __init__(self, coefficients: Sequence[complex]):
        coeffs = [complex(c) for c in coefficients]
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @property
    def degree(self) -> int:
        if self.coefficients == (0j,):
            return 0
        return len(self.coefficients) - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        out = np.zeros_like(x)
        for c in reversed(self.coefficients):
            out = out * x + c
        return out if out.ndim else complex(out)

    def eval_im(self, m):
        """Evaluate at the purely imaginary point i*m for real m."""
        return self(1j * np.asarray(m, dtype=float))


@dataclass(frozen=True)
class NormParams:
    """Parameters of the weighted q-exponential sup norms.

    ``tilt`` is the power-law tilt of the tau weight (alpha for the
    shifted space, nu for the plain one); ``rho`` and ``shift`` only
    matter for the shifted space.
    """

    k: float
    beta: float
    mu: float
    tilt: float = 0.0
    rho: float = 1.0
    shift: float = 1.0

    def __post_init__(self):
        if self.k <= 0 or self.beta <= 0:
            raise ValueError("k and beta must be positive")


@dataclass(frozen=True)
class GridFunction:
    """Sampled function of m on a uniform symmetric grid with decay budget."""

    m_max: float
    n_points: int
    values: np.ndarray
    decay: tuple  # (beta, mu)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.n_points,):
            raise ValueError("values length must equal n_points")
        grid_points(self.m_max, self.n_points)  # validates grid shape
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def grid(self) -> np.ndarray:
        return grid_points(self.m_max, self.n_points)

    @property
    def h(self) -> float:
        return 2.0 * self.m_max / (self.n_points - 1)

    @property
    def tail_flag(self) -> bool:
        """True when the edge values exceed 10x the decay-weight budget."""
        beta, mu = self.decay
        norm = e_norm(self)
        if norm == 0.0:
            return False
        budget = 10.0 * np.exp(-beta * self.m_max) * (1.0 + self.m_max) ** (-mu) * norm
        edge = max(abs(self.values[0]), abs(self.values[-1]))
        return bool(edge > budget)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.m_max, self.n_points, values, self.decay)


def gridfn_from_callable(fn, m_max: float, n_points: int, decay=(1.0, 3.0)) -> GridFunction:
    m = grid_points(m_max, n_points)
    return GridFunction(m_max, n_points, np.asarray(fn(m), dtype=complex), decay)


# ---------------------------------------------------------------------------
# norms


def e_weight(m: np.ndarray, beta: float, mu: float) -> np.ndarray:
    return (1.0 + np.abs(m)) ** mu * np.exp(beta * np.abs(m))


def e_norm(h: GridFunction) -> float:
    """Weighted sup norm max (1+|m|)^mu e^{beta|m|} |h(m)| over the grid."""
    beta, mu = h.decay
    return float(np.max(e_weight(h.grid, beta, mu) * np.abs(h.values)))


def _exp_weight(tau_abs: np.ndarray, k: float, q: float, tilt: float) -> np.ndarray:
    lg = np.log(tau_abs)
    return np.exp(-k * lg * lg / (2.0 * np.log(q)) - tilt * lg)


def exp_norm(w, p: NormParams, q: float, space: str = "plain") -> float:
    """Weighted sup norm over (tau, m) nodes of a tau-family.

    ``space='shifted'`` uses the weight exp(-k log^2|tau+shift|/(2 log q)
    - tilt log|tau+shift|); ``space='plain'`` uses |tau| in place of
    |tau+shift|.  Both are multiplied by the m-line weight
    (1+|m|)^mu e^{beta|m|}.

    ``w`` is duck-typed: needs ``.tau`` (complex nodes), ``.values``
    (array of shape (n_tau, n_m)) and ``.grid`` (the m nodes).
    """
    tau = np.asarray(w.tau, dtype=complex)
    vals = np.asarray(w.values)
    if space == "shifted":
        tau_abs = np.abs(tau + p.shift)
    elif space == "plain":
        tau_abs = np.abs(tau)
    else:
        raise ValueError("space must be 'shifted' or 'plain'")
    wt_tau = _exp_weight(tau_abs, p.k, q, p.tilt)
    wt_m = e_weight(np.asarray(w.grid), p.beta, p.mu)
    weighted = np.abs(vals) * wt_tau[:, None] * wt_m[None, :]
    return float(np.max(weighted))


# ---------------------------------------------------------------------------
# convolution


def _conv_fft(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Linear convolution of equally long sequences, middle slice.

    Returns c[i] = sum_j a[i-j+c0] b[j] aligned so that index i matches
    the grid point m_i, with out-of-range reads of ``a`` as zero.
    """
    n = a.shape[-1]
    size = 1 << int(np.ceil(np.log2(2 * n)))
    fa = np.fft.fft(a, size, axis=-1)
    fb = np.fft.fft(b, size, axis=-1)
    full = np.fft.ifft(fa * fb, axis=-1)
    half = (n - 1) // 2
    return full[..., half : half + n]


def convolve_Q(h1: GridFunction, h2: GridFunction, Qpoly: Polynomial) -> GridFunction:
    """Discrete h1 *^Q h2 = trapezoid of h1(m-m1) Q(i m1) h2(m1) dm1."""
    if (h1.m_max, h1.n_points) != (h2.m_max, h2.n_points):
        raise ValueError("mismatched grids")
    wts = _trapezoid_weights(h1.m_max, h1.n_points)
    g = wts * Qpoly.eval_im(h2.grid) * h2.values
    out = _conv_fft(h1.values, g)
    return h1.with_values(out)


def convolution_rows(h1_values: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Row-wise linear convolution used by the Borel-plane solvers.

    ``h1_values`` has shape (n_m,) and ``g`` shape (n_rows, n_m); the
    kernel h1 is convolved against each row of ``g``.
    """
    return _conv_fft(h1_values[None, :], g)


# ---------------------------------------------------------------------------
# inverse Fourier transform


def inverse_fourier(h: GridFunction, z_points: Sequence[complex]) -> np.ndarray:
    """(1/sqrt(2 pi)) integral h(m) e^{izm} dm by trapezoid rule.

    Each z must satisfy |Im z| < beta so the weighted tail controls the
    truncation error.
    """
    beta, _mu = h.decay
    z = np.asarray(z_points, dtype=complex)
    if np.any(np.abs(z.imag) >= beta):
        raise ValueError("z outside the strip |Im z| < beta")
    wts = _trapezoid_weights(h.m_max, h.n_points)
    phase = np.exp(1j * np.outer(z, h.grid))
    return phase @ (wts * h.values) / SQRT2PI


def inverse_fourier_rows(values: np.ndarray, m_max: float, n_points: int,
                         z_points: Sequence[complex]) -> np.ndarray:
    """Inverse Fourier of each row of ``values``; returns (n_rows, n_z)."""
    wts = _trapezoid_weights(float(m_max), int(n_points))
    m = grid_points(float(m_max), int(n_points))
    z = np.asarray(z_points, dtype=complex)
    phase = np.exp(1j * np.outer(m, z))
    return (values * wts[None, :]) @ phase / SQRT2PI
