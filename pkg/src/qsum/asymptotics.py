"""Verification lab for the parameter asymptotics of the sectorial solutions.

Three empirical questions are answered here:

1. How flat are the differences of consecutive sectorial solutions as the
   perturbation parameter eps shrinks?  ``cocycle`` collects the sup
   differences, ``fit_flatness_order`` fits the q-exponential model
   K |eps|^M exp(-k log^2|eps| / (2 log q)) and reports the order k.
2. Do all sectors share one power-series expansion in eps?
   ``estimate_expansion`` fits the series per sector by weighted least
   squares and reports the cross-sector spread; ``check_q_gevrey_bound``
   tests the q-Gevrey remainder normalization.
3. Do the fitted coefficients satisfy the coefficient recursion obtained
   by differentiating the main equation at eps = 0?
   ``verify_formal_recursion`` evaluates both sides on the t lattice.

``verify_two_level_split`` classifies every sector pair by its fitted
flatness order (nearest of the two levels k1, k2) and returns the
resulting partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .mspace import SQRT2PI, _trapezoid_weights, convolution_rows, \
    inverse_fourier_rows
from .solver import ProblemSpec, SectorialSolution


# ---------------------------------------------------------------------------
# cocycle samples and flatness fits


@dataclass(frozen=True)
class CocycleSample:
    """Sup-norm differences of two neighbouring sectorial solutions."""

    pair_index: int
    eps_values: np.ndarray     # complex samples in the overlap
    diff_norms: np.ndarray     # sup over the shared (t, z) grid, per eps
    scale_norms: np.ndarray    # sup of |u| itself, per eps (for context)

    def __post_init__(self):
        if np.any(self.diff_norms < 0):
            raise ValueError("negative sup norm")
        if len(self.eps_values) != len(self.diff_norms):
            raise ValueError("length mismatch")


def _common_rows(a: SectorialSolution, b: SectorialSolution) -> int:
    n = min(len(a.t_lattice), len(b.t_lattice))
    if n == 0 or not np.allclose(a.t_lattice[:n], b.t_lattice[:n]):
        raise ValueError("t lattices do not share a common head")
    if a.z_points.shape != b.z_points.shape or \
            not np.allclose(a.z_points, b.z_points):
        raise ValueError("z grids differ")
    return n


def cocycle(u_p: Sequence[SectorialSolution],
            u_p1: Sequence[SectorialSolution],
            pair_index: int) -> CocycleSample:
    """Pointwise sup differences |u_{p+1} - u_p| per shared eps sample."""
    if len(u_p) != len(u_p1):
        raise ValueError("sample counts differ")
    eps, diffs, scales = [], [], []
    for a, b in zip(u_p, u_p1):
        if a.eps != b.eps:
            raise ValueError("eps samples differ between the two sectors")
        n = _common_rows(a, b)
        eps.append(a.eps)
        diffs.append(float(np.max(np.abs(b.u_values[:n] - a.u_values[:n]))))
        scales.append(float(np.max(np.abs(a.u_values[:n]))))
    return CocycleSample(pair_index=pair_index,
                         eps_values=np.asarray(eps, dtype=complex),
                         diff_norms=np.asarray(diffs, dtype=float),
                         scale_norms=np.asarray(scales, dtype=float))


def fit_flatness_order(c: CocycleSample, q: float,
                       floor: float = 0.0) -> dict:
    """Least-squares fit of log(diff) against {1, log|eps|, log^2|eps|}.

    The model is diff = K |eps|^M exp(-k log^2|eps| / (2 log q)); the
    flatness order is k_hat = -2 log(q) * (coefficient of log^2|eps|).
    Samples with diff <= floor are excluded (they sit on the numerical
    noise floor and carry no information about the decay rate).  All
    diffs zero (or below the floor) reports k_hat = +inf.
    """
    x = np.log(np.abs(c.eps_values))
    y = np.asarray(c.diff_norms, dtype=float)
    keep = y > max(floor, 0.0)
    if not np.any(keep):
        return {"k_hat": math.inf, "M_hat": 0.0, "K_hat": 0.0,
                "r2": 1.0, "n_used": 0}
    x, y = x[keep], np.log(y[keep])
    if x.size < 3:
        raise ValueError("need at least 3 usable samples to fit 3 parameters")
    A = np.stack([np.ones_like(x), x, x * x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"k_hat": float(-2.0 * math.log(q) * coef[2]),
            "M_hat": float(coef[1]),
            "K_hat": float(math.exp(coef[0])),
            "r2": r2, "n_used": int(x.size)}


def flatness_envelope(fit: Mapping[str, float], q: float,
                      eps_abs: float) -> float:
    """Fitted bound K |eps|^M exp(-k log^2|eps| / (2 log q))."""
    le = math.log(eps_abs)
    return fit["K_hat"] * eps_abs ** fit["M_hat"] \
        * math.exp(-fit["k_hat"] * le * le / (2.0 * math.log(q)))


def verify_two_level_split(cocycles: Sequence[CocycleSample], q: float,
                           k1: float, k2: float,
                           floor: float = 0.0) -> dict:
    """Partition sector pairs by the nearest fitted flatness order.

    Returns I1 (pairs at the slow level k1), I2 (pairs at the fast level
    k2), the per-pair fits, relative classification margins, and flags
    for ambiguous (margin < 10%) or uninformative (all-zero) pairs.
    """
    I1, I2, fits, margins, flags = [], [], {}, {}, []
    for c in cocycles:
        f = fit_flatness_order(c, q, floor=floor)
        fits[c.pair_index] = f
        k = f["k_hat"]
        if not math.isfinite(k):
            flags.append((c.pair_index, "all differences at the noise floor"))
            continue
        d1, d2 = abs(k - k1) / k1, abs(k - k2) / k2
        margin = abs(d1 - d2)
        margins[c.pair_index] = margin
        if margin < 0.10:
            flags.append((c.pair_index, "ambiguous fit (margin < 10%)"))
        (I1 if d1 <= d2 else I2).append(c.pair_index)
    return {"I1": sorted(I1), "I2": sorted(I2), "fits": fits,
            "margins": margins, "flags": flags,
            "both_nonempty": bool(I1) and bool(I2)}


# ---------------------------------------------------------------------------
# expansion in the perturbation parameter


@dataclass(frozen=True)
class ExpansionEstimate:
    """Fitted coefficients of u = sum_m h_m(t,z) eps^m / m!.

    ``h`` stacks the z-side coefficients, shape (M+1, n_t, n_z);
    ``H`` the Fourier-side ones, shape (M+1, n_t, n_m).  Both are the
    cross-sector averages; per-sector stacks and deviations are kept for
    diagnostics.
    """

    orders: int
    t_lattice: np.ndarray
    z_points: np.ndarray
    h: np.ndarray
    H: np.ndarray
    per_sector_h: Dict[int, np.ndarray]
    per_sector_H: Dict[int, np.ndarray]
    fit_residuals: Dict[int, float]     # sup |data - fit| at the smallest eps
    cross_sector_dev: np.ndarray        # per order, sup over (t,z) of spread
    cond: float
    m_max: float
    n_points: int


def _fit_series(eps: np.ndarray, stack: np.ndarray, M: int,
                weight_power: Optional[float] = None
                ) -> tuple[np.ndarray, float, float]:
    """Weighted LS fit of stack[i] ~ sum_n c_n eps_i^n; returns (m! c_n).

    The row weight |eps|^(-weight_power) concentrates the fit on the
    smallest sampled moduli.  The default power M keeps the weighted
    Vandermonde system well conditioned; steeper weights (2M matches
    the remainder shape exactly) push the condition number toward the
    rejection threshold and degrade the higher-order coefficients.
    """
    A = np.vander(eps, M + 1, increasing=True)       # (n_eps, M+1)
    wp = float(M) if weight_power is None else float(weight_power)
    w = np.abs(eps) ** (-wp)                         # emphasize small eps
    w = w / np.max(w)
    Aw = A * w[:, None]
    col = np.linalg.norm(Aw, axis=0)                 # equilibrate columns
    Aw = Aw / col[None, :]
    cond = float(np.linalg.cond(Aw))
    if cond > 1e12:
        raise ValueError(f"ill-conditioned expansion fit (cond={cond:.2e}); "
                         "reduce the order M")
    y = stack.reshape(len(eps), -1) * w[:, None]
    coef, *_ = np.linalg.lstsq(Aw, y, rcond=None)
    coef = coef / col[:, None]
    coef = coef.reshape((M + 1,) + stack.shape[1:])
    i0 = int(np.argmin(np.abs(eps)))
    fit0 = np.tensordot(A[i0], coef, axes=1)
    resid = float(np.max(np.abs(stack[i0] - fit0)))
    fact = np.array([math.factorial(n) for n in range(M + 1)], dtype=float)
    return coef * fact.reshape((M + 1,) + (1,) * (stack.ndim - 1)), resid, cond


def estimate_expansion(solutions: Mapping[int, Sequence[SectorialSolution]],
                       M: int, field: str = "u",
                       weight_power: Optional[float] = None
                       ) -> ExpansionEstimate:
    """Fit the degree-M eps-series of u (field="u") or f (field="f").

    ``solutions[p]`` holds one sector's solutions over >= M+3 eps moduli
    (common t/z grids).  Fits are done per sector by weighted least
    squares emphasizing small |eps|, then averaged across sectors.
    """
    zk, mk = (("u_values", "U_values") if field == "u"
              else ("f_values", "F_values"))
    per_h, per_H, resids, conds = {}, {}, {}, []
    ref = None
    for p, sols in solutions.items():
        if len(sols) < M + 3:
            raise ValueError(f"sector {p}: need >= M+3 = {M+3} eps samples")
        n = min(len(s.t_lattice) for s in sols)
        if ref is None:
            ref = (sols[0].t_lattice[:n], sols[0].z_points)
        eps = np.array([s.eps for s in sols], dtype=complex)
        zs = np.stack([getattr(s, zk)[:n] for s in sols])
        ms = np.stack([getattr(s, mk)[:n] for s in sols])
        per_h[p], r, c = _fit_series(eps, zs, M, weight_power)
        per_H[p], _, _ = _fit_series(eps, ms, M, weight_power)
        resids[p] = r
        conds.append(c)
    n_t = min(h.shape[1] for h in per_h.values())
    hs = np.stack([h[:, :n_t] for h in per_h.values()])
    Hs = np.stack([H[:, :n_t] for H in per_H.values()])
    h_mean, H_mean = np.mean(hs, axis=0), np.mean(Hs, axis=0)
    dev = np.max(np.abs(hs - h_mean[None]), axis=(0, 2, 3))
    s0 = next(iter(solutions.values()))[0]
    return ExpansionEstimate(orders=M, t_lattice=ref[0][:n_t],
                             z_points=ref[1], h=h_mean, H=H_mean,
                             per_sector_h=per_h, per_sector_H=per_H,
                             fit_residuals=resids, cross_sector_dev=dev,
                             cond=float(max(conds)), m_max=s0.m_max,
                             n_points=s0.n_points)


def check_q_gevrey_bound(samples: Sequence[tuple[complex, np.ndarray]],
                         est: ExpansionEstimate, k: float, q: float) -> dict:
    """q-Gevrey remainder proxy for order 1/k.

    eta_N = sup over sampled eps of
        |f - sum_{n<=N} h_n eps^n/n!| / (q^{N(N+1)/(2k)} |eps|^{N+1});
    the sequence is declared bounded when max_N eta_N^{1/(N+1)} stays
    within a factor 3 of its median (a geometric proxy for the existence
    of constants C, A with eta_N <= C A^{N+1}).

    The samples are normalized to unit sup magnitude first: the q-Gevrey
    property is invariant under rescaling f (the constant C absorbs the
    scale) but the root sequence eta_N^{1/(N+1)} is not, so without the
    normalization the N = 0 root just reports the raw solution scale.
    """
    M = est.orders
    fact = np.array([math.factorial(n) for n in range(M + 1)], dtype=float)
    eta = np.zeros(M + 1)
    n_t = est.h.shape[1]
    scale = max((float(np.max(np.abs(vals[:n_t]))) for _, vals in samples),
                default=0.0)
    scale = scale if scale > 0 else 1.0
    for N in range(M + 1):
        sup = 0.0
        for eps, vals in samples:
            powers = np.array([eps ** n / fact[n] for n in range(N + 1)])
            partial = np.tensordot(powers, est.h[:N + 1], axes=1)
            rem = np.max(np.abs(vals[:n_t] - partial))
            denom = q ** (N * (N + 1) / (2.0 * k)) * abs(eps) ** (N + 1)
            sup = max(sup, float(rem) / denom)
        eta[N] = sup / scale
    roots = eta ** (1.0 / (np.arange(M + 1) + 1.0))
    positive = roots[roots > 0]
    med = float(np.median(positive)) if positive.size else 0.0
    bounded = bool(positive.size == 0 or np.max(roots) <= 3.0 * med)
    return {"eta_sequence": eta, "roots": roots, "median_root": med,
            "bounded": bounded}


# ---------------------------------------------------------------------------
# coefficient recursion at eps = 0


def _shift_rows(stack: np.ndarray, gamma: float) -> tuple[np.ndarray,
                                                          np.ndarray]:
    """Row lookup for sigma_q^gamma on the lattice t_j = t_max q^{-j/2}."""
    s = 2.0 * gamma
    si = int(round(s))
    if abs(s - si) > 1e-9:
        raise ValueError("t-lattice incompatible dilation exponent")
    j = np.arange(stack.shape[0])
    src = j - si
    valid = (src >= 0) & (src < stack.shape[0])
    return src, valid


def verify_formal_recursion(est: ExpansionEstimate, spec: ProblemSpec,
                            forcing_est: ExpansionEstimate) -> dict:
    """Residual of the eps = 0 coefficient recursion on the t lattice.

    For every fitted order m (terms vanish below their eps-power
    thresholds, so low orders exercise the recursion head) both sides of

      Q(dz) sigma_q h_m = m!/(m-d_D)! t^{d_D} sigma_q^{d_D/k2+1} R_D h_{m-d_D}
        + sum_l sum_{m2+m3=m-Delta} m!/(m2! m3!) t^d (d^{m2}c)(z,0)
              R_l(dz) sigma_q^{delta} h_{m3}
        + sigma_q f_m

    are evaluated on the Fourier side (z-derivatives are multipliers,
    products are m-convolutions), inverse-transformed at the z samples,
    and compared in relative sup norm over interior lattice rows.
    """
    thresholds = [spec.d_D] + [trm.Delta for _, trm in spec.all_terms()]
    m_min = max(thresholds)
    if est.orders < m_min:
        raise ValueError(f"need fitted orders up to at least {m_min}")
    q = spec.q
    t = est.t_lattice
    n_t = t.size
    mg = spec.grid
    wts = _trapezoid_weights(spec.m_max, spec.n_points)
    worst = 0.0
    per_order = {}
    for mo in range(0, est.orders + 1):
        src1, v1 = _shift_rows(est.H[mo], 1.0)
        lhs = np.full_like(est.H[mo], np.nan)
        lhs[v1] = spec.Q_im()[None, :] * est.H[mo][src1[v1]]
        valid = v1.copy()
        rhs = np.zeros_like(lhs)
        # linear main term (absent below the eps power d_D)
        if mo >= spec.d_D:
            srcD, vD = _shift_rows(est.H[mo], spec.d_D / spec.k2 + 1.0)
            valid &= vD
            cD = math.factorial(mo) / math.factorial(mo - spec.d_D)
            rhs[vD] += cD * (t[vD] ** spec.d_D)[:, None] \
                * spec.RD_im()[None, :] * est.H[mo - spec.d_D][srcD[vD]]
        # lower-level convolution terms
        for delta, term in spec.all_terms():
            if mo < term.Delta:
                continue
            srcL, vL = _shift_rows(est.H[mo], float(delta))
            valid &= vL
            for m2 in range(mo - term.Delta + 1):
                m3 = mo - term.Delta - m2
                fac = term.C.eps_taylor_factor(m2)
                if fac == 0:
                    continue
                comb = math.factorial(mo) / (math.factorial(m2)
                                             * math.factorial(m3))
                g = (wts * term.R.eval_im(mg))[None, :] * est.H[m3][srcL[vL]]
                conv = convolution_rows(fac * term.C.m_profile(mg), g)
                rhs[vL] += comb * (t[vL] ** term.d)[:, None] * conv / SQRT2PI
        # forcing
        rhs[v1] += forcing_est.H[mo][src1[v1]]
        rows = valid & ~np.isnan(lhs[:, 0])
        lz = inverse_fourier_rows(lhs[rows], est.m_max, est.n_points,
                                  est.z_points)
        rz = inverse_fourier_rows(rhs[rows], est.m_max, est.n_points,
                                  est.z_points)
        scale = max(float(np.max(np.abs(lz))), float(np.max(np.abs(rz))),
                    1e-300)
        r = float(np.max(np.abs(lz - rz))) / scale
        per_order[mo] = r
        worst = max(worst, r)
    return {"max_rel_residual": worst, "per_order": per_order,
            "m_min": m_min}
