"""Built-in example configuration and pipeline orchestration.

The example problem is tuned so that every structural constraint holds
with a numerically measurable margin and, at the same time, the
singularities in the second Borel plane sit close enough to the origin
that the exponentially flat differences between neighbouring sectorial
solutions are resolvable in double precision:

* the roots of P_m lie on the rays {45, 165, 285} degrees with minimum
  modulus ~0.36, so three of the four sector pairs see a level-k2 flat
  difference;
* the forcing has a simple pole on the 225-degree ray at radius 0.45,
  giving the remaining pair a level-k1 flat difference (k1 < k2
  dominates when both kinds of rays sit in a deformation wedge).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .geometry import (GoodCovering, LaplaceDomain, Sector, fold_angle)
from .mspace import NormParams, Polynomial, grid_points
from .qkernels import ThetaParams, laplace_ray_to_targets
from .solver import (FixedPointConfig, GaussianCoefficient, Level,
                     ProblemSpec, SectorialSolution, TauFamily, Term,
                     accelerate, assemble_solution, check_acceleration_identity,
                     check_root_bounds, composed_residual, dilation_shift,
                     geometric_radii, pde_residual, pm_roots, solve_w_k1,
                     solve_w_k2, t_lattice)


# ---------------------------------------------------------------------------
# forcing models


@dataclass(frozen=True)
class PoleForcing:
    """Forcing whose first Borel transform is a simple pole times a Gaussian.

    psi_k1(tau, m) = amp (1 + eps_linear eps) g(m) pole / (pole - tau)
    with g(m) = exp(-m^2/(2 width^2)).  The T-side coefficient series is
    F_n = amp (1 + eps_linear eps) g(m) q^{n(n-1)/(2 k1)} pole^{-n}.
    """

    amp: complex = 1.0
    eps_linear: complex = 0.0
    pole: complex = 0.45j
    width: float = 1.0

    def scale(self, eps: complex) -> complex:
        return self.amp * (1.0 + self.eps_linear * eps)

    def m_profile(self, m: np.ndarray) -> np.ndarray:
        return np.exp(-(m * m) / (2.0 * self.width ** 2)).astype(complex)

    def psi_k1_values(self, tau: np.ndarray, m: np.ndarray, eps: complex
                      ) -> np.ndarray:
        rad = self.pole / (self.pole - tau)
        return self.scale(eps) * rad[:, None] * self.m_profile(m)[None, :]

    def series_coefficients(self, n_terms: int, m: np.ndarray, eps: complex,
                            q: float, k1: float) -> np.ndarray:
        n = np.arange(n_terms)
        fac = self.scale(eps) * q ** (n * (n - 1) / (2.0 * k1)) \
            * self.pole ** (-n.astype(float))
        return fac[:, None] * self.m_profile(m)[None, :]


@dataclass(frozen=True)
class ChainedForcing:
    """Forcing generated by a driver problem of the same shape at level k1.

    The driver's own forcing is a polynomial in T with Gaussian m
    profiles; the main problem's psi_k1 is the driver's Borel fixed
    point, solved on whatever ray/radii the caller supplies.
    """

    spec_bold: ProblemSpec
    coeffs: tuple  # complex amplitudes b_n of bold F_n = b_n g(m)
    width: float = 1.0
    cfg: FixedPointConfig = field(default_factory=FixedPointConfig)

    def m_profile(self, m: np.ndarray) -> np.ndarray:
        return np.exp(-(m * m) / (2.0 * self.width ** 2)).astype(complex)

    def bold_series(self, m: np.ndarray) -> np.ndarray:
        b = np.asarray(self.coeffs, dtype=complex)
        return b[:, None] * self.m_profile(m)[None, :]

    def psi_bold_values(self, tau: np.ndarray, m: np.ndarray, q: float,
                        k1: float) -> np.ndarray:
        """Order-k1 Borel transform of the finite driver forcing."""
        b = np.asarray(self.coeffs, dtype=complex)
        n = np.arange(b.size)
        fac = b / q ** (n * (n - 1) / (2.0 * k1))
        radial = (tau[:, None] ** n[None, :] * fac[None, :]).sum(axis=1)
        return radial[:, None] * self.m_profile(m)[None, :]


@dataclass(frozen=True)
class Scenario:
    """A fully specified desk problem: spec + covering + numeric knobs."""

    spec: ProblemSpec
    covering: GoodCovering
    forcing: Union[PoleForcing, ChainedForcing]
    delta_tilde: float = 0.1
    r_T: float = 0.2
    t_max: float = 0.18
    t_count: int = 13          # lattice t_j = t_max q^{-j/2}
    z_points: tuple = (-0.8, -0.3, 0.0, 0.4, 0.9)
    L: int = 16                # tau grids have ratio q^{1/L}
    w1_log2_range: tuple = (-58.0, 18.0)
    w2_log2_range: tuple = (-56.0, 10.0)
    alpha: float = 5.0         # tilt of the shifted (level-k1) norm
    nu: float = 2.0            # tilt of the plain (level-k2) norm
    rho_roots: float = 0.2     # disc used in the root-distance check
    rho1: float = 0.2          # overlap radius base for the identity check
    norm_shift: float = 1.0
    fp: FixedPointConfig = field(default_factory=lambda: FixedPointConfig(
        ball_radius=1e8, max_iter=300, tol=1e-13))
    eps_mod_count: int = 8     # moduli eps0/2 .. eps0/2^8, ratio 2

    @property
    def directions(self) -> tuple:
        return tuple(s.bisecting_direction for s in self.covering.sectors)

    @property
    def n_sectors(self) -> int:
        return len(self.covering.sectors)

    def domain(self, p: int) -> LaplaceDomain:
        return LaplaceDomain(direction=self.directions[p],
                             margin=self.delta_tilde,
                             radius_bound=self.covering.epsilon0 * self.r_T)

    def t_nodes(self, count: Optional[int] = None) -> np.ndarray:
        return t_lattice(self.t_max, self.spec.q,
                         count if count is not None else self.t_count)

    def eps_moduli(self) -> np.ndarray:
        e0 = self.covering.epsilon0
        return e0 / 2.0 ** np.arange(1, self.eps_mod_count + 1)

    def pair_eps(self, p: int, modulus: float) -> complex:
        """eps in the overlap of sectors p and p+1 (arg = mid-direction)."""
        a = self.directions[p]
        b = self.directions[(p + 1) % self.n_sectors]
        gap = (b - a) % (2.0 * math.pi)
        return modulus * cmath.exp(1j * fold_angle(a + gap / 2.0))

    def norm_k1(self) -> NormParams:
        return NormParams(k=self.spec.kappa, beta=self.spec.beta,
                          mu=self.spec.mu, tilt=self.alpha,
                          rho=self.rho_roots, shift=self.norm_shift)

    def norm_k2(self) -> NormParams:
        return NormParams(k=self.spec.k2, beta=self.spec.beta,
                          mu=self.spec.mu, tilt=self.nu,
                          rho=self.rho_roots, shift=self.norm_shift)


# ---------------------------------------------------------------------------
# built-in example


def example_problem(q: float = 2.0, A: float = 10.0,
                    c_mod: float = 0.002) -> ProblemSpec:
    """Main example: Q(x) = c (1 - x^2)(x + 1 + iA), R_D(x) = x + 1 + iA.

    Then Q(im)/R_D(im) = c (1 + m^2): constant argument, modulus bounded
    below by |c|.  A small |c| pulls the roots of P_m close to the
    origin, which keeps the flat differences above the double-precision
    floor.
    """
    c = c_mod * cmath.exp(0.75j * math.pi)
    ia = 1.0 + 1j * A
    Q = Polynomial((c * ia, c, -c * ia, -c))
    RD = Polynomial((ia, 1.0))
    levels = (
        Level(1, [Term(1, d=1, Delta=1, R=Polynomial((1.0,)),
                       C=GaussianCoefficient(0.05, 0.5))]),
        Level(2, [Term(1, d=2, Delta=3, R=Polynomial((1.0, 1.0)),
                       C=GaussianCoefficient(0.05, -0.25))]),
    )
    return ProblemSpec(q=q, k1=1, k2=2, d_D=3, Qpoly=Q, RD=RD,
                       levels=levels, epsilon0=0.7,
                       qrd_direction=0.75 * math.pi,
                       qrd_half_opening=0.05, qrd_min_modulus=c_mod)


def example_covering(epsilon0: float = 0.7) -> GoodCovering:
    half = math.pi / 3.0
    secs = tuple(Sector(bisecting_direction=p * math.pi / 2.0,
                        half_opening=half, radius=epsilon0)
                 for p in range(4))
    return GoodCovering(sectors=secs, epsilon0=epsilon0)


def example_scenario() -> Scenario:
    spec = example_problem()
    return Scenario(spec=spec, covering=example_covering(spec.epsilon0),
                    forcing=PoleForcing(amp=1.0, eps_linear=0.5,
                                        pole=0.45 * cmath.exp(1.25j * math.pi),
                                        width=1.0))


def driver_problem(q: float = 2.0) -> ProblemSpec:
    """Driver (level-k1) problem for the chained run.

    Q(x) = c_b (x + 1), R_D(x) = x + 1 so Q/R_D = c_b; its two P_m root
    rays sit at 112.5 and 292.5 degrees, clear of every Laplace ray.
    """
    c_b = 0.5 * cmath.exp(0.75j * math.pi)
    Q = Polynomial((c_b, c_b))
    RD = Polynomial((1.0, 1.0))
    levels = (
        Level(1, [Term(1, d=1, Delta=1, R=Polynomial((1.0,)),
                       C=GaussianCoefficient(0.03))]),
        Level(2, [Term(1, d=1, Delta=2, R=Polynomial((1.0,)),
                       C=GaussianCoefficient(0.02))]),
    )
    return ProblemSpec(q=q, k1=1, k2=1, d_D=2, Qpoly=Q, RD=RD,
                       levels=levels, epsilon0=0.7,
                       qrd_direction=0.75 * math.pi,
                       qrd_half_opening=0.05, qrd_min_modulus=0.5,
                       two_level=False)


def chained_scenario() -> Scenario:
    base = example_scenario()
    forcing = ChainedForcing(spec_bold=driver_problem(base.spec.q),
                             coeffs=(0.4, 0.2, 0.1))
    return replace(base, forcing=forcing, t_count=17)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class SectorRun:
    """All artifacts of one (sector, eps) solve."""

    p: int
    eps: complex
    w_k1: TauFamily
    w_k2: TauFamily
    psi_k1: TauFamily
    psi_k2: TauFamily
    solution: SectorialSolution
    k1_diag: dict
    k2_diag: dict
    driver_diag: Optional[dict] = None


class Pipeline:
    """Runs and caches per-(sector, eps) solves for one scenario."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self._cache: dict = {}
        self._root_checks: dict = {}

    # -- grids ------------------------------------------------------------

    def w1_radii(self) -> np.ndarray:
        lo, hi = self.sc.w1_log2_range
        lq = math.log2(self.sc.spec.q)
        return geometric_radii(self.sc.spec.q, self.sc.L, lo / lq, hi / lq)

    def w2_radii(self) -> np.ndarray:
        lo, hi = self.sc.w2_log2_range
        lq = math.log2(self.sc.spec.q)
        return geometric_radii(self.sc.spec.q, self.sc.L, lo / lq, hi / lq)

    # -- forcing on the first Borel plane ----------------------------------

    def psi_k1_family(self, p: int, eps: complex, radii: np.ndarray
                      ) -> tuple[TauFamily, Optional[dict]]:
        sc = self.sc
        spec = sc.spec
        direction = sc.directions[p]
        m = spec.grid
        tau = radii * cmath.exp(1j * direction)
        if isinstance(sc.forcing, PoleForcing):
            vals = sc.forcing.psi_k1_values(tau, m, eps)
            fam = TauFamily(direction, radii, vals, spec.m_max,
                            spec.n_points, sc.L)
            return fam, None
        # chained: solve the driver problem at level k1 on these nodes
        fc = sc.forcing
        psi_bold = fc.psi_bold_values(tau, m, spec.q, spec.k1)
        fam_bold = TauFamily(direction, radii, psi_bold, spec.m_max,
                             spec.n_points, sc.L)
        res = solve_w_k2(fc.spec_bold, fam_bold, fc.cfg, eps,
                         NormParams(k=spec.k1, beta=spec.beta, mu=spec.mu,
                                    tilt=sc.nu, rho=sc.rho_roots,
                                    shift=sc.norm_shift),
                         k_level=spec.k1)
        diag = {k: v for k, v in res.items() if k != "w"}
        return res["w"], diag

    # -- main solve ---------------------------------------------------------

    def run(self, p: int, eps: complex, t_count: Optional[int] = None,
            with_identity: bool = False) -> SectorRun:
        key = (p, complex(eps), t_count or self.sc.t_count)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        sc = self.sc
        spec = sc.spec
        direction = sc.directions[p]
        dom = sc.domain(p)

        psi1, driver_diag = self.psi_k1_family(p, eps, self.w1_radii())
        sol1 = solve_w_k1(spec, psi1, sc.fp, eps, sc.norm_k1())

        w2_radii = self.w2_radii()
        targets2 = w2_radii * cmath.exp(1j * direction)
        psi2_vals = accelerate(psi1, spec, dom, targets2)
        psi2 = TauFamily(direction, w2_radii, psi2_vals, spec.m_max,
                         spec.n_points, sc.L)
        sol2 = solve_w_k2(spec, psi2, sc.fp, eps, sc.norm_k2())

        t_nodes = sc.t_nodes(t_count)
        keep = np.array([abs(eps) * t < dom.radius_bound for t in t_nodes])
        t_nodes = t_nodes[keep]
        solution = assemble_solution(spec, sol2["w"], psi2, dom, p,
                                     t_nodes, np.asarray(sc.z_points,
                                                         dtype=complex),
                                     eps)
        run = SectorRun(p=p, eps=eps, w_k1=sol1["w"], w_k2=sol2["w"],
                        psi_k1=psi1, psi_k2=psi2, solution=solution,
                        k1_diag={k: v for k, v in sol1.items() if k != "w"},
                        k2_diag={k: v for k, v in sol2.items() if k != "w"},
                        driver_diag=driver_diag)
        self._cache[key] = run
        return run

    def identity_check(self, run: SectorRun) -> dict:
        sc = self.sc
        r1_max = float(np.max(run.w_k1.radii))
        overlap = Sector(bisecting_direction=run.w_k1.direction,
                         half_opening=sc.delta_tilde,
                         radius=min(r1_max, sc.rho1) / 2.0)
        res = check_acceleration_identity(
            run.w_k1, run.w_k2, sc.spec, sc.domain(run.p), overlap, run.eps)
        # drop targets so small that the quadrature's inner truncation
        # dominates: keep radii above overlap.radius / 1024
        mask = res["radii"] > overlap.radius / 1024.0
        res["sup_rel_diff"] = float(np.max(res["per_tau_max"][mask]))
        return res

    def root_check(self, p: int) -> dict:
        key = p
        if key not in self._root_checks:
            sec = Sector(bisecting_direction=self.sc.directions[p],
                         half_opening=self.sc.delta_tilde, radius=math.inf)
            self._root_checks[key] = check_root_bounds(
                self.sc.spec, sec, self.sc.rho_roots)
        return self._root_checks[key]


def singular_directions(scenario: Scenario) -> list[float]:
    """Root-ray directions of P_m (at m = 0) plus forcing pole rays."""
    out = [fold_angle(cmath.phase(r))
           for r in pm_roots(scenario.spec, 0.0)]
    if isinstance(scenario.forcing, PoleForcing):
        out.append(fold_angle(cmath.phase(scenario.forcing.pole)))
    return sorted(out)


def expected_flat_levels(scenario: Scenario) -> dict[int, int]:
    """Which Gevrey level governs each adjacent sector-pair difference.

    A pair's deformation wedge is the arc between consecutive Laplace
    rays; a forcing-pole ray inside it forces level k1, otherwise the
    P_m root rays force level k2 (k1 < k2 dominates when both appear).
    """
    sc = scenario
    k1_rays = []
    k2_rays = [fold_angle(cmath.phase(r)) for r in pm_roots(sc.spec, 0.0)]
    if isinstance(sc.forcing, PoleForcing):
        k1_rays.append(fold_angle(cmath.phase(sc.forcing.pole)))
    out = {}
    n = sc.n_sectors
    for p in range(n):
        a = sc.directions[p]
        b = sc.directions[(p + 1) % n]
        if b <= a:
            b += 2.0 * math.pi

        def inside(ang: float) -> bool:
            t = ang
            while t <= a:
                t += 2.0 * math.pi
            return t < b

        has_k1 = any(inside(r) for r in k1_rays)
        has_k2 = any(inside(r) for r in k2_rays)
        if has_k1:
            out[p] = sc.spec.k1
        elif has_k2:
            out[p] = sc.spec.k2
        else:
            out[p] = 0  # no singular ray: difference below any flat scale
    return out
