"""Sectors, good coverings and ray-avoidance domains for the q-Laplace kernel.

All angles are radians folded to (-pi, pi].  Overlap and coverage tests
for coverings use exact interval arithmetic on angle intervals.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def fold_angle(a: float) -> float:
    """Fold an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def angle_dist(a: float, b: float) -> float:
    """Absolute angular distance, in [0, pi]."""
    return abs(fold_angle(a - b))


@dataclass(frozen=True)
class Sector:
    """Angular sector with vertex at the origin."""

    bisecting_direction: float
    half_opening: float
    radius: float = math.inf

    def __post_init__(self):
        if not (0 < self.half_opening < math.pi):
            raise ValueError("half_opening must lie in (0, pi)")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "bisecting_direction",
                           fold_angle(self.bisecting_direction))

    def contains(self, z: complex) -> bool:
        if z == 0:
            return False
        if abs(z) >= self.radius:
            return False
        return angle_dist(cmath.phase(z), self.bisecting_direction) <= self.half_opening

    def arc(self) -> tuple[float, float]:
        """The angular interval as (start, end) with end - start = opening."""
        return (self.bisecting_direction - self.half_opening,
                self.bisecting_direction + self.half_opening)


def _arc_intersect(a: Sector, b: Sector) -> bool:
    """Exact angular overlap test (open overlap of positive width)."""
    gap = angle_dist(a.bisecting_direction, b.bisecting_direction)
    return gap < a.half_opening + b.half_opening


@dataclass(frozen=True)
class GoodCovering:
    """Cyclic family of equal-radius sectors covering a punctured disc."""

    sectors: tuple
    epsilon0: float

    def __init__(self, sectors: Sequence[Sector], epsilon0: float):
        if epsilon0 <= 0:
            raise ValueError("epsilon0 must be positive")
        object.__setattr__(self, "sectors", tuple(sectors))
        object.__setattr__(self, "epsilon0", float(epsilon0))


def validate_good_covering(covering: GoodCovering) -> list[str]:
    """Check the overlap pattern and coverage clauses; returns violations."""
    secs = covering.sectors
    n = len(secs)
    report: list[str] = []
    if n < 2:
        raise ValueError("a good covering needs at least 2 sectors")
    for p, s in enumerate(secs):
        if not math.isclose(s.radius, covering.epsilon0, rel_tol=1e-12):
            report.append(f"sector {p}: radius {s.radius} != epsilon0 {covering.epsilon0}")
    # The wrap pair (0, n-1) is consecutive via the cyclic convention, but
    # pairs at linear index distance >= 2 must not overlap regardless; for
    # n = 3 the pair (0, 2) is therefore simultaneously required and
    # forbidden, so only coverings with n >= 4 can validate (or n = 2).
    for ii in range(n):
        for jj in range(ii + 1, n):
            wrap_pair = (ii == 0 and jj == n - 1)
            required = (jj - ii == 1) or wrap_pair
            forbidden = (jj - ii >= 2) and not (wrap_pair and n >= 4)
            overlap = _arc_intersect(secs[ii], secs[jj])
            if required and not overlap:
                report.append(f"consecutive sectors ({ii},{jj}) do not overlap")
            if forbidden and overlap:
                report.append(f"non-consecutive sectors ({ii},{jj}) overlap")
    # coverage: walk the circle through the union of arcs
    events = []
    for p, s in enumerate(secs):
        lo, hi = s.arc()
        events.append((lo, hi))
    # normalise each arc start to [-pi, pi) and unroll
    arcs = sorted((fold_angle(lo), fold_angle(lo) + (hi - lo)) for lo, hi in events)
    if arcs:
        reach = arcs[0][0]
        start = arcs[0][0]
        for lo, hi in arcs + [(a + TWO_PI, b + TWO_PI) for a, b in arcs]:
            if lo > reach + 1e-15:
                if reach < start + TWO_PI:
                    report.append(f"coverage gap near angle {fold_angle(reach):.6f}")
                break
            reach = max(reach, hi)
            if reach >= start + TWO_PI:
                break
        else:
            if reach < start + TWO_PI:
                report.append("union of sectors does not cover the circle")
    return report


@dataclass(frozen=True)
class LaplaceDomain:
    """Points T keeping the ray {r e^{i gamma}} margin-far from the kernel poles.

    T is admissible iff inf_{r>=0} |1 + r e^{i gamma}/T| > margin, and
    |T| < radius_bound when the bound is finite.
    """

    direction: float
    margin: float
    radius_bound: float = math.inf

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")


def ray_margin(T: complex, direction: float) -> float:
    """Closed-form inf over r >= 0 of |1 + r e^{i gamma}/T|.

    The ray {r e^{i gamma}/T} has direction phi = gamma - arg T; the
    distance from -1 to it is 1 when cos(phi) >= 0 and |sin(phi)|
    otherwise.
    """
    if T == 0:
        raise ValueError("T must be nonzero")
    phi = fold_angle(direction - cmath.phase(T))
    if math.cos(phi) >= 0.0:
        return 1.0
    return abs(math.sin(phi))


def in_laplace_domain(T: complex, dom: LaplaceDomain) -> bool:
    if T == 0:
        raise ValueError("T must be nonzero")
    if math.isfinite(dom.radius_bound) and abs(T) >= dom.radius_bound:
        return False
    return ray_margin(T, dom.direction) > dom.margin


def validate_associated_family(covering: GoodCovering,
                               domains: Sequence[LaplaceDomain],
                               t_sector: Sector,
                               params: dict,
                               n_samples: int = 10) -> list[str]:
    """Check the admissibility inequalities and the sampled domain clauses.

    ``params`` carries nu, alpha, kappa, k2, q, epsilon0, r_T.  The four
    scalar inequalities are checked exactly; the eps*t membership and the
    consecutive-domain intersections are checked on a sample grid.
    """
    report: list[str] = []
    secs = covering.sectors
    if len(domains) != len(secs):
        raise ValueError("one Laplace domain per covering sector required")
    nu = params["nu"]; alpha = params["alpha"]; kappa = params["kappa"]
    k2 = params["k2"]; q = params["q"]
    eps0 = params["epsilon0"]; r_T = params["r_T"]
    lq = math.log(q)
    if not (0 < eps0 < 1):
        report.append("0 < epsilon0 < 1 violated")
    if not (0 < r_T < 1):
        report.append("0 < r_T < 1 violated")
    if not (nu + (k2 / lq) * math.log(r_T) < 0):
        report.append("nu + (k2/log q) log r_T < 0 violated")
    if not (alpha + (kappa / lq) * math.log(eps0 * r_T) < 0):
        report.append("alpha + (kappa/log q) log(eps0 r_T) < 0 violated")
    if not (eps0 * r_T <= q ** ((0.5 - nu) / k2) / 2.0):
        report.append("eps0 r_T <= q^{(1/2-nu)/k2}/2 violated")

    # clause 3 of the associated-family definition: eps*t in the bounded
    # ray-avoidance domain of its sector, sampled
    for p, (sec, dom) in enumerate(zip(secs, domains)):
        r_bound = eps0 * r_T
        for i in range(n_samples):
            fa = -1.0 + 2.0 * (i + 0.5) / n_samples
            arg_e = sec.bisecting_direction + fa * sec.half_opening * 0.999
            for jj in range(n_samples):
                fb = -1.0 + 2.0 * (jj + 0.5) / n_samples
                arg_t = (t_sector.bisecting_direction
                         + fb * t_sector.half_opening * 0.999)
                for mod_e, mod_t in ((eps0 * 0.99, t_sector.radius * 0.99),
                                     (eps0 * 0.1, t_sector.radius * 0.1)):
                    et = mod_e * mod_t * cmath.exp(1j * (arg_e + arg_t))
                    ok = (ray_margin(et, dom.direction) > dom.margin
                          and abs(et) <= r_bound * 1.0000001)
                    if not ok:
                        report.append(
                            f"clause 3 fails: p={p}, arg_eps={arg_e:.4f}, "
                            f"arg_t={arg_t:.4f}, |eps t|={abs(et):.4g}")
                        break
                else:
                    continue
                break
            else:
                continue
            break

    # consecutive bounded domains intersect (sampled)
    n = len(secs)
    for p in range(n):
        dom_a, dom_b = domains[p], domains[(p + 1) % n]
        found = False
        for ang in np.linspace(-math.pi, math.pi, 720, endpoint=False):
            T = 0.5 * eps0 * r_T * cmath.exp(1j * ang)
            if (ray_margin(T, dom_a.direction) > dom_a.margin
                    and ray_margin(T, dom_b.direction) > dom_b.margin):
                found = True
                break
        if not found:
            report.append(f"bounded domains {p} and {(p + 1) % n} do not intersect")
    return report
