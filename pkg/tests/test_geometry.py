"""Tests for sectors, coverings and Laplace-domain admissibility."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsum.geometry import (GoodCovering, LaplaceDomain, Sector, angle_dist,
                           fold_angle, in_laplace_domain, ray_margin,
                           validate_good_covering)

# ---------------------------------------------------------------------------
# angles


@given(st.floats(-50.0, 50.0))
@settings(max_examples=100, deadline=None)
def test_fold_angle_range_and_equivalence(a):
    f = fold_angle(a)
    assert -math.pi < f <= math.pi
    # same point on the circle
    assert math.isclose(math.cos(f), math.cos(a), abs_tol=1e-12)
    assert math.isclose(math.sin(f), math.sin(a), abs_tol=1e-12)


@given(st.floats(-10.0, 10.0), st.floats(-10.0, 10.0))
@settings(max_examples=100, deadline=None)
def test_angle_dist_symmetric_bounded(a, b):
    d = angle_dist(a, b)
    assert 0.0 <= d <= math.pi + 1e-15
    assert math.isclose(d, angle_dist(b, a), abs_tol=1e-12)
    assert angle_dist(a, a) == 0.0


def test_angle_dist_wraps():
    assert math.isclose(angle_dist(math.pi - 0.1, -math.pi + 0.1), 0.2,
                        abs_tol=1e-12)


# ---------------------------------------------------------------------------
# sectors


def test_sector_contains():
    s = Sector(bisecting_direction=0.0, half_opening=0.5, radius=2.0)
    assert s.contains(1.0)
    assert s.contains(1.5 * np.exp(0.4j))
    assert not s.contains(1.0 * np.exp(0.6j))   # outside the opening
    assert not s.contains(2.5)                  # beyond the radius
    assert not s.contains(0.0)                  # the vertex is excluded


def test_sector_validation():
    with pytest.raises(ValueError):
        Sector(0.0, 0.0)
    with pytest.raises(ValueError):
        Sector(0.0, math.pi)
    with pytest.raises(ValueError):
        Sector(0.0, 0.5, radius=0.0)


def test_good_covering_example_valid(scenario):
    assert validate_good_covering(scenario.covering) == []


def test_good_covering_flags_gap():
    # four narrow sectors leave gaps: consecutive pairs do not overlap
    secs = [Sector(d, 0.3, radius=1.0)
            for d in (0.0, math.pi / 2, math.pi, -math.pi / 2)]
    report = validate_good_covering(GoodCovering(secs, 1.0))
    assert any("do not overlap" in r for r in report)


def test_good_covering_flags_radius_mismatch():
    secs = [Sector(d, 1.0, radius=0.5)
            for d in (0.0, math.pi / 2, math.pi, -math.pi / 2)]
    report = validate_good_covering(GoodCovering(secs, 1.0))
    assert any("radius" in r for r in report)


def test_good_covering_rejects_single_sector():
    with pytest.raises(ValueError):
        validate_good_covering(GoodCovering([Sector(0.0, 1.0, 1.0)], 1.0))


# ---------------------------------------------------------------------------
# Laplace domains


def test_ray_margin_closed_form():
    # direction aligned with arg T: the ray points away from -1
    assert ray_margin(1.0 + 0.0j, 0.0) == 1.0
    # opposite ray passes through -1
    assert math.isclose(ray_margin(1.0 + 0.0j, math.pi), 0.0, abs_tol=1e-15)
    # perpendicular ray: distance is |sin(phi)| = 1... phi = pi/2 keeps cos >= 0
    assert math.isclose(ray_margin(1.0 + 0.0j, 3 * math.pi / 4),
                        math.sin(math.pi / 4), abs_tol=1e-12)


@given(st.floats(-3.0, 3.0), st.floats(0.05, 5.0), st.floats(-3.0, 3.0))
@settings(max_examples=60, deadline=None)
def test_ray_margin_is_sampled_infimum(argT, modT, direction):
    T = modT * np.exp(1j * argT)
    closed = ray_margin(complex(T), direction)
    r = np.geomspace(1e-6, 1e6, 4001)
    sampled = np.min(np.abs(1.0 + r * np.exp(1j * direction) / T))
    assert closed <= sampled + 1e-9
    assert sampled <= closed + 1e-2  # dense ray sampling approaches it


def test_in_laplace_domain():
    dom = LaplaceDomain(direction=0.0, margin=0.3, radius_bound=2.0)
    assert in_laplace_domain(1.0 + 0.0j, dom)
    assert not in_laplace_domain(3.0 + 0.0j, dom)      # beyond the radius
    assert not in_laplace_domain(-1.0 + 0.05j, dom)    # ray passes near -1
    with pytest.raises(ValueError):
        in_laplace_domain(0.0, dom)


def test_laplace_domain_rejects_bad_margin():
    with pytest.raises(ValueError):
        LaplaceDomain(direction=0.0, margin=0.0)
