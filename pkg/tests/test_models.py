import math

import numpy as np
import pytest

from cwdyn import models
from cwdyn.models import (
    CalibrationError, ChartError, ModelCapabilityError,
    chart_distance, iterate, local_arc, make_model,
)


@pytest.fixture(scope="module")
def cat():
    return make_model("cat-map")


@pytest.fixture(scope="module")
def pa():
    return make_model("sphere-pA")


@pytest.fixture(scope="module")
def ns():
    return make_model("north-south")


class TestIterate:
    def test_origin_fixed(self, cat):
        p = cat.point(0.0, 0.0)
        q = iterate(cat, p, 5)
        assert q.coords == (0.0, 0.0)

    def test_one_step(self, cat):
        q = iterate(cat, cat.point(0.1, 0.2), 1)
        assert q.coords[0] == pytest.approx(0.4, abs=1e-15)
        assert q.coords[1] == pytest.approx(0.3, abs=1e-15)

    def test_round_trip_exact(self, cat):
        # dyadic channel keeps forward/backward orbits bit-exact
        p = cat.point(0.3728219, 0.881251)
        for n in (1, 7, 37, 160):
            q = iterate(cat, iterate(cat, p, n), -n)
            assert q.coords == p.coords

    def test_rational_period(self, cat):
        p = cat.rational_point(1, 2, 5)
        orbit = p
        for _ in range(2):  # (1/5, 2/5) has period dividing small k
            orbit = iterate(cat, orbit, 1)
        # period of the /5 lattice under the cat map
        seen = {p.exact}
        q = iterate(cat, p, 1)
        k = 1
        while q.exact != p.exact:
            q = iterate(cat, q, 1)
            k += 1
        assert k > 0 and iterate(cat, p, k).exact == p.exact

    def test_76_lattice_period_nine(self, cat):
        # det(A^9 - I) = -76^2, so every /76 point is 9-periodic
        p = cat.rational_point(13, 31, 76)
        assert iterate(cat, p, 9).exact == p.exact
        assert iterate(cat, p, 3).exact != p.exact

    def test_north_south_colat(self, ns):
        p = ns.point(0.25, 0.3)
        q = iterate(ns, p, 3)
        t = 0.3
        want = 8 * t / (1 + 7 * t)
        assert q.coords[1] == pytest.approx(want, abs=1e-12)
        assert q.coords[0] == pytest.approx(0.25, abs=1e-15)

    def test_north_south_poles_fixed(self, ns):
        for colat in (0.0, 1.0):
            p = ns.point(0.1, colat)
            assert iterate(ns, p, 4).coords[1] == colat


class TestDistance:
    def test_torus_wraparound(self, cat):
        d = chart_distance("torus", (0.05, 0.5), (0.85, 0.5))
        assert d == pytest.approx(0.2, abs=1e-15)

    def test_quotient_identification(self, pa):
        d = models.distance(pa, pa.point(0.1, 0.1), pa.point(0.9, 0.9))
        assert d == pytest.approx(0.0, abs=1e-15)

    def test_geographic_poles(self):
        # all longitudes coincide at a pole
        assert chart_distance("sphere-geographic", (0.1, 0.0), (0.7, 0.0)) \
            == pytest.approx(0.0, abs=1e-7)
        assert chart_distance("sphere-geographic", (0.0, 0.0), (0.3, 1.0)) \
            == pytest.approx(1.0, abs=1e-12)

    def test_geographic_equator_antipodes(self):
        d = chart_distance("sphere-geographic", (0.0, 0.5), (0.5, 0.5))
        assert d == pytest.approx(1.0, abs=1e-12)


class TestEigen:
    def test_eigen_directions(self, cat):
        a = np.array(cat.matrix, dtype=float)
        lam = (3 + math.sqrt(5)) / 2
        for stable, rate in ((False, lam), (True, 1 / lam)):
            e = cat.eigen_direction(stable=stable)
            assert np.allclose(a @ e, rate * e, atol=1e-12)
            assert e[0] > 0  # orientation convention
        assert cat.expansion_rate == pytest.approx(lam)

    def test_matrix_validation(self):
        with pytest.raises(ValueError):
            make_model("cat-map", matrix=((0, -1), (1, 0)))  # not hyperbolic
        with pytest.raises(ValueError):
            make_model("cat-map", matrix=((2, 0), (0, 2)))  # |det| != 1


class TestLocalArc:
    def test_two_sided_arc(self, cat):
        x = cat.point(0.3, 0.3)
        arc = local_arc(cat, x, "stable", 0.2)
        assert arc.lift is not None
        assert arc.lift.length == pytest.approx(0.4, abs=1e-15)
        # x is a vertex
        v = arc.vertices
        assert np.min(np.hypot(v[:, 0] - 0.3, v[:, 1] - 0.3)) < 1e-12

    def test_maximality(self, cat):
        # every forward image of the stable arc stays within eps of the
        # orbit of x; one more contraction step of slack would break it
        from cwdyn import continua
        eps = 0.1
        arc = local_arc(cat, cat.point(0.21, 0.68), "stable", eps)
        for n in range(0, 6):
            img = continua.image(cat, arc, n)
            assert continua.diameter(img) <= 2 * eps + 1e-12

    def test_one_prong_at_spine(self, pa):
        sp = pa.point(0.5, 0.5)
        arc = local_arc(pa, sp, "stable", 0.2)
        assert arc.lift.length == pytest.approx(0.2, abs=1e-15)
        # the marked point sits at an endpoint
        assert models.is_spine(pa, sp, 0.1)
        assert not models.is_spine(pa, pa.point(0.3, 0.3), 0.1)

    def test_spine_points(self, pa):
        pts = models.spine_points(pa)
        assert len(pts) == 4
        for p in pts:
            assert models.is_spine(pa, p, 0.05)

    def test_eps_validation(self, cat):
        with pytest.raises(CalibrationError):
            local_arc(cat, cat.point(0.1, 0.1), "stable", 0.3)  # eps >= c

    def test_kind_validation(self, cat):
        with pytest.raises(ValueError):
            local_arc(cat, cat.point(0.1, 0.1), "sideways", 0.1)

    def test_north_south_unsupported(self, ns):
        with pytest.raises(ModelCapabilityError):
            local_arc(ns, ns.point(0.1, 0.3), "stable", 0.1)

    def test_chart_mismatch(self, cat, pa):
        with pytest.raises(ChartError):
            local_arc(cat, pa.point(0.1, 0.1), "stable", 0.1)


def test_orbit_residual_from_float_seed(cat):
    # float coordinates round-trip through the exact channel with
    # residual at machine scale
    p = cat.point(1 / 3, math.pi % 1)
    q = iterate(cat, iterate(cat, p, 25), -25)
    assert models.distance(cat, p, q) < 1e-12
