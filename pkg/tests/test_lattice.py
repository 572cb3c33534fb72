import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamkam import lattice


class TestMakeGeometry:
    def test_torus_111(self, geom):
        assert geom.weights == ((1.0,),)
        assert geom.rho == (0.0,)
        assert not geom.positive_cone
        assert geom.c1 == 1.0
        assert geom.c2 == pytest.approx(math.sqrt(2.0))

    def test_torus_222(self, geom22):
        assert geom22.c1 == 1.0
        assert geom22.c2 == pytest.approx(2.0)

    def test_cone_rational_weights_accepted(self):
        g = lattice.make_geometry(nu=1, d=2, r=2, preset="cone",
                                  weights=((1.0, 0.0), (0.5, 0.5)), z=2)
        assert g.positive_cone
        # all pairwise dot products are in Z/2
        W = np.array(g.weights)
        gram = W @ W.T
        assert np.allclose(gram * 2, np.round(gram * 2))

    def test_cone_irrational_weights_rejected(self):
        with pytest.raises(ValueError):
            lattice.make_geometry(nu=1, d=2, r=2, preset="cone",
                                  weights=((1.0, 0.0), (0.3, 0.7)), z=2)

    def test_dependent_weights_rejected(self):
        with pytest.raises(ValueError):
            lattice.make_geometry(nu=1, d=2, r=2, preset="cone",
                                  weights=((1.0, 0.0), (2.0, 0.0)), z=1)


class TestSiteNorm:
    def test_origin(self, geom):
        assert lattice.site_norm((0, 0), geom) == 0

    def test_sup_norm(self):
        g = lattice.make_geometry(nu=2, d=1, r=1, preset="torus")
        assert lattice.site_norm((3, -1, 2), g) == 3

    def test_distance(self, geom):
        assert lattice.site_distance((0, 5), (0, 2), geom) == 3


class TestWeightNorm:
    def test_origin_is_one(self, geom):
        assert lattice.weight_norm((0, 0), geom) == 1.0

    def test_pythagorean(self, geom):
        assert lattice.weight_norm((3, 4), geom) == pytest.approx(5.0)

    def test_floor_at_one(self, geom):
        assert lattice.weight_norm((1, 0), geom) == 1.0


class TestLaplacianEigenvalue:
    def test_zero_mode(self, geom):
        assert lattice.laplacian_eigenvalue((0,), geom) == 0.0

    def test_1d(self, geom):
        assert lattice.laplacian_eigenvalue((3,), geom) == pytest.approx(-9.0)

    def test_2d(self, geom22):
        assert lattice.laplacian_eigenvalue((1, 2), geom22) == pytest.approx(-5.0)


class TestEnumerateBox:
    def test_cone_box(self):
        g = lattice.make_geometry(nu=1, d=1, r=1, preset="cone",
                                  weights=((1.0,),))
        sites = lattice.enumerate_box((0, 0), 1, g)
        assert len(sites) == 6  # l in {-1,0,1}, j in {0,1}
        assert all(s[1] >= 0 for s in sites)

    def test_radius_zero(self, geom):
        assert lattice.enumerate_box((0, 0), 0, geom) == [(0, 0)]

    def test_clamped_window_at_corner(self):
        # window anchored at the region corner keeps width exactly 2N
        assert lattice.clamped_window(-4, 2, -4, 4) == (-4, 0)

    def test_clamped_box_diameter(self, geom):
        sites = lattice.enumerate_clamped_box((3, -4), 2, geom,
                                              ((-4, 4), (-4, 4)))
        assert lattice.site_norm((0, 0), geom) == 0  # sanity
        arr = np.array(sites)
        assert int((arr.max(axis=0) - arr.min(axis=0)).max()) == 4
        assert (3, -4) in sites
        assert arr.min() >= -4 and arr.max() <= 4

    def test_lexicographic_order(self, geom):
        sites = lattice.enumerate_box((0, 0), 2, geom)
        assert sites == sorted(sites)


@settings(max_examples=50, deadline=None)
@given(l=st.integers(-10, 10), j=st.integers(-10, 10))
def test_norm_equivalence_constants(l, j):
    g = lattice.make_geometry(nu=1, d=1, r=1, preset="torus")
    n = (l, j)
    sup = lattice.site_norm(n, g)
    if sup == 0:
        return
    val = math.sqrt(l * l + j * j)
    assert g.c1 * sup <= val + 1e-12
    assert val <= g.c2 * sup + 1e-12


@settings(max_examples=30, deadline=None)
@given(cl=st.integers(-5, 5), cj=st.integers(-5, 5), N=st.integers(0, 3))
def test_box_product_structure(cl, cj, N):
    # any site coordinate-wise between two returned sites is also returned
    g = lattice.make_geometry(nu=1, d=1, r=1, preset="torus")
    sites = set(lattice.enumerate_box((cl, cj), N, g))
    ls = sorted({s[0] for s in sites})
    js = sorted({s[1] for s in sites})
    for l in ls:
        for j in js:
            assert (l, j) in sites


def test_positive_cone_offset_quirk():
    g = lattice.make_geometry(nu=1, d=1, r=1, preset="cone",
                              weights=((1.0,),))
    # an offset whose spatial part leaves the cone is identified with 0
    assert lattice.site_offset((0, 0), (0, 3), g) == (0, 0)
    assert lattice.site_offset((0, 3), (0, 0), g) == (0, 3)
