import json
import math

import numpy as np
import pytest

from beamkam import lattice, sobolev
from beamkam.sobolev import FourierField, NonlinearitySpec

from conftest import cos_field, random_real_field

SQRT_2PI = math.sqrt(2.0 * math.pi)


class TestHsNorm:
    def test_zero_field(self, geom):
        assert sobolev.hs_norm(FourierField.zero(geom), 3.0) == 0.0

    @pytest.mark.parametrize("s", [0.0, 1.0, 2.5])
    def test_unit_mean_mode(self, geom, s):
        u = FourierField(geom, {(0, 0): 1.0})
        assert sobolev.hs_norm(u, s) == pytest.approx(SQRT_2PI)

    def test_weighted_mode(self, geom):
        u = FourierField(geom, {(3, 4): 1.0})
        assert sobolev.hs_norm(u, 1.0) == pytest.approx(SQRT_2PI * 5.0)

    def test_negative_s_rejected(self, geom):
        with pytest.raises(ValueError):
            sobolev.hs_norm(FourierField.zero(geom), -1.0)


class TestProject:
    def test_no_truncation(self, geom):
        rng = np.random.default_rng(0)
        u = random_real_field(geom, rng)
        low, high = sobolev.project(u, u.support_radius)
        assert len(high) == 0
        assert low.coeffs == u.coeffs

    def test_mean_mode_only(self, geom):
        u = FourierField(geom, {(0, 0): 2.0, (1, 0): 1.0, (0, -3): 1.0})
        low, high = sobolev.project(u, 0)
        assert set(low.coeffs) == {(0, 0)}
        assert len(high.coeffs) == 2

    def test_split_is_exact(self, geom):
        rng = np.random.default_rng(1)
        u = random_real_field(geom, rng, radius=4)
        low, high = sobolev.project(u, 2)
        back = low + high
        assert back.coeffs == u.coeffs

    @pytest.mark.parametrize("kappa", [0, 1, 2])
    @pytest.mark.parametrize("s", [2.0, 4.0])
    def test_projector_bounds(self, geom, kappa, s):
        # low part gains kappa derivatives at cost (c2 N)^kappa; the tail
        # loses them with gain (c1 N)^-kappa
        rng = np.random.default_rng(2)
        for _ in range(10):
            u = random_real_field(geom, rng, radius=5)
            N = int(rng.integers(1, 5))
            low, high = sobolev.project(u, N)
            lhs_low = sobolev.hs_norm(low, s + kappa)
            rhs_low = (geom.c2 * N) ** kappa * sobolev.hs_norm(u, s)
            assert lhs_low <= rhs_low * (1 + 1e-12)
            lhs_high = sobolev.hs_norm(high, s)
            rhs_high = (geom.c1 * N) ** (-kappa) * sobolev.hs_norm(u, s + kappa)
            assert lhs_high <= rhs_high * (1 + 1e-12)


class TestMultiply:
    def test_cos_squared(self, geom):
        u = cos_field(geom, axis=0)  # cos(phi)
        sq = sobolev.multiply(u, u)
        assert sq.get((0, 0)) == pytest.approx(0.5)
        assert sq.get((2, 0)) == pytest.approx(0.25)
        assert sq.get((-2, 0)) == pytest.approx(0.25)
        assert len(sq) == 3

    def test_identity(self, geom):
        rng = np.random.default_rng(3)
        u = random_real_field(geom, rng)
        one = FourierField(geom, {(0, 0): 1.0})
        out = sobolev.multiply(u, one)
        for n, c in u.coeffs.items():
            assert out.get(n) == pytest.approx(c)

    def test_fft_oracle(self, geom):
        # convolution equals the grid pointwise product round trip
        rng = np.random.default_rng(4)
        u = random_real_field(geom, rng, radius=3)
        v = random_real_field(geom, rng, radius=3)
        w = sobolev.multiply(u, v)
        L = 32
        grid = sobolev.eval_grid(u, L) * sobolev.eval_grid(v, L)
        oracle = sobolev.grid_to_field(grid, geom, prune=0.0)
        for n in set(w.coeffs) | set(oracle.coeffs):
            assert abs(w.get(n) - oracle.get(n)) < 1e-12

    def test_geometry_mismatch(self, geom, geom22):
        with pytest.raises(ValueError):
            sobolev.multiply(FourierField(geom, {(0, 0): 1.0}),
                             FourierField(geom22, {(0, 0, 0, 0): 1.0}))


class TestCompose:
    def test_linear_identity(self, geom):
        rng = np.random.default_rng(5)
        u = random_real_field(geom, rng)
        f = NonlinearitySpec("polynomial", terms=((1, 1.0),))
        out = sobolev.compose(f, u)
        for n in set(out.coeffs) | set(u.coeffs):
            assert abs(out.get(n) - u.get(n)) < 1e-12

    def test_square_matches_multiply(self, geom):
        u = cos_field(geom, axis=0)
        f = NonlinearitySpec("polynomial", terms=((2, 1.0),))
        out = sobolev.compose(f, u)
        ref = sobolev.multiply(u, u)
        for n in set(out.coeffs) | set(ref.coeffs):
            assert abs(out.get(n) - ref.get(n)) < 1e-12

    def test_forcing_at_zero(self, geom):
        g = cos_field(geom, axis=1, amplitude=0.7)
        f = NonlinearitySpec("polynomial", terms=((0, g), (3, 1.0)))
        out = sobolev.compose(f, FourierField.zero(geom))
        for n in set(out.coeffs) | set(g.coeffs):
            assert abs(out.get(n) - g.get(n)) < 1e-12

    def test_cubic_against_dense_grid_oracle(self, geom):
        rng = np.random.default_rng(6)
        u = random_real_field(geom, rng, radius=3)
        f = NonlinearitySpec("polynomial", terms=((3, 1.0),))
        out = sobolev.compose(f, u)
        L = 64  # well above the alias-free bound for radius-3 cubics
        oracle = sobolev.grid_to_field(sobolev.eval_grid(u, L).real ** 3,
                                       geom, prune=0.0)
        scale = max(abs(c) for c in oracle.coeffs.values())
        for n in set(out.coeffs) | set(oracle.coeffs):
            if abs(oracle.get(n)) < 1e-13 * scale and abs(out.get(n)) < 1e-13 * scale:
                continue
            assert abs(out.get(n) - oracle.get(n)) < 1e-10 * scale


class TestComposeDerivative:
    def test_cubic_at_zero(self, geom):
        f = NonlinearitySpec("polynomial", terms=((3, 1.0),))
        a, mbar = sobolev.compose_derivative(f, FourierField.zero(geom))
        assert len(a) == 0
        assert mbar == 0.0

    def test_half_square(self, geom):
        u = cos_field(geom, axis=0)
        f = NonlinearitySpec("polynomial", terms=((2, 0.5),))
        a, mbar = sobolev.compose_derivative(f, u)
        assert a.get((1, 0)) == pytest.approx(0.5)
        assert a.get((-1, 0)) == pytest.approx(0.5)
        assert mbar == pytest.approx(0.0)

    def test_linear_plus_forcing(self, geom):
        g = cos_field(geom, axis=1)
        f = NonlinearitySpec("polynomial", terms=((1, 1.0), (0, g)))
        rng = np.random.default_rng(7)
        a, mbar = sobolev.compose_derivative(f, random_real_field(geom, rng))
        assert mbar == pytest.approx(1.0)
        assert a.get((0, 0)) == pytest.approx(1.0)
        assert all(abs(c) < 1e-12 for n, c in a.coeffs.items() if n != (0, 0))


def test_taylor_tame_regression(geom):
    # second-order remainder of composition stays quadratically small along
    # a geometric sequence of increments
    rng = np.random.default_rng(8)
    u = random_real_field(geom, rng, radius=2)
    h0 = random_real_field(geom, rng, radius=2)
    f = NonlinearitySpec("polynomial", terms=((3, 1.0),))
    s1 = 4.0
    ratios = []
    for k in range(4):
        h = h0.scale(0.5 ** k)
        fu = sobolev.compose(f, u)
        fuh = sobolev.compose(f, u + h)
        a, _ = sobolev.compose_derivative(f, u)
        rem = fuh - fu - sobolev.multiply(a, h)
        ratios.append(sobolev.hs_norm(rem, s1) / sobolev.hs_norm(h, s1) ** 2)
    # bounded (no blow-up as h -> 0) and stable within a factor 2
    assert max(ratios) <= 2.0 * min(ratios) + 1e-12


def test_reality_and_symmetrization(geom):
    rng = np.random.default_rng(9)
    u = random_real_field(geom, rng)
    assert u.is_real()
    grid = sobolev.eval_grid(u, 16)
    assert np.max(np.abs(grid.imag)) < 1e-12


def test_json_round_trip(geom):
    rng = np.random.default_rng(10)
    u = random_real_field(geom, rng)
    recs = sobolev.to_records(u)
    json.dumps(recs)  # serializable
    back = sobolev.from_records(recs, geom)
    assert back.coeffs == u.coeffs
