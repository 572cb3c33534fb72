import numpy as np
import pytest

from beamkam import decay_matrix, lattice, linop
from beamkam.linop import OperatorParams
from beamkam.sobolev import FourierField

from conftest import cos_field, random_real_field


def make_params(geom, rng=None, eps=0.0, lam=1.0, theta=0.0, m=1.0,
                omega0=None, vbar=None, a=None):
    if omega0 is None:
        omega0 = tuple([0.618] + [0.0] * (geom.nu - 1))
    if vbar is None:
        vbar = FourierField.zero(geom)
    if a is None:
        a = FourierField.zero(geom)
    return OperatorParams(eps=eps, lam=lam, omega0=omega0, theta=theta,
                          m=m, vbar=vbar, a=a)


class TestParamsValidation:
    def test_lambda_range(self, geom):
        with pytest.raises(ValueError):
            make_params(geom, lam=2.0)

    def test_omega0_size(self, geom):
        with pytest.raises(ValueError):
            make_params(geom, omega0=(1.5,))

    def test_vbar_zero_mean(self, geom):
        with pytest.raises(ValueError):
            make_params(geom, vbar=FourierField(geom, {(0, 0): 1.0}))


class TestDiagonalEntry:
    def test_origin(self, geom):
        p = make_params(geom, theta=0.0, m=1.0)
        assert linop.diagonal_entry((0, 0), p, geom) == pytest.approx(1.0)

    def test_mixed_site(self, geom):
        p = make_params(geom, omega0=(1.0,), lam=1.0, m=1.0)
        # -(2)^2 + (-9)^2 + 1 = 78
        assert linop.diagonal_entry((2, 3), p, geom) == pytest.approx(78.0)

    def test_theta_shift_covariance(self, geom):
        rng = np.random.default_rng(0)
        p = make_params(geom, lam=1.2, theta=0.3)
        l0 = 3
        shift = p.lam * p.omega0[0] * l0
        for site in [(0, 1), (2, -4), (-1, 0)]:
            l, j = site
            lhs = linop.diagonal_entry((l, j), p.with_theta(p.theta + shift),
                                       geom)
            rhs = linop.diagonal_entry((l + l0, j), p, geom)
            assert lhs == pytest.approx(rhs)


class TestAssemble:
    def test_pure_diagonal(self, geom):
        p = make_params(geom)
        a_mat = linop.assemble(p, 2)
        dense = a_mat.dense()
        assert np.allclose(dense, np.diag(np.diag(dense)))
        for i, site in enumerate(a_mat.row_sites):
            assert dense[i, i] == pytest.approx(
                linop.diagonal_entry(site, p, geom))

    def test_self_adjoint(self, geom):
        rng = np.random.default_rng(1)
        p = make_params(geom, eps=1e-3,
                        vbar=random_real_field(geom, rng, radius=2),
                        a=random_real_field(geom, rng, radius=2))
        a_mat = linop.assemble(p, 3)
        assert (a_mat - a_mat.adjoint()).op_norm() <= 1e-12

    def test_covariance_exact(self, geom):
        rng = np.random.default_rng(2)
        p = make_params(geom, lam=0.9, theta=0.17,
                        vbar=random_real_field(geom, rng, radius=2),
                        a=random_real_field(geom, rng, radius=2), eps=1e-3)
        l0, j0 = 2, -1
        shift = p.lam * p.omega0[0] * l0
        m1 = linop.assemble(p, 3, l0=(l0,), j0=(j0,))
        m2 = linop.assemble(p.with_theta(p.theta + shift), 3, l0=(0,),
                            j0=(j0,))
        # relabeling: row (l, j) of m1 corresponds to (l - l0, j) of m2; the
        # translation preserves lexicographic order so dense forms agree
        assert np.array_equal(
            np.array(m1.row_sites) - np.array([l0, 0]),
            np.array(m2.row_sites))
        assert np.allclose(m1.dense(), m2.dense(), atol=1e-12, rtol=0)

    def test_offdiagonal_multiplier_bound(self, geom):
        # |A - Diag(A)|_s <= C ( ||vbar||_(s+rho) + eps ||a||_(s+rho) )
        # with the measured regression constant C = 4
        from beamkam import sobolev
        rng = np.random.default_rng(3)
        rho = linop.rho_exponent(geom)
        s = 2.0
        for _ in range(10):
            vbar = random_real_field(geom, rng, radius=2)
            a = random_real_field(geom, rng, radius=2)
            p = make_params(geom, eps=1e-3, vbar=vbar, a=a)
            q = linop.offdiagonal_part(linop.assemble(p, 3))
            rhs = 4.0 * (sobolev.hs_norm(vbar, s + rho)
                         + p.eps * sobolev.hs_norm(a, s + rho))
            assert q.s_norm(s) <= rhs


class TestSpatialBlock:
    def test_eigenvalues_constant_potential(self, geom):
        p = make_params(geom, m=1.0)
        js, mat = linop.spatial_block(p, 3)
        eigs = np.sort(np.linalg.eigvalsh(mat))
        expected = np.sort([lattice.laplacian_eigenvalue(j, geom) ** 2 + 1.0
                            for j in js])
        assert np.allclose(eigs, expected)

    def test_positivity_margin(self, geom):
        vbar = cos_field(geom, axis=1, amplitude=0.1)  # V = 1 + 0.1 cos x
        p = make_params(geom, m=1.0, vbar=vbar)
        margin = linop.positivity_margin(p, 8)
        assert margin >= 0.9
        assert margin <= 1.0 + 1e-9


def test_rho_exponent(geom, geom22):
    assert linop.rho_exponent(geom) == pytest.approx((2 + 1 + 1 + 1) / 2.0)
    assert linop.rho_exponent(geom22) == pytest.approx((4 + 2 + 2 + 1) / 2.0)
