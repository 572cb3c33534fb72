import math
from pathlib import Path

import numpy as np
import pytest

from beamkam import cli, lattice, sobolev
from beamkam.sobolev import FourierField

REPO = Path(__file__).resolve().parent.parent
R1_CONFIG = REPO / "configs" / "r1.json"


@pytest.fixture(scope="session")
def geom():
    """The workhorse torus geometry: one angle, one space dimension."""
    return lattice.make_geometry(nu=1, d=1, r=1, preset="torus")


@pytest.fixture(scope="session")
def geom22():
    return lattice.make_geometry(nu=2, d=2, r=2, preset="torus")


@pytest.fixture(scope="session")
def r1_config():
    config, resolved = cli.load_config(R1_CONFIG)
    return config


@pytest.fixture(scope="session")
def r1_resolved():
    _, resolved = cli.load_config(R1_CONFIG)
    return resolved


@pytest.fixture(scope="session")
def r1_run(r1_config):
    """The reference solve, shared by every test that inspects its output."""
    from beamkam import nashmoser
    u, certificate = nashmoser.solve(r1_config)
    return u, certificate


def cos_field(geom, axis, amplitude=1.0):
    """cos of one angle/space coordinate: coefficients amplitude/2 at +-1."""
    plus = [0] * geom.dims
    minus = [0] * geom.dims
    plus[axis] = 1
    minus[axis] = -1
    return FourierField(geom, {tuple(plus): amplitude / 2.0,
                               tuple(minus): amplitude / 2.0})


def random_real_field(geom, rng, radius=3, density=0.5, decay=2.0):
    """Random real-valued, zero-mean field with polynomially decaying
    coefficients."""
    coeffs = {}
    zero = (0,) * geom.dims
    for n in lattice.enumerate_box(zero, radius, geom):
        if n != zero and rng.random() < density:
            w = lattice.weight_norm(n, geom)
            coeffs[n] = complex(rng.standard_normal(),
                                rng.standard_normal()) * w ** (-decay)
    u = FourierField(geom, coeffs)
    return u.symmetrized()


def field_norm_sup(u):
    return max((abs(c) for c in u.coeffs.values()), default=0.0)
