import numpy as np
from hypothesis import given, settings, strategies as st

from beamkam import _kernels
from beamkam._kernels import _fallback


def draw_sparse(data, dims=2, span=4, max_n=12):
    n = data.draw(st.integers(0, max_n))
    keys = data.draw(st.lists(
        st.tuples(*[st.integers(-span, span) for _ in range(dims)]),
        min_size=n, max_size=n, unique=True))
    vals = data.draw(st.lists(
        st.complex_numbers(min_magnitude=0.0, max_magnitude=10.0,
                           allow_nan=False, allow_infinity=False),
        min_size=len(keys), max_size=len(keys)))
    order = sorted(range(len(keys)), key=lambda i: keys[i])
    ka = np.array([keys[i] for i in order], dtype=np.int64).reshape(-1, dims)
    va = np.array([vals[i] for i in order], dtype=np.complex128)
    return ka, va


def brute_convolve(ka, va, kb, vb):
    acc = {}
    for a, x in zip(map(tuple, ka), va):
        for b, y in zip(map(tuple, kb), vb):
            key = tuple(int(p) + int(q) for p, q in zip(a, b))
            acc[key] = acc.get(key, 0.0j) + x * y
    return acc


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_convolve_matches_brute_force(data):
    ka, va = draw_sparse(data)
    kb, vb = draw_sparse(data)
    keys, vals = _kernels.convolve(ka, va, kb, vb, 0.0)
    oracle = brute_convolve(ka, va, kb, vb)
    got = {tuple(int(x) for x in k): v for k, v in zip(keys, vals)}
    for key in set(oracle) | set(got):
        scale = max(abs(oracle.get(key, 0.0)), 1.0)
        assert abs(got.get(key, 0.0j) - oracle.get(key, 0.0j)) < 1e-9 * scale
    # output keys are lexicographically sorted
    assert [tuple(k) for k in keys] == sorted(tuple(k) for k in keys)


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_offset_reduce_matches_brute_force(data):
    rows, _ = draw_sparse(data, max_n=10)
    n = len(rows)
    cols = data.draw(st.lists(
        st.tuples(st.integers(-4, 4), st.integers(-4, 4)),
        min_size=n, max_size=n))
    cols = np.array(cols, dtype=np.int64).reshape(-1, 2)
    mags = np.abs(np.arange(1, n + 1, dtype=float))
    offs, sups = _kernels.offset_reduce_max(rows, cols, mags)
    oracle = {}
    for r, c, m in zip(rows, cols, mags):
        key = tuple(int(a) - int(b) for a, b in zip(r, c))
        oracle[key] = max(oracle.get(key, 0.0), m)
    got = {tuple(int(x) for x in k): s for k, s in zip(offs, sups)}
    assert got == oracle


def test_backends_bit_identical():
    rng = np.random.default_rng(0)
    for trial in range(5):
        na, nb = int(rng.integers(1, 200)), int(rng.integers(1, 200))
        ka = np.unique(rng.integers(-20, 21, size=(na, 2)), axis=0)
        kb = np.unique(rng.integers(-20, 21, size=(nb, 2)), axis=0)
        va = rng.standard_normal(len(ka)) + 1j * rng.standard_normal(len(ka))
        vb = rng.standard_normal(len(kb)) + 1j * rng.standard_normal(len(kb))
        k1, v1 = _kernels.convolve(ka, va, kb, vb, 1e-15)
        k2, v2 = _fallback.convolve(ka, va, kb, vb, 1e-15)
        assert np.array_equal(k1, k2)
        assert np.array_equal(v1, v2)
        rows = rng.integers(-20, 21, size=(len(ka), 2))
        cols = rng.integers(-20, 21, size=(len(ka), 2))
        mags = np.abs(rng.standard_normal(len(ka)))
        o1, s1 = _kernels.offset_reduce_max(rows, cols, mags)
        o2, s2 = _fallback.offset_reduce_max(rows, cols, mags)
        assert np.array_equal(o1, o2)
        assert np.array_equal(s1, s2)


def test_backend_name_exposed():
    import beamkam
    assert beamkam.kernel_backend in ("compiled", "python")
