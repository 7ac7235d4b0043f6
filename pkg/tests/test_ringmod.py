import numpy as np
import pytest
from hypothesis import given, strategies as st

from qfhe.errors import ConfigurationError, DimensionError
from qfhe.ringmod import (ModMatrix, ModVector, balance, check_modulus, from_bytes, gadget_apply, gadget_bits,
                          gadget_decompose, gadget_matrix, log2q, matmul_mod, residue)

moduli = st.sampled_from([4, 8, 16, 1 << 16, 1 << 32, 1 << 40, 1 << 62])


def naive_matmul(a, b, q):
    a = [[int(v) for v in row] for row in np.atleast_2d(a)]
    b = [[int(v) for v in row] for row in np.atleast_2d(b)]
    out = [[sum(a[i][t] * b[t][j] for t in range(len(b))) % q for j in range(len(b[0]))] for i in range(len(a))]
    return np.array(out, dtype=object)


def balanced_py(v, q):
    v %= q
    return v - q if v > q // 2 else v


@given(moduli, st.integers(1, 6), st.integers(1, 9), st.integers(1, 5), st.integers(0, 2 ** 32))
def test_matmul_matches_integer_oracle(q, r, inner, c, seed):
    rng = np.random.default_rng(seed)
    a = balance(rng.integers(0, q, size=(r, inner), dtype=np.int64, endpoint=False), q)
    b = balance(rng.integers(0, q, size=(inner, c), dtype=np.int64, endpoint=False), q)
    got = matmul_mod(a, b, q)
    want = naive_matmul(a, b, q)
    assert all(int(got[i, j]) == balanced_py(int(want[i, j]), q) for i in range(r) for j in range(c))


@pytest.mark.parametrize("q", [1 << 32, 1 << 62])
def test_matmul_large_blocks(q):
    # big enough to take the blocked float path
    rng = np.random.default_rng(5)
    a = balance(rng.integers(0, q, size=(60, 120), dtype=np.int64), q)
    b = balance(rng.integers(0, q, size=(120, 50), dtype=np.int64), q)
    got = matmul_mod(a, b, q)
    want = naive_matmul(a, b, q)
    for i, j in [(0, 0), (59, 49), (17, 23), (33, 1)]:
        assert int(got[i, j]) == balanced_py(int(want[i, j]), q)
    assert np.all(got > -q // 2) and np.all(got <= q // 2)


@given(moduli, st.integers(-(2 ** 62), 2 ** 62))
def test_balance_range_and_residue(q, x):
    b = int(balance(np.int64(x), q))
    assert -q // 2 < b <= q // 2
    assert (b - x) % q == 0
    assert int(residue(np.int64(x), q)) == x % q


@pytest.mark.parametrize("q", [0, 2, 3, 12, 1 << 63])
def test_bad_modulus(q):
    with pytest.raises(ConfigurationError):
        check_modulus(q)


def test_log2q():
    assert log2q(8) == 3 and log2q(1 << 32) == 32


def test_gadget_matrix_layout():
    # G = I_rows (x) (1, 2, 4, ..., 2^{k-1})
    G = gadget_matrix(2, 8)
    want = np.array([[1, 2, 4, 0, 0, 0], [0, 0, 0, 1, 2, 4]])
    assert np.array_equal(G, want)


@given(moduli, st.integers(1, 6), st.integers(0, 2 ** 32))
def test_gadget_round_trip(q, rows, seed):
    rng = np.random.default_rng(seed)
    v = balance(rng.integers(0, q, size=rows, dtype=np.int64), q)
    bits = gadget_decompose(v, q)
    assert set(np.unique(bits)) <= {0, 1}
    G = gadget_matrix(rows, q).astype(object)
    rebuilt = [balanced_py(int(x), q) for x in G @ bits.astype(object)]
    assert rebuilt == v.tolist()
    assert np.array_equal(gadget_apply(bits, q, rows), v)


def test_gadget_bits_entry_major_little_endian():
    q = 16
    v = np.array([3, -1])  # residues 3 and 15
    assert gadget_bits(v, q).tolist() == [1, 1, 0, 0, 1, 1, 1, 1]
    m = np.array([[1, 2], [4, 8]])
    bits = gadget_bits(m, q)
    assert bits.shape == (8, 2)
    assert bits[:, 0].tolist() == [1, 0, 0, 0, 0, 0, 1, 0]


@given(moduli, st.integers(0, 2 ** 32))
def test_bytes_round_trip(q, seed):
    rng = np.random.default_rng(seed)
    v = ModVector(rng.integers(0, q, size=7, dtype=np.int64), q)
    m = ModMatrix(rng.integers(0, q, size=(3, 4), dtype=np.int64), q)
    assert from_bytes(v.to_bytes()) == v
    assert from_bytes(m.to_bytes()) == m


def test_from_bytes_rejects_truncation():
    blob = ModVector(np.arange(5), 16).to_bytes()
    with pytest.raises((DimensionError, ValueError)):
        from_bytes(blob[:-3])


def test_modarray_arithmetic_wraps():
    q = 16
    a = ModVector(np.array([7, 8]), q)
    b = ModVector(np.array([2, 9]), q)
    assert (a + b).data.tolist() == [-7, 1]
    assert (a - b).data.tolist() == [5, -1]
    with pytest.raises(DimensionError):
        a + ModVector(np.array([1, 2]), 32)
