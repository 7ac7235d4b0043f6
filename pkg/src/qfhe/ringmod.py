"""Arithmetic over Z_q for q a power of two.

Values are stored as int64 in the balanced range (-q/2, q/2].  Because q
divides 2^64, numpy's silent int64 wrap-around is harmless: every
intermediate is correct modulo q and a final reduction restores the
balanced form.

The gadget operator maps a bit vector of length (rows * log2 q) back to
``rows`` words (little-endian bits per word); its inverse decomposes the
non-negative residue of each word.
"""

from __future__ import annotations

import struct
from typing import Union

import numpy as np

from .errors import ConfigurationError, DimensionError

MAX_LOG_Q = 62
_FLOAT_EXACT = 2**53


def check_modulus(q: int) -> int:
    """Return log2(q), raising if q is not a supported power of two."""
    q = int(q)
    if q < 4 or q & (q - 1):
        raise ConfigurationError(f"q must be a power of two >= 4, got {q}")
    k = q.bit_length() - 1
    if k > MAX_LOG_Q:
        raise ConfigurationError(f"q = 2^{k} exceeds the 2^{MAX_LOG_Q} storage guard")
    return k


def log2q(q: int) -> int:
    return check_modulus(q)


def balance(x, q: int):
    """Reduce integers (scalar or array) into (-q/2, q/2]."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, np.ndarray):
        r = int(x) % q
        return r - q if r > q // 2 else r
    # shift so the window (-q/2, q/2] maps onto [0, q); int64 wraparound keeps residues since q | 2^64
    off = np.int64(q // 2 - 1)
    return ((np.asarray(x, dtype=np.int64) + off) & np.int64(q - 1)) - off


def residue(x, q: int):
    """Non-negative residue in [0, q)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, np.ndarray):
        return int(x) % q
    return np.asarray(x, dtype=np.int64) & np.int64(q - 1)


def _limb_split(res: np.ndarray, bits: int, total: int) -> list[np.ndarray]:
    mask = np.int64((1 << bits) - 1)
    return [((res >> np.int64(s)) & mask).astype(np.float64) for s in range(0, total, bits)]


def matmul_mod(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    """Exact (a @ b) mod q, balanced.  Inputs are integer arrays.

    Large products go through float64 BLAS with operands split into limbs
    small enough that every dot product is an exact integer below 2^53.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    inner = a.shape[-1]
    out_size = a.size // max(inner, 1) * (b.size // max(b.shape[0], 1))
    if inner == 0:
        return np.zeros(a.shape[:-1] + b.shape[1:], dtype=np.int64)
    if out_size * inner < 200_000:
        return balance(a @ b, q)

    k = check_modulus(q)
    amax = int(np.abs(a).max(initial=0))
    bmax = int(np.abs(b).max(initial=0))
    if amax * bmax * inner < _FLOAT_EXACT:
        prod = a.astype(np.float64) @ b.astype(np.float64)
        return balance(np.rint(prod).astype(np.int64), q)

    if bmax <= 1:
        # b is small (e.g. a bit decomposition): split only a.
        bits = max(1, int(np.floor(np.log2(_FLOAT_EXACT / (inner * max(bmax, 1))))) - 1)
        bf = b.astype(np.float64)
        acc = np.zeros(a.shape[:-1] + b.shape[1:], dtype=np.int64)
        for i, limb in enumerate(_limb_split(residue(a, q), bits, k)):
            part = np.rint(limb @ bf).astype(np.int64)
            acc += part << np.int64(i * bits)
        return balance(acc, q)

    bits = max(1, int(np.floor(np.log2(_FLOAT_EXACT / inner) / 2)) - 1)
    a_limbs = _limb_split(residue(a, q), bits, k)
    b_limbs = _limb_split(residue(b, q), bits, k)
    acc = np.zeros(a.shape[:-1] + b.shape[1:], dtype=np.int64)
    for i, al in enumerate(a_limbs):
        for j, bl in enumerate(b_limbs):
            shift = (i + j) * bits
            if shift >= k:
                continue
            part = np.rint(al @ bl).astype(np.int64)
            acc += part << np.int64(shift)
    return balance(acc, q)


class _ModArray:
    """Shared behaviour of ModVector and ModMatrix: a read-only balanced array."""

    __slots__ = ("_data", "q")
    _ndim = 0

    def __init__(self, data, q: int):
        check_modulus(q)
        arr = balance(np.asarray(data, dtype=np.int64), q)
        if arr.ndim != self._ndim:
            raise DimensionError(f"{type(self).__name__} needs {self._ndim}-d data, got {arr.ndim}-d")
        arr = np.array(arr, dtype=np.int64)
        arr.setflags(write=False)
        self._data = arr
        self.q = int(q)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple:
        return self._data.shape

    def residues(self) -> np.ndarray:
        return residue(self._data, self.q)

    def norm_inf(self) -> int:
        return int(np.abs(self._data).max(initial=0))

    def norm2(self) -> float:
        return float(np.sqrt(np.sum(self._data.astype(np.float64) ** 2)))

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, _ModArray):
            if other.q != self.q:
                raise DimensionError(f"moduli differ: {self.q} vs {other.q}")
            if other.shape != self.shape:
                raise DimensionError(f"shapes differ: {self.shape} vs {other.shape}")
            return other._data
        return np.asarray(other, dtype=np.int64)

    def _wrap(self, data):
        cls = ModVector if np.ndim(data) == 1 else ModMatrix
        return cls(data, self.q)

    def __add__(self, other):
        return self._wrap(self._data + self._coerce(other))

    def __sub__(self, other):
        return self._wrap(self._data - self._coerce(other))

    def __neg__(self):
        return self._wrap(-self._data)

    def __mul__(self, scalar):
        if isinstance(scalar, _ModArray):
            raise TypeError("use @ for products of arrays")
        return self._wrap(self._data * np.int64(balance(int(scalar), self.q)))

    __rmul__ = __mul__

    def __matmul__(self, other):
        if not isinstance(other, _ModArray):
            other_data = np.asarray(other, dtype=np.int64)
        else:
            if other.q != self.q:
                raise DimensionError(f"moduli differ: {self.q} vs {other.q}")
            other_data = other._data
        left = self._data if self._data.ndim == 2 else self._data[None, :]
        right = other_data if other_data.ndim == 2 else other_data[:, None]
        prod = matmul_mod(left, right, self.q)
        if self._data.ndim == 1 and other_data.ndim == 1:
            return int(prod[0, 0])
        if self._data.ndim == 1:
            return ModVector(prod[0], self.q)
        if other_data.ndim == 1:
            return ModVector(prod[:, 0], self.q)
        return ModMatrix(prod, self.q)

    def __eq__(self, other):
        return (
            isinstance(other, _ModArray)
            and other.q == self.q
            and other.shape == self.shape
            and bool(np.array_equal(other._data, self._data))
        )

    def __hash__(self):
        return hash((self.q, self.shape, self._data.tobytes()))

    def __len__(self):
        return self._data.shape[0]

    def __getitem__(self, idx):
        out = self._data[idx]
        if np.ndim(out) == 0:
            return int(out)
        return self._wrap(out)

    def __repr__(self):
        return f"{type(self).__name__}(q={self.q}, {self._data.tolist()!r})"

    def to_bytes(self) -> bytes:
        """Canonical encoding: (q, rows, cols) as u64 LE, then int64 LE entries."""
        rows = self._data.shape[0]
        cols = 1 if self._data.ndim == 1 else self._data.shape[1]
        header = struct.pack("<QQQ", self.q, rows, cols)
        return header + self._data.astype("<i8").tobytes()


class ModVector(_ModArray):
    """Vector over Z_q in balanced representation."""

    __slots__ = ()
    _ndim = 1

    @classmethod
    def zeros(cls, length: int, q: int) -> "ModVector":
        return cls(np.zeros(length, dtype=np.int64), q)


class ModMatrix(_ModArray):
    """Matrix over Z_q in balanced representation, row-major."""

    __slots__ = ()
    _ndim = 2

    @classmethod
    def zeros(cls, rows: int, cols: int, q: int) -> "ModMatrix":
        return cls(np.zeros((rows, cols), dtype=np.int64), q)

    @classmethod
    def identity(cls, size: int, q: int) -> "ModMatrix":
        return cls(np.eye(size, dtype=np.int64), q)

    @property
    def T(self) -> "ModMatrix":
        return ModMatrix(self._data.T, self.q)

    def column(self, j: int) -> ModVector:
        return ModVector(self._data[:, j], self.q)


ModArray = Union[ModVector, ModMatrix]


def from_bytes(blob: bytes) -> ModArray:
    """Inverse of ``to_bytes``; a one-column payload decodes to ModVector."""
    if len(blob) < 24:
        raise DimensionError("truncated header")
    q, rows, cols = struct.unpack_from("<QQQ", blob, 0)
    expected = 24 + 8 * rows * cols
    if len(blob) != expected:
        raise DimensionError(f"payload length {len(blob)} != {expected}")
    data = np.frombuffer(blob, dtype="<i8", offset=24).astype(np.int64)
    if cols == 1:
        return ModVector(data, q)
    return ModMatrix(data.reshape(rows, cols), q)


def gadget_width(rows: int, q: int) -> int:
    return rows * check_modulus(q)


def gadget_matrix(rows: int, q: int) -> np.ndarray:
    """G as a dense int64 array of shape rows x (rows * log2 q)."""
    k = check_modulus(q)
    g = np.zeros((rows, rows * k), dtype=np.int64)
    powers = balance(np.int64(1) << np.arange(k, dtype=np.int64), q)
    for i in range(rows):
        g[i, i * k:(i + 1) * k] = powers
    return g


def gadget_apply(a, q: int, rows: int | None = None) -> np.ndarray:
    """G applied to a length-N vector or an N x c matrix; defined for any integer input."""
    k = check_modulus(q)
    arr = np.asarray(a.data if isinstance(a, _ModArray) else a, dtype=np.int64)
    n_bits = arr.shape[0]
    if rows is None:
        if n_bits % k:
            raise DimensionError(f"length {n_bits} is not a multiple of log2 q = {k}")
        rows = n_bits // k
    if n_bits != rows * k:
        raise DimensionError(f"expected {rows * k} entries, got {n_bits}")
    powers = np.int64(1) << np.arange(k, dtype=np.int64)
    blocks = arr.reshape((rows, k) + arr.shape[1:])
    total = np.tensordot(powers, blocks, axes=([0], [1]))
    return balance(total, q)


def gadget_bits(v, q: int) -> np.ndarray:
    """Bits of the residue of each entry as uint8, little-endian, entry-major.

    A vector of length r maps to r*log2 q bits; a matrix decomposes each
    column, giving shape (r*log2 q, cols).
    """
    k = check_modulus(q)
    arr = np.asarray(v.data if isinstance(v, _ModArray) else v, dtype=np.int64)
    res = np.ascontiguousarray(residue(arr, q).astype("<u8"))
    raw = np.unpackbits(res.view(np.uint8).reshape(res.shape + (8,)), axis=-1, bitorder="little")
    raw = raw[..., :k]
    if res.ndim == 1:
        return raw.reshape(-1)
    return np.ascontiguousarray(raw.transpose(0, 2, 1)).reshape(res.shape[0] * k, res.shape[1])


def gadget_decompose(v, q: int) -> np.ndarray:
    """G^-1 as int64 0/1 entries (see ``gadget_bits`` for the layout)."""
    return gadget_bits(v, q).astype(np.int64)


def gadget_decompose_float(c: np.ndarray, q: int) -> np.ndarray:
    """Matrix G^-1 as float64, ready for the BLAS path of ``matmul_mod``."""
    return gadget_bits(c, q).astype(np.float64)
