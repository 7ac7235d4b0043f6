"""Gadget-based lattice trapdoors.

``gen_trap`` builds A = [Abar ; G_n - R Abar] where Abar is uniform
(mbar x n) and R is a small ternary (n log q x mbar) matrix.  Given
b = A s + e, the combination v = b_bot + R b_top equals G_n s + (e_bot +
R e_top), so s falls out of bit-by-bit rounding as long as every entry of
the combined error stays strictly below q/4.  The error is then
e = b - A s, checked against the caller's bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, InversionFailure
from .ringmod import ModMatrix, ModVector, balance, check_modulus, gadget_matrix, matmul_mod, residue


@dataclass(frozen=True)
class TrapdoorMatrix:
    """A (m x n) together with its trapdoor R (n log q x mbar)."""

    A: ModMatrix
    R: np.ndarray
    q: int
    n: int
    m: int

    @property
    def k(self) -> int:
        return self.q.bit_length() - 1

    @property
    def trap_rows(self) -> int:
        return self.m - self.n * self.k

    @property
    def radius_inf(self) -> int:
        """Largest t such that ||e||_inf <= t always decodes for this R."""
        row_l1 = np.abs(self.R).sum(axis=1) if self.R.size else np.zeros(self.n * self.k)
        return int((self.q // 4 - 1) // (1 + int(row_l1.max(initial=0))))

    @property
    def radius_l2(self) -> float:
        """Largest l2 radius (strictly) guaranteed to decode, by Cauchy-Schwarz."""
        row_l2 = np.sqrt((self.R.astype(np.float64) ** 2).sum(axis=1) + 1.0) if self.R.size else np.ones(1)
        return (self.q / 4) / float(row_l2.max())

    @property
    def trapdoor_constant(self) -> float:
        return self.q / (self.radius_l2 * math.sqrt(self.n * self.k))

    def trapdoor_bits(self) -> tuple[np.ndarray, np.ndarray]:
        """(R+, R-) as 0/1 matrices with R = R+ - R-."""
        return (self.R > 0).astype(np.int64), (self.R < 0).astype(np.int64)


def gen_trap(n: int, m: int, q: int, rng: np.random.Generator) -> TrapdoorMatrix:
    k = check_modulus(q)
    mbar = m - n * k
    if n < 1 or mbar < 0:
        raise ConfigurationError(f"need m >= n log q (m={m}, n={n}, log q={k})")
    abar = rng.integers(0, q, size=(mbar, n), dtype=np.int64, endpoint=False) if mbar else np.zeros((0, n), np.int64)
    if mbar:
        R = rng.integers(-1, 2, size=(n * k, mbar), dtype=np.int64)
        # keep every row nonzero so each bottom row actually mixes in Abar
        for i in np.flatnonzero(~R.any(axis=1)):
            R[i, rng.integers(0, mbar)] = rng.choice([-1, 1])
    else:
        R = np.zeros((n * k, 0), dtype=np.int64)
    g_n = gadget_matrix(n, q).T  # (n k) x n
    bottom = balance(g_n - matmul_mod(R, abar, q), q) if mbar else balance(g_n, q)
    A = ModMatrix(np.vstack([abar, bottom]), q)
    R.setflags(write=False)
    return TrapdoorMatrix(A=A, R=R, q=q, n=n, m=m)


def _decode_gadget(v: np.ndarray, n: int, q: int) -> np.ndarray:
    """Recover s from v = G_n s + err with |err_i| < q/4, one bit at a time."""
    k = check_modulus(q)
    s = np.zeros(n, dtype=np.int64)
    quarter = np.int64(q // 4)
    for i in range(n):
        block = v[i * k:(i + 1) * k]
        acc = 0
        for t in range(k):
            j = k - 1 - t
            # row j carries 2^j s; subtracting the known low bits leaves 2^(k-1) s_t + err
            shifted = int(residue(block[j] - (acc << j) + quarter, q))
            bit = shifted >> (k - 1)
            acc |= bit << t
        s[i] = acc
    return balance(s, q)


def invert(td: TrapdoorMatrix, b, bound: float | None = None) -> tuple[ModVector, ModVector]:
    """Return (s, e) with b = A s + e and ||e||_inf <= bound.

    ``bound`` defaults to the trapdoor's guaranteed radius.  Raises
    InversionFailure when the decoded error is out of bound, which is how a
    vector with no nearby lattice point is detected.
    """
    q = td.q
    vec = np.asarray(b.data if isinstance(b, ModVector) else b, dtype=np.int64)
    if vec.shape != (td.m,):
        raise DimensionError(f"expected length {td.m}, got {vec.shape}")
    mbar = td.trap_rows
    top, bot = vec[:mbar], vec[mbar:]
    v = bot + (matmul_mod(td.R, top, q) if mbar else 0)
    s = _decode_gadget(balance(v, q), td.n, q)
    e = balance(vec - matmul_mod(td.A.data, s, q), q)
    limit = td.radius_inf if bound is None else bound
    if np.abs(e).max(initial=0) > limit:
        raise InversionFailure(f"decoded error norm {int(np.abs(e).max())} exceeds bound {limit}")
    if not np.array_equal(balance(matmul_mod(td.A.data, s, q) + e, q), balance(vec, q)):
        raise InversionFailure("consistency recheck failed")
    return ModVector(s, q), ModVector(e, q)


def calibrate(td: TrapdoorMatrix, rng: np.random.Generator, trials: int = 1000) -> dict:
    """Invert ``trials`` samples whose error sits on the inf-norm radius; report failures."""
    t = td.radius_inf
    failures = 0
    for _ in range(trials):
        s = rng.integers(0, td.q, size=td.n, dtype=np.int64)
        e = rng.choice([-t, t], size=td.m) if t else np.zeros(td.m, dtype=np.int64)
        b = balance(matmul_mod(td.A.data, s, td.q) + e, td.q)
        try:
            s2, e2 = invert(td, b)
            if not (np.array_equal(s2.data, balance(s, td.q)) and np.array_equal(e2.data, e)):
                failures += 1
        except InversionFailure:
            failures += 1
    return {
        "radius_inf": t,
        "radius_l2": td.radius_l2,
        "trapdoor_constant": td.trapdoor_constant,
        "trials": trials,
        "failures": failures,
    }
