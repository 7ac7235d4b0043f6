"""Dual: LWE bit encryption with additive XOR and trapdoor randomness recovery.

Public key A' is the trapdoor matrix A with one extra row e_sk^T A, so the
secret vector sk = (-e_sk, 1) annihilates it.  A ciphertext of mu is
A' s + e + (0, ..., 0, mu q/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import gaussian_sample
from .errors import DimensionError, InversionFailure
from .params import Params
from .ringmod import ModMatrix, ModVector, balance, matmul_mod
from .trapdoor import TrapdoorMatrix, gen_trap, invert


@dataclass(frozen=True)
class PublicKey:
    A: ModMatrix  # (m+1) x n
    params: Params

    @property
    def q(self) -> int:
        return self.params.q


@dataclass(frozen=True)
class DualKeys:
    public: PublicKey
    sk: ModVector  # (-e_sk, 1)
    e_sk: np.ndarray  # 0/1, length m
    td: TrapdoorMatrix

    @property
    def pk(self) -> PublicKey:
        return self.public

    @property
    def params(self) -> Params:
        return self.public.params


@dataclass(frozen=True)
class DualCiphertext:
    c: ModVector

    @property
    def q(self) -> int:
        return self.c.q

    def __add__(self, other: "DualCiphertext") -> "DualCiphertext":
        return hom_xor(self, other)


def dual_keygen(params: Params, rng: np.random.Generator) -> DualKeys:
    q, n, m = params.q, params.n, params.m
    td = gen_trap(n, m, q, rng)
    e_sk = rng.integers(0, 2, size=m, dtype=np.int64)
    last = matmul_mod(e_sk[None, :], td.A.data, q)
    a_prime = ModMatrix(np.vstack([td.A.data, last]), q)
    sk = ModVector(np.concatenate([-e_sk, [1]]), q)
    e_sk.setflags(write=False)
    return DualKeys(public=PublicKey(a_prime, params), sk=sk, e_sk=e_sk, td=td)


def sample_randomness(params: Params, rng: np.random.Generator, width: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(s, e) with s uniform on Z_q^n and e from the truncated Gaussian of the given width."""
    s = rng.integers(0, params.q, size=params.n, dtype=np.int64)
    B = params.beta_init if width is None else width
    e = gaussian_sample(B, params.q, params.m + 1, rng)
    return balance(s, params.q), e


def dual_encrypt(pk: PublicKey, mu: int, rng: np.random.Generator | None = None, *, s=None, e=None) -> DualCiphertext:
    """A' s + e + (0,..,0, mu q/2); deterministic when (s, e) are supplied."""
    if mu not in (0, 1):
        raise ValueError(f"mu must be a bit, got {mu!r}")
    params = pk.params
    if s is None or e is None:
        if rng is None:
            raise ValueError("rng required when randomness is not supplied")
        s0, e0 = sample_randomness(params, rng)
        s = s0 if s is None else s
        e = e0 if e is None else e
    s = np.asarray(s, dtype=np.int64)
    e = np.asarray(e, dtype=np.int64)
    if s.shape != (params.n,) or e.shape != (params.m + 1,):
        raise DimensionError("randomness has the wrong shape")
    c = matmul_mod(pk.A.data, s, pk.q) + e
    c[-1] += mu * (pk.q // 2)
    return DualCiphertext(ModVector(c, pk.q))


def decode_bit(b: int, q: int) -> int:
    """0 when |b| <= q/4 in balanced form (ties go to 0), else 1."""
    return 0 if abs(balance(int(b), q)) <= q // 4 else 1


def dual_decrypt(sk: ModVector, ct: DualCiphertext) -> int:
    return decode_bit(sk @ ct.c, ct.q)


def hom_xor(c1: DualCiphertext, c2: DualCiphertext) -> DualCiphertext:
    return DualCiphertext(c1.c + c2.c)


def xor_invert(csum: DualCiphertext, c2: DualCiphertext) -> DualCiphertext:
    return DualCiphertext(csum.c - c2.c)


def trivial_ciphertext(mu: int, params: Params) -> DualCiphertext:
    """Noiseless public encryption (0, .., 0, mu q/2)."""
    c = np.zeros(params.m + 1, dtype=np.int64)
    c[-1] = mu * (params.q // 2)
    return DualCiphertext(ModVector(c, params.q))


def recover_randomness(keys: DualKeys, ct: DualCiphertext | ModVector, bound: float | None = None) -> tuple[int, np.ndarray, np.ndarray]:
    """(mu, s, e) with c = A' s + e + (0,..,mu q/2) and ||e||_inf <= bound.

    The top m rows are inverted with the trapdoor; mu is read off the
    residual of the last row by the decryption rule.
    """
    c = ct.c if isinstance(ct, DualCiphertext) else ct
    q = keys.public.q
    vec = np.asarray(c.data, dtype=np.int64)
    limit = keys.td.radius_inf if bound is None else bound
    s, e_top = invert(keys.td, vec[:-1], bound=limit)
    a_last = keys.public.A.data[-1]
    r_last = int(balance(int(vec[-1]) - int(matmul_mod(a_last[None, :], s.data, q)[0]), q))
    mu = decode_bit(r_last, q)
    e_last = int(balance(r_last - mu * (q // 2), q))
    if abs(e_last) > limit:
        raise InversionFailure(f"last-row error {e_last} exceeds bound {limit}")
    e = np.concatenate([e_top.data, [e_last]]).astype(np.int64)
    rebuilt = dual_encrypt(keys.public, mu, s=s.data, e=e)
    if rebuilt.c != c:
        raise InversionFailure("consistency recheck failed")
    return mu, s.data.copy(), e
