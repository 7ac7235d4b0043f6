"""DualHE: matrix ciphertexts A'S + E + mu G with NAND as the homomorphic gate.

Each ciphertext carries ``noise_level`` d, a certificate that its error
matrix satisfies ||E||_inf <= beta_init (N+1)^d.  Trivial encryptions of
public constants (0 and G) have no error at all and carry level ``None``.
Gates refuse to produce a level above ``params.depth_budget`` unless the
caller explicitly opts out (used only by diagnostics).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import gaussian_sample
from .dualenc import DualCiphertext, PublicKey, dual_decrypt
from .errors import NoiseBudgetError
from .params import Params
from .ringmod import ModVector, balance, gadget_decompose, gadget_decompose_float, gadget_matrix, matmul_mod


@dataclass(frozen=True, eq=False)
class GswTrace:
    """Test hook: the randomness behind a ciphertext, C = A'S + E + mu G."""

    S: np.ndarray
    E: np.ndarray
    mu: int


@dataclass(frozen=True, eq=False)
class GswCiphertext:
    C: np.ndarray
    noise_level: int | None
    params: Params
    trace: GswTrace | None = field(default=None, repr=False)

    def __post_init__(self):
        self.C.setflags(write=False)

    @property
    def trivial(self) -> bool:
        return self.noise_level is None


_GADGETS: dict = {}


def _gadget(params: Params) -> np.ndarray:
    key = (params.q, params.m)
    if key not in _GADGETS:
        g = gadget_matrix(params.m + 1, params.q)
        g.setflags(write=False)
        _GADGETS[key] = g
    return _GADGETS[key]


def gsw_encrypt(pk: PublicKey, mu: int, rng: np.random.Generator | None = None, *, S=None, E=None,
                keep_trace: bool = False) -> GswCiphertext:
    """Fresh encryption at level 0.  Supplying S and E (both zero) gives the noiseless test form."""
    if mu not in (0, 1):
        raise ValueError(f"mu must be a bit, got {mu!r}")
    params = pk.params
    q, n, N = params.q, params.n, params.N
    if S is None:
        S = rng.integers(0, q, size=(n, N), dtype=np.int64)
    if E is None:
        E = gaussian_sample(params.beta_init, q, N, rng, size=params.m + 1)
    S = balance(np.asarray(S, dtype=np.int64), q)
    E = np.asarray(E, dtype=np.int64)
    C = matmul_mod(pk.A.data, S, q) + E
    if mu:
        C = C + _gadget(params)
    level = None if not E.any() and not S.any() else 0
    trace = GswTrace(S, E, mu) if keep_trace else None
    return GswCiphertext(balance(C, q), level, params, trace)


def gsw_trivial(mu: int, params: Params) -> GswCiphertext:
    """Noiseless encryption of a public bit: 0 or G."""
    C = _gadget(params).copy() if mu else np.zeros((params.m + 1, params.N), dtype=np.int64)
    trace = GswTrace(np.zeros((params.n, params.N), np.int64), np.zeros_like(C), mu)
    return GswCiphertext(balance(C, params.q), None, params, trace)


def _combined_level(a: GswCiphertext, b: GswCiphertext) -> int | None:
    if a.noise_level is None:
        return b.noise_level
    if b.noise_level is None:
        return a.noise_level
    return max(a.noise_level, b.noise_level) + 1


def _check_budget(level: int | None, params: Params, enforce: bool):
    if enforce and level is not None and level > params.depth_budget:
        raise NoiseBudgetError(
            f"level {level} exceeds budget {params.depth_budget} "
            f"(beta_init (N+1)^{level} >= q/(4(m+1)))")


def gadget_product(c0: GswCiphertext, c1: GswCiphertext) -> np.ndarray:
    """C0 G^-1(C1) mod q."""
    q = c0.params.q
    if (q // 2) * c0.C.shape[1] < 2 ** 53:
        # balanced entries times bits: every dot product is an exact float
        prod = c0.C.astype(np.float64) @ gadget_decompose_float(c1.C, q)
        return balance(np.rint(prod).astype(np.int64), q)
    return matmul_mod(c0.C, gadget_decompose(c1.C, q), q)


def _trace_product(c0: GswCiphertext, c1: GswCiphertext, sign: int) -> GswTrace | None:
    """Randomness of sign * (C0 G^-1(C1)) + (1-sign)/2 * G, i.e. of AND (sign=+1) or NAND (sign=-1)."""
    if c0.trace is None or c1.trace is None:
        return None
    q = c0.params.q
    bits = gadget_decompose(c1.C, q)
    t0, t1 = c0.trace, c1.trace
    S = balance(sign * (matmul_mod(t0.S, bits, q) + t0.mu * t1.S), q)
    if int(np.abs(t0.E).max(initial=0)) * bits.shape[0] < 2 ** 53:
        spread = np.rint(t0.E.astype(np.float64) @ bits.astype(np.float64)).astype(np.int64)
    else:
        spread = t0.E @ bits
    E = sign * (spread + t0.mu * t1.E)
    mu = t0.mu * t1.mu if sign > 0 else 1 - t0.mu * t1.mu
    return GswTrace(S, E, mu)


def eval_nand(c0: GswCiphertext, c1: GswCiphertext, *, enforce_budget: bool = True) -> GswCiphertext:
    """G - C0 G^-1(C1), an encryption of 1 - mu0 mu1."""
    params = c0.params
    level = _combined_level(c0, c1)
    _check_budget(level, params, enforce_budget)
    C = balance(_gadget(params) - gadget_product(c0, c1), params.q)
    return GswCiphertext(C, level, params, _trace_product(c0, c1, -1))


def eval_and(c0: GswCiphertext, c1: GswCiphertext, *, enforce_budget: bool = True) -> GswCiphertext:
    """C0 G^-1(C1): NOT of NAND, where the NOT (G - C) adds no noise."""
    params = c0.params
    level = _combined_level(c0, c1)
    _check_budget(level, params, enforce_budget)
    return GswCiphertext(gadget_product(c0, c1), level, params, _trace_product(c0, c1, +1))


def eval_not(c: GswCiphertext) -> GswCiphertext:
    params = c.params
    trace = None
    if c.trace is not None:
        trace = GswTrace(balance(-c.trace.S, params.q), -c.trace.E, 1 - c.trace.mu)
    return GswCiphertext(balance(_gadget(params) - c.C, params.q), c.noise_level, params, trace)


def convert(c: GswCiphertext) -> DualCiphertext:
    """Column N of C, a Dual ciphertext of the same bit."""
    return DualCiphertext(ModVector(c.C[:, -1], c.params.q))


def gsw_decrypt(sk: ModVector, c: GswCiphertext) -> int:
    return dual_decrypt(sk, convert(c))


def gsw_decrypt_gadget(sk: ModVector, c: GswCiphertext) -> int:
    """Decryption without Convert: b' = sk^T C G^-1((q/2) u) with u the last unit vector."""
    params = c.params
    q = params.q
    u = np.zeros(params.m + 1, dtype=np.int64)
    u[-1] = q // 2
    selector = gadget_decompose(u, q)
    col = matmul_mod(c.C, selector, q)
    b = int(balance(int(matmul_mod(sk.data[None, :], col, q)[0]), q))
    return 0 if abs(b) <= q // 4 else 1


def error_of(c: GswCiphertext, pk: PublicKey) -> np.ndarray:
    """E recomputed from the trace: C - A'S - mu G (requires the test hook)."""
    if c.trace is None:
        raise ValueError("ciphertext carries no trace")
    params = c.params
    rebuilt = matmul_mod(pk.A.data, c.trace.S, params.q) + c.trace.mu * _gadget(params)
    return balance(c.C - rebuilt, params.q)


@dataclass(frozen=True)
class ParamReport:
    name: str
    trapdoor_ok: bool
    rows_ok: bool
    beta_ok: bool
    classical_ok: bool
    quantum_ok: bool
    beta_f: int
    depth_budget: int
    decrypt_threshold: float
    eta_c: int
    eta: int
    dec_circuit_depth: int | None
    pipeline_depth: int | None
    compiled_ok: bool | None
    claw_width: float
    inversion_radius: int
    claw_within_radius: bool
    exact_capable: bool
    register_width: int
    mode: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    def lines(self) -> list[str]:
        yes = {True: "pass", False: "FAIL", None: "n/a"}
        out = [
            f"preset            {self.name}",
            f"rows m>=n log q   {yes[self.rows_ok]}",
            f"beta_init>=2vn    {yes[self.beta_ok]}",
            f"classical eta_c={self.eta_c:<3d} {yes[self.classical_ok]}",
            f"quantum eta=  {self.eta:<5d} {yes[self.quantum_ok]}",
            f"beta_f            {self.beta_f}",
            f"depth budget      {self.depth_budget}",
            f"dec circuit depth {self.dec_circuit_depth}",
            f"pipeline depth    {self.pipeline_depth}",
            f"pipeline in budget {yes[self.compiled_ok]}",
            f"claw width        {self.claw_width} (inversion radius {self.inversion_radius})",
            f"register width w  {self.register_width}",
            f"mode              {self.mode}",
        ]
        return out


def _holds(params: Params, depth: int) -> bool:
    # beta_init (N+1)^depth < q / (4(m+1)), in exact integers
    return 4 * (params.m + 1) * params.noise_bound(depth) < params.q


def validate_params(params: Params, measure_depth: bool = True) -> ParamReport:
    """Evaluate the parameter conditions and report the compiled circuit depths."""
    rows_ok = params.m >= params.n * params.k
    beta_ok = params.beta_init ** 2 >= 4 * params.n
    classical_ok = _holds(params, params.eta_c)
    quantum_ok = _holds(params, params.eta_c + params.eta)
    dec_depth = pipe_depth = None
    compiled_ok = None
    if measure_depth:
        from .boolcirc import compile_keyupdate_suite

        suite = compile_keyupdate_suite(params)
        dec_depth = suite.depths["dec"]
        pipe_depth = suite.depths["pipeline"]
        compiled_ok = _holds(params, pipe_depth)
    claw = params.claw_bound
    exact_capable = 2 + params.register_width <= 24
    if rows_ok and beta_ok and classical_ok and quantum_ok:
        mode = "sampled encrypted CNOT, oracle key updates"
    elif exact_capable:
        mode = "exact-mode only"
    else:
        mode = "classical only"
    return ParamReport(
        name=params.name,
        trapdoor_ok=rows_ok and beta_ok,
        rows_ok=rows_ok,
        beta_ok=beta_ok,
        classical_ok=classical_ok,
        quantum_ok=quantum_ok,
        beta_f=params.beta_f,
        depth_budget=params.depth_budget,
        decrypt_threshold=params.decrypt_threshold,
        eta_c=params.eta_c,
        eta=params.eta,
        dec_circuit_depth=dec_depth,
        pipeline_depth=pipe_depth,
        compiled_ok=compiled_ok,
        claw_width=claw,
        inversion_radius=params.inversion_radius,
        claw_within_radius=claw <= params.inversion_radius,
        exact_capable=exact_capable,
        register_width=params.register_width,
        mode=mode,
    )
