"""Leveled quantum homomorphic encryption: a Pauli one-time pad whose keys are DualHE-encrypted.

A ciphertext is the padded state Z^z X^x |psi> plus encryptions of every
(z_j, x_j).  Clifford gates update the encrypted keys with free XORs and
swaps.  A Toffoli updates them with AND products and leaves a Clifford
error C_zx, which three encrypted CNOTs remove; their Pauli corrections
are folded into the keys when the level ends, when every key moves from
pk_i to pk_{i+1}.

Key bits are kept as unreduced GF(2) sums of GSW ciphertexts (``EncBit``)
so XOR costs nothing and an AND is one level of gadget products.

Level-end updates come in two modes:

* ``oracle``: a trusted evaluator (``KeyOracle``, test-only) holding sk_i
  and the trapdoor computes the new keys in the clear and re-encrypts them
  under pk_{i+1}.
* ``faithful``: the compiled decryption / recovery / update circuits are
  evaluated homomorphically under pk_{i+1} using the encrypted key bundle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import serialize
from .boolcirc import KEY_SLOTS, compile_keyupdate_suite, eval_homomorphic, word_bits
from .dualenc import DualCiphertext, DualKeys, PublicKey, dual_keygen, trivial_ciphertext
from .dualfhe import GswCiphertext, convert, eval_and, gsw_decrypt, gsw_encrypt
from .enccnot import (ClawPair, CnotOutcome, ExactSimulation, collapsed_x_correction, encrypted_cnot_sampled,
                      find_claw, pauli_correction_bits)
from .errors import ConfigurationError, DimensionError
from .params import Params
from .qsim import H, GateOp, PauliFrame, StateVector, apply_gate, apply_matrix, parse_circuit
from .ringmod import ModMatrix, ModVector, balance, from_bytes
from .trapdoor import TrapdoorMatrix

CLIFFORD_GATES = ("X", "Z", "H", "K", "CNOT", "CPHASE")
BUNDLE_LIMIT = 64 << 20  # bytes; larger bundles are regenerated from a seed on demand


# -- encrypted key bits ------------------------------------------------------------

class EncBit:
    """const xor (sum of the bits encrypted by ``terms``).

    ``key`` is the chain level whose public key encrypted the terms; mixing
    bits under different keys is an error.
    """

    __slots__ = ("terms", "const", "key")

    def __init__(self, terms=(), const: int = 0, key: int | None = None):
        self.terms = tuple(terms)
        self.const = int(const) & 1
        self.key = key

    @classmethod
    def fresh(cls, pk: PublicKey, bit: int, rng, noiseless: bool = False, key: int | None = None) -> "EncBit":
        E = np.zeros((pk.params.m + 1, pk.params.N), dtype=np.int64) if noiseless else None
        return cls((gsw_encrypt(pk, int(bit), rng, E=E),), key=key)

    @staticmethod
    def _join_key(a, b):
        if a.key is not None and b.key is not None and a.key != b.key:
            raise ValueError(f"key bits under different keys ({a.key} and {b.key})")
        return a.key if a.key is not None else b.key

    @staticmethod
    def _cancel(terms) -> tuple:
        # x xor x = 0: identical objects cancel in pairs
        counts: dict = {}
        order = []
        for t in terms:
            if id(t) not in counts:
                order.append(t)
                counts[id(t)] = 0
            counts[id(t)] += 1
        return tuple(t for t in order if counts[id(t)] % 2)

    def __xor__(self, other):
        if isinstance(other, (int, np.integer)):
            return EncBit(self.terms, self.const ^ (int(other) & 1), self.key)
        return EncBit(self._cancel(self.terms + other.terms), self.const ^ other.const, self._join_key(self, other))

    __rxor__ = __xor__

    @property
    def level(self) -> int | None:
        levels = [t.noise_level for t in self.terms if t.noise_level is not None]
        return max(levels) if levels else None

    def to_dual(self, params: Params) -> DualCiphertext:
        """Dual encryption of the bit: sum of Convert(term) plus the constant."""
        acc = trivial_ciphertext(self.const, params)
        for t in self.terms:
            acc = acc + convert(t)
        return acc

    def decrypt(self, sk: ModVector) -> int:
        bit = self.const
        for t in self.terms:
            bit ^= gsw_decrypt(sk, t)
        return bit

    def __repr__(self):
        return f"EncBit(terms={len(self.terms)}, const={self.const}, key={self.key}, level={self.level})"


class Products:
    """AND of EncBits by distribution; each pairwise gadget product is computed once."""

    def __init__(self, enforce_budget: bool = True):
        self.enforce_budget = enforce_budget
        self._cache: dict = {}

    def _pair(self, a: GswCiphertext, b: GswCiphertext) -> GswCiphertext:
        if id(a) > id(b):
            a, b = b, a
        key = (id(a), id(b))
        if key not in self._cache:
            # the operands are stored too, which keeps their ids from being reused
            self._cache[key] = (a, b, eval_and(a, b, enforce_budget=self.enforce_budget))
        return self._cache[key][2]

    def and_(self, a: EncBit, b: EncBit) -> EncBit:
        terms = [self._pair(ta, tb) for ta in a.terms for tb in b.terms]
        if b.const:
            terms.extend(a.terms)
        if a.const:
            terms.extend(b.terms)
        return EncBit(EncBit._cancel(terms), a.const & b.const, EncBit._join_key(a, b))


# -- key chain -----------------------------------------------------------------------

@dataclass
class KeyBundle:
    """Enc_{pk_{i+1}} of sk_i (the bits of e_sk) and of the trapdoor bits R+, R-."""

    e_sk: list
    r_pos: list
    r_neg: list

    def ports(self) -> dict:
        return {"e_sk": self.e_sk, "r_pos": self.r_pos, "r_neg": self.r_neg}


def bundle_size(params: Params) -> int:
    count = params.m + 2 * params.n * params.k * params.trap_rows
    return count * (params.m + 1) * params.N * 8


class KeyOracle:
    """Test-only trusted evaluator: secret keys and trapdoors of levels 1..L."""

    def __init__(self, keys: list):
        self._keys = list(keys)

    def keys(self, level: int) -> DualKeys:
        return self._keys[level - 1]

    def decrypt(self, level: int, bit: EncBit) -> int:
        return bit.decrypt(self.keys(level).sk)

    def correction(self, level: int, outcome: CnotOutcome, c_hat: DualCiphertext) -> tuple[int, int]:
        """(z_corr, x_corr) of an encrypted-CNOT outcome, recomputed with the trapdoor."""
        keys = self.keys(level)
        params = keys.params
        sides = find_claw(keys, outcome.y, c_hat, params)
        if sides[0] is not None and sides[1] is not None:
            return pauli_correction_bits(ClawPair(*sides[0], *sides[1]), outcome.d, params)
        alive = 0 if sides[0] is not None else 1
        return 0, collapsed_x_correction(keys, alive=alive, mu_alive=sides[alive][0], c_hat=c_hat)


class EvalKeyChain:
    """Public keys pk_1..pk_{L+1} and the encrypted bundles for levels 1..L.

    Nothing secret about level L+1 is held here.  ``oracle`` is the
    test-only trusted evaluator; it also regenerates deferred bundles.
    """

    def __init__(self, params: Params, publics: list, seeds: list, bundles: dict | None = None,
                 oracle: KeyOracle | None = None):
        self.params = params
        self.publics = list(publics)
        self.seeds = [int(s) for s in seeds]
        self.bundles = dict(bundles or {})
        self.oracle = oracle
        self._noiseless: dict = {}

    @property
    def L(self) -> int:
        return len(self.publics) - 1

    def pk(self, level: int) -> PublicKey:
        if not 1 <= level <= self.L + 1:
            raise ConfigurationError(f"level {level} outside 1..{self.L + 1}")
        return self.publics[level - 1]

    def make_bundle(self, level: int, noiseless: bool = False) -> KeyBundle:
        if self.oracle is None:
            raise ConfigurationError("bundle is deferred and no key owner is attached")
        keys = self.oracle.keys(level)
        pk_next = self.pk(level + 1)
        rng = np.random.default_rng(self.seeds[level - 1])
        params = self.params
        E = np.zeros((params.m + 1, params.N), dtype=np.int64) if noiseless else None

        def enc(bits):
            return [gsw_encrypt(pk_next, int(b), rng, E=E) for b in np.asarray(bits).ravel()]

        r_pos, r_neg = keys.td.trapdoor_bits()
        return KeyBundle(enc(keys.e_sk), enc(r_pos), enc(r_neg))

    def bundle(self, level: int, noiseless: bool = False) -> KeyBundle:
        if noiseless:
            if level not in self._noiseless:
                self._noiseless[level] = self.make_bundle(level, noiseless=True)
            return self._noiseless[level]
        if level not in self.bundles:
            self.bundles[level] = self.make_bundle(level)
        return self.bundles[level]

    def to_bytes(self, include_oracle: bool = True) -> bytes:
        p = self.params
        meta = {"params": {k: v for k, v in p.as_dict().items()}, "L": self.L, "seeds": self.seeds,
                "bundles": sorted(self.bundles), "oracle": bool(include_oracle and self.oracle)}
        sections = [("meta", serialize.json_bytes(meta))]
        for i, pk in enumerate(self.publics, start=1):
            sections.append((f"pk{i}", pk.A.to_bytes()))
        for i in sorted(self.bundles):
            for port, cts in self.bundles[i].ports().items():
                for j, c in enumerate(cts):
                    sections.append((f"b{i}.{port}.{j}", _gsw_bytes(c)))
        if include_oracle and self.oracle is not None:
            for i in range(1, self.L + 1):
                k = self.oracle.keys(i)
                sections.append((f"o{i}.R", ModMatrix(k.td.R, p.q).to_bytes()))
                sections.append((f"o{i}.esk", ModVector(k.e_sk, p.q).to_bytes()))
        return serialize.pack("QHECHAIN", sections)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "EvalKeyChain":
        _, sections = serialize.unpack(blob, "QHECHAIN")
        data = dict(sections)
        meta = serialize.from_json_bytes(data["meta"])
        params = Params(**meta["params"])
        L = meta["L"]
        publics = []
        for i in range(1, L + 2):
            a = from_bytes(data[f"pk{i}"]).data.reshape(params.m + 1, params.n)
            publics.append(PublicKey(ModMatrix(a, params.q), params))
        bundles = {}
        for i in meta["bundles"]:
            ports = {}
            for port in ("e_sk", "r_pos", "r_neg"):
                j, items = 0, []
                while f"b{i}.{port}.{j}" in data:
                    items.append(_gsw_from_bytes(data[f"b{i}.{port}.{j}"], params))
                    j += 1
                ports[port] = items
            bundles[i] = KeyBundle(**ports)
        oracle = None
        if meta["oracle"]:
            keys = []
            for i in range(1, L + 1):
                R = from_bytes(data[f"o{i}.R"]).data.reshape(params.n * params.k, params.trap_rows)
                e_sk = from_bytes(data[f"o{i}.esk"]).data.copy()
                A = ModMatrix(publics[i - 1].A.data[:-1], params.q)
                td = TrapdoorMatrix(A, R, params.q, params.n, params.m)
                sk = ModVector(np.concatenate([-e_sk, [1]]), params.q)
                e_sk.setflags(write=False)
                keys.append(DualKeys(publics[i - 1], sk, e_sk, td))
            oracle = KeyOracle(keys)
        return cls(params, publics, meta["seeds"], bundles, oracle)


def _gsw_bytes(c: GswCiphertext) -> bytes:
    level = -1 if c.noise_level is None else c.noise_level
    return level.to_bytes(8, "little", signed=True) + ModMatrix(c.C, c.params.q).to_bytes()


def _gsw_from_bytes(raw: bytes, params: Params) -> GswCiphertext:
    level = int.from_bytes(raw[:8], "little", signed=True)
    C = from_bytes(raw[8:]).data.reshape(params.m + 1, params.N).copy()
    return GswCiphertext(C, None if level < 0 else level, params)


def qhe_keygen(params: Params, L: int, rng: np.random.Generator, *, bundle_limit: int = BUNDLE_LIMIT):
    """(pk_1, chain, sk_{L+1}).  Bundles above ``bundle_limit`` bytes are deferred."""
    if L < 0:
        raise ConfigurationError("L must be non-negative")
    levels = [dual_keygen(params, rng) for _ in range(L + 1)]
    seeds = rng.integers(0, 2 ** 62, size=L).tolist()
    chain = EvalKeyChain(params, [k.public for k in levels], seeds, oracle=KeyOracle(levels[:L]))
    if bundle_size(params) <= bundle_limit:
        for i in range(1, L + 1):
            chain.bundles[i] = chain.make_bundle(i)
    return levels[0].public, chain, levels[L].sk


# -- ciphertexts ---------------------------------------------------------------------

@dataclass
class PendingCnot:
    """An encrypted CNOT whose correction (Z^a on one key slot, b on another) awaits the level end."""

    outcome: CnotOutcome
    c_hat: DualCiphertext
    z_slot: tuple  # ("z" | "x", qubit) receiving the z correction
    x_slot: tuple


@dataclass
class QheCiphertext:
    state: object  # np.ndarray of padded bits, or StateVector
    z: list
    x: list
    level: int
    pending: list = field(default_factory=list)
    collapsed: int = 0

    @property
    def num_qubits(self) -> int:
        return len(self.z)

    @property
    def classical(self) -> bool:
        return not isinstance(self.state, StateVector)

    def copy(self) -> "QheCiphertext":
        state = self.state.copy()
        return QheCiphertext(state, list(self.z), list(self.x), self.level, list(self.pending), self.collapsed)

    def quantum(self) -> "QheCiphertext":
        """Same ciphertext with the padded string promoted to a basis state."""
        if not self.classical:
            return self
        out = self.copy()
        out.state = StateVector.basis([int(b) for b in self.state])
        return out

    def to_bytes(self) -> bytes:
        if self.pending:
            raise ValueError("finish the level before serialising")
        meta = {"level": self.level, "n": self.num_qubits, "classical": self.classical,
                "z": [[len(b.terms), b.const] for b in self.z], "x": [[len(b.terms), b.const] for b in self.x],
                "collapsed": self.collapsed}
        if self.classical:
            state = np.asarray(self.state, dtype="<i8").tobytes()
        else:
            state = np.asarray(self.state.amplitudes, dtype="<c16").tobytes()
        sections = [("meta", serialize.json_bytes(meta)), ("state", state)]
        for name, bits in (("z", self.z), ("x", self.x)):
            for j, b in enumerate(bits):
                for t, term in enumerate(b.terms):
                    sections.append((f"{name}{j}.{t}", _gsw_bytes(term)))
        return serialize.pack("QHECT", sections)

    @classmethod
    def from_bytes(cls, blob: bytes, params: Params) -> "QheCiphertext":
        _, sections = serialize.unpack(blob, "QHECT")
        data = dict(sections)
        meta = serialize.from_json_bytes(data["meta"])
        if meta["classical"]:
            state = np.frombuffer(data["state"], dtype="<i8").astype(np.int64)
        else:
            state = StateVector(np.frombuffer(data["state"], dtype="<c16").astype(complex), meta["n"])
        keys = {}
        for name in ("z", "x"):
            keys[name] = [EncBit([_gsw_from_bytes(data[f"{name}{j}.{t}"], params) for t in range(count)], const,
                                 meta["level"])
                          for j, (count, const) in enumerate(meta[name])]
        return cls(state, keys["z"], keys["x"], meta["level"], [], meta["collapsed"])


def qhe_encrypt(pk: PublicKey, message, rng: np.random.Generator, *, noiseless: bool = False) -> QheCiphertext:
    """Pad with fresh uniform (z, x); a bit string stays classical as x xor m."""
    if isinstance(message, StateVector):
        n = message.num_qubits
        frame = PauliFrame.random(n, rng)
        state = frame.apply(message)
    else:
        bits = np.asarray(message, dtype=np.int64).ravel()
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("classical message must be bits")
        n = len(bits)
        frame = PauliFrame.random(n, rng)
        state = bits ^ frame.x
    z = [EncBit.fresh(pk, b, rng, noiseless, key=1) for b in frame.z]
    x = [EncBit.fresh(pk, b, rng, noiseless, key=1) for b in frame.x]
    return QheCiphertext(state, z, x, level=1)


def decrypt_keys(sk: ModVector, ct: QheCiphertext) -> tuple[np.ndarray, np.ndarray]:
    z = np.array([b.decrypt(sk) for b in ct.z], dtype=np.int64)
    x = np.array([b.decrypt(sk) for b in ct.x], dtype=np.int64)
    return z, x


def qhe_decrypt(sk: ModVector, ct: QheCiphertext):
    """x xor padded (classical, z is ignored) or the unpadded StateVector."""
    if ct.pending:
        raise ValueError("ciphertext has unfinished encrypted-CNOT corrections")
    if ct.classical:
        x = np.array([b.decrypt(sk) for b in ct.x], dtype=np.int64)
        return np.asarray(ct.state, dtype=np.int64) ^ x
    z, x = decrypt_keys(sk, ct)
    return PauliFrame(z, x).undo(ct.state)


# -- Clifford gates --------------------------------------------------------------------

def clifford_key_update(kind: str, qubits, z: list, x: list) -> None:
    """Update the key lists in place so that G Z^z X^x = Z^z' X^x' G up to phase.

    Works on anything with ``^``: plain bits or EncBits.  X and Z flip a
    key; H swaps (z, x); K sends z to z xor x; CNOT(c, t) sends z_c to
    z_c xor z_t and x_t to x_t xor x_c; CPHASE(a, b) sends z_a to
    z_a xor x_b and z_b to z_b xor x_a.
    """
    j = qubits[0]
    if kind == "X":
        x[j] = x[j] ^ 1
    elif kind == "Z":
        z[j] = z[j] ^ 1
    elif kind == "H":
        z[j], x[j] = x[j], z[j]
    elif kind == "K":
        z[j] = z[j] ^ x[j]
    elif kind == "CNOT":
        c, t = qubits
        z[c] = z[c] ^ z[t]
        x[t] = x[t] ^ x[c]
    elif kind == "CPHASE":
        a, b = qubits
        z[a], z[b] = z[a] ^ x[b], z[b] ^ x[a]
    else:
        raise ValueError(f"{kind} is not a supported Clifford gate")


def toffoli_key_update(qubits, z: list, x: list, and_=lambda a, b: a & b) -> None:
    """Keys after T Z^z X^x = C_zx P_zx T: the P_zx part, in place."""
    q1, q2, q3 = qubits
    z1, z2, z3, x1, x2, x3 = z[q1], z[q2], z[q3], x[q1], x[q2], x[q3]
    z[q1] = z1 ^ and_(x2, z3)
    z[q2] = z2 ^ and_(x1, z3)
    x[q3] = x3 ^ and_(x1, x2)


def apply_clifford(ct: QheCiphertext, gate: GateOp) -> QheCiphertext:
    """Apply the gate to the padded state and update the encrypted keys to match."""
    if gate.kind not in CLIFFORD_GATES:
        raise ValueError(f"{gate.kind} is not a supported Clifford gate")
    for q in gate.qubits:
        if not 0 <= q < ct.num_qubits:
            raise DimensionError(f"qubit {q} out of range for {ct.num_qubits} qubits")
    kind, qs = gate.kind, gate.qubits
    out = ct.quantum().copy() if kind in ("H", "K") else ct.copy()
    clifford_key_update(kind, qs, out.z, out.x)
    if kind in ("X", "Z"):
        return out
    if out.classical:
        bits = out.state.copy()
        if kind == "CNOT":
            bits[qs[1]] ^= bits[qs[0]]
        out.state = bits  # CPHASE only adds a global phase to a basis state
    else:
        out.state = apply_gate(out.state, gate)
    return out


# -- Toffoli ---------------------------------------------------------------------------

def _encrypted_cnot(ct: QheCiphertext, control: int, target: int, c_hat: DualCiphertext, keys: DualKeys,
                    rng, cnot_mode: str) -> CnotOutcome:
    params = keys.params
    if cnot_mode == "sampled":
        return encrypted_cnot_sampled(ct.state, c_hat, keys, params, rng, control, target)
    if cnot_mode == "exact":
        return ExactSimulation(ct.state, c_hat, keys, params, control, target).run(rng, 1)[0]
    raise ValueError(f"unknown encrypted-CNOT mode {cnot_mode!r}")


def apply_toffoli(ct: QheCiphertext, qubits, chain: EvalKeyChain, rng: np.random.Generator, *,
                  products: Products | None = None, cnot_mode: str = "sampled") -> QheCiphertext:
    """T on the padded state, keys updated by P_zx, and C_zx undone by three encrypted CNOTs.

    With T Z^z X^x = C_zx P_zx T, the new z-keys are (z1 + x2 z3, z2 + x1 z3, z3)
    and the new x-keys (x1, x2, x1 x2 + x3).  C_zx = CNOT_13^{x2} CNOT_23^{x1}
    CZ_12^{z3}; its factors commute and are undone in the order CZ, CNOT_23,
    CNOT_13, so each correction commutes with the encrypted CNOTs after it.
    The CZ factor is H_2 CNOT_12 H_2, which turns its correction Z_1 X_2
    into Z_1 Z_2.
    """
    q1, q2, q3 = (int(q) for q in qubits)
    if len({q1, q2, q3}) != 3:
        raise ValueError("Toffoli qubits must be distinct")
    level = ct.level
    if level > chain.L:
        raise ConfigurationError(f"no key level left for a Toffoli (level {level}, L={chain.L})")
    if chain.oracle is None:
        raise ConfigurationError("simulating the encrypted CNOT needs the level trapdoor (key oracle)")
    products = products or Products()
    params = chain.params
    keys = chain.oracle.keys(level)
    out = ct.quantum().copy()
    for b in out.z + out.x:
        if b.key not in (None, level):
            raise ValueError(f"key bit under key {b.key} in a level-{level} ciphertext")
    z, x = out.z, out.x
    z3, x1, x2 = z[q3], x[q1], x[q2]
    out.state = apply_gate(out.state, GateOp("TOFFOLI", (q1, q2, q3)))
    toffoli_key_update((q1, q2, q3), z, x, products.and_)

    steps = (
        (q1, q2, z3.to_dual(params), ("z", q1), ("z", q2), True),
        (q2, q3, x1.to_dual(params), ("z", q2), ("x", q3), False),
        (q1, q3, x2.to_dual(params), ("z", q1), ("x", q3), False),
    )
    for control, target, c_hat, z_slot, x_slot, conj in steps:
        if conj:
            out.state = apply_matrix(out.state, H, [target])
        outcome = _encrypted_cnot(out, control, target, c_hat, keys, rng, cnot_mode)
        out.state = outcome.out_state
        if conj:
            out.state = apply_matrix(out.state, H, [target])
        out.collapsed += int(outcome.collapsed)
        out.pending.append(PendingCnot(outcome, c_hat, z_slot, x_slot))
    return out


# -- key update at the end of a level --------------------------------------------------

def _pipeline_public(params: Params, pk: PublicKey, key_duals: dict, c_hat: DualCiphertext,
                     outcome: CnotOutcome) -> dict:
    k = params.k
    zero = np.zeros(params.m + 1, dtype=np.int64)
    public = {"a_pub": word_bits(pk.A.data, k), "c_hat": word_bits(c_hat.c.data, k),
              "y": word_bits(outcome.y.c.data, k), "d": np.asarray(outcome.d, dtype=np.int64)}
    for slot in KEY_SLOTS:
        vec = key_duals.get(slot)
        public[f"key_{slot}"] = word_bits(zero if vec is None else vec.c.data, k)
    return public


def keyupdate_pipeline(outcome: CnotOutcome, c_hat: DualCiphertext, keys: dict | None, chain: EvalKeyChain,
                       level: int, mode: str = "oracle", *, noiseless: bool = False,
                       enforce_budget: bool = True, rng: np.random.Generator | None = None) -> dict:
    """New control/target keys under pk_{level+1} after one encrypted CNOT.

    ``keys`` maps "z0", "z1", "x0", "x1" (control/target key bits under
    pk_level) to EncBits; missing slots are encryptions of 0.  The result
    maps the same names to GswCiphertexts with z0' = z0 xor d.(x0 xor x1)
    and x1' = x1 xor mu0.
    """
    params = chain.params
    keys = keys or {}
    pk_next = chain.pk(level + 1)
    if mode == "oracle":
        if chain.oracle is None:
            raise ConfigurationError("oracle mode needs the key oracle")
        rng = rng if rng is not None else np.random.default_rng()
        vals = {s: (chain.oracle.decrypt(level, keys[s]) if s in keys else 0) for s in KEY_SLOTS}
        zc, xc = chain.oracle.correction(level, outcome, c_hat)
        vals["z0"] ^= zc
        vals["x1"] ^= xc
        E = np.zeros((params.m + 1, params.N), dtype=np.int64) if noiseless else None
        return {s: gsw_encrypt(pk_next, vals[s], rng, E=E) for s in KEY_SLOTS}
    if mode == "faithful":
        suite = compile_keyupdate_suite(params)
        duals = {s: keys[s].to_dual(params) for s in keys}
        public = _pipeline_public(params, chain.pk(level), duals, c_hat, outcome)
        bundle = chain.bundle(level, noiseless=noiseless)
        out = eval_homomorphic(suite.pipeline, bundle.ports(), public, enforce_budget=enforce_budget,
                               params=params)
        return {s: out[s][0] for s in KEY_SLOTS}
    raise ValueError(f"unknown key-update mode {mode!r}")


def switch_key(bit: EncBit, chain: EvalKeyChain, level: int, *, noiseless: bool = False,
               enforce_budget: bool = True) -> GswCiphertext:
    """Homomorphic decryption of a pk_level key bit under pk_{level+1}."""
    params = chain.params
    suite = compile_keyupdate_suite(params)
    c = word_bits(bit.to_dual(params).c.data, params.k)
    bundle = chain.bundle(level, noiseless=noiseless)
    out = eval_homomorphic(suite.dec_circuit, {"e_sk": bundle.e_sk}, {"c": c},
                           enforce_budget=enforce_budget, params=params)
    return out["mu"][0]


def finish_level(ct: QheCiphertext, chain: EvalKeyChain, mode: str = "oracle", rng: np.random.Generator | None = None,
                 *, noiseless: bool = False, enforce_budget: bool = True) -> QheCiphertext:
    """Fold the pending corrections into the keys and move every key to pk_{level+1}."""
    level = ct.level
    if level > chain.L:
        raise ConfigurationError(f"already at the last level {level}")
    out = ct.copy()
    n = out.num_qubits
    if mode == "oracle":
        oracle = chain.oracle
        if oracle is None:
            raise ConfigurationError("oracle mode needs the key oracle")
        bits = {"z": [oracle.decrypt(level, b) for b in out.z], "x": [oracle.decrypt(level, b) for b in out.x]}
        for p in out.pending:
            zc, xc = oracle.correction(level, p.outcome, p.c_hat)
            bits[p.z_slot[0]][p.z_slot[1]] ^= zc
            bits[p.x_slot[0]][p.x_slot[1]] ^= xc
        pk_next = chain.pk(level + 1)
        rng = rng if rng is not None else np.random.default_rng()
        out.z = [EncBit.fresh(pk_next, b, rng, noiseless, key=level + 1) for b in bits["z"]]
        out.x = [EncBit.fresh(pk_next, b, rng, noiseless, key=level + 1) for b in bits["x"]]
    elif mode == "faithful":
        nxt = level + 1
        new = {"z": [EncBit((switch_key(b, chain, level, noiseless=noiseless, enforce_budget=enforce_budget),),
                            key=nxt) for b in out.z],
               "x": [EncBit((switch_key(b, chain, level, noiseless=noiseless, enforce_budget=enforce_budget),),
                            key=nxt) for b in out.x]}
        for p in out.pending:
            corr = keyupdate_pipeline(p.outcome, p.c_hat, None, chain, level, "faithful", noiseless=noiseless,
                                      enforce_budget=enforce_budget)
            kind, q = p.z_slot
            new[kind][q] = new[kind][q] ^ EncBit((corr["z0"],), key=nxt)
            kind, q = p.x_slot
            new[kind][q] = new[kind][q] ^ EncBit((corr["x1"],), key=nxt)
        out.z, out.x = new["z"], new["x"]
    else:
        raise ValueError(f"unknown key-update mode {mode!r}")
    assert len(out.z) == n
    out.pending = []
    out.level = level + 1
    return out


# -- circuits --------------------------------------------------------------------------

@dataclass
class Level:
    cliffords: list
    toffolis: list

    def gates(self) -> list:
        return self.cliffords + self.toffolis


def layer_gates(gates) -> list[Level]:
    """Group gates into levels of Cliffords followed by one layer of disjoint Toffolis.

    A Clifford after a Toffoli, or a Toffoli overlapping one already in the
    layer, starts a new level.  A last level without Toffolis holds the
    trailing Cliffords.
    """
    levels: list[Level] = [Level([], [])]
    for g in gates:
        cur = levels[-1]
        if g.kind == "TOFFOLI":
            busy = {q for t in cur.toffolis for q in t.qubits}
            if busy & set(g.qubits):
                levels.append(Level([], [g]))
            else:
                cur.toffolis.append(g)
        elif g.kind in CLIFFORD_GATES:
            if cur.toffolis:
                levels.append(Level([g], []))
            else:
                cur.cliffords.append(g)
        else:
            raise ValueError(f"unsupported gate {g.kind}")
    if not levels[-1].gates():
        levels.pop()
    return levels


def load_circuit(circuit) -> list[Level]:
    """Text (levels separated by ``---``), a list of GateOps, or a list of gate lists."""
    if isinstance(circuit, str):
        chunks = parse_circuit(circuit)
    elif circuit and isinstance(circuit[0], Level):
        return list(circuit)
    elif circuit and isinstance(circuit[0], (list, tuple)):
        chunks = [list(c) for c in circuit]
    else:
        chunks = [list(circuit)]
    levels: list[Level] = []
    for chunk in chunks:
        levels.extend(layer_gates(chunk))
    # two Clifford-only chunks in a row belong to one level
    merged: list[Level] = []
    for lv in levels:
        if merged and not merged[-1].toffolis:
            merged[-1] = Level(merged[-1].cliffords + lv.cliffords, lv.toffolis)
        else:
            merged.append(lv)
    return merged


def toffoli_levels(levels: list[Level]) -> int:
    return sum(1 for lv in levels if lv.toffolis)


def qhe_eval(ct: QheCiphertext, circuit, chain: EvalKeyChain, mode: str = "oracle",
             rng: np.random.Generator | None = None, *, cnot_mode: str = "sampled", noiseless: bool = False,
             enforce_budget: bool = True) -> QheCiphertext:
    """Evaluate a Clifford+Toffoli circuit; the result lives at level L+1."""
    rng = rng if rng is not None else np.random.default_rng()
    levels = load_circuit(circuit)
    needed = toffoli_levels(levels)
    if ct.level != 1:
        raise ConfigurationError("evaluation starts from a fresh (level 1) ciphertext")
    if needed > chain.L:
        raise ConfigurationError(f"circuit needs {needed} Toffoli levels, chain has L={chain.L}")
    out = ct
    trailing: list = []
    for lv in levels:
        if not lv.toffolis:
            trailing = lv.cliffords
            continue
        products = Products(enforce_budget)
        for g in lv.cliffords:
            out = apply_clifford(out, g)
        for g in lv.toffolis:
            out = apply_toffoli(out, g.qubits, chain, rng, products=products, cnot_mode=cnot_mode)
        out = finish_level(out, chain, mode, rng, noiseless=noiseless, enforce_budget=enforce_budget)
    while out.level <= chain.L:
        out = finish_level(out, chain, mode, rng, noiseless=noiseless, enforce_budget=enforce_budget)
    for g in trailing:
        out = apply_clifford(out, g)
    return out


def simulate_plain(state, circuit) -> StateVector:
    """Reference: the circuit applied directly to the plaintext."""
    if not isinstance(state, StateVector):
        state = StateVector.basis([int(b) for b in state])
    for lv in load_circuit(circuit):
        for g in lv.gates():
            state = apply_gate(state, g)
    return state
