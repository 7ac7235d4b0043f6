"""NAND-basis boolean circuits: builder, clear and homomorphic evaluators, compilers.

Wires 0 and 1 are the constants 0 and 1.  Input ports are either secret
(fed as ciphertexts) or public (fed as plain bits, i.e. noiseless trivial
encryptions).  The builder folds constants, turns NAND(a, a) into NOT and
shares structurally identical gates.

Two depths are reported.  ``nand_depth`` is the longest input-to-output
NAND path.  ``noise_depth`` follows DualHE's noise levels instead: a gate
with a public operand (NOT, or masking by a public bit) does not grow the
error, so it inherits the other operand's depth; wires that depend only on
public data have no depth at all.

Words are lists of wires holding a Z_q residue, little-endian.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .params import Params

ZERO, ONE = 0, 1
_NONE = -1  # noise depth of a wire that depends only on public data


@dataclass
class Circuit:
    inputs: dict[str, list[int]]
    outputs: dict[str, list[int]]
    public: frozenset
    gate_out: array
    gate_a: array
    gate_b: array
    n_wires: int
    nand_depth: int
    noise_depth: int

    @property
    def n_gates(self) -> int:
        return len(self.gate_out)

    def gates(self):
        return zip(self.gate_out, self.gate_a, self.gate_b)

    def to_text(self) -> str:
        lines = [f"WIRES {self.n_wires}"]
        for name, wires in self.inputs.items():
            kind = "PUBLIC" if name in self.public else "INPUT"
            lines.append(f"{kind} {name} " + " ".join(map(str, wires)))
        for name, wires in self.outputs.items():
            lines.append(f"OUTPUT {name} " + " ".join(map(str, wires)))
        lines.extend(f"NAND {o} {a} {b}" for o, a, b in self.gates())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        inputs: dict[str, list[int]] = {}
        outputs: dict[str, list[int]] = {}
        public = set()
        g_out, g_a, g_b = array("q"), array("q"), array("q")
        n_wires = 2
        for raw in text.splitlines():
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            head = parts[0]
            if head == "WIRES":
                n_wires = int(parts[1])
            elif head in ("INPUT", "PUBLIC"):
                inputs[parts[1]] = [int(w) for w in parts[2:]]
                if head == "PUBLIC":
                    public.add(parts[1])
            elif head == "OUTPUT":
                outputs[parts[1]] = [int(w) for w in parts[2:]]
            elif head == "NAND":
                o, a, b = (int(p) for p in parts[1:4])
                g_out.append(o)
                g_a.append(a)
                g_b.append(b)
            else:
                raise ValueError(f"unknown netlist line: {raw!r}")
        _check_topology(inputs, g_out, g_a, g_b, n_wires)
        nand_d, noise_d = _depths(inputs, outputs, public, g_out, g_a, g_b, n_wires)
        return cls(inputs, outputs, frozenset(public), g_out, g_a, g_b, n_wires, nand_d, noise_d)


def _check_topology(inputs, g_out, g_a, g_b, n_wires):
    defined = np.zeros(n_wires, dtype=bool)
    defined[[ZERO, ONE]] = True
    for wires in inputs.values():
        defined[wires] = True
    for o, a, b in zip(g_out, g_a, g_b):
        if not (defined[a] and defined[b]):
            raise ValueError(f"gate {o} uses an undefined wire")
        if defined[o]:
            raise ValueError(f"wire {o} defined twice")
        defined[o] = True


def _depths(inputs, outputs, public, g_out, g_a, g_b, n_wires):
    nand = np.zeros(n_wires, dtype=np.int64)
    noise = np.full(n_wires, _NONE, dtype=np.int64)
    for name, wires in inputs.items():
        if name not in public:
            noise[wires] = 0
    for o, a, b in zip(g_out, g_a, g_b):
        nand[o] = max(nand[a], nand[b]) + 1
        noise[o] = _noise_rule(noise[a], noise[b])
    outs = [w for ws in outputs.values() for w in ws]
    if not outs:
        return 0, 0
    return int(nand[outs].max()), int(max(0, noise[outs].max()))


def _noise_rule(da: int, db: int) -> int:
    if da == _NONE:
        return db
    if db == _NONE:
        return da
    return max(da, db) + 1


class Builder:
    """Incremental circuit construction with constant folding and gate sharing."""

    def __init__(self):
        self.inputs: dict[str, list[int]] = {}
        self.outputs: dict[str, list[int]] = {}
        self.public: set = set()
        self.g_out, self.g_a, self.g_b = array("q"), array("q"), array("q")
        self._nand_depth = array("q", [0, 0])
        self._noise_depth = array("q", [_NONE, _NONE])
        self._const = {ZERO: 0, ONE: 1}
        self._shared: dict[int, int] = {}
        self.n_wires = 2

    # -- ports -------------------------------------------------------------
    def _new_wire(self, nand_depth: int, noise_depth: int) -> int:
        w = self.n_wires
        self.n_wires += 1
        self._nand_depth.append(nand_depth)
        self._noise_depth.append(noise_depth)
        return w

    def input(self, name: str, width: int, public: bool = False) -> list[int]:
        if name in self.inputs:
            raise ValueError(f"duplicate port {name}")
        wires = [self._new_wire(0, _NONE if public else 0) for _ in range(width)]
        self.inputs[name] = wires
        if public:
            self.public.add(name)
        return wires

    def input_words(self, name: str, count: int, k: int, public: bool = False) -> list[list[int]]:
        flat = self.input(name, count * k, public)
        return [flat[i * k:(i + 1) * k] for i in range(count)]

    def output(self, name: str, wires: list[int]):
        if name in self.outputs:
            raise ValueError(f"duplicate output {name}")
        self.outputs[name] = list(wires)

    def build(self) -> Circuit:
        outs = [w for ws in self.outputs.values() for w in ws]
        nand_d = max((self._nand_depth[w] for w in outs), default=0)
        noise_d = max((self._noise_depth[w] for w in outs), default=0)
        return Circuit(dict(self.inputs), dict(self.outputs), frozenset(self.public),
                       self.g_out, self.g_a, self.g_b, self.n_wires, int(nand_d), int(max(0, noise_d)))

    # -- gates -------------------------------------------------------------
    def nand(self, a: int, b: int) -> int:
        ca, cb = self._const.get(a), self._const.get(b)
        if ca == 0 or cb == 0:
            return ONE
        if ca == 1 and cb == 1:
            return ZERO
        if a == b:
            return self.not_(a)
        if ca == 1:
            return self.not_(b)
        if cb == 1:
            return self.not_(a)
        return self._gate(a, b)

    def _gate(self, a: int, b: int) -> int:
        lo, hi = (a, b) if a < b else (b, a)
        key = lo * (1 << 32) + hi
        hit = self._shared.get(key)
        if hit is not None:
            return hit
        out = self._new_wire(max(self._nand_depth[a], self._nand_depth[b]) + 1,
                             _noise_rule(self._noise_depth[a], self._noise_depth[b]))
        self.g_out.append(out)
        self.g_a.append(a)
        self.g_b.append(b)
        self._shared[key] = out
        return out

    def not_(self, a: int) -> int:
        c = self._const.get(a)
        if c is not None:
            return ONE - c
        return self._gate(a, ONE)

    def and_(self, a: int, b: int) -> int:
        return self.not_(self.nand(a, b))

    def or_(self, a: int, b: int) -> int:
        return self.nand(self.not_(a), self.not_(b))

    def xor(self, a: int, b: int) -> int:
        ca, cb = self._const.get(a), self._const.get(b)
        if ca is not None:
            return self.not_(b) if ca else b
        if cb is not None:
            return self.not_(a) if cb else a
        if a == b:
            return ZERO
        t = self.nand(a, b)
        return self.nand(self.nand(a, t), self.nand(b, t))

    def mux(self, sel: int, if0: int, if1: int) -> int:
        return self.nand(self.nand(sel, if1), self.nand(self.not_(sel), if0))

    def xor_many(self, bits: list[int]) -> int:
        bits = list(bits)
        if not bits:
            return ZERO
        while len(bits) > 1:
            nxt = [self.xor(bits[i], bits[i + 1]) for i in range(0, len(bits) - 1, 2)]
            if len(bits) % 2:
                nxt.append(bits[-1])
            bits = nxt
        return bits[0]

    def and_many(self, bits: list[int]) -> int:
        bits = list(bits)
        if not bits:
            return ONE
        while len(bits) > 1:
            nxt = [self.and_(bits[i], bits[i + 1]) for i in range(0, len(bits) - 1, 2)]
            if len(bits) % 2:
                nxt.append(bits[-1])
            bits = nxt
        return bits[0]

    # -- words -------------------------------------------------------------
    @staticmethod
    def const_word(value: int, k: int) -> list[int]:
        return [ONE if (value >> i) & 1 else ZERO for i in range(k)]

    def add(self, x: list[int], y: list[int], carry: int = ZERO) -> list[int]:
        """x + y + carry mod 2^k (ripple carry)."""
        out = []
        for i, (a, b) in enumerate(zip(x, y)):
            axb = self.xor(a, b)
            out.append(self.xor(axb, carry))
            if i + 1 < len(x):
                # carry' = (a AND b) OR (carry AND (a XOR b))
                carry = self.nand(self.nand(a, b), self.nand(carry, axb))
        return out

    def neg_word(self, x: list[int]) -> list[int]:
        return self.add([self.not_(a) for a in x], self.const_word(0, len(x)), ONE)

    def sub(self, x: list[int], y: list[int]) -> list[int]:
        return self.add(x, [self.not_(b) for b in y], ONE)

    def sum_words(self, words: list[list[int]], k: int) -> list[int]:
        words = [w for w in words if any(b != ZERO for b in w)]
        if not words:
            return self.const_word(0, k)
        while len(words) > 1:
            nxt = [self.add(words[i], words[i + 1]) for i in range(0, len(words) - 1, 2)]
            if len(words) % 2:
                nxt.append(words[-1])
            words = nxt
        return words[0]

    def mask(self, word: list[int], bit: int) -> list[int]:
        return [self.and_(w, bit) for w in word]

    @staticmethod
    def shift_left(word: list[int], j: int) -> list[int]:
        k = len(word)
        return [ZERO] * min(j, k) + word[:max(0, k - j)]

    def eq_const(self, word: list[int], value: int) -> int:
        lits = [w if (value >> i) & 1 else self.not_(w) for i, w in enumerate(word)]
        return self.and_many(lits)


# -- evaluators ---------------------------------------------------------------

def _port_values(circ: Circuit, values: dict, batch: int | None):
    missing = set(circ.inputs) - set(values)
    if missing:
        raise DimensionError(f"missing inputs: {sorted(missing)}")
    for name, wires in circ.inputs.items():
        got = values[name]
        if len(got) != len(wires):
            raise DimensionError(f"port {name} expects {len(wires)} bits, got {len(got)}")


def eval_clear(circ: Circuit, values: dict) -> dict:
    """Evaluate on plain bits.

    Each port value is a sequence of bits, or a (width, batch) array to run
    many assignments at once; outputs come back in the same form.
    """
    _port_values(circ, values, None)
    first = next(iter(values.values()), [])
    batched = isinstance(first, np.ndarray) and first.ndim == 2
    batch = first.shape[1] if batched else 1
    wire = np.zeros((circ.n_wires, batch), dtype=bool)
    wire[ONE] = True
    for name, wires in circ.inputs.items():
        v = np.asarray(values[name], dtype=bool)
        wire[wires] = v.reshape(len(wires), batch)
    out_idx = np.frombuffer(circ.gate_out, dtype=np.int64)
    a_idx = np.frombuffer(circ.gate_a, dtype=np.int64)
    b_idx = np.frombuffer(circ.gate_b, dtype=np.int64)
    if batch == 1:
        flat = wire[:, 0].copy()
        for o, a, b in zip(out_idx.tolist(), a_idx.tolist(), b_idx.tolist()):
            flat[o] = not (flat[a] and flat[b])
        wire[:, 0] = flat
    else:
        for o, a, b in zip(out_idx.tolist(), a_idx.tolist(), b_idx.tolist()):
            wire[o] = ~(wire[a] & wire[b])
    result = {}
    for name, wires in circ.outputs.items():
        vals = wire[wires].astype(np.int64)
        result[name] = vals if batched else vals[:, 0].tolist()
    return result


def eval_homomorphic(circ: Circuit, secret: dict, public: dict | None = None, *,
                     enforce_budget: bool = True, params: Params | None = None) -> dict:
    """Evaluate over GswCiphertexts.

    ``secret`` maps port names to lists of ciphertexts; ``public`` maps the
    public ports to plain bits.  Public data stays in the clear (equivalent
    to noiseless trivial encryptions); outputs that end up public are
    returned as trivial ciphertexts so every output is a GswCiphertext.
    """
    from .dualfhe import GswCiphertext, eval_nand, eval_not, gsw_trivial

    public = public or {}
    values = dict(public)
    values.update(secret)
    _port_values(circ, values, None)
    for name in circ.inputs:
        if (name in circ.public) != (name in public):
            raise DimensionError(f"port {name} must be {'public' if name in circ.public else 'secret'}")
    if params is None:
        sample = next((c for v in secret.values() for c in v), None)
        if sample is None:
            raise ValueError("params needed when no secret inputs are given")
        params = sample.params

    wire: list = [None] * circ.n_wires
    wire[ZERO], wire[ONE] = 0, 1
    for name, wires in circ.inputs.items():
        for w, v in zip(wires, values[name]):
            wire[w] = v if isinstance(v, GswCiphertext) else int(v)

    # free intermediates after their last use
    last_use = np.full(circ.n_wires, -1, dtype=np.int64)
    for g, (a, b) in enumerate(zip(circ.gate_a, circ.gate_b)):
        last_use[a] = g
        last_use[b] = g
    keep = set(w for ws in circ.outputs.values() for w in ws)

    for g, (o, a, b) in enumerate(circ.gates()):
        va, vb = wire[a], wire[b]
        a_pub, b_pub = isinstance(va, int), isinstance(vb, int)
        if a_pub and b_pub:
            res = 1 - (va & vb)
        elif a_pub or b_pub:
            p, c = (va, vb) if a_pub else (vb, va)
            res = 1 if p == 0 else eval_not(c)
        else:
            res = eval_nand(va, vb, enforce_budget=enforce_budget)
        wire[o] = res
        for w in (a, b):
            if last_use[w] == g and w > ONE and w not in keep:
                wire[w] = None

    out = {}
    for name, wires in circ.outputs.items():
        out[name] = [wire[w] if not isinstance(wire[w], int) else gsw_trivial(wire[w], params) for w in wires]
    return out


# -- encodings ----------------------------------------------------------------

def word_bits(values, k: int) -> np.ndarray:
    """Residues of ``values`` as a flat little-endian bit array (word-major)."""
    v = np.asarray(values, dtype=np.int64).ravel() & np.int64((1 << k) - 1)
    return ((v[:, None] >> np.arange(k, dtype=np.int64)) & 1).reshape(-1)


def bits_to_words(bits, k: int, q: int | None = None) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64).reshape(-1, k)
    vals = (b << np.arange(k, dtype=np.int64)).sum(axis=1)
    if q is not None:
        vals = np.where(vals > q // 2, vals - q, vals)
    return vals


def encode_randomness(mu: int, s, e, params: Params) -> np.ndarray:
    """mu || bits(s) || bits(e): the w-bit register encoding of (mu, r)."""
    return np.concatenate([[mu], word_bits(s, params.k), word_bits(e, params.k)]).astype(np.int64)


# -- compilers for the key-update pipeline -------------------------------------

def build_dual_decrypt(b: Builder, params: Params, esk: list[int], c_words: list[list[int]]) -> int:
    """mu from b' = c_m - sum_i esk_i c_i, with the tie |b'| = q/4 going to 0."""
    k, m = params.k, params.m
    masked = [b.mask(c_words[i], esk[i]) for i in range(m)]
    acc = b.sum_words(masked, k)
    bprime = b.sub(c_words[m], acc)
    return decode_word(b, bprime, params.q)


def decode_word(b: Builder, word: list[int], q: int) -> int:
    k = len(word)
    top = b.xor(word[k - 1], word[k - 2])
    return b.and_(top, b.not_(b.eq_const(word, q // 4)))


def build_recover(b: Builder, params: Params, c_words, a_words, r_pos, r_neg):
    """Circuit form of recover_randomness: returns (mu, s words, e words).

    a_words[row][col] is A'[row, col]; r_pos / r_neg are the bit matrices of
    R = R+ - R- as nested lists [row][col] of wires.
    """
    k, n, m, q = params.k, params.n, params.m, params.q
    mbar = params.trap_rows
    top = c_words[:mbar]
    bot = c_words[mbar:m]
    v = []
    for r in range(n * k):
        plus = b.sum_words([b.mask(top[j], r_pos[r][j]) for j in range(mbar)], k)
        minus = b.sum_words([b.mask(top[j], r_neg[r][j]) for j in range(mbar)], k)
        v.append(b.sub(b.add(bot[r], plus), minus))
    quarter = Builder.const_word(q // 4, k)
    s_words = []
    for i in range(n):
        block = v[i * k:(i + 1) * k]
        s_bits: list[int] = []
        for t in range(k):
            j = k - 1 - t
            known = Builder.shift_left(s_bits + [ZERO] * (k - t), j)
            val = b.add(b.sub(block[j], known), quarter)
            s_bits.append(val[k - 1])
        s_words.append(s_bits)
    e_words = []
    for row in range(m + 1):
        terms = []
        for i in range(n):
            for t in range(k):
                terms.append(b.mask(Builder.shift_left(a_words[row][i], t), s_words[i][t]))
        e_words.append(b.sub(c_words[row], b.sum_words(terms, k)))
    mu = decode_word(b, e_words[m], q)
    last = list(e_words[m])
    last[k - 1] = b.xor(last[k - 1], mu)
    e_words[m] = last
    return mu, s_words, e_words


def build_update(b: Builder, z: list[int], x: list[int], d: list[int], x0: list[int], x1: list[int]):
    """z' = z xor (d.(x0 xor x1), 0), x' = x xor (0, mu0) with mu0 = x0[0]."""
    parity = b.xor_many([b.and_(di, b.xor(u, v)) for di, u, v in zip(d, x0, x1)])
    z_new = [b.xor(z[0], parity), z[1]]
    x_new = [x[0], b.xor(x[1], x0[0])]
    return z_new, x_new


def _flatten_randomness(mu, s_words, e_words) -> list[int]:
    return [mu] + [w for word in s_words for w in word] + [w for word in e_words for w in word]


def add_trapdoor_ports(b: Builder, params: Params):
    nk, mbar = params.n * params.k, params.trap_rows
    flat_pos = b.input("r_pos", nk * mbar)
    flat_neg = b.input("r_neg", nk * mbar)
    r_pos = [flat_pos[r * mbar:(r + 1) * mbar] for r in range(nk)]
    r_neg = [flat_neg[r * mbar:(r + 1) * mbar] for r in range(nk)]
    return r_pos, r_neg


def compile_dec(params: Params) -> Circuit:
    b = Builder()
    esk = b.input("e_sk", params.m)
    c = b.input_words("c", params.m + 1, params.k, public=True)
    b.output("mu", [build_dual_decrypt(b, params, esk, c)])
    return b.build()


def compile_recover(params: Params) -> Circuit:
    b = Builder()
    r_pos, r_neg = add_trapdoor_ports(b, params)
    a = b.input_words("a_pub", (params.m + 1) * params.n, params.k, public=True)
    a_words = [a[row * params.n:(row + 1) * params.n] for row in range(params.m + 1)]
    c = b.input_words("c", params.m + 1, params.k, public=True)
    mu, s_words, e_words = build_recover(b, params, c, a_words, r_pos, r_neg)
    b.output("x", _flatten_randomness(mu, s_words, e_words))
    return b.build()


def compile_update(params: Params) -> Circuit:
    w = params.register_width
    b = Builder()
    z = b.input("z", 2)
    x = b.input("x", 2)
    d = b.input("d", w, public=True)
    x0 = b.input("x0", w)
    x1 = b.input("x1", w)
    z_new, x_new = build_update(b, z, x, d, x0, x1)
    b.output("z", z_new)
    b.output("x", x_new)
    return b.build()


def build_pipeline(b: Builder, params: Params, esk, r_pos, r_neg, a_words, key_words: dict,
                   c_hat, y, d):
    """Key correction for one encrypted CNOT.

    key_words maps "z0","z1","x0","x1" (control/target key bits) to the Dual
    ciphertext words encrypting them under the old key.  Returns the four
    new key bits as wires, now computed under the evaluating key.
    """
    keys = {name: build_dual_decrypt(b, params, esk, words) for name, words in key_words.items()}
    mu0, s0, e0 = build_recover(b, params, y, a_words, r_pos, r_neg)
    y_minus = [b.sub(yw, cw) for yw, cw in zip(y, c_hat)]
    mu1, s1, e1 = build_recover(b, params, y_minus, a_words, r_pos, r_neg)
    x0 = _flatten_randomness(mu0, s0, e0)
    x1 = _flatten_randomness(mu1, s1, e1)
    z_new, x_new = build_update(b, [keys["z0"], keys["z1"]], [keys["x0"], keys["x1"]], d, x0, x1)
    return {"z0": z_new[0], "z1": z_new[1], "x0": x_new[0], "x1": x_new[1]}


KEY_SLOTS = ("z0", "z1", "x0", "x1")


def compile_pipeline(params: Params) -> Circuit:
    k, m, n = params.k, params.m, params.n
    b = Builder()
    esk = b.input("e_sk", m)
    r_pos, r_neg = add_trapdoor_ports(b, params)
    a = b.input_words("a_pub", (m + 1) * n, k, public=True)
    a_words = [a[row * n:(row + 1) * n] for row in range(m + 1)]
    key_words = {name: b.input_words(f"key_{name}", m + 1, k, public=True) for name in KEY_SLOTS}
    c_hat = b.input_words("c_hat", m + 1, k, public=True)
    y = b.input_words("y", m + 1, k, public=True)
    d = b.input("d", params.register_width, public=True)
    new = build_pipeline(b, params, esk, r_pos, r_neg, a_words, key_words, c_hat, y, d)
    for name in KEY_SLOTS:
        b.output(name, [new[name]])
    return b.build()


@dataclass
class KeyUpdateSuite:
    dec_circuit: Circuit
    recover_circuit: Circuit
    update_circuit: Circuit
    pipeline: Circuit
    depths: dict = field(default_factory=dict)


_SUITES: dict = {}


def compile_keyupdate_suite(params: Params) -> KeyUpdateSuite:
    """Parameter-specialised circuits for the homomorphic key update, with their depths.

    Depth entries are noise depths (what DualHE's budget consumes); the
    ``*_nand`` entries give plain NAND depths.
    """
    key = (params.q, params.n, params.m)
    if key in _SUITES:
        return _SUITES[key]
    dec = compile_dec(params)
    rec = compile_recover(params)
    upd = compile_update(params)
    pipe = compile_pipeline(params)
    depths = {
        "dec": dec.noise_depth, "recover": rec.noise_depth, "update": upd.noise_depth,
        "pipeline": pipe.noise_depth,
        "dec_nand": dec.nand_depth, "recover_nand": rec.nand_depth, "update_nand": upd.nand_depth,
        "pipeline_nand": pipe.nand_depth, "pipeline_gates": pipe.n_gates,
    }
    suite = KeyUpdateSuite(dec, rec, upd, pipe, depths)
    _SUITES[key] = suite
    return suite
