"""Dense statevector simulation.

Qubit ordering: qubit j is bit j of the basis-state index (little-endian).
A register is a list of qubit indices, least significant first, so a
register holding value v has qubit register[i] equal to bit i of v.  Every
encoder in the package uses this convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError

MAX_QUBITS = 24
SQRT_HALF = 1 / math.sqrt(2)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * SQRT_HALF
K = np.array([[1, 0], [0, 1j]], dtype=complex)

_SINGLE = {"X": X, "Z": Z, "H": H, "K": K}
ARITY = {"X": 1, "Z": 1, "H": 1, "K": 1, "CNOT": 2, "CPHASE": 2, "TOFFOLI": 3}
ALIASES = {"S": "K", "CX": "CNOT", "CZ": "CPHASE", "T": "TOFFOLI", "CCX": "TOFFOLI", "ZHAT": "CPHASE"}


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple

    def __post_init__(self):
        kind = ALIASES.get(self.kind.upper(), self.kind.upper())
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if kind not in ARITY:
            raise ValueError(f"unknown gate {self.kind!r}")
        if len(self.qubits) != ARITY[kind]:
            raise ValueError(f"{kind} acts on {ARITY[kind]} qubits, got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {kind}{self.qubits}")

    def __str__(self):
        return f"{self.kind} " + " ".join(map(str, self.qubits))


class StateVector:
    """Amplitudes of an n-qubit pure state."""

    __slots__ = ("amplitudes", "num_qubits")

    def __init__(self, amplitudes, num_qubits: int | None = None, check: bool = True):
        amps = np.asarray(amplitudes, dtype=complex)
        n = int(round(math.log2(amps.size))) if num_qubits is None else num_qubits
        if amps.shape != (1 << n,):
            raise DimensionError(f"{amps.size} amplitudes do not describe {n} qubits")
        if n > MAX_QUBITS:
            raise ConfigurationError(f"{n} qubits exceeds the simulator limit of {MAX_QUBITS}")
        if check and abs(np.vdot(amps, amps).real - 1.0) > 1e-10:
            raise ValueError("state is not normalised")
        self.amplitudes = amps
        self.num_qubits = n

    @classmethod
    def basis(cls, bits: Sequence[int]) -> "StateVector":
        """|b_0 b_1 ...>, qubit j set to bits[j]."""
        amps = np.zeros(1 << len(bits), dtype=complex)
        amps[sum(int(b) << j for j, b in enumerate(bits))] = 1.0
        return cls(amps, len(bits))

    @classmethod
    def zero(cls, n: int) -> "StateVector":
        return cls.basis([0] * n)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "StateVector":
        amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        return cls(amps / np.linalg.norm(amps), n)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.num_qubits, check=False)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def tensor(self, other: "StateVector") -> "StateVector":
        """self on the low qubits, other on the high ones."""
        return StateVector(np.kron(other.amplitudes, self.amplitudes), self.num_qubits + other.num_qubits, check=False)

    def to_csv(self) -> str:
        rows = ["index,real,imag"]
        rows += [f"{i},{a.real:.17g},{a.imag:.17g}" for i, a in enumerate(self.amplitudes)]
        return "\n".join(rows) + "\n"


def _check_qubits(state: StateVector, qubits: Iterable[int]):
    for q in qubits:
        if not 0 <= q < state.num_qubits:
            raise DimensionError(f"qubit {q} out of range for {state.num_qubits} qubits")


def apply_matrix(state: StateVector, matrix: np.ndarray, qubits: Sequence[int]) -> StateVector:
    """Apply a 2^k x 2^k unitary whose index bit i refers to qubits[i]."""
    qubits = list(qubits)
    _check_qubits(state, qubits)
    n, k = state.num_qubits, len(qubits)
    tensor = state.amplitudes.reshape([2] * n)  # axis a is qubit n-1-a
    axes = [n - 1 - q for q in reversed(qubits)]  # matrix row index is MSB-first over reversed list
    u = np.asarray(matrix, dtype=complex).reshape([2] * (2 * k))
    moved = np.tensordot(u, tensor, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(moved, list(range(k)), axes)
    return StateVector(out.reshape(-1), n, check=False)


def gate_matrix(gate: GateOp) -> np.ndarray:
    """Matrix of the gate on its own qubits, index bit i = gate.qubits[i]."""
    kind = gate.kind
    if kind in _SINGLE:
        return _SINGLE[kind]
    if kind == "CNOT":  # qubits (control, target): index = c + 2 t
        m = np.eye(4, dtype=complex)
        m[[1, 3]] = m[[3, 1]]
        return m
    if kind == "CPHASE":
        return np.diag([1, 1, 1, -1]).astype(complex)
    if kind == "TOFFOLI":  # (c1, c2, target): index = c1 + 2 c2 + 4 t
        m = np.eye(8, dtype=complex)
        m[[3, 7]] = m[[7, 3]]
        return m
    raise ValueError(kind)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    return apply_matrix(state, gate_matrix(gate), gate.qubits)


def apply_circuit(state: StateVector, gates: Iterable[GateOp]) -> StateVector:
    for g in gates:
        state = apply_gate(state, g)
    return state


def register_values(num_qubits: int, register: Sequence[int]) -> np.ndarray:
    """Value held by ``register`` for every basis index."""
    idx = np.arange(1 << num_qubits, dtype=np.int64)
    val = np.zeros_like(idx)
    for i, q in enumerate(register):
        val |= ((idx >> q) & 1) << i
    return val


def hadamard_transform(state: StateVector, register: Sequence[int]) -> StateVector:
    _check_qubits(state, register)
    amps = state.amplitudes.copy()
    n = state.num_qubits
    for q in register:
        view = amps.reshape(1 << (n - q - 1), 2, 1 << q)
        low, high = view[:, 0, :], view[:, 1, :]
        keep = low.copy()
        low += high
        np.subtract(keep, high, out=high)
    amps *= SQRT_HALF ** len(register)
    return StateVector(amps, n, check=False)


def _collapse(state: StateVector, keep: np.ndarray) -> StateVector:
    amps = np.where(keep, state.amplitudes, 0)
    nrm = np.linalg.norm(amps)
    return StateVector(amps / nrm, state.num_qubits, check=False)


def measure(state: StateVector, register: Sequence[int], basis: str = "standard",
            rng: np.random.Generator | None = None) -> tuple[list[int], StateVector]:
    """Born-rule measurement of a register; returns (bits, post-measurement state).

    The Hadamard basis is H on every register qubit followed by a standard
    measurement; the returned state is the one after those Hadamards.
    """
    register = list(register)
    _check_qubits(state, register)
    if len(set(register)) != len(register):
        raise DimensionError("register qubits must be distinct")
    if basis == "hadamard":
        state = hadamard_transform(state, register)
    elif basis != "standard":
        raise ValueError(f"unknown basis {basis!r}")
    vals = register_values(state.num_qubits, register)
    probs = np.bincount(vals, weights=state.probabilities(), minlength=1 << len(register))
    probs = probs / probs.sum()
    rng = rng or np.random.default_rng()
    outcome = int(rng.choice(len(probs), p=probs))
    bits = [(outcome >> i) & 1 for i in range(len(register))]
    return bits, _collapse(state, vals == outcome)


def measure_function(state: StateVector, labels: np.ndarray, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Measure an observable given as one integer label per basis state."""
    probs = state.probabilities()
    uniq, inverse = np.unique(labels, return_inverse=True)
    weights = np.bincount(inverse, weights=probs)
    weights = weights / weights.sum()
    pick = int(rng.choice(len(uniq), p=weights))
    return int(uniq[pick]), _collapse(state, inverse == pick)


def grover_rudolph_amplitudes(prefix: np.ndarray) -> np.ndarray:
    """Amplitudes sqrt(p_v) for v in [0, 2^t), built by conditional rotations.

    ``prefix`` has length 2^t + 1 (prefix[v] = total weight below v).  At each
    level the mass of a dyadic interval is split between its halves, the
    rotation angle being read from prefix-sum differences, as a state
    preparation circuit would do it.
    """
    size = len(prefix) - 1
    t = int(round(math.log2(size)))
    if 1 << t != size:
        raise DimensionError("prefix table length must be 2^t + 1")
    amps = np.ones(1)
    for level in range(t):
        width = size >> level
        starts = np.arange(1 << level) * width
        total = prefix[starts + width] - prefix[starts]
        left = prefix[starts + width // 2] - prefix[starts]
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(total > 0, np.sqrt(np.clip(left / total, 0.0, 1.0)), SQRT_HALF)
        s = np.sqrt(1.0 - c ** 2)
        amps = np.stack([amps * c, amps * s], axis=1).reshape(-1)
    return amps


def prepare_weighted_superposition(tables: Sequence[tuple[Sequence[int], np.ndarray]], num_qubits: int) -> StateVector:
    """Product state with amplitude sqrt(p_r(v_r)) on each register r.

    Each table is (register, prefix sums over the register's values in
    residue order, length 2^len(register) + 1).  Qubits not in any register
    stay |0>.
    """
    amps = np.ones(1, dtype=float)
    offsets = np.zeros(1, dtype=np.int64)
    used: set = set()
    for register, prefix in tables:
        register = list(register)
        if used & set(register):
            raise DimensionError("registers overlap")
        used |= set(register)
        if len(prefix) != (1 << len(register)) + 1:
            raise DimensionError(f"table of length {len(prefix)} does not fit a {len(register)}-qubit register")
        a = grover_rudolph_amplitudes(np.asarray(prefix, dtype=float) / prefix[-1])
        vals = np.arange(1 << len(register), dtype=np.int64)
        off = np.zeros_like(vals)
        for i, q in enumerate(register):
            off |= ((vals >> i) & 1) << q
        nz = a != 0
        amps = np.outer(amps, a[nz]).reshape(-1)
        offsets = (offsets[:, None] + off[nz][None, :]).reshape(-1)
    if used and max(used) >= num_qubits:
        raise DimensionError("register exceeds num_qubits")
    full = np.zeros(1 << num_qubits, dtype=complex)
    full[offsets] = amps
    return StateVector(full, num_qubits)


def uniform_prefix(width: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, (1 << width) + 1)


# -- Pauli frames -------------------------------------------------------------

@dataclass
class PauliFrame:
    """One-time-pad keys: the state is Z^z X^x applied to the logical state."""

    z: np.ndarray
    x: np.ndarray

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "PauliFrame":
        return cls(rng.integers(0, 2, n), rng.integers(0, 2, n))

    @classmethod
    def zero(cls, n: int) -> "PauliFrame":
        return cls(np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64))

    def apply(self, state: StateVector) -> StateVector:
        for j in range(len(self.x)):
            if self.x[j]:
                state = apply_matrix(state, X, [j])
            if self.z[j]:
                state = apply_matrix(state, Z, [j])
        return state

    def undo(self, state: StateVector) -> StateVector:
        for j in range(len(self.x)):
            if self.z[j]:
                state = apply_matrix(state, Z, [j])
            if self.x[j]:
                state = apply_matrix(state, X, [j])
        return state


def pauli_operator(z: Sequence[int], x: Sequence[int]) -> np.ndarray:
    """Matrix of Z^z X^x on len(z) qubits (qubit j = index bit j)."""
    op = np.ones((1, 1), dtype=complex)
    for zj, xj in zip(z, x):
        local = np.linalg.matrix_power(Z, zj) @ np.linalg.matrix_power(X, xj)
        op = np.kron(local, op)
    return op


def circuit_matrix(gates: Iterable[GateOp], n: int) -> np.ndarray:
    """Unitary of a gate list on n qubits, built column by column."""
    cols = []
    gates = list(gates)
    for i in range(1 << n):
        e = np.zeros(1 << n, dtype=complex)
        e[i] = 1
        cols.append(apply_circuit(StateVector(e, n), gates).amplitudes)
    return np.stack(cols, axis=1)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray) -> float:
    """min over phases of the max-entry difference, using the largest entry of a to fix the phase."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    i = int(np.argmax(np.abs(a)))
    if abs(b[i]) < 1e-300:
        return float(np.abs(a - b).max())
    phase = a[i] / b[i]
    phase /= abs(phase)
    return float(np.abs(a - phase * b).max())


def canonical_phase(amplitudes: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate so the first non-negligible amplitude is real positive."""
    a = np.asarray(amplitudes, dtype=complex)
    nz = np.flatnonzero(np.abs(a) > tol)
    if nz.size == 0:
        return a
    return a * (abs(a[nz[0]]) / a[nz[0]])


def fidelity(a: StateVector, b: StateVector) -> float:
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


# -- density-matrix utilities ---------------------------------------------------

def density(state: StateVector) -> np.ndarray:
    return np.outer(state.amplitudes, state.amplitudes.conj())


def partial_trace_low(rho: np.ndarray, n_low: int, n_total: int) -> np.ndarray:
    """Trace out qubits 0..n_low-1, keeping the high ones."""
    d_low, d_high = 1 << n_low, 1 << (n_total - n_low)
    r = rho.reshape(d_high, d_low, d_high, d_low)
    return np.einsum("ajbj->ab", r)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(rho - sigma)
    return 0.5 * float(np.abs(ev).sum())


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    d = 1 << n
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def pauli_mixing_check(l: int, rho: np.ndarray | None = None, side: int = 1,
                       rng: np.random.Generator | None = None) -> float:
    """max |avg_{z,x} P rho P^dag - I/2^l (x) Tr_A(rho)| with P = Z^z X^x on the l low qubits."""
    if l > 3:
        raise ConfigurationError("exhaustive Pauli average is limited to l <= 3")
    n = l + side
    if rho is None:
        rho = random_density(n, rng or np.random.default_rng())
    if rho.shape != (1 << n, 1 << n):
        raise DimensionError("rho has the wrong size")
    eye_side = np.eye(1 << side)
    acc = np.zeros_like(rho, dtype=complex)
    for zbits in range(1 << l):
        for xbits in range(1 << l):
            p = pauli_operator([(zbits >> j) & 1 for j in range(l)], [(xbits >> j) & 1 for j in range(l)])
            full = np.kron(eye_side, p)
            acc += full @ rho @ full.conj().T
    acc /= 1 << (2 * l)
    target = np.kron(partial_trace_low(rho, l, n), np.eye(1 << l) / (1 << l))
    return float(np.abs(acc - target).max())


# -- Toffoli conjugation ---------------------------------------------------------

def toffoli_conjugation_residual(z: Sequence[int], x: Sequence[int]) -> float:
    """Distance (up to phase) between T P_{z,x} and C_zx P'_zx T on 3 qubits.

    P' has z-keys (z1 + x2 z3, z2 + x1 z3, z3) and x-keys (x1, x2, x1 x2 + x3);
    C_zx = CNOT_{13}^{x2} CNOT_{23}^{x1} Zhat_{12}^{z3}.
    """
    z1, z2, z3 = (int(v) for v in z)
    x1, x2, x3 = (int(v) for v in x)
    T = gate_matrix(GateOp("TOFFOLI", (0, 1, 2)))
    lhs = T @ pauli_operator([z1, z2, z3], [x1, x2, x3])
    pz = [(z1 + x2 * z3) % 2, (z2 + x1 * z3) % 2, z3]
    px = [x1, x2, (x1 * x2 + x3) % 2]
    corr = []
    if x2:
        corr.append(GateOp("CNOT", (0, 2)))
    if x1:
        corr.append(GateOp("CNOT", (1, 2)))
    if z3:
        corr.append(GateOp("CPHASE", (0, 1)))
    # matrix product C = first @ second @ third, i.e. the third factor acts first
    c = circuit_matrix(list(reversed(corr)), 3)
    rhs = c @ pauli_operator(pz, px) @ T
    return equal_up_to_phase(lhs, rhs)


# -- circuit text format ----------------------------------------------------------

def parse_circuit(text: str) -> list[list[GateOp]]:
    """Gates one per line (``H 0``, ``CNOT 0 1``, ``T 0 1 2``); ``---`` or ``LEVEL`` separates levels."""
    levels: list[list[GateOp]] = [[]]
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line in ("---",) or line.upper().startswith("LEVEL"):
            if levels[-1]:
                levels.append([])
            continue
        parts = line.split()
        levels[-1].append(GateOp(parts[0], tuple(int(p) for p in parts[1:])))
    if not levels[-1]:
        levels.pop()
    return levels


def format_circuit(levels: Sequence[Sequence[GateOp]]) -> str:
    chunks = ["\n".join(str(g) for g in level) for level in levels]
    return "\n---\n".join(chunks) + "\n"
