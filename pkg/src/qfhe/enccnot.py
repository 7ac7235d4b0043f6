"""The encrypted CNOT: apply CNOT^s to two qubits given only a Dual encryption of s.

With f_a(mu, r) = Enc(mu; r) + a * c_hat, the procedure entangles the
control qubit a with sum_x sqrt(D(x)) |x>|f_a(x)>, measures y, XORs mu_a
into the target, and measures x in the Hadamard basis to get d.  The
result is (Z^{d.(x0 xor x1)} (x) X^{mu0}) CNOT^s |psi>, where x0, x1 are
the two preimages of y (a claw) and mu0 xor mu1 = s.

Two modes:

* exact: dense simulation of data + w-qubit randomness register.  The y
  register is never materialised; y is measured as a classical function of
  the basis state, which gives the same post-measurement state.
* sampled: draws (y, d) from the same joint law classically and writes
  down the resulting data state; the only quantum object is the data state.

Register layout (exact mode): data qubits first, then mu, the bits of s
and the bits of e, each word little-endian.  Bit i of the w-bit encoding
lives on qubit ``num_data + i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boolcirc import encode_randomness
from .distributions import cumulative_weights, gaussian_log_weight, gaussian_sample
from .dualenc import DualCiphertext, DualKeys, dual_decrypt, dual_encrypt, recover_randomness, xor_invert
from .errors import ConfigurationError, InversionFailure
from .params import Params
from .qsim import (MAX_QUBITS, X, Z, StateVector, apply_matrix, canonical_phase, hadamard_transform,
                   prepare_weighted_superposition, uniform_prefix)
from .ringmod import ModVector, balance, matmul_mod


@dataclass(frozen=True)
class ClawPair:
    mu0: int
    s0: np.ndarray
    e0: np.ndarray
    mu1: int
    s1: np.ndarray
    e1: np.ndarray

    def encodings(self, params: Params) -> tuple[np.ndarray, np.ndarray]:
        return (encode_randomness(self.mu0, self.s0, self.e0, params),
                encode_randomness(self.mu1, self.s1, self.e1, params))

    def verify(self, keys: DualKeys, c_hat: DualCiphertext, s_bit: int | None = None) -> bool:
        """Enc(x0) = Enc(x1) + c_hat and, when s is known, mu0 xor mu1 = s."""
        y0 = dual_encrypt(keys.public, self.mu0, s=self.s0, e=self.e0)
        y1 = dual_encrypt(keys.public, self.mu1, s=self.s1, e=self.e1)
        ok = (y1 + c_hat).c == y0.c
        if s_bit is not None:
            ok = ok and (self.mu0 ^ self.mu1) == s_bit
        return bool(ok)


@dataclass
class CnotOutcome:
    y: DualCiphertext
    d: np.ndarray
    out_state: StateVector
    collapsed: bool
    claw: ClawPair | None
    z_corr: int
    x_corr: int
    branch: int | None = None  # surviving control value when collapsed
    control: int = 0
    target: int = 1

    def corrected_state(self) -> StateVector:
        """Undo the reported Paulis (Z on control, X on target)."""
        st = self.out_state
        if self.x_corr:
            st = apply_matrix(st, X, [self.target])
        if self.z_corr:
            st = apply_matrix(st, Z, [self.control])
        return st


def pauli_correction_bits(claw: ClawPair, d, params: Params) -> tuple[int, int]:
    """(d . (x0 xor x1) mod 2, mu0)."""
    x0, x1 = claw.encodings(params)
    z = int(np.sum(np.asarray(d, dtype=np.int64) & (x0 ^ x1)) & 1)
    return z, int(claw.mu0)


def collapsed_x_correction(keys: DualKeys, c_hat: DualCiphertext, alive: int, mu_alive: int) -> int:
    """X correction after a no-claw y: the mu0 the missing partner would have had.

    Only branch ``alive`` survives.  Branch 1 carries X^{mu1} with
    mu1 = mu0 xor s, so reporting mu0 leaves CNOT^s applied to the surviving
    branch, as in the claw case.  Recovering s needs the secret key, which
    the trapdoor holder has.
    """
    return int(mu_alive) ^ (alive & dual_decrypt(keys.sk, c_hat))


def f_eval(keys: DualKeys, a: int, mu: int, s, e, c_hat: DualCiphertext) -> DualCiphertext:
    y = dual_encrypt(keys.public, mu, s=s, e=e)
    return y + c_hat if a else y


def find_claw(keys: DualKeys, y: DualCiphertext, c_hat: DualCiphertext, params: Params):
    """Both preimages of y in Supp(D), or None for a side that has none."""
    bound = params.claw_bound
    sides = []
    for cand in (y, xor_invert(y, c_hat)):
        try:
            sides.append(recover_randomness(keys, cand, bound=bound))
        except InversionFailure:
            sides.append(None)
    return sides


def _log_sqrt_density(e: np.ndarray, params: Params) -> float:
    # mu and s are uniform, so only the Gaussian part of D varies
    return 0.5 * float(gaussian_log_weight(np.asarray(e, dtype=float), params.claw_bound))


def _branch_state(psi: StateVector, control: int, a: int) -> np.ndarray:
    idx = np.arange(1 << psi.num_qubits)
    return np.where(((idx >> control) & 1) == a, psi.amplitudes, 0)


def _flip_target(amps: np.ndarray, target: int, n: int) -> np.ndarray:
    return apply_matrix(StateVector(amps, n, check=False), X, [target]).amplitudes


def _finish(psi, keys, c_hat, params, y, sides, d, control, target, amps_by_branch=None):
    """Assemble a CnotOutcome from the recovered preimages (shared by both modes)."""
    if sides[0] is not None and sides[1] is not None:
        claw = ClawPair(sides[0][0], sides[0][1], sides[0][2], sides[1][0], sides[1][1], sides[1][2])
        z, x = pauli_correction_bits(claw, d, params)
        return claw, z, x, False, None
    alive = 0 if sides[0] is not None else 1
    return None, 0, collapsed_x_correction(keys, c_hat, alive, sides[alive][0]), True, alive


# -- sampled mode ------------------------------------------------------------------

def encrypted_cnot_sampled(psi: StateVector, c_hat: DualCiphertext, keys: DualKeys, params: Params,
                           rng: np.random.Generator, control: int = 0, target: int = 1) -> CnotOutcome:
    n = psi.num_qubits
    w = params.register_width
    p1 = float(np.sum(np.abs(_branch_state(psi, control, 1)) ** 2))
    a_star = int(rng.random() < p1)
    mu = int(rng.integers(0, 2))
    s = balance(rng.integers(0, params.q, size=params.n, dtype=np.int64), params.q)
    e = gaussian_sample(params.claw_bound, params.q, params.m + 1, rng)
    y = f_eval(keys, a_star, mu, s, e, c_hat)
    sides = find_claw(keys, y, c_hat, params)
    if sides[a_star] is None or sides[a_star][0] != mu:
        raise InversionFailure("sampled preimage not recovered; claw width exceeds the inversion radius")
    d = rng.integers(0, 2, size=w)
    claw, z, x, collapsed, branch = _finish(psi, keys, c_hat, params, y, sides, d, control, target)
    if collapsed:
        amps = _branch_state(psi, control, branch)
        if sides[branch][0]:
            amps = _flip_target(amps, target, n)
        amps = amps / np.linalg.norm(amps)
    else:
        x0, x1 = claw.encodings(params)
        logs = np.array([_log_sqrt_density(claw.e0, params), _log_sqrt_density(claw.e1, params)])
        weights = np.exp(logs - logs.max())
        amps = np.zeros(1 << n, dtype=complex)
        for a, (enc, mu_a) in enumerate(((x0, claw.mu0), (x1, claw.mu1))):
            part = _branch_state(psi, control, a) * weights[a]
            if int(np.sum(d & enc) & 1):
                part = -part
            if mu_a:
                part = _flip_target(part, target, n)
            amps = amps + part
        amps = amps / np.linalg.norm(amps)
    return CnotOutcome(y, d, StateVector(amps, n, check=False), collapsed, claw, z, x, branch, control, target)


# -- exact mode ----------------------------------------------------------------------

def _register_tables(params: Params, offset: int) -> list:
    k = params.k
    tables = [([offset], uniform_prefix(1))]
    pos = offset + 1
    for _ in range(params.n):
        tables.append((list(range(pos, pos + k)), uniform_prefix(k)))
        pos += k
    gauss = cumulative_weights(params.claw_bound, params.q, order="residue")
    for _ in range(params.m + 1):
        tables.append((list(range(pos, pos + k)), gauss))
        pos += k
    return tables


def register_state(params: Params, num_data: int = 0) -> StateVector:
    """sum_x sqrt(D(x)) |x> on qubits num_data .. num_data + w - 1."""
    total = num_data + params.register_width
    if total > MAX_QUBITS:
        raise ConfigurationError(f"exact mode needs {total} qubits (limit {MAX_QUBITS})")
    return prepare_weighted_superposition(_register_tables(params, num_data), total)


def _decode_register(idx: np.ndarray, params: Params, num_data: int):
    """(mu, s words, e words) encoded in basis indices."""
    k = params.k
    reg = idx >> num_data
    mu = reg & 1
    reg = reg >> 1
    mask = (1 << k) - 1
    s = np.stack([(reg >> (i * k)) & mask for i in range(params.n)], axis=1)
    reg = reg >> (params.n * k)
    e = np.stack([(reg >> (i * k)) & mask for i in range(params.m + 1)], axis=1)
    return mu, s, e


class ExactSimulation:
    """Dense-state run of the encrypted CNOT, reusable across many runs of the same input."""

    def __init__(self, psi: StateVector, c_hat: DualCiphertext, keys: DualKeys, params: Params,
                 control: int = 0, target: int = 1):
        self.psi, self.c_hat, self.keys, self.params = psi, c_hat, keys, params
        self.control, self.target = control, target
        self.num_data = psi.num_qubits
        self.total = self.num_data + params.register_width
        if self.total > MAX_QUBITS:
            raise ConfigurationError(f"exact mode needs {self.total} qubits (limit {MAX_QUBITS})")
        reg = register_state(params, 0)
        # psi on the low qubits, register above
        full = np.kron(reg.amplitudes, psi.amplitudes)
        self.state = StateVector(full, self.total, check=False)
        self.register = list(range(self.num_data, self.total))
        self._y_labels()

    def _y_labels(self):
        p = self.params
        amps = self.state.amplitudes
        nz = np.flatnonzero(np.abs(amps) > 0)
        mu, s, e = _decode_register(nz, p, self.num_data)
        a = (nz >> self.control) & 1
        y = matmul_mod(s, self.keys.public.A.data.T, p.q) + e
        y[:, -1] += mu * (p.q // 2)
        y = y + a[:, None] * self.c_hat.c.data[None, :]
        y = balance(y, p.q)
        rows, inverse = np.unique(y, axis=0, return_inverse=True)
        probs = np.bincount(inverse.ravel(), weights=np.abs(amps[nz]) ** 2)
        self.nz = nz
        self.y_rows = rows
        self.y_inverse = inverse.ravel()
        self.y_probs = probs / probs.sum()

    def after_y(self, label: int) -> StateVector:
        """State after measuring y = y_rows[label] and XORing mu into the target."""
        keep = self.nz[self.y_inverse == label]
        mu = (keep >> self.num_data) & 1
        moved = keep ^ (mu << self.target)  # CNOT from the mu qubit onto the target
        amps = np.zeros_like(self.state.amplitudes)
        amps[moved] = self.state.amplitudes[keep]
        amps /= np.linalg.norm(amps)
        return StateVector(amps, self.total, check=False)

    def d_distribution(self, label: int) -> tuple[np.ndarray, np.ndarray]:
        """(P(d | y) over all 2^w strings, data amplitudes per d as rows)."""
        st = hadamard_transform(self.after_y(label), self.register)
        rows = st.amplitudes.reshape(1 << self.params.register_width, 1 << self.num_data)
        probs = np.sum(np.abs(rows) ** 2, axis=1)
        return probs / probs.sum(), rows

    def y_cipher(self, label: int) -> DualCiphertext:
        return DualCiphertext(ModVector(self.y_rows[label], self.params.q))

    def outcome(self, label: int, d_value: int, rows: np.ndarray) -> CnotOutcome:
        p = self.params
        y = self.y_cipher(label)
        sides = find_claw(self.keys, y, self.c_hat, p)
        d = np.array([(d_value >> i) & 1 for i in range(p.register_width)], dtype=np.int64)
        claw, z, x, collapsed, branch = _finish(self.psi, self.keys, self.c_hat, p, y, sides, d,
                                                self.control, self.target)
        amps = rows[d_value] / np.linalg.norm(rows[d_value])
        return CnotOutcome(y, d, StateVector(amps, self.num_data, check=False), collapsed, claw, z, x, branch,
                           self.control, self.target)

    def run(self, rng: np.random.Generator, runs: int = 1) -> list[CnotOutcome]:
        """Independent runs; runs that share a y reuse one Hadamard transform."""
        labels = rng.choice(len(self.y_probs), size=runs, p=self.y_probs)
        out: list = [None] * runs
        for label in np.unique(labels):
            probs, rows = self.d_distribution(int(label))
            where = np.flatnonzero(labels == label)
            ds = rng.choice(len(probs), size=len(where), p=probs)
            for i, dv in zip(where, ds):
                out[i] = self.outcome(int(label), int(dv), rows)
        return out


def encrypted_cnot_exact(psi: StateVector, c_hat: DualCiphertext, keys: DualKeys, params: Params,
                         rng: np.random.Generator, control: int = 0, target: int = 1) -> CnotOutcome:
    return ExactSimulation(psi, c_hat, keys, params, control, target).run(rng, 1)[0]


# -- outcome laws ---------------------------------------------------------------------

def _corrected_rows(rows: np.ndarray, zc: np.ndarray, xc: np.ndarray, control: int, target: int,
                    decimals: int) -> np.ndarray:
    """Undo Z^zc on control and X^xc on target row-wise, fix the phase, round to real/imag columns."""
    rows = np.asarray(rows, dtype=complex)
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    idx = np.arange(rows.shape[1])
    flipped = rows[:, idx ^ (1 << target)]
    rows = np.where(np.asarray(xc, dtype=bool)[:, None], flipped, rows)
    sign = np.where(((idx >> control) & 1)[None, :] & np.asarray(zc)[:, None], -1.0, 1.0)
    rows = rows * sign
    # first amplitude that survives rounding fixes the phase
    first = np.argmax(np.abs(rows) > 10.0 ** -(decimals - 1), axis=1)
    lead = rows[np.arange(len(rows)), first]
    rows = rows * (np.abs(lead) / lead)[:, None]
    out = np.concatenate([rows.real, rows.imag], axis=1)
    return np.round(out, decimals) + 0.0


def _unique_rows(table: np.ndarray, decimals: int) -> tuple[np.ndarray, np.ndarray]:
    """np.unique(axis=0) via an integer row hash; far faster for wide float tables."""
    ints = np.round(table * 10.0 ** decimals).astype(np.int64)
    mult = np.int64(1_000_003) ** np.arange(ints.shape[1], dtype=np.int64)  # wraps, which is fine for a hash
    h = (ints * mult).sum(axis=1)
    _, first, inv = np.unique(h, return_index=True, return_inverse=True)
    uniq = table[first]
    if not np.array_equal(uniq[inv], table):
        return _exact_unique(table)
    return uniq, inv


def _exact_unique(table):
    uniq, inv = np.unique(table, axis=0, return_inverse=True)
    return uniq, inv.ravel()


def _key(collapsed, branch, zc, xc, rounded) -> tuple:
    return (bool(collapsed), int(branch), int(zc), int(xc), tuple(float(v) for v in rounded))


def outcome_key(out: CnotOutcome, decimals: int = 6) -> tuple:
    """Hashable summary: (collapsed, branch, z_corr, x_corr, rounded Pauli-undone state)."""
    rounded = _corrected_rows(out.out_state.amplitudes[None, :], np.array([out.z_corr]), np.array([out.x_corr]),
                              out.control, out.target, decimals)[0]
    return _key(out.collapsed, -1 if out.branch is None else out.branch, out.z_corr, out.x_corr, rounded)


def exact_joint_law(sim: ExactSimulation, decimals: int = 6, rng: np.random.Generator | None = None,
                    runs: int = 0):
    """Exact law of outcome_key, by enumerating every y and every d.

    With ``runs`` > 0 the same pass also draws that many independent exact
    runs (y from P(y), d from P(d | y)) and returns (law, outcomes).
    """
    p = sim.params
    law: dict = {}
    labels = rng.choice(len(sim.y_probs), size=runs, p=sim.y_probs) if runs else np.zeros(0, dtype=np.int64)
    outcomes: list = [None] * runs
    for label in range(len(sim.y_probs)):
        py = sim.y_probs[label]
        probs, rows = sim.d_distribution(label)
        y = sim.y_cipher(label)
        sides = find_claw(sim.keys, y, sim.c_hat, p)
        d_vals = np.flatnonzero(probs > 1e-15)
        if sides[0] is not None and sides[1] is not None:
            claw = ClawPair(*sides[0], *sides[1])
            x0, x1 = claw.encodings(p)
            delta = int(sum(int(b) << i for i, b in enumerate(x0 ^ x1)))
            zc = np.bitwise_count(d_vals & delta).astype(np.int64) & 1
            xc, collapsed, branch = claw.mu0, False, -1
        else:
            alive = 0 if sides[0] is not None else 1
            zc = np.zeros(len(d_vals), dtype=np.int64)
            xc = collapsed_x_correction(sim.keys, sim.c_hat, alive, sides[alive][0])
            collapsed, branch = True, alive
        xs = np.full(len(d_vals), xc, dtype=np.int64)
        rounded = _corrected_rows(rows[d_vals], zc, xs, sim.control, sim.target, decimals)
        table = np.concatenate([zc[:, None].astype(float), rounded], axis=1)
        uniq, inv = _unique_rows(table, decimals)
        mass = np.bincount(inv, weights=probs[d_vals]) * py
        for row, pm in zip(uniq, mass):
            key = _key(collapsed, branch, row[0], xc, row[1:])
            law[key] = law.get(key, 0.0) + pm
        where = np.flatnonzero(labels == label)
        if where.size:
            draws = rng.choice(len(probs), size=where.size, p=probs)
            for i, dv in zip(where, draws):
                outcomes[i] = sim.outcome(label, int(dv), rows)
    return (law, outcomes) if runs else law


def empirical_law(outcomes, decimals: int = 6) -> dict:
    law: dict = {}
    for o in outcomes:
        key = outcome_key(o, decimals)
        law[key] = law.get(key, 0) + 1
    total = len(outcomes)
    return {k: v / total for k, v in law.items()}


# -- fidelity accounting -----------------------------------------------------------------

def image_densities(keys: DualKeys, c_hat: DualCiphertext, params: Params):
    """Densities of f_0(D) and f_1(D) over the union of their images (exact enumeration)."""
    from .distributions import Density

    k = params.k
    reg = register_state(params, 0)
    amps = reg.amplitudes
    nz = np.flatnonzero(np.abs(amps) > 0)
    mu, s, e = _decode_register(nz, params, 0)
    weights = np.abs(amps[nz]) ** 2
    base = matmul_mod(s, keys.public.A.data.T, params.q) + e
    base[:, -1] += mu * (params.q // 2)
    out = []
    for a in (0, 1):
        y = balance(base + a * c_hat.c.data[None, :], params.q)
        out.append({tuple(int(v) for v in row): 0.0 for row in y})
        for row, wgt in zip(map(tuple, y.tolist()), weights):
            out[a][row] += wgt
    domain = sorted(set(out[0]) | set(out[1]))
    return (Density.from_mapping(out[0], domain, tol=1e-9), Density.from_mapping(out[1], domain, tol=1e-9))


def measured_fidelity(keys: DualKeys, c_hat: DualCiphertext, params: Params, p1: float = 1.0) -> float:
    """|<actual|ideal>|^2 for the pre-measurement state, read off the simulator.

    The actual branch-1 register holds sum_x sqrt(D(x)) |x> (so f_1 is
    applied to D); the ideal one reweights each x by the branch-0 density of
    its image y = f_1(x), i.e. sqrt(D(x0(y))).  With control weight p1 on
    branch 1 the fidelity is |p0 + p1 <actual_1|ideal_1>|^2.
    """
    reg = register_state(params, 0)
    amps = reg.amplitudes.real
    nz = np.flatnonzero(np.abs(amps) > 0)
    mu, s, e = _decode_register(nz, params, 0)
    overlap = 0.0
    for idx, m_, s_, e_ in zip(nz, mu, s, e):
        y = f_eval(keys, 1, int(m_), balance(s_, params.q), balance(e_, params.q), c_hat)
        try:
            mu0, s0, e0 = recover_randomness(keys, y, bound=params.claw_bound)
        except InversionFailure:
            continue
        # the ideal amplitude is the actual amplitude of the preimage x0
        enc_idx = int(sum(int(b) << i for i, b in enumerate(encode_randomness(mu0, s0, e0, params))))
        overlap += amps[idx] * amps[enc_idx]
    return float((1.0 - p1 + p1 * overlap) ** 2)
