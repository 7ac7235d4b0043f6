"""Acceptance suite: one CRITERION line per check, collected in the terminal summary.

Tolerances are pinned here and never loosened by the tests themselves.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qfhe.distributions import TruncGaussian, hellinger2, shift_bound, tv_between_laws
from qfhe.dualenc import dual_decrypt, dual_encrypt, dual_keygen
from qfhe.dualfhe import convert, eval_nand, gsw_decrypt, gsw_decrypt_gadget, gsw_encrypt, validate_params
from qfhe.enccnot import (ExactSimulation, empirical_law, encrypted_cnot_sampled, exact_joint_law, image_densities,
                          measured_fidelity, pauli_correction_bits)
from qfhe.errors import NoiseBudgetError
from qfhe.params import get_params, load_preset
from qfhe.qhe import (EncBit, keyupdate_pipeline, load_circuit, qhe_decrypt, qhe_encrypt, qhe_eval, qhe_keygen,
                      simulate_plain, toffoli_levels)
from qfhe.qsim import GateOp, StateVector, pauli_mixing_check, toffoli_conjugation_residual
from qfhe.ringmod import balance, matmul_mod
from qfhe.trapdoor import calibrate, gen_trap, invert

TV_TOL = 0.02
MATRIX_TOL = 1e-10
FIDELITY_TOL = 1e-6


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def note(n: int, detail: str) -> None:
    line = f"CRITERION {n}: note ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


# -- 1: NAND truth table and NAND trees --------------------------------------------

def _nand_tree(pk, sk, depth, rng):
    bits = rng.integers(0, 2, size=1 << depth).tolist()
    cts = [gsw_encrypt(pk, b, rng) for b in bits]
    while len(cts) > 1:
        cts = [eval_nand(cts[i], cts[i + 1]) for i in range(0, len(cts), 2)]
        bits = [1 - bits[i] * bits[i + 1] for i in range(0, len(bits), 2)]
    return gsw_decrypt(sk, cts[0]) == bits[0]


def _nand_trials(name, trials, seed):
    params = get_params(name)
    rng = np.random.default_rng(seed)
    keys = dual_keygen(params, rng)
    d_max = params.depth_budget
    start = time.perf_counter()
    ok = 0
    for a in (0, 1):
        for b in (0, 1):
            c = eval_nand(gsw_encrypt(keys.pk, a, rng), gsw_encrypt(keys.pk, b, rng))
            ok += gsw_decrypt(keys.sk, c) == 1 - a * b
    for t in range(trials - 4):
        ok += _nand_tree(keys.pk, keys.sk, 1 + t % d_max, rng)
    return ok, d_max, time.perf_counter() - start


def test_criterion_1_nand_correctness():
    ok, d_max, secs = _nand_trials("desk", 1000, 101)
    passed = ok == 1000 and secs < 60
    record(1, passed, f"desk: {ok}/1000 trials correct, tree depth 1..{d_max}, {secs:.1f}s (limit 60s)")
    ok40, _, secs40 = _nand_trials("desk40", 12, 102)
    note(1, f"desk40 supplement: {ok40}/12 correct in {secs40:.1f}s")
    assert passed and ok40 == 12


# -- 2: Convert consistency ------------------------------------------------------------

def test_criterion_2_convert_consistency(desk, desk_keys):
    rng = np.random.default_rng(201)
    pk, sk = desk_keys.pk, desk_keys.sk
    fresh = [(b, gsw_encrypt(pk, b, rng)) for b in rng.integers(0, 2, size=400).tolist()]

    def nand_pool(pool, count):
        out = []
        for _ in range(count):
            i, j = rng.integers(0, len(pool), size=2)
            (a, ca), (b, cb) = pool[i], pool[j]
            out.append((1 - a * b, eval_nand(ca, cb)))
        return out

    lvl1 = nand_pool(fresh, 400)
    lvl2 = nand_pool(lvl1, 200)
    cts = fresh + lvl1 + lvl2
    agree = sum(dual_decrypt(sk, convert(c)) == gsw_decrypt_gadget(sk, c) for _, c in cts)
    correct = sum(dual_decrypt(sk, convert(c)) == m for m, c in cts)
    levels = sorted({c.noise_level for _, c in cts})
    passed = agree == len(cts) == 1000
    record(2, passed, f"{agree}/{len(cts)} agree across levels {levels}; {correct} equal the plaintext")
    assert passed and correct == 1000


# -- 3: trapdoor inversion -------------------------------------------------------------

def test_criterion_3_trapdoor(desk):
    rng = np.random.default_rng(301)
    td = gen_trap(desk.n, desk.m, desk.q, rng)
    t = td.radius_inf
    failures = 0
    for _ in range(500):
        s = rng.integers(0, desk.q, size=desk.n, dtype=np.int64)
        e = rng.integers(-t, t + 1, size=desk.m)
        b = balance(matmul_mod(td.A.data, s, desk.q) + e, desk.q)
        s2, e2 = invert(td, b)
        failures += not (np.array_equal(s2.data, balance(s, desk.q)) and np.array_equal(e2.data, e))
    edge = calibrate(td, rng, 500)
    failures += edge["failures"]
    passed = failures == 0
    record(3, passed, f"desk: 500 uniform-in-box + 500 on-radius samples, {failures} failures; "
                      f"calibrated radius_inf={t}, radius_l2={edge['radius_l2']:.4g}")
    assert passed


# -- 4: Gaussian shift bound -----------------------------------------------------------

def _h2_by_hand(q, B, shift):
    """Bhattacharyya sum over Z_q^k, built from the product of 1-D weights exp(-pi x^2/B^2)."""
    r = int(np.floor(B))
    xs = np.arange(-r, r + 1)
    w = np.exp(-np.pi * (xs / B) ** 2)
    w /= w.sum()
    pmf = np.zeros(q)
    pmf[xs % q] = w
    grid = pmf
    for _ in range(len(shift) - 1):
        grid = np.multiply.outer(grid, pmf)
    moved = np.roll(grid, shift=tuple(int(v) for v in shift), axis=tuple(range(len(shift))))
    return max(0.0, 1.0 - float(np.sum(np.sqrt(grid * moved))))


def test_criterion_4_shift_bound():
    q, B = 64, 8
    rng = np.random.default_rng(401)
    violations = mismatches = 0
    worst = 0.0
    for k in (1, 2):
        D = TruncGaussian(q, B, k)
        base = D.density()
        for _ in range(100):
            shift = rng.integers(-B, B + 1, size=k)
            h2 = hellinger2(base, D.shifted_density(shift))
            bound = shift_bound(shift, B)
            violations += h2 > bound + 1e-12
            mismatches += abs(h2 - _h2_by_hand(q, B, shift)) > 1e-12
            worst = max(worst, h2 - bound)
    passed = violations == 0 and mismatches == 0
    record(4, passed, f"q=64 B=8 k=1,2: 200 shifts, {violations} violations, "
                      f"{mismatches} library/hand mismatches, max(H2-bound)={worst:.3g}")
    assert passed


# -- 5: Pauli mixing -------------------------------------------------------------------

_PX = np.array([[0, 1], [1, 0]], dtype=complex)
_PZ = np.diag([1, -1]).astype(complex)


def _pauli_by_hand(z, x):
    """Z^z X^x on len(z) qubits, qubit j as bit j of the index."""
    out = np.eye(1)
    for zj, xj in zip(z, x):  # later qubits sit to the left
        single = np.linalg.matrix_power(_PZ, zj) @ np.linalg.matrix_power(_PX, xj)
        out = np.kron(single, out)
    return out


def _mixing_by_hand(l, side, rng):
    n = l + side
    g = rng.normal(size=(1 << n, 1 << n)) + 1j * rng.normal(size=(1 << n, 1 << n))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    acc = np.zeros_like(rho)
    for zb in range(1 << l):
        for xb in range(1 << l):
            p = np.kron(np.eye(1 << side), _pauli_by_hand([(zb >> j) & 1 for j in range(l)],
                                                          [(xb >> j) & 1 for j in range(l)]))
            acc += p @ rho @ p.conj().T
    acc /= 4 ** l
    reduced = np.einsum("ajbj->ab", rho.reshape(1 << side, 1 << l, 1 << side, 1 << l))
    return float(np.abs(acc - np.kron(reduced, np.eye(1 << l) / (1 << l))).max())


def test_criterion_5_pauli_mixing():
    rng = np.random.default_rng(501)
    devs = {}
    for l in (1, 2):
        devs[l] = max(max(pauli_mixing_check(l, side=1, rng=rng), _mixing_by_hand(l, 1, rng)) for _ in range(5))
    passed = all(v < MATRIX_TOL for v in devs.values())
    record(5, passed, ", ".join(f"l={l} max deviation {v:.2e}" for l, v in devs.items()) + " (limit 1e-10)")
    assert passed


# -- 6: Toffoli conjugation ------------------------------------------------------------

def _toffoli_by_hand():
    T = np.eye(8)
    T[[3, 7]] = T[[7, 3]]  # bits 0 and 1 set: flip bit 2
    return T


def _cnot_by_hand(c, t):
    M = np.zeros((8, 8))
    for i in range(8):
        M[i ^ (((i >> c) & 1) << t), i] = 1
    return M


def _cz_by_hand(a, b):
    return np.diag([-1.0 if (i >> a) & (i >> b) & 1 else 1.0 for i in range(8)])


def _phase_residual(A, B):
    inner = np.trace(B.conj().T @ A)
    phase = inner / abs(inner) if abs(inner) > 1e-12 else 1.0
    return float(np.linalg.norm(A - phase * B, 2))


def test_criterion_6_toffoli_conjugation():
    T = _toffoli_by_hand()
    worst_lib = worst_hand = 0.0
    for key in range(64):
        z = [(key >> j) & 1 for j in range(3)]
        x = [(key >> (3 + j)) & 1 for j in range(3)]
        worst_lib = max(worst_lib, toffoli_conjugation_residual(z, x))
        z1, z2, z3 = z
        x1, x2, x3 = x
        C = (np.linalg.matrix_power(_cnot_by_hand(0, 2), x2) @ np.linalg.matrix_power(_cnot_by_hand(1, 2), x1)
             @ np.linalg.matrix_power(_cz_by_hand(0, 1), z3))
        P2 = _pauli_by_hand([z1 ^ (x2 & z3), z2 ^ (x1 & z3), z3], [x1, x2, (x1 & x2) ^ x3])
        worst_hand = max(worst_hand, _phase_residual(T @ _pauli_by_hand(z, x), C @ P2 @ T))
    passed = worst_lib < MATRIX_TOL and worst_hand < MATRIX_TOL
    record(6, passed, f"64 keys: library residual {worst_lib:.1e}, independent matrices {worst_hand:.1e}")
    assert passed


# -- 7: exact vs sampled encrypted CNOT ------------------------------------------------

def _claw_ok(out, keys, c_hat, params):
    if out.collapsed:
        return out.claw is None and out.branch in (0, 1)
    return out.claw.verify(keys, c_hat, s_bit=1) and \
        (out.z_corr, out.x_corr) == pauli_correction_bits(out.claw, out.d, params)


@pytest.fixture(scope="module")
def nano_chat(nano_keys):
    return dual_encrypt(nano_keys.pk, 1, s=np.array([3]), e=np.array([0, 0, 0, 1]))


def test_criterion_7_exact_vs_sampled(nano, nano_keys, nano_chat):
    runs = 10_000
    psi = StateVector(np.array([1, 1, 1, -1j]) / 2)
    rng = np.random.default_rng(701)
    start = time.perf_counter()
    sim = ExactSimulation(psi, nano_chat, nano_keys, nano)
    law, exact_runs = exact_joint_law(sim, rng=rng, runs=runs)
    sampled_runs = [encrypted_cnot_sampled(psi, nano_chat, nano_keys, nano, rng) for _ in range(runs)]
    secs = time.perf_counter() - start
    bad_claws = sum(not _claw_ok(o, nano_keys, nano_chat, nano) for o in exact_runs + sampled_runs)
    emp_exact, emp_sampled = empirical_law(exact_runs), empirical_law(sampled_runs)
    tv = tv_between_laws(emp_exact, emp_sampled)
    tv_e, tv_s = tv_between_laws(law, emp_exact), tv_between_laws(law, emp_sampled)
    passed = tv < TV_TOL and bad_claws == 0 and secs < 300
    record(7, passed, f"nano, 1e4 runs each: TV(exact, sampled)={tv:.4f} (limit 0.02); "
                      f"TV to exact law {tv_e:.4f}/{tv_s:.4f}; {len(law)} outcome classes; "
                      f"{bad_claws} bad claws; {secs:.0f}s (limit 300s)")
    assert passed


# -- 8: fidelity accounting ------------------------------------------------------------

def test_criterion_8_fidelity_accounting(nano, nano_keys, nano_chat):
    rng = np.random.default_rng(801)
    chats = [nano_chat, dual_encrypt(nano_keys.pk, 1, s=np.array([0]), e=np.zeros(nano.m + 1, dtype=np.int64))]
    chats += [dual_encrypt(nano_keys.pk, 1, rng) for _ in range(4)]
    worst = 0.0
    for c_hat in chats:
        f0, f1 = image_densities(nano_keys, c_hat, nano)
        predicted = 1 - (1 - hellinger2(f0, f1)) ** 2
        shortfall = 1 - measured_fidelity(nano_keys, c_hat, nano)
        worst = max(worst, abs(shortfall - predicted))
    passed = worst < FIDELITY_TOL
    record(8, passed, f"nano, {len(chats)} encryptions of 1: max |shortfall - (1-(1-H2)^2)| = {worst:.1e} (limit 1e-6)")
    assert passed


# -- 9: end-to-end QHE -----------------------------------------------------------------

_SINGLE = ("X", "Z", "H", "K")


def _random_cliffords(n, count, rng):
    gates = []
    for _ in range(count):
        if rng.random() < 0.3:
            c, t = rng.choice(n, size=2, replace=False)
            gates.append(GateOp("CNOT", (int(c), int(t))))
        else:
            gates.append(GateOp(str(rng.choice(_SINGLE)), (int(rng.integers(n)),)))
    return gates


def random_circuit(rng):
    n = int(rng.integers(3, 5))
    gates = []
    for _ in range(int(rng.integers(1, 3))):
        gates += _random_cliffords(n, int(rng.integers(0, 5)), rng)
        gates.append(GateOp("TOFFOLI", tuple(int(v) for v in rng.choice(n, size=3, replace=False))))
    gates += _random_cliffords(n, int(rng.integers(0, 4)), rng)
    return n, gates


def _crn_tv(p, r, u):
    """TV between the shot histograms of p and r drawn with the same uniforms."""
    size = len(p)
    hp = np.bincount(np.minimum(np.searchsorted(np.cumsum(p), u), size - 1), minlength=size)
    hr = np.bincount(np.minimum(np.searchsorted(np.cumsum(r), u), size - 1), minlength=size)
    return 0.5 * float(np.abs(hp - hr).sum()) / len(u)


def test_criterion_9_end_to_end(desk_chain):
    pk1, chain, sk = desk_chain
    rng = np.random.default_rng(901)
    start = time.perf_counter()
    worst_shots = worst_exact = 0.0
    toffolis = levels = 0
    for _ in range(100):
        n, gates = random_circuit(rng)
        assert toffoli_levels(load_circuit(gates)) <= 2
        toffolis = max(toffolis, sum(g.kind == "TOFFOLI" for g in gates))
        levels = max(levels, toffoli_levels(load_circuit(gates)))
        psi = StateVector.random(n, rng)
        out = qhe_eval(qhe_encrypt(pk1, psi, rng), gates, chain, "oracle", rng)
        got = qhe_decrypt(sk, out).probabilities()
        want = simulate_plain(psi, gates).probabilities()
        u = rng.random(10_000)
        worst_shots = max(worst_shots, _crn_tv(got, want, u))
        worst_exact = max(worst_exact, 0.5 * float(np.abs(got - want).sum()))
    secs = time.perf_counter() - start
    passed = worst_shots < TV_TOL and secs < 600
    record(9, passed, f"desk oracle mode, 100 circuits (up to {toffolis} Toffolis, {levels} levels): "
                      f"max shot TV {worst_shots:.4f} (limit 0.02), max exact TV {worst_exact:.1e}, {secs:.0f}s (limit 600s)")
    assert passed


# -- 10: faithful vs oracle key updates ------------------------------------------------

def _faithful_trials(params, noiseless, seed, trials=20):
    rng = np.random.default_rng(seed)
    pk1, chain, sk2 = qhe_keygen(params, 1, rng)
    keys1 = chain.oracle.keys(1)
    agree = budget_errors = 0
    for _ in range(trials):
        bits = rng.integers(0, 2, size=4).tolist()
        keys = {slot: EncBit.fresh(pk1, b, rng, noiseless, key=1) for slot, b in zip(("z0", "z1", "x0", "x1"), bits)}
        s = int(rng.integers(0, 2))
        if noiseless:
            c_hat = dual_encrypt(pk1, s, s=rng.integers(0, params.q, size=params.n),
                                 e=np.zeros(params.m + 1, dtype=np.int64))
        else:
            c_hat = dual_encrypt(pk1, s, rng)
        outcome = encrypted_cnot_sampled(StateVector.random(2, rng), c_hat, keys1, params, rng)
        oracle = keyupdate_pipeline(outcome, c_hat, keys, chain, 1, "oracle", noiseless=noiseless, rng=rng)
        try:
            keyupdate_pipeline(outcome, c_hat, keys, chain, 1, "faithful", noiseless=noiseless)
        except NoiseBudgetError:
            budget_errors += 1
        faithful = keyupdate_pipeline(outcome, c_hat, keys, chain, 1, "faithful", noiseless=noiseless,
                                      enforce_budget=False)
        agree += all(gsw_decrypt(sk2, oracle[k]) == gsw_decrypt(sk2, faithful[k]) for k in oracle)
    return agree, budget_errors


@pytest.mark.xfail(strict=True, reason="nano-plus has a depth budget of -1: one product of fresh "
                                       "ciphertexts already exceeds q/(4(m+1)), so the compiled pipeline "
                                       "cannot decrypt correctly under real noise")
def test_criterion_10_faithful_agreement(nano_plus):
    start = time.perf_counter()
    agree, budget_errors = _faithful_trials(nano_plus, False, 1001)
    secs = time.perf_counter() - start
    passed = agree == 20
    record(10, passed, f"nano-plus with real noise: {agree}/20 agree; {budget_errors}/20 runs refused by the "
                       f"noise budget when enforced; {secs:.1f}s (limit 1800s)")
    assert passed


def test_criterion_10_zero_noise_structure(nano_plus):
    start = time.perf_counter()
    agree, _ = _faithful_trials(nano_plus, True, 1002)
    secs = time.perf_counter() - start
    note(10, f"zero-noise structural run, not the criterion: {agree}/20 agree in {secs:.1f}s")
    assert agree == 20


# -- 11: parameter validator -----------------------------------------------------------

def test_criterion_11_validator(nano, desk):
    reports = {}
    stable = stored = True
    for name, params in (("nano", nano), ("desk", desk)):
        first, second = validate_params(params), validate_params(params)
        stable &= first == second
        stored &= first.as_dict() == load_preset(name).report
        reports[name] = first
    n, d = reports["nano"], reports["desk"]
    decisions = (not n.quantum_ok) and d.trapdoor_ok and d.classical_ok and d.quantum_ok
    passed = decisions and stable and stored
    record(11, passed, f"nano quantum_ok={n.quantum_ok}; desk trapdoor/classical/quantum="
                       f"{d.trapdoor_ok}/{d.classical_ok}/{d.quantum_ok}; stable={stable}; matches stored={stored}")
    assert passed
