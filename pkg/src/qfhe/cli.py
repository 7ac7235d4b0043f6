"""Command-line front end.

Randomness: one ``--seed`` feeds a numpy SeedSequence, and each subsystem
draws from its own spawned child stream (keys, encryption, evaluation,
sampling), so adding draws to one stage never shifts another.

Exit codes: 0 success, 2 usage error, 10 generic domain error,
11 configuration, 12 dimension, 13 inversion failure, 14 noise budget.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .errors import QfheError

STREAMS = ("keys", "encrypt", "eval", "sample")


def streams(seed: int | None) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def _read_bits(text: str) -> list[int]:
    bits = [int(ch) for ch in text.strip() if ch in "01"]
    if not bits:
        raise argparse.ArgumentTypeError("expected a bit string such as 0110")
    return bits


# -- subcommands ----------------------------------------------------------------------

def cmd_params_check(args) -> int:
    from .dualfhe import validate_params
    from .params import load_preset

    preset = load_preset(args.preset)
    report = validate_params(preset.params, measure_depth=not args.skip_depth)
    for line in report.lines():
        print(line)
    stored = dict(preset.report)
    fresh = report.as_dict()
    if args.skip_depth:
        for key in ("dec_circuit_depth", "pipeline_depth", "compiled_ok"):
            stored.pop(key, None)
            fresh.pop(key, None)
    print(f"stored report     {'matches' if stored == fresh else 'DIFFERS'}")
    return 0


def cmd_presets_rebuild(args) -> int:
    from .params import write_presets

    path = write_presets(args.out)
    print(f"wrote {path}")
    return 0


def cmd_keygen(args) -> int:
    from .params import get_params
    from .qhe import qhe_keygen

    params = get_params(args.preset)
    rng = streams(args.seed)["keys"]
    _, chain, sk = qhe_keygen(params, args.levels, rng)
    Path(args.chain).write_bytes(chain.to_bytes(include_oracle=not args.no_oracle))
    Path(args.sk).write_bytes(sk.to_bytes())
    print(f"levels {args.levels}, preset {args.preset}: wrote {args.chain} and {args.sk}")
    return 0


def _load_chain(path):
    from .qhe import EvalKeyChain

    return EvalKeyChain.from_bytes(Path(path).read_bytes())


def cmd_encrypt(args) -> int:
    from .qhe import qhe_encrypt
    from .qsim import StateVector

    chain = _load_chain(args.chain)
    if args.state:
        amps = np.loadtxt(args.state, delimiter=",", dtype=float, ndmin=2)
        message = StateVector(amps[:, 0] + 1j * amps[:, 1])
    else:
        message = _read_bits(args.bits)
    ct = qhe_encrypt(chain.pk(1), message, streams(args.seed)["encrypt"])
    Path(args.out).write_bytes(ct.to_bytes())
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .qhe import QheCiphertext, qhe_eval

    chain = _load_chain(args.chain)
    ct = QheCiphertext.from_bytes(Path(args.ct).read_bytes(), chain.params)
    circuit = Path(args.circuit).read_text()
    t0 = time.perf_counter()
    out = qhe_eval(ct, circuit, chain, args.mode, streams(args.seed)["eval"], cnot_mode=args.cnot)
    Path(args.out).write_bytes(out.to_bytes())
    print(f"level {out.level}, collapsed events {out.collapsed}, {time.perf_counter() - t0:.2f}s")
    return 0


def cmd_decrypt(args) -> int:
    from .qhe import QheCiphertext, qhe_decrypt
    from .ringmod import from_bytes

    chain = _load_chain(args.chain)
    sk = from_bytes(Path(args.sk).read_bytes())
    ct = QheCiphertext.from_bytes(Path(args.ct).read_bytes(), chain.params)
    plain = qhe_decrypt(sk, ct)
    if ct.classical:
        print("".join(str(int(b)) for b in plain))
    else:
        print(plain.to_csv(), end="")
    return 0


def cmd_enccnot_demo(args) -> int:
    from .dualenc import dual_encrypt, dual_keygen
    from .distributions import tv_between_laws
    from .enccnot import ExactSimulation, empirical_law, encrypted_cnot_sampled
    from .params import get_params
    from .qsim import StateVector

    params = get_params(args.preset)
    rs = streams(args.seed)
    keys = dual_keygen(params, rs["keys"])
    e = np.zeros(params.m + 1, dtype=np.int64)
    e[-1] = 1
    c_hat = dual_encrypt(keys.public, args.s, s=np.ones(params.n, dtype=np.int64), e=e)
    psi = StateVector(np.array([1, 1, 1, -1j]) / 2)
    exact = ExactSimulation(psi, c_hat, keys, params).run(rs["sample"], args.runs)
    sampled = [encrypted_cnot_sampled(psi, c_hat, keys, params, rs["eval"]) for _ in range(args.runs)]
    le, ls = empirical_law(exact), empirical_law(sampled)
    print("collapsed,branch,z_corr,x_corr,state,exact,sampled")
    for key in sorted(set(le) | set(ls), key=lambda k: -(le.get(k, 0) + ls.get(k, 0))):
        collapsed, branch, zc, xc, state = key
        half = len(state) // 2
        amps = " ".join(f"{complex(r, i):.3f}" for r, i in zip(state[:half], state[half:]))
        print(f"{int(collapsed)},{branch},{zc},{xc},{amps},{le.get(key, 0):.4f},{ls.get(key, 0):.4f}")
    print(f"TV(exact, sampled) = {tv_between_laws(le, ls):.4f} over {args.runs} runs each")
    return 0


def cmd_demo_toffoli(args) -> int:
    from .params import get_params
    from .qhe import qhe_decrypt, qhe_encrypt, qhe_eval, qhe_keygen
    from .qsim import GateOp

    params = get_params(args.preset)
    rs = streams(args.seed)
    pk, chain, sk = qhe_keygen(params, 1, rs["keys"])
    circuit = [GateOp("TOFFOLI", (0, 1, 2))]
    print("input,output,expected,ok")
    ok_all = True
    for m in range(8):
        bits = [(m >> j) & 1 for j in range(3)]
        ct = qhe_encrypt(pk, bits, rs["encrypt"])
        out = qhe_eval(ct, circuit, chain, args.mode, rs["eval"])
        state = qhe_decrypt(sk, out)
        idx = int(np.argmax(np.abs(state.amplitudes)))
        got = [(idx >> j) & 1 for j in range(3)]
        want = [bits[0], bits[1], bits[2] ^ (bits[0] & bits[1])]
        ok = got == want and abs(abs(state.amplitudes[idx]) - 1) < 1e-9
        ok_all &= ok
        fmt = lambda b: "".join(map(str, b))
        print(f"{fmt(bits)},{fmt(got)},{fmt(want)},{'yes' if ok else 'NO'}")
    return 0 if ok_all else 1


def cmd_stats_gaussians(args) -> int:
    from .distributions import TruncGaussian

    rng = streams(args.seed)["sample"]
    dist = TruncGaussian(args.q, args.B, 1)
    draws = dist.sample(rng, size=args.samples).ravel()
    values, counts = np.unique(draws, return_counts=True)
    freq = dict(zip(values.tolist(), (counts / args.samples).tolist()))
    print("x,pmf,empirical")
    for x in range(-args.q // 2 + 1, args.q // 2 + 1):
        p = float(dist.pmf(np.array([x])))
        if p > 0 or x in freq:
            print(f"{x},{p:.6g},{freq.get(x, 0.0):.6g}")
    return 0


def cmd_bench_nand(args) -> int:
    from .dualenc import dual_keygen
    from .dualfhe import eval_nand, gsw_encrypt
    from .params import get_params

    params = get_params(args.preset)
    rs = streams(args.seed)
    keys = dual_keygen(params, rs["keys"])
    a = gsw_encrypt(keys.public, 1, rs["encrypt"])
    b = gsw_encrypt(keys.public, 0, rs["encrypt"])
    times = []
    for _ in range(args.trials):
        t0 = time.perf_counter()
        eval_nand(a, b)
        times.append(time.perf_counter() - t0)
    print("preset,N,trials,median_ms,min_ms")
    print(f"{args.preset},{params.N},{args.trials},{1e3 * np.median(times):.3f},{1e3 * min(times):.3f}")
    return 0


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qfhe", description="Leveled quantum homomorphic encryption toolkit.",
        epilog="exit codes: 0 ok, 1 demo mismatch, 2 usage, 10 domain error, 11 configuration, "
               "12 dimension, 13 inversion failure, 14 noise budget",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=None, help="seed for every random stream")
    parser.add_argument("--threads", type=int, default=1,
                        help="thread cap (every stage here is single-threaded; accepted for scripts)")
    sub = parser.add_subparsers(dest="command", required=True)

    params = sub.add_parser("params", help="parameter validation").add_subparsers(dest="action", required=True)
    check = params.add_parser("check", help="validate a preset and compare with its stored report")
    check.add_argument("--preset", required=True)
    check.add_argument("--skip-depth", action="store_true", help="skip compiling the key-update circuits")
    check.set_defaults(func=cmd_params_check)

    presets = sub.add_parser("presets", help="preset management").add_subparsers(dest="action", required=True)
    rebuild = presets.add_parser("rebuild", help="re-run the validator and rewrite presets.json")
    rebuild.add_argument("--out", default=None)
    rebuild.set_defaults(func=cmd_presets_rebuild)

    kg = sub.add_parser("keygen", help="generate pk_1..pk_{L+1}, the key chain and sk_{L+1}")
    kg.add_argument("--preset", default="desk")
    kg.add_argument("--levels", type=int, default=1)
    kg.add_argument("--chain", default="chain.bin")
    kg.add_argument("--sk", default="sk.bin")
    kg.add_argument("--no-oracle", action="store_true", help="omit the test-only key oracle from the chain file")
    kg.set_defaults(func=cmd_keygen)

    enc = sub.add_parser("encrypt", help="encrypt a bit string or a state")
    enc.add_argument("--chain", default="chain.bin")
    group = enc.add_mutually_exclusive_group(required=True)
    group.add_argument("--bits")
    group.add_argument("--state", help="CSV of real,imag amplitude rows")
    enc.add_argument("--out", default="ct.bin")
    enc.set_defaults(func=cmd_encrypt)

    ev = sub.add_parser("eval", help="evaluate a Clifford+Toffoli circuit file")
    ev.add_argument("--chain", default="chain.bin")
    ev.add_argument("--ct", default="ct.bin")
    ev.add_argument("--circuit", required=True)
    ev.add_argument("--mode", choices=("oracle", "faithful"), default="oracle")
    ev.add_argument("--cnot", choices=("sampled", "exact"), default="sampled")
    ev.add_argument("--out", default="ct_out.bin")
    ev.set_defaults(func=cmd_eval)

    dec = sub.add_parser("decrypt", help="decrypt with sk_{L+1}")
    dec.add_argument("--chain", default="chain.bin")
    dec.add_argument("--sk", default="sk.bin")
    dec.add_argument("--ct", default="ct_out.bin")
    dec.set_defaults(func=cmd_decrypt)

    ec = sub.add_parser("enccnot", help="encrypted CNOT tools").add_subparsers(dest="action", required=True)
    ecd = ec.add_parser("demo", help="run exact and sampled modes and compare their outcome laws")
    ecd.add_argument("--preset", default="nano")
    ecd.add_argument("--runs", type=int, default=500)
    ecd.add_argument("--s", type=int, choices=(0, 1), default=1)
    ecd.set_defaults(func=cmd_enccnot_demo)

    demo = sub.add_parser("demo", help="end-to-end demos").add_subparsers(dest="action", required=True)
    tof = demo.add_parser("toffoli", help="homomorphic Toffoli truth table")
    tof.add_argument("--preset", default="desk")
    tof.add_argument("--mode", choices=("oracle", "faithful"), default="oracle")
    tof.set_defaults(func=cmd_demo_toffoli)

    stats = sub.add_parser("stats", help="statistics").add_subparsers(dest="action", required=True)
    gs = stats.add_parser("gaussians", help="truncated Gaussian pmf against samples")
    gs.add_argument("--q", type=int, default=64)
    gs.add_argument("--B", type=float, default=8.0)
    gs.add_argument("--samples", type=int, default=100_000)
    gs.set_defaults(func=cmd_stats_gaussians)

    bench = sub.add_parser("bench", help="benchmarks").add_subparsers(dest="action", required=True)
    bn = bench.add_parser("nand", help="time one homomorphic NAND")
    bn.add_argument("--preset", default="desk")
    bn.add_argument("--trials", type=int, default=20)
    bn.set_defaults(func=cmd_bench_nand)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except QfheError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
