import subprocess
import sys
from pathlib import Path

import pytest

from qfhe.cli import run, streams

GOLDEN = Path(__file__).parent / "golden"


def call(capsys, *argv):
    code = run([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_params_check_nano_flags_failure(capsys):
    code, out, _ = call(capsys, "params", "check", "--preset", "nano", "--skip-depth")
    assert code == 0
    quantum = next(line for line in out.splitlines() if line.startswith("quantum"))
    assert quantum.endswith("FAIL")
    assert "stored report     matches" in out


def test_params_check_desk_passes(capsys):
    code, out, _ = call(capsys, "params", "check", "--preset", "desk")
    lines = out.splitlines()
    for prefix in ("rows", "beta_init", "classical", "quantum"):
        assert next(line for line in lines if line.startswith(prefix)).endswith("pass")
    assert "stored report     matches" in out


def test_demo_toffoli(capsys):
    code, out, _ = call(capsys, "--seed", 7, "demo", "toffoli", "--preset", "desk", "--mode", "oracle")
    assert code == 0
    rows = out.strip().splitlines()
    assert rows[0] == "input,output,expected,ok"
    assert len(rows) == 9 and all(r.endswith(",yes") for r in rows[1:])


def test_golden_gaussian_stats(capsys):
    _, out, _ = call(capsys, "--seed", 5, "stats", "gaussians", "--q", 64, "--B", 8, "--samples", 2000)
    assert out == (GOLDEN / "stats_gaussians_q64_B8_seed5.csv").read_text()


def test_pipeline_is_deterministic(tmp_path, capsys):
    outputs = []
    for run_id in range(2):
        d = tmp_path / str(run_id)
        d.mkdir()
        (d / "circ.txt").write_text("H 0\nT 0 1 2\nCNOT 2 1\n")
        assert call(capsys, "--seed", 3, "keygen", "--preset", "desk", "--levels", 1,
                    "--chain", d / "chain.bin", "--sk", d / "sk.bin")[0] == 0
        assert call(capsys, "--seed", 3, "encrypt", "--chain", d / "chain.bin", "--bits", "110",
                    "--out", d / "ct.bin")[0] == 0
        assert call(capsys, "--seed", 3, "eval", "--chain", d / "chain.bin", "--ct", d / "ct.bin",
                    "--circuit", d / "circ.txt", "--out", d / "out.bin")[0] == 0
        code, text, _ = call(capsys, "decrypt", "--chain", d / "chain.bin", "--sk", d / "sk.bin",
                             "--ct", d / "out.bin")
        assert code == 0
        outputs.append((d / "chain.bin").read_bytes() + (d / "ct.bin").read_bytes()
                       + (d / "out.bin").read_bytes() + text.encode())
    assert outputs[0] == outputs[1]


def test_classical_pipeline_decrypts(tmp_path, capsys):
    (tmp_path / "c.txt").write_text("X 0\nCNOT 0 1\n")
    call(capsys, "--seed", 1, "keygen", "--preset", "desk", "--levels", 0,
         "--chain", tmp_path / "ch", "--sk", tmp_path / "sk")
    call(capsys, "--seed", 1, "encrypt", "--chain", tmp_path / "ch", "--bits", "00", "--out", tmp_path / "ct")
    call(capsys, "--seed", 1, "eval", "--chain", tmp_path / "ch", "--ct", tmp_path / "ct",
         "--circuit", tmp_path / "c.txt", "--out", tmp_path / "o")
    code, out, _ = call(capsys, "decrypt", "--chain", tmp_path / "ch", "--sk", tmp_path / "sk", "--ct", tmp_path / "o")
    assert code == 0 and out.strip() == "11"


def test_enccnot_demo_small(capsys):
    code, out, _ = call(capsys, "--seed", 2, "enccnot", "demo", "--runs", 20)
    assert code == 0
    assert out.splitlines()[0].startswith("collapsed,branch")
    assert "TV(exact, sampled)" in out


def test_bench_nand(capsys):
    code, out, _ = call(capsys, "--seed", 1, "bench", "nand", "--trials", 3)
    assert code == 0 and out.splitlines()[1].startswith("desk,")


def test_exit_codes(tmp_path, capsys):
    assert call(capsys, "params", "check", "--preset", "nope")[0] == 11
    assert call(capsys, "decrypt", "--chain", tmp_path / "missing.bin")[0] == 2
    with pytest.raises(SystemExit) as exc:
        run(["keygen", "--levels", "x"])
    assert exc.value.code == 2
    (tmp_path / "c.txt").write_text("T 0 1 2\n")
    call(capsys, "--seed", 1, "keygen", "--preset", "desk", "--levels", 0,
         "--chain", tmp_path / "ch", "--sk", tmp_path / "sk")
    call(capsys, "--seed", 1, "encrypt", "--chain", tmp_path / "ch", "--bits", "110", "--out", tmp_path / "ct")
    assert call(capsys, "eval", "--chain", tmp_path / "ch", "--ct", tmp_path / "ct",
                "--circuit", tmp_path / "c.txt")[0] == 11


def test_streams_are_independent():
    a, b = streams(4), streams(4)
    assert a["keys"].integers(0, 1 << 30) == b["keys"].integers(0, 1 << 30)
    assert streams(4)["keys"].integers(0, 1 << 30) != streams(4)["encrypt"].integers(0, 1 << 30)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "qfhe", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "exit codes" in res.stdout
