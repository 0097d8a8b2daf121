import json
import subprocess
import sys

import pytest

from polarlab import channel as C
from polarlab import magma as M
from polarlab.cli import main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_zero_exponent(capsys):
    code, out, _ = run(["op", "classify", "zero-exponent"], capsys)
    assert code == 0
    assert out.splitlines()[0].startswith("polarizing: yes; zero-exponent condition: yes")
    assert "stable partitions of inverse" in out


def test_classify_xor_and_constant(capsys):
    _, out, _ = run(["op", "classify", "xor"], capsys)
    assert "polarizing: yes" in out and "quasigroup: yes" in out
    _, out, _ = run(["op", "classify", "constant:2"], capsys)
    assert out.startswith("polarizing: no (not uniformity preserving)")


def test_classify_json_witnesses(capsys):
    code, out, _ = run(["op", "classify", "shift:2", "--format", "json"], capsys)
    d = json.loads(out)
    assert code == 0 and d["cyclic_partition"] == [[0], [1]] and not d["polarizing"]
    _, out, _ = run(["op", "classify", "projection:2", "--format", "json"], capsys)
    assert json.loads(out)["invariant_set"] in ([0], [1])


def test_classify_file_and_errors(tmp_path, capsys):
    good = tmp_path / "op.txt"
    good.write_text(M.add_mod(3).to_text())
    assert run(["op", "classify", str(good)], capsys)[0] == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("2\n0 2\n1 0\n")
    code, _, err = run(["op", "classify", str(bad)], capsys)
    assert code == 2 and "error" in err
    assert run(["op", "classify", str(tmp_path / "missing.txt")], capsys)[0] == 2
    big = tmp_path / "big.txt"
    big.write_text(M.CayleyTable.from_array([[(a + b) % 11 for b in range(11)]
                                              for a in range(11)]).to_text())
    assert run(["op", "classify", str(big)], capsys)[0] == 3


def test_product(capsys):
    code, out, _ = run(["op", "product", "xor", "xor"], capsys)
    assert code == 0 and M.parse_op(out) == M.product_op([M.xor(), M.xor()])


def test_chan_info(capsys):
    code, out, _ = run(["chan", "info", "bec:0.25", "--format", "json", "--delta", "0.01"], capsys)
    d = json.loads(out)
    assert code == 0 and d["I"] == pytest.approx(0.75) and d["Z"] == pytest.approx(0.25)
    assert d["easiness_verdict"] == "RuledOut"


def test_chan_info_bad_rows(tmp_path, capsys):
    f = tmp_path / "w.txt"
    f.write_text("2 2\n0.9 0.0\n0.1 0.9\n")
    code, _, err = run(["chan", "info", str(f)], capsys)
    assert code == 2 and "sums to 0.9" in err


def test_chan_transform(capsys):
    code, out, _ = run(["chan", "transform", "bec:0.5", "--op", "xor", "--sign=-+",
                        "--format", "json"], capsys)
    d = json.loads(out)
    assert code == 0 and d["I"] == pytest.approx(0.4375) and d["Z"] == pytest.approx(0.5625)
    _, out2, _ = run(["chan", "transform", "bec:0.5", "--op", "xor", "--sign", "mp",
                      "--format", "json"], capsys)
    assert json.loads(out2) == d


def test_chan_transform_channel_format(capsys):
    _, out, _ = run(["chan", "transform", "bec:0.3", "--op", "xor", "--sign=+",
                     "--format", "channel"], capsys)
    assert C.equivalent(C.parse_channel(out), C.bec(0.09))


def test_polarize_bec(capsys):
    code, out, _ = run(["polarize", "--channel", "bec:0.5", "--op", "xor", "--depth", "10"], capsys)
    lines = out.splitlines()
    assert code == 0 and len(lines) == 1025
    assert lines[0].startswith("s,I,Z")
    vals = [float(ln.split(",")[1]) for ln in lines[1:]]
    assert sum(vals) / 1024 == pytest.approx(0.5, abs=1e-6)


def test_polarize_summary_file(tmp_path, capsys):
    summary = tmp_path / "s.json"
    code, _, _ = run(["polarize", "--channel", "bec:0.5", "--op", "xor", "--depth", "4",
                      "--summary", str(summary), "--format", "table"], capsys)
    d = json.loads(summary.read_text())
    assert code == 0 and d["leaves"] == 16 and d["mean_I"] == pytest.approx(0.5)


def test_polarize_cyclic_fixture_never_easy(tmp_path, capsys):
    op = M.CayleyTable.from_array([[(a + 1 + 2 * (b & 1)) % 4 for b in range(4)] for a in range(4)])
    (tmp_path / "op.txt").write_text(op.to_text())
    (tmp_path / "w.txt").write_text(C.cyclic_channel(M.cyclic_classes(op), 0, 0.2).to_text())
    code, out, _ = run(["polarize", "--channel", str(tmp_path / "w.txt"), "--op", str(tmp_path / "op.txt"),
                        "--depth", "3", "--delta", "0.01", "--format", "json"], capsys)
    assert code == 0 and json.loads(out)["summary"]["fraction_certified"] == 0


def test_polarize_montecarlo_byte_identical(tmp_path, capsys):
    argv = ["polarize", "--channel", "random:3:3:2", "--op", "add:3", "--depth", "3",
            "--mode", "montecarlo", "--seed", "5", "--samples", "100"]
    outs = [run(argv + ["--threads", t], capsys)[1] for t in ("1", "2", "8")]
    assert outs[0] == outs[1] == outs[2]


def test_polarize_threads_from_environment(monkeypatch, capsys):
    argv = ["polarize", "--channel", "bec:0.4", "--op", "xor", "--depth", "6",
            "--mode", "montecarlo", "--seed", "1", "--samples", "50"]
    plain = run(argv, capsys)[1]
    monkeypatch.setenv("POLARLAB_THREADS", "4")
    assert run(argv, capsys)[1] == plain


def test_polarize_budget_partial(tmp_path, capsys):
    out = tmp_path / "p.csv"
    code, _, err = run(["polarize", "--channel", "random:2:3:3", "--op", "add:3", "--depth", "3",
                        "--max-outputs", "1000", "-o", str(out)], capsys)
    text = out.read_text()
    assert code == 3 and "partial" in err
    assert text.startswith("# partial:")
    assert text.splitlines()[1].startswith("s,I")


def test_polarize_errors(capsys):
    assert run(["polarize", "--channel", "bec:0.5", "--op", "constant:2", "--depth", "2"], capsys)[0] == 2
    assert run(["polarize", "--channel", "bec:0.5", "--op", "constant:2", "--depth", "2",
                "--allow-non-up"], capsys)[0] == 0
    assert run(["polarize", "--channel", "bec:0.5", "--op", "xor", "--depth", "2",
                "--mode", "montecarlo"], capsys)[0] == 2
    assert run(["polarize", "--channel", "bec:x", "--op", "xor", "--depth", "2"], capsys)[0] == 2


def test_verify_default_suite(capsys):
    code, out, _ = run(["verify"], capsys)
    assert code == 0 and "VIOLATION" not in out


def test_verify_perfect_channel(capsys):
    code, out, _ = run(["verify", "--channel", "perfect:3", "--format", "json"], capsys)
    (row,) = json.loads(out)
    assert code == 0
    assert row["pe_lower"] == 0 and row["pe_upper"] == 0
    assert row["minus_slack"] == 0 and row["plus_error"] == 0


def test_mac_easiness(capsys):
    code, out, _ = run(["mac", "easiness", "--mac", "perfect:2x2", "--ops", "xor", "xor"], capsys)
    assert code == 0 and "Certified" in out
    code, out, _ = run(["mac", "easiness", "--mac", "adder", "--ops", "xor", "xor", "--delta", "0.01",
                        "--check-reduction"], capsys)
    assert code == 0 and "RuledOut" in out
    assert "direct vs reduced transforms: equal" in out


def test_mac_polarize(capsys):
    code, out, _ = run(["mac", "polarize", "--mac", "adder", "--ops", "xor", "xor", "--depth", "4",
                        "--format", "json"], capsys)
    d = json.loads(out)
    assert code == 0 and d["summary"]["mean_sum_rate"] == pytest.approx(1.5, abs=1e-6)
    assert d["summary"]["fraction_certified"] == 0.5


def test_mac_op_mismatch(capsys):
    assert run(["mac", "easiness", "--mac", "adder", "--ops", "xor", "add:3"], capsys)[0] == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "polarlab.cli", "op", "classify", "xor"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "polarizing: yes" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "polarlab.cli", "op", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
