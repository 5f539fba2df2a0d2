import json
import math

import pytest

from supercrit import cli, envelopes


def run(args, capsys):
    code = cli.run(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_envelope_example(capsys):
    code, out, _ = run(["envelope", "--d", "3", "--beta", "1", "--kappa", "1", "--eval", "h", "--r", "0.5"], capsys)
    assert code == 0 and out == "0.135335\n"


def test_envelope_formats(capsys):
    code, out, _ = run(["envelope", "--eval", "h_tilde", "--r", "0.5", "--format", "csv"], capsys)
    head, row = out.splitlines()
    assert code == 0 and head == "eval,value" and row.startswith("h_tilde,")
    assert float(row.split(",")[1]) == pytest.approx((math.pi / 2) ** 0.5 * math.exp(-2), rel=1e-14)
    code, out, _ = run(["envelope", "--eval", "eta1", "--format", "json"], capsys)
    assert json.loads(out)["value"] == [pytest.approx(2 ** (-19 / 9))]
    code, out, _ = run(["envelope", "--eval", "small_time", "--t", "1", "--x", "2,0,0", "--y", "2,0,0"], capsys)
    p = envelopes.ModelParams(d=3, beta=1.0, kappa=1.0)
    ref = envelopes.small_time_envelope(p, envelopes.EnvelopeConstants(), 1.0, [2.0, 0, 0], [2.0, 0, 0]).value
    assert out == f"{ref:.6g}\n"


def test_empty_invocation_and_empty_config(tmp_path, capsys):
    code, _, err = run([], capsys)
    assert code == 1 and "usage: supercrit" in err
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("# nothing here\n")
    code, _, err = run(["--config", str(cfg)], capsys)
    assert code == 1 and "usage: supercrit" in err


def test_usage_errors_name_the_key(tmp_path, capsys):
    code, _, err = run(["envelope", "--eval", "h"], capsys)
    assert code == 1 and "'r'" in err
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("command = envelope\nbogus = 3\n")
    code, _, err = run(["--config", str(cfg)], capsys)
    assert code == 1 and "'bogus'" in err
    code, _, err = run(["survival", "--t", "1", "--r", "0.5", "--suite", "all"], capsys)
    assert code == 1 and "'suite'" in err
    code, _, err = run(["envelope", "--eval", "h", "--r", "zero"], capsys)
    assert code == 1


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[run]\ncommand = envelope\neval = h\nr = 0.5\nd = 3 # inline comment\n")
    code, out, _ = run(["--config", str(cfg)], capsys)
    assert code == 0 and out == "0.135335\n"
    code, out, _ = run(["--config", str(cfg), "--r", "2"], capsys)
    assert out == "0.367879\n"


def test_parse_config_text_rejects_garbage():
    with pytest.raises(cli.UsageError):
        cli.parse_config_text("no equals sign\n")
    assert cli.parse_config_text("a = 1\n\n# c\n[x]\nb=2") == {"a": "1", "b": "2"}


def test_survival_pde_and_table(capsys):
    code, out, _ = run(["survival", "--t", "0.2", "--r", "0.6,1", "--per_decade", "100", "--steps", "200"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "t,r,u" and len(lines) == 3
    code, out, _ = run(["survival", "--t", "0.2", "--table", "true", "--per_decade", "50", "--steps", "100"], capsys)
    assert out.splitlines()[0] == "r,u"


def test_mc_output_is_byte_identical_across_threads(tmp_path, capsys):
    base = ["kernel", "--d", "1", "--method", "mc", "--t", "0.5", "--x", "0.5", "--y", "1",
            "--paths", "3000", "--batch_size", "500", "--seed", "17", "--weight_floor", "-40"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.run(base + ["--threads", "1", "--out", str(a)]) == 0
    assert cli.run(base + ["--threads", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "t,x,y,mean,stderr,n,zero_weight_frac"


def test_kernel_pde_and_opposite_sides(capsys):
    code, out, _ = run(["kernel", "--d", "1", "--t", "0.5", "--x", "1", "--y", "-2"], capsys)
    assert code == 0 and out.splitlines()[1] == "0.5,1,-2,0"


def test_survival_mc(capsys):
    code, out, _ = run(["survival", "--method", "mc", "--t", "0.1", "--r", "0.5", "--paths", "500"], capsys)
    assert code == 0 and out.splitlines()[0] == "t,r,mean,stderr,n,zero_weight_frac"


def test_green_free(capsys):
    code, out, _ = run(["green", "--form", "zero", "--x", "-0.5", "--y", "0.5", "--paths", "20",
                        "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out)["estimate"]["mean"] == pytest.approx(0.0796, rel=0.05)


def test_verify_exit_codes(capsys):
    code, out, _ = run(["verify", "--suite", "goldens"], capsys)
    assert code == 0 and out.startswith("[PASS] criterion  2")
    # the Bessel criterion fails by design (see the decisions ledger)
    code, out, _ = run(["verify", "--suite", "bessel"], capsys)
    assert code == 2 and out.startswith("[FAIL] criterion  1")


def test_verify_counterexample_on_critical(capsys):
    code, out, _ = run(["verify", "--suite", "counterexample", "--form", "critical", "--C", "5", "--sign", "1"],
                       capsys)
    assert code == 0 and "expected positive" in out


def test_verify_unknown_suite(capsys):
    code, _, err = run(["verify", "--suite", "nope"], capsys)
    assert code == 1 and "'suite'" in err
