import json
from pathlib import Path

import pytest

from rtlopt import cli
from rtlopt.dup import find_loops, unroll_first
from rtlopt.ir import parse_program, print_program

PROGDIR = Path(__file__).resolve().parent.parent / "programs"

ADD = """\
main "main"
function "main"(r1, r2) stack 0 {
  entry 1
  1: r3 = add32 r1, r2 -> 2
  2: return r3
}
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_opt_writes_golden(tmp_path, capsys):
    out = tmp_path / "syrk.opt.rtl"
    rc = cli.main(["opt", str(PROGDIR / "syrk.rtl"), "-o", str(out)])
    assert rc == 0
    assert out.read_text() == (PROGDIR / "syrk.opt.golden.rtl").read_text()
    assert capsys.readouterr().out == ""


def test_opt_stdout_and_pass_selection(tmp_path, capsys):
    path = write(tmp_path, "p.rtl", ADD)
    rc = cli.main(["opt", path, "--passes=selfmove,dce"])
    assert rc == 0
    text = capsys.readouterr().out
    assert parse_program(text).functions["main"].code
    assert text == print_program(parse_program(ADD))  # nothing to remove


def test_opt_dump_invariants(tmp_path, capsys):
    path = write(tmp_path, "p.rtl", ADD)
    rc = cli.main(["opt", path, "--passes=cse3", "--dump-invariants"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "# invariants main" in out
    assert "# 1: {}" in out


def test_parse_error_exits_1(tmp_path, capsys):
    path = write(tmp_path, "bad.rtl", "function oops\n")
    rc = cli.main(["opt", path])
    assert rc == cli.EXIT_USAGE
    assert "parse error" in capsys.readouterr().err


def test_validation_error_exits_1(tmp_path, capsys):
    src = ADD.replace("-> 2", "-> 9")
    path = write(tmp_path, "bad.rtl", src)
    rc = cli.main(["opt", path])
    assert rc == cli.EXIT_USAGE
    err = capsys.readouterr().err
    assert "does not validate" in err
    assert "successor" in err


def test_missing_file_exits_1(tmp_path, capsys):
    rc = cli.main(["opt", str(tmp_path / "absent.rtl")])
    assert rc == cli.EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_run_prints_value(tmp_path, capsys):
    path = write(tmp_path, "p.rtl", ADD)
    rc = cli.main(["run", path, "i32:20", "i32:22"])
    assert rc == 0
    assert capsys.readouterr().out == "returned i32:42\n"


def test_run_syrk_checksum(capsys):
    rc = cli.main(["run", str(PROGDIR / "syrk.rtl"), "ptr:C+0", "ptr:A+0"])
    assert rc == 0
    assert capsys.readouterr().out == "returned f64:0x409dbec000000000\n"


def test_run_reports_trap(tmp_path, capsys):
    src = """\
main "main"
global "g" size 8
function "main"(r1) stack 0 {
  entry 1
  1: r2 = load int32 [r1 + 0] -> 2
  2: return r2
}
"""
    path = write(tmp_path, "p.rtl", src)
    rc = cli.main(["run", path, "i32:5"])
    assert rc == 0
    assert "trapped: load from non-pointer" in capsys.readouterr().out


def test_run_trace_lists_external_calls(tmp_path, capsys):
    src = """\
main "main"
function "main"() stack 0 {
  entry 1
  1: r1 = call "ext_probe" () -> 2
  2: return r1
}
"""
    path = write(tmp_path, "p.rtl", src)
    rc = cli.main(["run", path, "--trace", "--seed", "9"])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("call ext_probe() -> ")
    assert out[1].startswith("returned ")


def test_run_bad_value_text(tmp_path, capsys):
    path = write(tmp_path, "p.rtl", ADD)
    rc = cli.main(["run", path, "q:7", "i32:1"])
    assert rc == cli.EXIT_USAGE


def test_typecheck_lines(tmp_path, capsys):
    path = write(tmp_path, "p.rtl", ADD)
    rc = cli.main(["typecheck", path])
    assert rc == 0
    assert capsys.readouterr().out == "main: r1:T32 r2:T32 r3:T32\n"


def test_typecheck_rejects_conflict(tmp_path, capsys):
    src = """\
main "main"
function "main"(r1) stack 0 {
  entry 1
  1: r2 = add32 r1, r1 -> 2
  2: r3 = add64 r1, r1 -> 3
  3: return r2
}
"""
    path = write(tmp_path, "p.rtl", src)
    rc = cli.main(["typecheck", path])
    assert rc == cli.EXIT_USAGE
    assert "type error" in capsys.readouterr().err


def test_check_dup_accepts_real_unroll(tmp_path, capsys):
    p = parse_program((PROGDIR / "syrk.rtl").read_text())
    fn = p.functions["kernel_syrk"]
    loop = min(find_loops(fn), key=lambda l: len(l.body))
    fn2, revmap = unroll_first(fn, loop, 30)
    p.functions["kernel_syrk"] = fn2
    orig = str(PROGDIR / "syrk.rtl")
    transf = write(tmp_path, "t.rtl", print_program(p))
    rmap = write(tmp_path, "m.json",
                 json.dumps({"kernel_syrk": {str(k): v
                                             for k, v in revmap.items()}}))
    rc = cli.main(["check-dup", orig, transf, rmap])
    assert rc == 0
    assert capsys.readouterr().out == "ok\n"


def test_check_dup_rejects_edit(tmp_path, capsys):
    edited = ADD.replace("add32", "sub32")
    orig = write(tmp_path, "a.rtl", ADD)
    transf = write(tmp_path, "b.rtl", edited)
    rmap = write(tmp_path, "m.json", "{}")
    rc = cli.main(["check-dup", orig, transf, rmap])
    assert rc == cli.EXIT_REJECTED
    assert "rejected at node 1" in capsys.readouterr().err


def test_check_dup_bad_map_file(tmp_path, capsys):
    orig = write(tmp_path, "a.rtl", ADD)
    rmap = write(tmp_path, "m.json", "not json")
    rc = cli.main(["check-dup", orig, orig, rmap])
    assert rc == cli.EXIT_USAGE
    assert "bad reverse map" in capsys.readouterr().err


def test_difftest_clean_batch(capsys):
    rc = cli.main(["difftest", "--programs", "8", "--runs", "4",
                   "--seed", "41"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "programs 8  runs 32" in out
    assert "violations: 0" in out


def test_difftest_reports_violations(monkeypatch, capsys):
    import rtlopt.difftest as dt
    monkeypatch.setattr(dt, "outcome_refines", lambda a, b: False)
    rc = cli.main(["difftest", "--programs", "2", "--runs", "1"])
    assert rc == cli.EXIT_VIOLATION
    assert "violations: 2" in capsys.readouterr().out


def test_stats_lines(capsys):
    rc = cli.main(["stats", str(PROGDIR / "syrk.rtl")])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("kernel_syrk: nodes=29 catalog=")
    assert lines[1].startswith("main: nodes=30 ")
    assert all("descents=" in l for l in lines)


def test_stats_dump_invariants(capsys):
    rc = cli.main(["stats", str(PROGDIR / "syrk.rtl"), "--dump-invariants"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "invariants kernel_syrk" in out
    assert "1: {}" in out


def test_hset_audit(capsys):
    for seed in (0, 3):
        rc = cli.main(["hset-audit", "--ops", "3000", "--seed", str(seed)])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("ok: 3000 operations")
        assert "descents" in out


def test_unknown_command_exits_2_via_argparse():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])