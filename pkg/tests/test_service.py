from pathlib import Path

from fastapi.testclient import TestClient

from rtlopt.service import app

client = TestClient(app)
PROGDIR = Path(__file__).resolve().parent.parent / "programs"

ADD = """\
main "main"
function "main"(r1, r2) stack 0 {
  entry 1
  1: r3 = add32 r1, r2 -> 2
  2: return r3
}
"""


def test_health():
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok"}


def test_opt_roundtrip():
    src = (PROGDIR / "syrk.rtl").read_text()
    r = client.post("/opt", json={"program": src})
    assert r.status_code == 200
    body = r.json()
    assert body["program"] == (PROGDIR / "syrk.opt.golden.rtl").read_text()
    assert body["stats"]["functions"]["kernel_syrk"]["unrolled"] == 1


def test_opt_parse_error_is_400():
    r = client.post("/opt", json={"program": "nonsense"})
    assert r.status_code == 400
    assert "parse error" in r.json()["detail"]


def test_opt_validation_error_is_400():
    r = client.post("/opt", json={"program": ADD.replace("-> 2", "-> 9")})
    assert r.status_code == 400
    assert r.json()["detail"]["diagnostics"]


def test_opt_unknown_pass_is_400():
    r = client.post("/opt", json={"program": ADD, "passes": ["nope"]})
    assert r.status_code == 400
    assert "unknown pass" in r.json()["detail"]


def test_opt_options_respected():
    src = (PROGDIR / "syrk.rtl").read_text()
    r = client.post("/opt", json={"program": src, "passes": ["unroll"],
                                  "options": {"unroll_threshold": 3}})
    assert r.status_code == 200
    assert r.json()["stats"]["functions"]["kernel_syrk"]["unrolled"] == 0


def test_run_returns_value_and_trace():
    src = """\
main "main"
function "main"(r1) stack 0 {
  entry 1
  1: r2 = call "ext_f" (r1) -> 2
  2: return r2
}
"""
    r = client.post("/run", json={"program": src, "args": ["i32:3"],
                                  "seed": 4})
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "returned"
    assert len(body["trace"]) == 1
    assert body["trace"][0]["symbol"] == "ext_f"
    assert body["trace"][0]["args"] == ["i32:3"]
    assert body["value"] == body["trace"][0]["ret"]
    assert body["reason"] is None


def test_run_trap_reason():
    src = """\
main "main"
function "main"(r1) stack 0 {
  entry 1
  1: r2 = load int32 [r1 + 0] -> 2
  2: return r2
}
"""
    r = client.post("/run", json={"program": src, "args": ["i32:0"]})
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "trapped"
    assert body["reason"] == "load from non-pointer"
    assert body["value"] is None


def test_run_out_of_fuel():
    src = """\
main "main"
function "main"() stack 0 {
  entry 1
  1: nop -> 1
}
"""
    r = client.post("/run", json={"program": src, "fuel": 50})
    assert r.status_code == 200
    assert r.json()["status"] == "outoffuel"


def test_run_bad_arg_text_is_400():
    r = client.post("/run", json={"program": ADD, "args": ["x:1", "i32:2"]})
    assert r.status_code == 400


def test_typecheck_maps_registers():
    r = client.post("/typecheck", json={"program": ADD})
    assert r.status_code == 200
    assert r.json()["functions"] == {
        "main": {"r1": "T32", "r2": "T32", "r3": "T32"}}


def test_typecheck_conflict_is_400():
    src = """\
main "main"
function "main"(r1) stack 0 {
  entry 1
  1: r2 = add32 r1, r1 -> 2
  2: r3 = add64 r1, r1 -> 3
  3: return r2
}
"""
    r = client.post("/typecheck", json={"program": src})
    assert r.status_code == 400
    assert "type error in main" in r.json()["detail"]


def test_check_dup_identity_ok():
    r = client.post("/check-dup", json={"original": ADD,
                                        "transformed": ADD})
    assert r.status_code == 200
    assert r.json() == {"ok": True}


def test_check_dup_rejects_edit():
    r = client.post("/check-dup", json={
        "original": ADD,
        "transformed": ADD.replace("add32", "sub32")})
    assert r.status_code == 422
    assert "rejected at node 1" in r.json()["detail"]


def test_check_dup_unknown_function_is_422():
    r = client.post("/check-dup", json={
        "original": ADD,
        "transformed": ADD.replace('"main"(', '"other"(').replace(
            'main "main"', 'main "other"')})
    assert r.status_code == 422


def test_difftest_small_batch():
    r = client.post("/difftest", json={"seed": 51, "programs": 6,
                                       "runs": 3})
    assert r.status_code == 200
    body = r.json()
    assert body["ok"] is True
    assert body["programs"] == 6
    assert body["runs"] == 18
    assert body["returned"] + body["trapped"] + body["out_of_fuel"] == 18
    assert body["violations"] == []


def test_stats_functions():
    src = (PROGDIR / "syrk.rtl").read_text()
    r = client.post("/stats", json={"program": src})
    assert r.status_code == 200
    fns = r.json()["functions"]
    assert set(fns) == {"kernel_syrk", "main"}
    assert fns["kernel_syrk"]["nodes"] == 29
    assert fns["kernel_syrk"]["unreached"] == 0