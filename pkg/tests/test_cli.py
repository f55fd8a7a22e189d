import json
import subprocess
import sys

import pytest

from diffiety.cli import EXIT_ERROR, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_OK, main, render, run
from diffiety.dsl import parse

from conftest import FIXTURES


def _main(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _spec(name):
    return parse((FIXTURES / f"{name}.dfy").read_text())


def test_example4_json(capsys):
    code, out, _ = _main(capsys, "analyze", FIXTURES / "example4.dfy", "--order", 4, "--format", "json")
    data = json.loads(out)
    assert code == EXIT_OK
    assert set(data) == {"system", "window", "assumptions", "results", "forks", "stable"}
    res = data["results"][0]
    assert res["K"] == 0 and res["mu"] == 1 and res["window"] == 4
    assert res["verdict"] == "pass" and res["assumptions"] == []
    assert data["assumptions"] == ["F''(w2_1)"] and data["stable"] is True


def test_example4_text(capsys):
    code, out, _ = _main(capsys, "standard-basis", FIXTURES / "example4.dfy")
    assert code == EXIT_OK
    assert "pi: [w1_0' − F'(w2_1)·w2_0']" in out
    _, again, _ = _main(capsys, "standard-basis", FIXTURES / "example4.dfy")
    assert again == out


def test_singular_case(capsys):
    code, out, _ = _main(capsys, "analyze", FIXTURES / "example4_singular.dfy", "--format", "json")
    res = json.loads(out)["results"][0]
    assert code == EXIT_OK and res["K"] == 1 and res["mu"] == 1
    assert res["tau"] == ["w1_0' − A·w2_0'"]


def test_fork_tree():
    rep = run(_spec("example4_fork"), "analyze")
    assert [f["path"] for f in rep.forks] == ["root", "zero"]
    assert rep.forks[0]["factor"] == "F''(w2_1)"
    by_case = {r["case"]: r for r in rep.results}
    assert set(by_case) == {"nonzero", "zero/nonzero", "zero/zero"}
    assert by_case["nonzero"]["K"] == 0
    assert by_case["zero/nonzero"]["K"] == 1 and by_case["zero/zero"]["K"] == 1
    assert by_case["nonzero"]["assumptions"] == ["F''(w2_1)"]
    assert rep.exit_code == EXIT_OK


def test_case_filter():
    rep = run(_spec("example4_fork"), "analyze", case="zero/zero")
    assert [r["case"] for r in rep.results] == ["zero/zero"]


def test_cartan_lines(capsys):
    code, out, _ = _main(capsys, "cartan", FIXTURES / "cartan_single.dfy")
    assert code == EXIT_OK and "PASS σ=(1,0) σ̄=(1,0)" in out
    code, out, _ = _main(capsys, "cartan", FIXTURES / "cartan_determined.dfy")
    assert code == EXIT_OK and "PASS σ=(0,0) σ̄=(0,0)" in out
    code, out, _ = _main(capsys, "cartan", FIXTURES / "cartan_misresolved.dfy")
    assert code == EXIT_FAIL and "REJECTED" in out


def test_hilbert_contact(capsys):
    code, out, _ = _main(capsys, "hilbert", FIXTURES / "contact2.dfy", "--format", "json")
    res = json.loads(out)["results"][0]
    assert code == EXIT_OK and res["nu"] == 0 and res["hilbert_e"] == [2]
    assert res["lift_invariants"] == [[0, 2]] * 3 and res["window"] == 5


def test_hilbert_inconclusive_for_general_systems(capsys):
    code, _, _ = _main(capsys, "hilbert", FIXTURES / "cartan_single.dfy")
    assert code == EXIT_INCONCLUSIVE


def test_wave(capsys):
    code, out, _ = _main(capsys, "wave", FIXTURES / "wave_scaling.dfy", "--W", "x*bar(x) - u + bar(u)",
                         "--W", "2*v - bar(v)", "--format", "json")
    res = json.loads(out)["results"][0]
    assert code == EXIT_OK
    assert res["forward"]["x"] == "w1_1" and res["forward"]["w2_0"] == "2*w2_0"
    assert res["inverse_certified"] and res["backward_implied"]


def test_wave_bad_seeds(capsys):
    code, out, _ = _main(capsys, "wave", FIXTURES / "wave_scaling.dfy", "--W", "x*bar(x) - u + bar(u)",
                         "--W", "2*v - bar(v)", "--forward", "D(u); x*D(u) - u; 2*v")
    assert code == EXIT_FAIL and "residuals" in out


def test_variations(capsys):
    code, out, _ = _main(capsys, "variations", FIXTURES / "example4.dfy", "--z", "x", "--p", "u*D(v)",
                         "--format", "json")
    res = json.loads(out)["results"][0]
    assert code == EXIT_OK and res["variation_ok"] and res["round_trip"]
    code, out, _ = _main(capsys, "variations", FIXTURES / "example4.dfy", "--format", "json")
    res = json.loads(out)["results"][0]
    assert code == EXIT_OK and len(res["conditions"]) == 1


def test_check_symmetry(capsys, tmp_path):
    seeds = tmp_path / "legendre.seeds"
    seeds.write_text("x -> D(u)\nu -> u - x*D(u)\nv -> 2*v\n")
    code, out, _ = _main(capsys, "check-symmetry", FIXTURES / "wave_scaling.dfy", "--seeds", seeds)
    assert code == EXIT_OK and "symmetry" in out
    seeds.write_text("x -> x\nu -> u\nv -> 0\n")
    code, out, _ = _main(capsys, "check-symmetry", FIXTURES / "wave_scaling.dfy", "--seeds", seeds)
    assert code == EXIT_FAIL and "morphism-only" in out


def test_input_errors(capsys, tmp_path):
    bad = tmp_path / "bad.dfy"
    bad.write_text("system s\ndep u\neq D(u) =\n")
    code, _, err = _main(capsys, "analyze", bad)
    assert code == EXIT_ERROR and "line 3" in err
    code, _, _ = _main(capsys, "analyze", tmp_path / "missing.dfy")
    assert code == EXIT_ERROR


def test_max_order_cap(monkeypatch):
    monkeypatch.setenv("DIFFIETY_MAX_ORDER", "2")
    rep = run(_spec("example4"), "analyze", order=6)
    assert rep.window == 2 and rep.results[0]["window"] == 2


def test_json_round_trip():
    rep = run(_spec("example4_singular"), "analyze")
    assert json.loads(render(rep, "json")) == json.loads(json.dumps(rep.as_dict()))


def test_every_verdict_carries_window_and_assumptions():
    for name, cmd in [("example4_fork", "analyze"), ("contact2", "hilbert"), ("cartan_single", "cartan")]:
        for r in run(_spec(name), cmd).results:
            assert "window" in r and "assumptions" in r and "case" in r


def test_byte_identical_across_processes():
    cmd = [sys.executable, "-m", "diffiety.cli", "analyze", str(FIXTURES / "example4_fork.dfy"),
           "--format", "json", "--seed", "3"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and json.loads(a)["results"]
