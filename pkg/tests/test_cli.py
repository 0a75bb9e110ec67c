import json

import pytest

from aperion.cli import main, parse_eps_list, parse_phi

OP = 'g = 0.5\nomega = "golden"\nV = {cos = [[1, 0.01]]}\n'
ELLIPTIC = 'omega = "golden"\nA1 = {const = 1.0, cos = [[1, 0.01]]}\nA2 = 0.4\nW = {cos = [[1, 0.01]]}\n'
KPP = '{"omega": "golden", "A1": 1.0, "A2": 0.3, "W": {"const": 0.5, "cos": [[1, 0.2]]}}'
DRIFT = 'omega = "golden"\nA1 = 1.0\nA2 = 0.4\n'


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, text, suffix in (("op", OP, ".toml"), ("e", ELLIPTIC, ".toml"), ("kpp", KPP, ".json"),
                               ("drift", DRIFT, ".toml")):
        p = tmp_path / (name + suffix)
        p.write_text(text)
        paths[name] = str(p)
    paths["dir"] = tmp_path
    return paths


def _json(path):
    with open(path) as fh:
        return json.load(fh)


def test_ground_state_report_and_manifest(files):
    out = files["dir"] / "gs.json"
    assert main(["ground-state", "--op", files["op"], "--adjoint", "--report", str(out)]) == 0
    rep = _json(out)
    assert rep["E0"] == pytest.approx(rep["E0_adjoint"], abs=1e-8)
    man = _json(files["dir"] / "gs.manifest.json")
    assert man["all_passed"] and man["checks"]
    assert man["config_sha256"] and man["command"] == "ground-state"


def test_report_is_reproducible(files):
    a, b = files["dir"] / "a.json", files["dir"] / "b.json"
    for out in (a, b):
        assert main(["ground-state", "--elliptic", files["e"], "--report", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_resonant_override_exit_code(files):
    rc = main(["ground-state", "--op", files["op"], "--omega", "0.5", "--method", "reducibility",
               "--report", str(files["dir"] / "r.json")])
    assert rc == 3


def test_missing_file_exit_code(files):
    assert main(["ground-state", "--op", str(files["dir"] / "nope.toml")]) == 2


def test_reduce_and_perturb(files):
    out = files["dir"] / "red.json"
    assert main(["reduce", "--op", files["op"], "--E", "2.3", "--out", str(out)]) == 0
    assert _json(out)["reconstruction_error"] <= 1e-8
    assert main(["reduce", "--op", files["op"], "--E", "2.3", "--perturb", "--out", str(out)]) == 0
    assert _json(out)["distance"] <= 1e-4


def test_convert_round_trip(files):
    j = files["dir"] / "j.json"
    e = files["dir"] / "e2.json"
    assert main(["convert", "--elliptic", files["drift"], "--out", str(j)]) == 0
    assert main(["convert", "--jacobi", str(j), "--out", str(e)]) == 0
    back = _json(e)["elliptic"]
    assert back is not None


def test_cocycle(files):
    out = files["dir"] / "c.json"
    assert main(["cocycle", "--op", files["op"], "--E", "2.4", "--n", "5000", "--out", str(out)]) == 0
    rep = _json(out)
    assert rep["lyapunov_estimate"] > 0


def test_kpp_steady(files):
    out, rep = files["dir"] / "steady.csv", files["dir"] / "steady.json"
    assert main(["kpp-steady", "--elliptic", files["kpp"], "--window", "1024", "--out", str(out),
                 "--report", str(rep)]) == 0
    assert out.read_text().splitlines()[0] == "n,u0"
    assert _json(rep)["gap"] <= 1e-6


def test_homogenize_table(files):
    out = files["dir"] / "conv.csv"
    assert main(["homogenize", "--elliptic", files["drift"], "--phi", "gaussian:sigma=1", "--eps", "1/16,1/32",
                 "--no-window-check", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("eps,error,ratio")
    assert len(lines) == 3


def test_selftest_quick(capsys):
    assert main(["selftest", "--only", "1,10"]) == 0
    text = capsys.readouterr().out
    assert "2/2 criteria passed" in text


def test_argument_parsers():
    assert parse_eps_list("1/16,0.25") == [1 / 16, 0.25]
    assert parse_phi("gaussian:1.5").sigma == 1.5
    assert parse_phi("gaussian:σ=2").sigma == 2.0
