import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from semiflow import cli
from semiflow.errors import ScenarioError
from semiflow.scenario import (
    build_operator, build_problem, check_scenario, initial_state, load_scenario, parse_scenario, run,
)

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

SMALL_PLAPLACE = """
[scenario]
kind = plaplace_obstacle
name = small
t_final = 0.2
steps = 100

[operator]
p = 3
nodes = 41

[data]
f = "-u + 0.5*u^3"
lower = "-0.5*sin(pi*x)"
upper = "0.5*sin(pi*x)"
u0 = "0.25*sin(2*pi*x)"

[check]
deltas = 0.1, 0.01
per_profile = 1
"""


def write(tmp_path, text, name="s.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def test_parse_small_scenario():
    sc = parse_scenario(SMALL_PLAPLACE)
    assert sc.kind == "plaplace_obstacle" and sc.steps == 100 and sc.t_final == 0.2
    assert sc.check.deltas == (0.1, 0.01) and sc.check.per_profile == 1
    assert sc.data["f"](u=2.0) == 2.0
    assert sc.output.prefix == "small" and sc.output.csv and not sc.output.svg
    assert sc.with_steps(7).steps == 7


@pytest.mark.parametrize("text, message", [
    ("[data]\nu0 = \"0\"\n", "missing [scenario]"),
    ("[scenario]\nkind = heat\n[data]\nu0 = \"0\"\n", "kind must be one of"),
    ("[scenario]\nkind = custom_linear\nsteps = 0\n[data]\nu0 = \"0\"\n", "steps >= 1"),
    ("[scenario]\nkind = custom_linear\nsteps = many\n[data]\nu0 = \"0\"\n", "must be numbers"),
    ("[scenario]\nkind = custom_linear\n[data]\nu0 = \"0\"\ng = \"1\"\n", "unknown data key"),
    ("[scenario]\nkind = custom_linear\n[data]\nf = \"u\"\n", "needs u0"),
    ("[scenario]\nkind = custom_linear\n[data]\nu0 = \"u\"\n", "u0"),
    ("[scenario]\nkind = custom_linear\n[data]\nu0 = \"1 +\"\n", "byte"),
    ("[scenario]\nkind = age_structured\n[operator]\nnodes = 11\nhorizon = 1\n"
     "[data]\nu0 = \"0\"\nbeta = \"u\"\n", "beta"),
    ("[scenario]\nkind = impulsive\n[data]\nu0 = \"0\"\n", "needs [barriers]"),
    ("[scenario]\nkind = impulsive\n[data]\nu0 = \"0\"\n[barriers]\ntau1 = \"1\"\n", "no impulse1"),
    ("[scenario]\nkind = custom_linear\n[data]\nu0 = \"0\"\n[output]\nsvg = maybe\n", "yes/no"),
    ("[scenario\nkind = x\n", "<string>"),
])
def test_parse_errors(text, message):
    with pytest.raises(ScenarioError, match=message.replace("[", r"\[")):
        parse_scenario(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "nope.ini")


def test_two_dimensional_slots_allow_y():
    sc = parse_scenario("[scenario]\nkind = reaction_diffusion\n[operator]\nnodes = 9, 9\n"
                        "[data]\nf = \"u*y\"\nu0 = \"sin(pi*x)*sin(pi*y)\"\n")
    op = build_operator(sc)
    assert op.geometry.dim == 2 and op.geometry.shape == (9, 9)
    u0 = initial_state(sc, op)
    assert op.in_domain(u0)


def test_mode_list_initial_state():
    sc = parse_scenario("[scenario]\nkind = reaction_diffusion\n[operator]\nnodes = 21\n"
                        "u0_modes = \"1:0.5, 3:0.1\"\n")
    op = build_operator(sc)
    x = op.geometry.axis(0)
    np.testing.assert_allclose(initial_state(sc, op).values,
                               0.5 * np.sin(np.pi * x) + 0.1 * np.sin(3 * np.pi * x), atol=1e-15)


def test_age_builder_uses_beta_expression():
    sc = parse_scenario("[scenario]\nkind = age_structured\n[operator]\nnodes = 101\nhorizon = 2\n"
                        "[data]\nbeta = \"0.25\"\nu0 = \"-0.5*(x+1)\"\nlower = \"-0.5*(x+1)\"\n")
    prob = build_problem(sc)
    assert prob.op.spec.birth_integral == pytest.approx(0.5)
    assert prob.kind == "age_structured"
    with pytest.raises(ScenarioError, match="integral of beta"):
        build_operator(sc.with_data(beta="0.6"))


def test_shipped_scenarios_parse():
    files = sorted(SCENARIOS.glob("*.ini"))
    assert len(files) >= 6
    kinds = {load_scenario(p).kind for p in files}
    assert {"plaplace_obstacle", "reaction_diffusion", "age_structured", "impulsive"} <= kinds


# --------------------------------------------------------------------------
# run pipeline
# --------------------------------------------------------------------------

def test_run_small_scenario_writes_files(tmp_path):
    rep = run(parse_scenario(SMALL_PLAPLACE), out_dir=tmp_path, svg=True)
    assert rep.certified and rep.exit_code == 0 and rep.first_exit is None
    assert [Path(p).name for p in rep.files] == ["small.csv", "small.svg"]
    assert all(Path(p).exists() for p in rep.files)
    header = Path(rep.files[0]).read_text().splitlines()[0]
    assert header == "t,V_lower,V_upper,min_u_minus_m,max_u_minus_M"
    assert rep.summary["min_u_minus_m"] >= -1e-6 and rep.summary["max_u_minus_M"] <= 1e-6
    assert any("PASS" in line for line in rep.lines())


def test_run_broken_source_reports_exit(tmp_path):
    sc = parse_scenario(SMALL_PLAPLACE).with_data(f="-u + 0.5*u^3 - 50")
    rep = run(sc)
    assert not rep.certified and rep.exit_code == 1
    assert rep.first_exit is not None and rep.monitors["lower"].max_v > 1e-8
    assert rep.conditions.find("subsolution").verdict == "violated"
    assert rep.files == []


def test_run_is_deterministic(tmp_path):
    sc = parse_scenario(SMALL_PLAPLACE)
    a = run(sc, out_dir=tmp_path / "a", rng=np.random.default_rng(3))
    b = run(sc, out_dir=tmp_path / "b", rng=np.random.default_rng(3))
    assert Path(a.files[0]).read_bytes() == Path(b.files[0]).read_bytes()


def test_custom_omega_is_used():
    sc = parse_scenario(SMALL_PLAPLACE + "omega = \"0*s\"\n")
    _, conditions, pointwise = check_scenario(sc)
    assert conditions.passed
    assert pointwise.children and all(c.name.startswith("pointwise_") for c in pointwise.children)


def test_impulsive_scenario_runs():
    rep = run(load_scenario(SCENARIOS / "impulsive.ini"))
    assert rep.hit_counts == [1, 1] and rep.certified
    assert rep.conditions.find("barrier_order").passed


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------

def test_cli_run_pass_and_outputs(tmp_path, capsys):
    path = write(tmp_path, SMALL_PLAPLACE)
    code = cli.main(["run", str(path), "--out-dir", str(tmp_path / "out"), "--svg"])
    assert code == 0
    assert (tmp_path / "out" / "small.csv").exists() and (tmp_path / "out" / "small.svg").exists()
    assert "PASS" in capsys.readouterr().out


def test_cli_out_dir_from_environment(tmp_path, monkeypatch):
    path = write(tmp_path, SMALL_PLAPLACE)
    monkeypatch.setenv("SEMIFLOW_OUT_DIR", str(tmp_path / "env"))
    assert cli.main(["--quiet", "run", str(path)]) == 0
    assert (tmp_path / "env" / "small.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    good = write(tmp_path, SMALL_PLAPLACE, "good.ini")
    broken = write(tmp_path, SMALL_PLAPLACE.replace("0.5*u^3\"", "0.5*u^3 - 50\""), "broken.ini")
    bad_input = write(tmp_path, "[scenario]\nkind = nope\n", "bad.ini")
    solver = write(tmp_path, SMALL_PLAPLACE.replace("nodes = 41", "nodes = 41\nnewton_max_iter = 0\n"
                                                   "newton_tol = 1e-300"), "solver.ini")
    out = str(tmp_path / "o")
    assert cli.main(["--quiet", "run", str(good), "--out-dir", out]) == 0
    assert cli.main(["--quiet", "run", str(broken), "--out-dir", out]) == 1
    assert cli.main(["--quiet", "run", str(bad_input), "--out-dir", out]) == 2
    assert cli.main(["--quiet", "run", str(solver), "--out-dir", out]) == 3
    assert cli.main(["--quiet", "run", str(good), str(bad_input), "--out-dir", out]) == 2
    assert cli.main(["run"]) == 2
    assert cli.main(["frobnicate"]) == 2
    capsys.readouterr()


def test_cli_check(tmp_path, capsys):
    good = write(tmp_path, SMALL_PLAPLACE, "good.ini")
    assert cli.main(["check", str(good)]) == 0
    out = capsys.readouterr().out
    assert "subsolution: certified" in out and "pointwise" in out
    assert cli.main(["check", str(tmp_path / "missing.ini")]) == 2


@pytest.mark.parametrize("beta, code", [("x", 0), ("x^2", 0), ("x*ln(1+x)", 0), ("sqrt(x)", 1),
                                        ("u", 2), ("x +", 2)])
def test_cli_certify_slow(beta, code, capsys):
    assert cli.main(["certify-slow", "--beta", beta, "--gamma", "0.5"]) == code
    out = capsys.readouterr()
    if code == 0:
        assert "certified" in out.out and "M = 2" in out.out
    if code == 2:
        assert "input error" in out.err


def test_cli_global_flags_after_subcommand(capsys):
    assert cli.main(["certify-slow", "--beta", "x", "--gamma", "0.5", "--quiet", "--seed", "4"]) == 0
    assert capsys.readouterr().out == ""


def test_cli_validate(capsys):
    assert cli.main(["validate"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out


def test_cli_parallel_matches_serial(tmp_path):
    a = write(tmp_path, SMALL_PLAPLACE, "a.ini")
    b = write(tmp_path, SMALL_PLAPLACE.replace("name = small", "name = other"), "b.ini")
    assert cli.main(["--quiet", "--seed", "9", "run", str(a), str(b), "--out-dir", str(tmp_path / "s")]) == 0
    assert cli.main(["--quiet", "--seed", "9", "run", str(a), str(b), "--out-dir", str(tmp_path / "p"),
                     "--parallel", "2"]) == 0
    for name in ("small.csv", "other.csv"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "semiflow", "certify-slow", "--beta", "x^2", "--gamma", "0.5"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and "slow: certified" in proc.stdout
