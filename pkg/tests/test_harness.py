import json

import numpy as np
import pytest

from ncergodic.errors import ConfigError, ResourceError
from ncergodic.harness.cli import main
from ncergodic.harness.config import ScenarioConfig, load_config
from ncergodic.harness.runner import EXIT_CONFIG, EXIT_OK, EXIT_RESOURCE, oracle_guard, run_experiment
from ncergodic.harness.scenarios import (
    build_scenario,
    builtin_config,
    builtin_names,
    builtin_scenario,
    nested_expectation_model,
    tensor_shift,
)
from ncergodic.harness.verify import load_baseline, load_nstar

ROT = [[[1, 0, 0], [0, 0.6, -0.8], [0, 0.8, 0.6]]]


def test_builtin_registry():
    assert builtin_names() == ["free_rotation3", "permutation8", "random_markov", "two_point"]
    with pytest.raises(ConfigError):
        builtin_config("nope")


@pytest.mark.parametrize(
    "data",
    [
        {"kind": "lattice"},
        {"kind": "permutation", "colour": 1},
        {"m": 2},
        {"kind": "random_markov"},
        {"kind": "two_point", "seed": -1},
        {"kind": "two_point", "seed": 2**64},
        {"kind": "two_point", "tolerances": {"speed": 1}},
        {"kind": "two_point", "runs": ["everything"]},
        {"kind": "two_point", "orlicz": ["power:0.5"]},
        {"kind": "two_point", "n_max": 0},
    ],
)
def test_config_validation(data):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(data)


def test_config_round_trip():
    cfg = builtin_config("random_markov")
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.tol["identity"] == 1e-9


def test_load_config_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"kind": "two_point",\n "m": }')
    with pytest.raises(ConfigError, match=r"bad.json:2:"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


@pytest.mark.parametrize(
    "extra",
    [
        {"kind": "permutation", "permutations": [[0, 0, 1], [0, 1, 2]], "algebra": {"points": 3}},
        {"kind": "permutation", "permutations": [[0, 1, 2]], "algebra": {"points": 3}},
        {"kind": "permutation", "permutations": [[0], [0]], "algebra": {"matrix": 2}},
        {"kind": "custom_unitaries", "m": 1, "algebra": {"matrix": 2}, "unitaries": [[[[1, 1], [0, 1]]]]},
        {"kind": "custom_unitaries", "m": 1, "algebra": {"matrix": 3}, "unitaries": [[[[1, 0], [0, 1]]]]},
        {"kind": "free_rotation", "algebra": {"matrix": 2}},
        {"kind": "two_point", "m": 3},
        {"kind": "two_point", "algebra": {"shape": 2}},
    ],
)
def test_scenario_build_errors(extra):
    with pytest.raises(ConfigError):
        build_scenario(ScenarioConfig(**extra))


def test_custom_unitaries_with_complex_entries():
    u = [[[[[0, 1], 0], [0, [0, -1]]]]]  # one generator, one block diag(i, -i)
    cfg = ScenarioConfig(kind="custom_unitaries", m=1, algebra={"matrix": 2}, unitaries=u, seed=1)
    sc = build_scenario(cfg)
    assert sc.action[1].is_automorphism


def test_scenario_fingerprint_is_stable():
    assert builtin_scenario("random_markov").fingerprint() == builtin_scenario("random_markov").fingerprint()
    a = build_scenario(ScenarioConfig(**{**builtin_config("random_markov").to_dict(), "seed": 1}))
    assert a.fingerprint() != builtin_scenario("random_markov").fingerprint()


def test_tensor_shift_cycles():
    S = tensor_shift(3)
    assert S.power(3).distance(S.power(0)) <= 1e-15
    assert S.is_automorphism


def test_nested_model_is_consistent():
    model = nested_expectation_model(3, 4)
    assert len(model.nested) == 4
    assert model.nested[2] is model.nested[3]


def test_oracle_guard():
    oracle_guard(ScenarioConfig(kind="two_point", n_max=40))
    with pytest.raises(ResourceError):
        oracle_guard(ScenarioConfig(kind="permutation", m=3, n_max=40, oracle_radius=12))


def test_baselines_are_packaged():
    data, header = load_baseline("permutation8")
    assert header[:3] == ["n", "err_inf", "err_l2"]
    assert data.shape == (30, 5)
    assert load_nstar() == {"permutation8": 12, "free_rotation3": 11}


@pytest.mark.parametrize("name", ["two_point", "random_markov"])
def test_run_writes_outputs(name, tmp_path):
    rep = run_experiment(builtin_config(name), tmp_path)
    assert rep.exit_code == EXIT_OK, rep.summary()
    for f in ("even_spheres.csv", "cesaro.csv", "rota.csv", "semigroup.csv", "summary.txt", "report.json"):
        assert (tmp_path / f).is_file()
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["exit_code"] == 0


def test_run_is_deterministic(tmp_path):
    cfg = builtin_config("random_markov")
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for f in ("even_spheres.csv", "cesaro.csv", "rota.csv", "semigroup.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_run_selected_phases(tmp_path):
    cfg = ScenarioConfig(kind="two_point", runs=["rota"], n_max=5)
    rep = run_experiment(cfg, tmp_path)
    assert {c.phase for c in rep.checks} <= {"rota"}
    assert not (tmp_path / "even_spheres.csv").exists()


def test_cli_run_and_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", "builtin:two_point", "--out", str(tmp_path / "o"), "--seed", "7"]) == EXIT_OK
    assert "failures: 0" in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "two_point", "m": 3}')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "bad")]) == EXIT_CONFIG
    assert not (tmp_path / "bad").exists()
    big = tmp_path / "big.json"
    big.write_text(json.dumps({"kind": "permutation", "m": 3, "algebra": {"points": 2},
                               "permutations": [[1, 0], [0, 1], [1, 0]], "n_max": 40, "oracle_radius": 12}))
    assert main(["run", "--config", str(big), "--out", str(tmp_path / "big")]) == EXIT_RESOURCE
    assert main(["run", "--config", str(big), "--out", str(tmp_path / "big"), "--no-oracle",
                 ]) == EXIT_OK


def test_cli_rejects_bad_seed():
    with pytest.raises(SystemExit):
        main(["run", "--config", "builtin:two_point", "--seed", "-3"])


def test_cli_scenarios(capsys):
    assert main(["scenario", "list"]) == EXIT_OK
    assert "permutation8" in capsys.readouterr().out
    assert main(["scenario", "show", "two_point"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["kind"] == "two_point"
    assert main(["scenario", "show", "missing"]) == EXIT_CONFIG


def test_cli_verify_orlicz_suite(capsys):
    code = main(["verify", "--suite", "orlicz"])
    out = capsys.readouterr().out
    assert out.count("criterion") == 1
    assert code == (EXIT_OK if "[PASS]" in out else 1)
