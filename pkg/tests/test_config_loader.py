import json

import pytest

from slope_recovery.config.config_loader import ENV_OVERRIDES, ConfigLoader, load_config


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in list(ENV_OVERRIDES) + ["SLOPE_CONFIG"]:
        monkeypatch.delenv(name, raising=False)


def test_defaults_when_no_file(tmp_path):
    loader = ConfigLoader(str(tmp_path / "missing.json"))
    assert loader.loaded_from is None
    assert loader["tolerances"]["pattern_tol"] == 1e-4
    assert loader.get("experiments")["master_seed"] == 20240601
    assert "logging" in loader
    assert loader.get("unknown", 5) == 5


def test_file_is_layered_over_defaults(tmp_path):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({"tolerances": {"eq_tol": 1e-7}, "experiments": {"workers": 8}}))
    loader = ConfigLoader(str(path))
    assert loader.loaded_from == path
    tol = loader.get_tolerances()
    assert tol.eq_tol == 1e-7
    assert tol.rank_tol == 1e-10
    assert loader["experiments"]["workers"] == 8
    assert loader["experiments"]["mc_reps"] == 100000


def test_env_overrides_win(tmp_path, monkeypatch):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({"solver": {"max_iter": 10}}))
    monkeypatch.setenv("SLOPE_MAX_ITER", "250")
    monkeypatch.setenv("SLOPE_PATTERN_TOL", "1e-6")
    monkeypatch.setenv("SLOPE_LOG_LEVEL", "DEBUG")
    loader = ConfigLoader(str(path))
    assert loader.get_solver_options().max_iter == 250
    assert loader.get_tolerances().pattern_tol == 1e-6
    assert loader["logging"]["level"] == "DEBUG"


def test_bad_env_value_is_ignored(tmp_path, monkeypatch):
    monkeypatch.setenv("SLOPE_WORKERS", "many")
    loader = ConfigLoader(str(tmp_path / "missing.json"))
    assert loader["experiments"]["workers"] == 1


def test_config_path_from_environment(tmp_path, monkeypatch):
    path = tmp_path / "env.json"
    path.write_text(json.dumps({"experiments": {"master_seed": 5}}))
    monkeypatch.setenv("SLOPE_CONFIG", str(path))
    assert ConfigLoader()["experiments"]["master_seed"] == 5


def test_invalid_json_falls_back_to_defaults(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    loader = ConfigLoader(str(path))
    assert loader.loaded_from is None
    assert loader.get_solver_options().max_iter == 50000
    assert load_config(str(path))["tolerances"]["eq_tol"] == 1e-9
