import pytest

from LimeJDS.config import IntegratorConfig, RuntimeConfig, load_scenario, parse_scenario_text
from LimeJDS.exceptions import ConfigurationError, ScenarioParseError, ScenarioValidationError


def test_integrator_grid():
    cfg = IntegratorConfig(dt=0.01, horizon=1.0, record_stride=10)
    assert cfg.n_steps == 100
    assert cfg.record_steps == 11


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dt": 0.0},
        {"dt": -1e-3},
        {"horizon": 0.0},
        {"dt": 2.0, "horizon": 1.0},
        {"record_stride": 0},
        {"master_seed": -1},
    ],
)
def test_integrator_rejects_bad_settings(kwargs):
    with pytest.raises(ConfigurationError):
        IntegratorConfig(**kwargs)


def test_runtime_from_environment(monkeypatch):
    monkeypatch.setenv("LIMEJDS_THREADS", "3")
    monkeypatch.setenv("LIMEJDS_LOG_LEVEL", "debug")
    monkeypatch.setenv("LIMEJDS_OUTPUT_DIR", "elsewhere")
    runtime = RuntimeConfig.from_environment()
    assert runtime.threads == 3
    assert runtime.log_level == "DEBUG"
    assert runtime.output_dir == "elsewhere"


def test_runtime_rejects_bad_threads(monkeypatch):
    monkeypatch.setenv("LIMEJDS_THREADS", "many")
    with pytest.raises(ConfigurationError):
        RuntimeConfig.from_environment()
    monkeypatch.setenv("LIMEJDS_THREADS", "0")
    with pytest.raises(ConfigurationError):
        RuntimeConfig.from_environment()


def test_parse_scenario(scenario_text):
    text = scenario_text("linear", {"a": -1, "s": 0.2}, master_seed="1e3", record_stride=2)
    config = parse_scenario_text(text)
    assert config.scenario == "linear"
    assert config.ensemble == 4
    assert config.record_paths == 2
    assert config.outputs == ("paths", "occupation", "report")
    assert config.integrator.master_seed == 1000
    assert config.integrator.record_stride == 2
    assert config.parameters == {"a": "-1", "s": "0.2"}


def test_parse_scenario_defaults():
    config = parse_scenario_text("[scenario]\nname = sir\n")
    assert config.integrator == IntegratorConfig()
    assert config.parameters == {}
    assert config.output_dir is None


def test_parameter_keys_keep_case():
    config = parse_scenario_text("[scenario]\nname = control\n[parameters]\nK1 = 2\n")
    assert config.parameters == {"K1": "2"}


@pytest.mark.parametrize(
    "text",
    [
        "[scenario]\nname = sir\nensembel = 4\n",
        "[scenario]\nname = sir\n[integrator]\nstep = 0.1\n",
        "[scenario]\nname = sir\n[extras]\nx = 1\n",
        "[integrator]\ndt = 0.1\n",
        "[scenario]\nensemble = 4\n",
        "[scenario]\nname = sir\n[integrator]\ndt = fast\n",
        "[scenario]\nname = sir\n[integrator]\nmaster_seed = 1.5\n",
        "[scenario]\nname = sir\n[integrator]\ndt = 2\nhorizon = 1\n",
        "[scenario]\nname = sir\noutputs = paths, plots\n",
        "[scenario]\nname = sir\nensemble = 0\n",
    ],
)
def test_strict_validation(text):
    with pytest.raises(ScenarioValidationError):
        parse_scenario_text(text)


@pytest.mark.parametrize(
    "text",
    [
        "name = sir\n",
        "[scenario]\nname = sir\nname = linear\n",
        "[scenario]\nname = sir\n[scenario]\nensemble = 2\n",
    ],
)
def test_malformed_text(text):
    with pytest.raises(ScenarioParseError):
        parse_scenario_text(text)


def test_config_hash_and_overrides(scenario_text):
    base = parse_scenario_text(scenario_text("linear"))
    again = parse_scenario_text(scenario_text("linear"))
    other = parse_scenario_text(scenario_text("linear", {"a": 2}))
    assert base.config_hash == again.config_hash
    assert base.config_hash != other.config_hash

    changed = base.with_overrides(seed=99, output_dir="out")
    assert changed.integrator.master_seed == 99
    assert changed.output_dir == "out"
    assert changed.config_hash == base.config_hash
    assert base.with_overrides() == base


def test_load_scenario(tmp_path, scenario_text):
    path = tmp_path / "linear.ini"
    path.write_text(scenario_text("linear"), encoding="utf-8")
    assert load_scenario(str(path)).scenario == "linear"
    with pytest.raises(ScenarioParseError):
        load_scenario(str(tmp_path / "missing.ini"))
