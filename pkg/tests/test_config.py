import pytest

from error_handler import ConfigError
from models import CrossSpeed, IntersectionConfig, LearnerConfig, SimSettings, StopTiming
from sim_config import SimConfig, env_name


def write_cfg(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def test_defaults_without_a_file():
    config = SimConfig(environ={})
    assert config.INTERSECTION == IntersectionConfig()
    assert config.SIM == SimSettings()
    assert config.LEARNER == LearnerConfig()
    assert config.LOG_LEVEL == "INFO"
    assert config.LOG_FILE_ENABLED is False


def test_file_values_and_aliases(tmp_path):
    path = write_cfg(tmp_path, "\n".join([
        "# comment",
        "intersection.L_C = 500",
        "intersection.W = 2,1,1,1",
        "sim.t_s = 0.25",
        "sim.seed = 7",
        "sim.lambda_per_hour = 900",
        "idm.speed_aware_follow = false",
        "planner.K_vmax = 50",
        "planner.tol_v = 0.1",
        "planner.cross_speed = max",
        "planner.stop_time = announced",
        "learner.episodes = 3",
        "log.level = DEBUG",
    ]))
    config = SimConfig(path, environ={})
    assert config.INTERSECTION.L_C == 500.0
    assert config.INTERSECTION.W == (2.0, 1.0, 1.0, 1.0)
    assert config.INTERSECTION.T_S == 0.25
    assert config.INTERSECTION.lambda_arrival == 900.0
    assert config.INTERSECTION.speed_aware_follow is False
    assert config.SIM.seed == 7
    assert config.PENALTIES.K_vmax == 50.0
    assert config.SOLVER.tol_v == 0.1
    assert config.SOLVER.cross_speed is CrossSpeed.MAX
    assert config.SOLVER.stop_time is StopTiming.ANNOUNCED
    assert config.LEARNER.episodes == 3
    assert config.LOG_LEVEL == "DEBUG"


def test_environment_beats_file_and_overrides_beat_environment(tmp_path):
    path = write_cfg(tmp_path, "sim.seed = 7\nsim.p_av = 0.25\n")
    config = SimConfig(path, environ={env_name("sim.seed"): "9", env_name("sim.p_av"): "0.75"},
                       overrides={"sim.p_av": 0.1})
    assert env_name("sim.t_s") == "TLSIM_SIM_T_S"
    assert config.SIM.seed == 9
    assert config.SIM.p_av == 0.1


def test_unknown_key_is_rejected(tmp_path):
    path = write_cfg(tmp_path, "sim.speed_limit = 3\n")
    with pytest.raises(ConfigError) as excinfo:
        SimConfig(path, environ={})
    assert "sim.speed_limit" in excinfo.value.message
    assert excinfo.value.exit_code == 2


def test_invalid_value_names_the_field(tmp_path):
    path = write_cfg(tmp_path, "sim.p_av = 1.5\n")
    with pytest.raises(ConfigError) as excinfo:
        SimConfig(path, environ={})
    assert "sim.p_av" in excinfo.value.message


def test_broken_cross_field_invariant_is_a_config_error(tmp_path):
    path = write_cfg(tmp_path, "intersection.T_RL = 15.2\n")
    with pytest.raises(ConfigError):
        SimConfig(path, environ={})


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        SimConfig(str(tmp_path / "nope.cfg"), environ={})


def test_sim_overrides_return_a_copy():
    config = SimConfig(environ={})
    changed = config.with_overrides(seed=5, horizon_s=60.0)
    assert changed.SIM.seed == 5 and changed.SIM.horizon_s == 60.0
    assert config.SIM.seed == 0
    with pytest.raises(ConfigError):
        config.with_overrides(p_av=-0.1)


def test_effective_parameters_include_defaults():
    effective = SimConfig(environ={}).to_dict()
    assert list(effective) == ["intersection", "sim", "planner", "learner", "log"]
    assert effective["intersection"]["L_C"] == 400.0
    assert effective["planner"]["K1_tcross"] == 1e4
    assert effective["planner"]["max_iter"] == 500
    assert effective["planner"]["cross_speed"] == "free"
    assert effective["planner"]["stop_time"] == "free"
    assert effective["learner"]["bucket_count"] == 6
