import json

import numpy as np
import pytest

from phmc_coupling.config import DEFAULT_CONFIG_PATH, InitialConfig, ModelConfig, load_config, parse_config
from phmc_coupling.errors import ConfigError
from phmc_coupling.rng import RngStream

MINIMAL = """
command = "constants"
seed = 3

[model]
kind = "tps"
d = 2
m = 8
"""


def _write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_packaged_default_config():
    cfg = load_config()
    assert cfg.command == "coupling-times"
    assert cfg.model.kind == "pimd" and cfg.model.m == 64
    assert cfg.kernel.dt is None and cfg.kernel.metropolis
    assert cfg.initial_x.kind == "circle" and cfg.initial_x.center == (1.0, 1.0)
    assert cfg.source == str(DEFAULT_CONFIG_PATH)


def test_minimal_file_gets_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL))
    assert cfg.seed == 3
    assert cfg.kernel.T == 0.5 and cfg.kernel.gamma == "one-over-T"
    assert cfg.initial_y.kind == "gaussian"
    assert cfg.model.build().dim == 16


def test_seed_is_required(tmp_path):
    path = _write(tmp_path, MINIMAL.replace("seed = 3\n", ""))
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.field == "seed"
    assert load_config(path, seed=11).seed == 11


def test_command_is_required_and_checked(tmp_path):
    path = _write(tmp_path, MINIMAL.replace('command = "constants"\n', ""))
    with pytest.raises(ConfigError, match="command"):
        load_config(path)
    assert load_config(path, command="validate").command == "validate"
    with pytest.raises(ConfigError):
        load_config(path, command="plot")


@pytest.mark.parametrize(
    "extra, field",
    [
        ("[kernel]\nT = -1.0\n", "kernel.T"),
        ("[kernel]\nbogus = 1\n", "kernel.bogus"),
        ('[kernel]\ngamma = "golden"\n', "kernel.gamma"),
        ('[kernel]\nduration = "deterministic"\n', "kernel.duration"),
        ("[kernel]\ntarget_acceptance = 1.0\n", "kernel.target_acceptance"),
        ('[kernel]\ngamma_rules = ["zero", "sometimes"]\n', "kernel.gamma_rules"),
        ("[kernel]\nT_grid = [0.1, 0.0]\n", "kernel.T_grid"),
        ('[kernel]\nT = 2.0\ngamma = "cot-T"\n', "kernel.gamma"),
        ('[kernel]\nT_grid = [0.5, 1.6]\ngamma_rules = ["zero", "cot-T"]\n', "kernel.gamma_rules"),
        ('[model.potential]\nname = "volcano"\n', "model.potential.name"),
        ("replicas = 0\n", "replicas"),
    ],
)
def test_invalid_fields_name_their_path(tmp_path, extra, field):
    text = MINIMAL + "\n" + extra if extra.startswith("[") else extra + MINIMAL
    with pytest.raises(ConfigError) as err:
        load_config(_write(tmp_path, text))
    assert err.value.field == field


def test_model_vectors_must_match_dimension():
    with pytest.raises(ConfigError) as err:
        ModelConfig.parse({"kind": "tps", "d": 2, "start": [0.0]})
    assert err.value.field == "model.start"


def test_cli_overrides(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL), replicas=5, steps=None, out_dir=str(tmp_path / "o"), workers=2)
    assert cfg.replicas == 5 and cfg.steps == 1000 and cfg.workers == 2
    assert cfg.out_dir == tmp_path / "o"
    with pytest.raises(ConfigError):
        cfg.with_overrides(replicas=0)


def test_json_config(tmp_path):
    raw = {"command": "validate", "seed": 1, "model": {"kind": "pimd", "d": 1, "m": 4, "a": 0.5}}
    cfg = load_config(_write(tmp_path, json.dumps(raw), "exp.json"))
    assert cfg.model.kind == "pimd" and cfg.model.a == 0.5


def test_unreadable_configs(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigError, match="unsupported"):
        load_config(_write(tmp_path, "seed: 1", "exp.yaml"))
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(_write(tmp_path, "seed = = 1"))


def test_effective_config_is_json_ready(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL))
    data = json.loads(json.dumps(cfg.to_dict()))
    assert data["seed"] == 3 and data["model"]["d"] == 2


def test_initial_states():
    model = parse_config({"command": "sample", "seed": 1, "model": {"kind": "pimd", "d": 2, "m": 8, "a": 0.1}}).model.build()
    circle = InitialConfig.parse({"kind": "circle", "center": [1.0, 1.0], "radius": 2.0}, "initial.x")
    state = circle.state(model, RngStream(0), replicas=3)
    assert state.shape == (3, model.dim)
    np.testing.assert_array_equal(state[0], state[2])
    gaussian = InitialConfig(kind="gaussian").state(model, RngStream(0), replicas=4)
    assert not np.array_equal(gaussian[0], gaussian[1])
    assert np.all(InitialConfig().state(model, RngStream(0)) == 0.0)


def test_initial_state_errors():
    model = ModelConfig(kind="tps", d=2, m=4).build()
    with pytest.raises(ConfigError) as err:
        InitialConfig.parse({"kind": "constant"}, "initial.x")
    assert err.value.field == "initial.x.point"
    with pytest.raises(ConfigError):
        InitialConfig(kind="constant", point=(1.0,)).state(model, RngStream(0))


def test_cot_rule_on_short_durations_is_accepted(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL + '\n[kernel]\nT_grid = [0.5, 1.5]\ngamma_rules = ["zero", "cot-T"]\n'))
    assert cfg.kernel.gamma_rules == ("zero", "cot-T")
    # without a grid the single duration T is the one checked
    with pytest.raises(ConfigError) as err:
        load_config(_write(tmp_path, MINIMAL + '\n[kernel]\nT = 1.6\ngamma_rules = ["cot-T"]\n'))
    assert err.value.field == "kernel.gamma_rules"


def test_radius_rule_alias_is_accepted(tmp_path):
    text = MINIMAL + '\n[kernel]\ngamma = "theorem-2.1"\ngamma_rules = ["zero", "theorem-2.1"]\n'
    cfg = load_config(_write(tmp_path, text))
    assert cfg.kernel.gamma == "theorem-2.1"
    assert cfg.kernel.gamma_rules == ("zero", "theorem-2.1")
