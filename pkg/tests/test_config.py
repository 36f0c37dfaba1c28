import dataclasses
import os
import typing

import pytest

from nectfuse.config import Config, ConfigSection
from nectfuse.datastructures import floats
from nectfuse.exceptions import ConfigError


def test_config(tmpdir):
    path = os.path.join(tmpdir, "sampler.env")

    with open(path, "w") as file:
        file.write("# sampler settings \n")
        file.write("n_chains = 2\n")
        file.write("target_accept = 0.9\n")
        file.write("outcome = false\n")
        file.write("label = 'long run'\n")

    config = Config(path, environ={"NECTFUSE_SEED": "7"})

    assert config.get("n_chains") == "2"
    assert config.get("n_chains", cast=int) == 2
    assert config.get("target_accept", cast=float) == 0.9
    assert config.get("outcome", cast=bool) is False
    assert config.get("label") == "long run"
    assert config.get("seed", cast=int) == 7
    assert "seed" in config
    assert "thin" not in config
    assert config.get("thin", default=1) == 1

    with pytest.raises(KeyError):
        config.get("thin")

    with pytest.raises(ConfigError):
        config.get("label", cast=int)

    with pytest.raises(ConfigError):
        config.get("label", cast=bool)

    assert config.keys() == ["n_chains", "target_accept", "outcome", "label"]


def test_environ_overrides_file(tmpdir):
    path = os.path.join(tmpdir, "model.env")
    with open(path, "w") as file:
        file.write("tau_sd = 2\n")

    config = Config(path, environ={"NECTFUSE_TAU_SD": "3"})
    assert config.get("tau_sd", cast=float) == 3.0


def test_no_env_file(tmpdir):
    config = Config(os.path.join(tmpdir, "no.env"), environ={})
    assert config.file_values == {}


def test_process_environment(monkeypatch):
    monkeypatch.setenv("NECTFUSE_N_CHAINS", "3")
    monkeypatch.delenv("NECTFUSE_STEP", raising=False)
    config = Config()
    assert config.get("n_chains", cast=int) == 3
    assert "step" not in config
    assert _Section.from_config(config).n_chains == 3


@dataclasses.dataclass(frozen=True)
class _Section(ConfigSection):
    n_chains: int = 4
    step: float = 0.5
    outcome: bool = True
    weights: typing.Tuple[float, ...] = dataclasses.field(
        default=(1.0, 2.0), metadata={"cast": floats}
    )


def test_config_section(tmpdir):
    path = os.path.join(tmpdir, "section.env")
    with open(path, "w") as file:
        file.write("n_chains = 2\n")
        file.write("outcome = 0\n")
        file.write("weights = 0.5, 1.5, 2.5\n")

    section = _Section.from_config(Config(path, environ={}), step=0.25)
    assert section == _Section(n_chains=2, step=0.25, outcome=False, weights=(0.5, 1.5, 2.5))
    assert section.as_dict() == {
        "n_chains": 2,
        "step": 0.25,
        "outcome": False,
        "weights": [0.5, 1.5, 2.5],
    }

    assert _Section.from_config(Config(environ={})) == _Section()


def test_config_section_unknown_key(tmpdir):
    path = os.path.join(tmpdir, "section.env")
    with open(path, "w") as file:
        file.write("n_chain = 2\n")

    with pytest.warns(UserWarning, match="n_chain"):
        section = _Section.from_config(Config(path, environ={}))
    assert section.n_chains == 4


def test_config_section_bad_value(tmpdir):
    path = os.path.join(tmpdir, "section.env")
    with open(path, "w") as file:
        file.write("weights = 1.0, nan\n")

    with pytest.raises(ConfigError) as exc:
        _Section.from_config(Config(path, environ={}))
    assert exc.value.key == "weights"
    assert exc.value.exit_code == 11
