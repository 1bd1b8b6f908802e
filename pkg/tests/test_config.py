import dataclasses
from pathlib import Path

import pytest

from utils.config import (
    RunConfig, config_hash, config_to_text, parse_config, parse_config_text, with_overrides, write_config,
)
from utils.errors import ConfigError


def test_minimal_config_takes_defaults():
    config = parse_config_text("[task]\nname = reflection\n")
    assert config.task.name == "reflection"
    assert config.loss.lambda_x == 10.0 and config.loss.lambda_y == 10.0
    assert config.optim.lr == 2e-4 and config.optim.beta1 == 0.5
    assert config.pool.capacity == 50
    assert config.run.mode == "one2one"
    assert config.generator.dims == ()


def test_values_are_typed(small_config):
    config = parse_config_text(
        "[task]\nname = affine\nn = 300\n[generator]\nkind = vector\ndims = 2, 16, 2\n[loss]\nlambda_y = 2.5\n"
    )
    assert config.task.n == 300
    assert config.generator.dims == (2, 16, 2)
    assert config.loss.lambda_y == 2.5
    assert small_config.eval.every == 1


def test_misspelled_key_is_rejected_with_its_line():
    text = "[task]\nname = reflection\n\n[loss]\nlamda_x = 5\n"
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == "loss.lamda_x"
    assert info.value.line == 5
    assert "loss.lamda_x" in str(info.value)


def test_unknown_section():
    with pytest.raises(ConfigError) as info:
        parse_config_text("[task]\nname = reflection\n[losses]\nlambda_x = 1\n")
    assert info.value.key == "losses"
    assert info.value.line == 3


def test_missing_task_name():
    with pytest.raises(ConfigError) as info:
        parse_config_text("[run]\nepochs = 3\n")
    assert info.value.key == "task.name"


@pytest.mark.parametrize("text,key,line", [
    ("[task]\nname = reflection\n[optim]\nbeta1 = 1.0\n", "optim.beta1", 4),
    ("[task]\nname = reflection\n[run]\nepochs = many\n", "run.epochs", 4),
    ("[task]\nname = reflection\nn = 50\n", "task.n", 3),
    ("[task]\nname = reflection\n[run]\nmode = triple\n", "run.mode", 4),
    ("[task]\nname = reflection\n[loss]\nlambda_cyc = -1\n", "loss.lambda_cyc", 4),
    ("[task]\nname = image_inversion\nheight = 64\n", "task.height", 3),
])
def test_out_of_range_values(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == key
    assert info.value.line == line


def test_duplicate_key():
    with pytest.raises(ConfigError) as info:
        parse_config_text("[task]\nname = reflection\nname = affine\n")
    assert info.value.key == "task.name"


def test_schedule_preset():
    config = parse_config_text("[task]\nname = reflection\n[schedule]\npreset = brief\n")
    assert (config.schedule.fixed_epochs, config.schedule.decay_epochs) == (4, 3)
    with pytest.raises(ConfigError) as info:
        parse_config_text("[task]\nname = reflection\n[schedule]\npreset = brief\nfixed_epochs = 3\n")
    assert info.value.key == "schedule.preset"
    with pytest.raises(ConfigError):
        parse_config_text("[task]\nname = reflection\n[schedule]\npreset = endless\n")


@pytest.mark.parametrize("text", [
    "[task]\nname = reflection\n",
    "[task]\nname = affine\nangle = 0.25\n[schedule]\npreset = extended\n[generator]\nkind = vector\ndims = 2,4,2\n",
])
def test_text_form_reparses_to_the_same_config(text):
    config = parse_config_text(text)
    assert parse_config_text(config_to_text(config)) == config


def test_write_and_read_file(tmp_path, small_config):
    path = write_config(small_config, tmp_path / "config.ini")
    assert parse_config(path) == small_config
    with pytest.raises(FileNotFoundError):
        parse_config(tmp_path / "absent.ini")


def test_config_hash(small_config):
    assert config_hash(small_config) == config_hash(parse_config_text(config_to_text(small_config)))
    assert len(config_hash(small_config)) == 12
    changed = dataclasses.replace(small_config, loss=dataclasses.replace(small_config.loss, lambda_x=9.0))
    assert config_hash(changed) != config_hash(small_config)


def test_overrides(small_config):
    config = with_overrides(small_config, seed=7, epochs=0, mode="baseline", out="elsewhere")
    assert (config.seeds.data, config.seeds.init, config.seeds.train) == (7, 7, 7)
    assert config.run.epochs == 0
    assert config.run.mode == "baseline"
    assert config.output.dir == "elsewhere"
    assert with_overrides(small_config) == small_config
    with pytest.raises(ConfigError):
        with_overrides(small_config, mode="triple")


def test_default_config_is_invalid_without_task():
    with pytest.raises(ConfigError):
        with_overrides(RunConfig())


@pytest.mark.parametrize("path", sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.ini")),
                         ids=lambda p: p.stem)
def test_shipped_configs_are_valid(path):
    config = parse_config(path)
    assert config.task.name == path.stem


def test_write_config_never_overwrites(tmp_path, small_config):
    path = write_config(small_config, tmp_path / "config.ini")
    before = path.read_text()
    with pytest.raises(FileExistsError):
        write_config(with_overrides(small_config, epochs=0), path)
    assert path.read_text() == before


def test_config_hash_ignores_output_section(small_config):
    moved = with_overrides(small_config, out="elsewhere")
    assert config_hash(moved) == config_hash(small_config)
    quiet = dataclasses.replace(small_config, output=dataclasses.replace(small_config.output, checkpoint_every=5))
    assert config_hash(quiet) == config_hash(small_config)
    assert config_hash(with_overrides(small_config, seed=3)) != config_hash(small_config)
