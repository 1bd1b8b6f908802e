import dataclasses
import inspect
import re

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal

import utils.gan as gan
from utils.autodiff import Tensor, finite_diff_check, l1_loss
from utils.config import RunConfig, TaskConfig, config_hash
from utils.data import TrainingData
from utils.errors import SpecError, TrainingError
from utils.gan import (
    BaselineSystem, ImagePool, One2OneSystem, adv_loss_D, adv_loss_G, baseline_losses, build_system,
    cycle_loss_x, cycle_loss_y, network_specs, pool_query, total_loss_x2y, total_loss_y2x, train,
    train_iteration_baseline, train_iteration_one2one,
)
from utils.metrics import held_out_evaluator
from utils.nn import DiscriminatorSpec, build_discriminator, forward


def _system(config, mode="one2one", **loss):
    config = dataclasses.replace(config, run=dataclasses.replace(config.run, mode=mode))
    if loss:
        config = dataclasses.replace(config, loss=dataclasses.replace(config.loss, **loss))
    return build_system(config, "vector", (1, 2))


def _constant_discriminator(value):
    D = build_discriminator(DiscriminatorSpec("vector", (2, 8, 1)), seed=0)
    for name, p in D.parameters.items():
        p.data = np.zeros_like(p.data)
    D.parameters["layer1.bias"].data[:] = value
    return D


def _sample(rng):
    return Tensor(rng.uniform(-0.8, 0.8, size=(1, 2)))


# ---- pool ------------------------------------------------------------------

def test_pool_fill_phase_returns_inputs():
    pool = ImagePool(capacity=50, rng=np.random.default_rng(0))
    fakes = [Tensor(np.full((1, 2), i)) for i in range(50)]
    for fake in fakes:
        assert pool_query(pool, fake) is fake
    assert len(pool) == 50
    assert pool.swaps == 0


def test_pool_post_fill_is_seeded():
    def run():
        pool = ImagePool(capacity=50, rng=np.random.default_rng(7))
        for i in range(50):
            pool_query(pool, Tensor(np.full((1, 2), i)))
        return pool_query(pool, Tensor(np.full((1, 2), 99))).data
    assert_array_equal(run(), run())


def test_pool_swap_rate_and_capacity():
    pool = ImagePool(capacity=50, rng=np.random.default_rng(1))
    for i in range(50):
        pool_query(pool, Tensor(np.full((1, 2), i)))
    for i in range(10_000):
        pool_query(pool, Tensor(np.full((1, 2), 100 + i)))
        assert len(pool) <= 50
    assert 0.48 <= pool.swaps / 10_000 <= 0.52


def test_pool_stores_detached_tensors():
    pool = ImagePool(capacity=2)
    out = pool_query(pool, Tensor(np.ones((1, 2)), requires_grad=True))
    assert not out.requires_grad
    assert all(not t.requires_grad for t in pool.stored)


def test_zero_capacity_pool_passes_through():
    pool = ImagePool(capacity=0)
    fake = Tensor(np.ones((1, 2)))
    assert pool_query(pool, fake) is fake
    assert len(pool) == 0


# ---- losses ----------------------------------------------------------------

def test_adv_loss_G_targets():
    fake = Tensor(np.zeros((1, 2)))
    assert adv_loss_G(_constant_discriminator(1.0), fake).item() == 0.0
    assert adv_loss_G(_constant_discriminator(0.0), fake).item() == 1.0


def test_adv_loss_D_targets(rng):
    real, fake = _sample(rng), _sample(rng)
    assert adv_loss_D(_constant_discriminator(0.5), real, fake).item() == pytest.approx(0.25)
    D = build_discriminator(DiscriminatorSpec("vector", (2, 8, 1)), seed=3)
    s_real, s_fake = forward(D, real).data, forward(D, fake).data
    expected = 0.5 * (np.mean((s_real - 1) ** 2) + np.mean(s_fake ** 2))
    assert abs(adv_loss_D(D, real, fake).item() - expected) < 1e-12


def test_adv_loss_D_rejects_attached_fake(rng):
    with pytest.raises(ValueError):
        adv_loss_D(_constant_discriminator(0.5), _sample(rng), Tensor(np.ones((1, 2)), requires_grad=True))


def test_cycle_losses(small_config, rng):
    system = _system(small_config)
    x, y = _sample(rng), _sample(rng)
    G = system.G
    for loss, sample in ((cycle_loss_x, x), (cycle_loss_y, y)):
        expected = np.abs(forward(G, forward(G, sample)).data - sample.data).mean()
        assert abs(loss(G, sample).item() - expected) < 1e-12

    for p in G.parameter_list():
        p.data = np.zeros_like(p.data)
    x = Tensor(np.array([[0.25, -0.75]]))
    assert cycle_loss_x(G, x).item() == pytest.approx(0.5)


def test_direction_totals_match_their_terms(small_config, rng):
    system = _system(small_config, lambda_x=10.0, lambda_y=3.0)
    x, y = _sample(rng), _sample(rng)
    G = system.G
    expected_x = adv_loss_G(system.D_Y, forward(G, x)).item() + 10.0 * cycle_loss_x(G, x).item()
    expected_y = adv_loss_G(system.D_X, forward(G, y)).item() + 3.0 * cycle_loss_y(G, y).item()
    assert abs(total_loss_x2y(system, x).item() - expected_x) < 1e-12
    assert abs(total_loss_y2x(system, y).item() - expected_y) < 1e-12


def test_baseline_joint_loss_matches_its_terms(small_config, rng):
    system = _system(small_config, mode="baseline")
    x, y = _sample(rng), _sample(rng)
    joint, d_x, d_y = baseline_losses(system, x, y)
    G, F = system.G, system.F
    expected = (adv_loss_G(system.D_Y, forward(G, x)).item()
                + adv_loss_G(system.D_X, forward(F, y)).item()
                + 10.0 * (l1_loss(forward(F, forward(G, x)), x).item()
                          + l1_loss(forward(G, forward(F, y)), y).item()))
    assert abs(joint.item() - expected) < 1e-12
    assert d_x.item() >= 0 and d_y.item() >= 0


# ---- systems and iterations ------------------------------------------------

def test_build_system_matches_generators_across_modes(small_config):
    one2one = _system(small_config)
    baseline = _system(small_config, mode="baseline")
    assert isinstance(one2one, One2OneSystem) and isinstance(baseline, BaselineSystem)
    assert baseline.G.spec == baseline.F.spec
    for name, p in one2one.G.parameters.items():
        assert_array_equal(p.data, baseline.G.parameters[name].data)
    assert not np.array_equal(baseline.G.parameters["layer0.weight"].data,
                              baseline.F.parameters["layer0.weight"].data)
    assert one2one.pool_x.capacity == 50
    assert one2one.lambda_x == one2one.lambda_y == 10.0


def test_network_specs_auto_and_mismatch(small_config):
    g_spec, d_spec = network_specs(small_config, "vector", (1, 2))
    assert g_spec.dims == (2, 32, 32, 2) and d_spec.dims == (2, 32, 1)
    g_spec, d_spec = network_specs(small_config, "image", (1, 8, 8))
    assert g_spec.kind == "conv" and g_spec.input_shape == (1, 8, 8)
    bad = dataclasses.replace(small_config, generator=dataclasses.replace(small_config.generator,
                                                                          kind="vector", dims=(3, 8, 3)))
    with pytest.raises(SpecError):
        network_specs(bad, "vector", (1, 2))


def test_one2one_iteration_step_counts(small_config, rng):
    system = _system(small_config)
    d_before = {k: [p.data.copy() for p in m.parameter_list()] for k, m in system.models().items()}
    losses = train_iteration_one2one(system, _sample(rng), _sample(rng))
    assert system.opt_G.steps == 2
    assert system.opt_D_X.steps == 1 and system.opt_D_Y.steps == 1
    assert all(p.grad is None for p in system.G.parameter_list())
    assert all(value >= 0 for value in losses.values().values())
    for key, model in system.models().items():
        assert any(not np.array_equal(a, p.data) for a, p in zip(d_before[key], model.parameter_list()))
    assert system.iteration == 1 and losses.iteration == 0


def test_frozen_discriminators_and_zero_cycle_weights(small_config, rng):
    system = _system(small_config, lambda_x=0.0, lambda_y=0.0)
    system.train_discriminators = False
    d_before = [p.data.copy() for p in system.D_X.parameter_list() + system.D_Y.parameter_list()]
    losses = train_iteration_one2one(system, _sample(rng), _sample(rng))
    assert system.opt_G.steps == 2
    assert system.opt_D_X.steps == 0 and system.opt_D_Y.steps == 0
    for before, p in zip(d_before, system.D_X.parameter_list() + system.D_Y.parameter_list()):
        assert_array_equal(before, p.data)
    assert losses.loss_dx >= 0


def test_baseline_iteration_step_counts(small_config, rng):
    system = _system(small_config, mode="baseline")
    train_iteration_baseline(system, _sample(rng), _sample(rng))
    assert system.opt_G.steps == 1 and system.opt_F.steps == 1
    assert system.opt_D_X.steps == 1 and system.opt_D_Y.steps == 1
    assert all(p.grad is None for p in system.F.parameter_list())


def test_iterations_are_bit_reproducible(small_config):
    def run():
        system = _system(small_config)
        rng = np.random.default_rng(11)
        history = [train_iteration_one2one(system, _sample(rng), _sample(rng)) for _ in range(3)]
        return history, system
    (first, a), (second, b) = run(), run()
    assert first == second
    for name, p in a.G.parameters.items():
        assert_array_equal(p.data, b.G.parameters[name].data)


def test_non_finite_loss_raises(small_config, rng):
    system = _system(small_config)
    system.G.parameters["layer0.weight"].data[:] = np.nan
    with pytest.raises(TrainingError) as info:
        train_iteration_one2one(system, _sample(rng), _sample(rng))
    assert info.value.iteration == 0
    assert info.value.loss_name == "loss_x2y_adv"
    assert system.opt_G.steps == 0


# ---- training loop ---------------------------------------------------------

def _fit(task, config, **kwargs):
    evaluator = held_out_evaluator(task, n_eval=config.eval.n_eval, seed=config.eval.seed)
    return train(task.training_data(), config, evaluator=evaluator, **kwargs)


def test_zero_epochs_returns_initial_system(small_config, reflection_task, tmp_path):
    config = dataclasses.replace(small_config, run=dataclasses.replace(small_config.run, epochs=0))
    result = _fit(reflection_task, config, out_dir=tmp_path)
    assert result.history == []
    assert result.losses.empty
    assert result.system.opt_G.steps == 0
    assert list(pd.read_csv(tmp_path / "losses.csv").columns) == gan.LOSS_COLUMNS
    assert [p.name for p in result.checkpoints] == ["checkpoint_0000.json"]


def test_short_training_run_writes_artifacts(small_config, reflection_task, tmp_path):
    result = _fit(reflection_task, small_config, out_dir=tmp_path)
    assert [r.epoch for r in result.history] == [0, 1, 2]
    assert len(result.losses) == 2 * 100
    assert result.system.opt_G.steps == 2 * 200
    logged = pd.read_csv(tmp_path / "losses.csv")
    assert len(logged) == 200
    assert set(logged["config_hash"]) == {config_hash(small_config)}
    metrics = pd.read_csv(tmp_path / "metrics.csv")
    assert list(metrics["epoch"]) == [0, 1, 2]
    assert (tmp_path / "checkpoint_0002.json").exists()


def test_training_without_evaluator_skips_metrics(small_config, reflection_task, tmp_path):
    config = dataclasses.replace(small_config, run=dataclasses.replace(small_config.run, epochs=1))
    result = train(reflection_task.training_data(), config, out_dir=tmp_path)
    assert result.history == []
    assert len(result.losses) == 100
    assert not (tmp_path / "metrics.csv").exists()


def test_training_is_deterministic(small_config, reflection_task):
    config = dataclasses.replace(small_config, run=dataclasses.replace(small_config.run, epochs=1))
    a = _fit(reflection_task, config)
    b = _fit(reflection_task, config)
    pd.testing.assert_frame_equal(a.losses, b.losses)
    assert a.history == b.history


def test_training_failure_writes_diagnostic(small_config, reflection_task, tmp_path, monkeypatch):
    def explode(system, x, y):
        raise TrainingError(5, "loss_dx", float("nan"))
    monkeypatch.setattr(gan, "train_iteration", explode)
    with pytest.raises(TrainingError) as info:
        _fit(reflection_task, small_config, out_dir=tmp_path)
    assert info.value.diagnostic_path is not None
    assert (tmp_path / "diagnostic_00000005.json").exists()


def test_training_only_sees_unpaired_samples(small_config, reflection_task):
    data = reflection_task.training_data()
    assert isinstance(data, TrainingData)
    assert "truth" not in {f.name for f in dataclasses.fields(TrainingData)}
    with pytest.raises(TypeError):
        train(reflection_task, small_config)
    source = inspect.getsource(gan)
    assert not re.search(r"\.truth\b", source)
    assert "truth" not in {f.name for f in dataclasses.fields(RunConfig)}
    assert "truth" not in {f.name for f in dataclasses.fields(TaskConfig)}


# ---- gradients of the full objectives --------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_direction_objectives_match_finite_differences(small_config, seed):
    rng = np.random.default_rng(seed)
    system = _system(dataclasses.replace(small_config, seeds=dataclasses.replace(small_config.seeds, init=seed)))
    x, y = _sample(rng), _sample(rng)
    for param in (system.G.parameters["layer0.weight"], system.G.parameters["layer2.bias"]):
        assert finite_diff_check(lambda _: total_loss_x2y(system, x), param) < 1e-4
        assert finite_diff_check(lambda _: total_loss_y2x(system, y), param) < 1e-4
    assert finite_diff_check(lambda _: total_loss_x2y(system, x), system.D_Y.parameters["layer0.weight"]) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_baseline_objective_matches_finite_differences(small_config, seed):
    rng = np.random.default_rng(seed)
    config = dataclasses.replace(small_config, seeds=dataclasses.replace(small_config.seeds, init=seed))
    system = _system(config, mode="baseline")
    x, y = _sample(rng), _sample(rng)
    for param in (system.G.parameters["layer0.weight"], system.F.parameters["layer2.weight"]):
        assert finite_diff_check(lambda _: baseline_losses(system, x, y)[0], param) < 1e-4
