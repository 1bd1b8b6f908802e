import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import spearmanr

from utils.config import TaskConfig
from utils.data import (
    STREAM_EVAL_X, STREAM_EVAL_Y, STREAM_TRAIN_X, STREAM_TRAIN_Y, TrainingData, _rng,
    UnpairedSampler, load_manifest, load_pgm, load_points_csv, make_affine_task, make_image_inversion_task,
    make_overlap_task, make_reflection_task, make_task, next_batch, save_pgm, save_points_csv,
)
from utils.errors import EmptyDomainError, ParseError, TaskGenerationError


def test_reflection_supports_are_disjoint(reflection_task):
    task = reflection_task
    assert task.x_samples.shape == (100, 1, 2)
    assert task.sample_shape == (1, 2)
    assert np.all(task.x_samples[..., 0] < 0)
    assert np.all(task.y_samples[..., 0] > 0)
    assert task.margin >= 0.1
    assert not task.overlapping


def test_reflection_truth_is_an_involution(reflection_task):
    truth = reflection_task.truth
    x = reflection_task.sample_x(5, 50)
    assert_allclose(truth.forward(truth.forward(x)), x)
    assert np.all(truth.forward(x)[..., 0] > 0)


def test_tasks_are_deterministic():
    a = make_reflection_task(seed=3, n=120)
    b = make_reflection_task(seed=3, n=120)
    c = make_reflection_task(seed=4, n=120)
    assert_array_equal(a.x_samples, b.x_samples)
    assert_array_equal(a.sample_y(9, 10), b.sample_y(9, 10))
    assert not np.array_equal(a.x_samples, c.x_samples)


def test_training_and_held_out_draws_differ(reflection_task):
    held_out = reflection_task.sample_x(0, 100)
    assert not np.array_equal(held_out, reflection_task.x_samples)


def test_tasks_need_enough_samples():
    with pytest.raises(ValueError):
        make_reflection_task(seed=0, n=99)


def test_affine_truth_round_trips():
    task = make_affine_task(seed=1, n=150)
    x = task.sample_x(2, 30)
    y = task.truth.forward(x)
    assert_allclose(task.truth.inverse(y), x, atol=1e-12)
    # not an involution: applying f twice does not return
    assert np.abs(task.truth.forward(y) - x).max() > 0.1
    assert task.margin >= 0.1


def test_singular_affine_task_fails():
    with pytest.raises(TaskGenerationError):
        make_affine_task(seed=0, n=100, scale=1e-4)


def test_overlap_task_is_flagged():
    task = make_overlap_task(seed=0, n=100)
    assert task.overlapping
    assert task.margin is None


def test_image_inversion_ranges():
    task = make_image_inversion_task(seed=0, n=6, h=8, w=12)
    assert task.x_samples.shape == (6, 1, 8, 12)
    assert task.kind == "image"
    assert task.x_samples.min() >= 0.1 - 1e-12 and task.x_samples.max() <= 0.9 + 1e-12
    assert task.y_samples.max() <= -0.1 + 1e-12
    assert_allclose(task.truth.forward(task.x_samples), -task.x_samples)


def test_image_side_limit():
    with pytest.raises(ValueError):
        make_image_inversion_task(seed=0, n=2, h=33, w=8)


def test_sampler_visits_each_sample_once_per_epoch():
    samples = np.arange(10, dtype=float).reshape(10, 1, 1)
    sampler = UnpairedSampler(samples, seed=0)
    first = sorted(next_batch(sampler).item() for _ in range(10))
    second = sorted(next_batch(sampler).item() for _ in range(10))
    assert first == list(range(10)) == second
    assert sampler.epoch == 1


def test_domain_samplers_shuffle_independently(reflection_task):
    sx, sy = reflection_task.unpaired_samplers(0)
    rx, ry = reflection_task.unpaired_samplers(0)
    assert_array_equal(sx.next_batch().data, rx.next_batch().data)
    sy.next_batch()
    assert not np.array_equal(sx.order, sy.order)


def test_empty_domain():
    with pytest.raises(EmptyDomainError):
        UnpairedSampler(np.zeros((0, 1, 2)), seed=0).next_batch()


def test_points_csv(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("# comment\n0.5,-1\n\n2,3.25\n")
    points = load_points_csv(path)
    assert points.shape == (2, 1, 2)
    assert_allclose(points[:, 0], [[0.5, -1.0], [2.0, 3.25]])

    out = save_points_csv(tmp_path / "copy.csv", points, comment="config_hash=abc")
    assert_array_equal(load_points_csv(out), points)
    with pytest.raises(FileExistsError):
        save_points_csv(out, points)


@pytest.mark.parametrize("text,line", [("1,2\n3\n", 2), ("1,2\n# x\nfoo,1\n", 3)])
def test_points_csv_errors_carry_line(tmp_path, text, line):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ParseError) as info:
        load_points_csv(path)
    assert info.value.line == line


def test_pgm_round_trip(tmp_path):
    image = np.linspace(-1.0, 1.0, 24).reshape(1, 4, 6)
    path = save_pgm(tmp_path / "img.pgm", image, comment="config_hash=abc")
    loaded = load_pgm(path)
    assert loaded.shape == (1, 4, 6)
    assert_allclose(loaded.data, image, atol=1.0 / 255)


def test_plain_pgm(tmp_path):
    path = tmp_path / "plain.pgm"
    path.write_text("P2\n# tiny\n2 2\n255\n0 255\n127 128\n")
    assert_allclose(load_pgm(path).data[0], [[-1.0, 1.0], [127 / 127.5 - 1, 128 / 127.5 - 1]])


@pytest.mark.parametrize("text", ["P3\n2 2\n255\n0 0 0 0\n", "P2\n2 2\n65535\n0 0 0 0\n", "P2\n2 2\n255\n0 0 0\n",
                                  "P2\n2 2\n255\n0 0 0 300\n"])
def test_bad_pgm(tmp_path, text):
    path = tmp_path / "bad.pgm"
    path.write_text(text)
    with pytest.raises(ParseError):
        load_pgm(path)


def test_manifest_of_points(tmp_path):
    rng = np.random.default_rng(0)
    save_points_csv(tmp_path / "x.csv", rng.standard_normal((30, 2)) - 3)
    save_points_csv(tmp_path / "y.csv", rng.standard_normal((20, 2)) + 3)
    (tmp_path / "data.ini").write_text("[dataset]\nname = blobs\nkind = points\nx = x.csv\ny = y.csv\nshape = 1,2\n")
    task = load_manifest(tmp_path / "data.ini")
    assert task.name == "blobs"
    assert task.truth is None
    assert task.x_samples.shape == (30, 1, 2)
    assert task.sample_y(0, 50).shape == (20, 1, 2)


def test_manifest_of_images(tmp_path):
    for domain, sign in (("x", 1.0), ("y", -1.0)):
        (tmp_path / domain).mkdir()
        for i in range(3):
            save_pgm(tmp_path / domain / f"{i}.pgm", sign * np.full((1, 4, 4), 0.5))
    (tmp_path / "data.ini").write_text("[dataset]\nkind = image\nx = x\ny = y\n")
    task = load_manifest(tmp_path / "data.ini")
    assert task.kind == "image"
    assert task.sample_shape == (1, 4, 4)


def test_manifest_errors(tmp_path):
    (tmp_path / "a.ini").write_text("[dataset]\nkind = audio\nx = x\ny = y\n")
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "a.ini")
    (tmp_path / "b.ini").write_text("[other]\n")
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "b.ini")


def test_make_task_dispatch():
    assert make_task(TaskConfig(name="reflection", n=100), seed=0).name == "reflection"
    assert make_task(TaskConfig(name="image_inversion", n=2, height=8, width=8), seed=0).sample_shape == (1, 8, 8)
    with pytest.raises(ValueError):
        make_task(TaskConfig(name="nothing"), seed=0)


def test_shuffle_stream_is_separate_from_data_streams():
    task = make_reflection_task(seed=0, n=100)
    sx, sy = task.unpaired_samplers(0)
    shuffle_draws = [sx.rng.random(8), sy.rng.random(8)]
    for stream in (STREAM_TRAIN_X, STREAM_TRAIN_Y, STREAM_EVAL_X, STREAM_EVAL_Y):
        data_draws = _rng(0, stream).random(8)
        assert not any(np.allclose(draws, data_draws) for draws in shuffle_draws)


def test_shuffle_orders_are_uncorrelated():
    task = make_reflection_task(seed=0, n=500)
    sx, sy = task.unpaired_samplers(0)
    sx.next_batch()
    sy.next_batch()
    # equal data and train seeds: order must not track generation order or the other domain
    assert abs(spearmanr(sx.order, np.arange(500))[0]) < 0.2
    assert abs(spearmanr(sx.order, sy.order)[0]) < 0.2


def test_training_data_carries_no_truth(reflection_task):
    data = reflection_task.training_data()
    assert isinstance(data, TrainingData)
    assert not hasattr(data, "truth")
    assert not hasattr(data, "sample_x")
    assert_array_equal(data.x_samples, reflection_task.x_samples)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pgm_round_trip_of_random_images(tmp_path, seed):
    image = np.random.default_rng(seed).uniform(-1.0, 1.0, (1, 5, 7))
    loaded = load_pgm(save_pgm(tmp_path / "random.pgm", image))
    assert loaded.shape == image.shape
    assert np.max(np.abs(loaded.data - image)) <= 1.0 / 255 + 1e-12
