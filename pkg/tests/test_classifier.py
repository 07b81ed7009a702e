import numpy as np
import pytest
from conftest import random_image, random_model
from helpers import central_difference, relative_error

from aipgame.classifier import (
    DEEPFOOL,
    MARGIN,
    SCORE,
    SOFTMAX_LOG,
    Dataset,
    LossSpec,
    ModelSpec,
    TrainConfig,
    accuracy,
    best_wrong_label,
    class_prototypes,
    generate_synthetic_dataset,
    input_grad,
    linear_model,
    load_dataset,
    load_model,
    loss_value,
    nearest_boundary_label,
    predict,
    save_dataset,
    save_model,
    score_jacobian,
    scores,
    softmax,
    train,
    train_with_history,
)
from aipgame.errors import InvalidArgument

SHAPE = (4, 4, 1)
LOSSES = [SOFTMAX_LOG, SCORE, MARGIN, DEEPFOOL]


@pytest.mark.parametrize("kind", ["linear", "mlp"])
@pytest.mark.parametrize("loss", LOSSES, ids=lambda l: l.variant)
def test_input_grad_matches_finite_differences(kind, loss):
    model = random_model(kind, SHAPE, seed=3)
    for seed in range(10):
        x = random_image(SHAPE, seed, 20, 235)
        y = seed % model.class_count
        fd = central_difference(lambda z: loss_value(model, z, y, loss), x)
        assert relative_error(input_grad(model, x, loss, y), fd) < 1e-4


def test_hand_computed_linear_losses():
    # 2 classes, 2 pixels, identity normalisation
    model = linear_model(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([0.0, 1.0]), (2,))
    x = np.array([3.0, 1.0])
    assert np.array_equal(scores(model, x), [3.0, 3.0])
    assert loss_value(model, x, 0, SOFTMAX_LOG) == pytest.approx(np.log(2))
    assert loss_value(model, x, 0, SCORE) == -3.0
    assert loss_value(model, x, 0, MARGIN) == 0.0
    assert np.array_equal(input_grad(model, x, MARGIN, 0), [-1.0, 2.0])
    assert np.allclose(input_grad(model, x, SOFTMAX_LOG, 0), [-0.5, 1.0])


def test_softmax_log_is_accurate_when_confident():
    model = linear_model(np.array([[1.0], [-1.0]]), np.zeros(2), (1,))
    # p_y = 1 - ~e^-80: the naive -log(p) would round to zero
    assert loss_value(model, np.array([40.0]), 0, SOFTMAX_LOG) == pytest.approx(np.exp(-80), rel=1e-9)


def test_targeted_margin_uses_target_label():
    model = random_model("linear", SHAPE, seed=1)
    x = random_image(SHAPE, 1)
    f = scores(model, x)
    assert loss_value(model, x, 0, LossSpec("margin", target=2)) == pytest.approx(f[2] - f[0])


def test_best_wrong_label_and_first_index_ties():
    f = np.array([1.0, 5.0, 5.0, 0.0])
    assert best_wrong_label(f, 0) == 1
    assert best_wrong_label(f, 1) == 2
    assert predict(linear_model(np.zeros((3, 1)), np.zeros(3), (1,)), np.zeros(1)) == 0


def test_nearest_boundary_label_minimises_linearised_distance():
    f = np.array([0.0, 1.0, 0.5])
    jac = np.array([[0.0, 0.0], [10.0, 0.0], [0.1, 0.0]])
    # distances: class 0: 1/10, class 2: 0.5/9.9
    assert nearest_boundary_label(f, jac, 1) == 2


def test_score_jacobian_matches_finite_differences():
    model = random_model("mlp", SHAPE, seed=4)
    x = random_image(SHAPE, 4, 20, 235)
    jac = score_jacobian(model, x)
    for c in range(model.class_count):
        fd = central_difference(lambda z: scores(model, z)[c], x)
        assert relative_error(jac[c], fd.reshape(-1)) < 1e-6


def test_grayscale_source_averages_channels():
    model = random_model("linear", (3, 3, 3), seed=2)
    x = random_image((3, 3, 3), 2)
    g = input_grad(model, x, SOFTMAX_LOG, 1, grayscale_source=True)
    assert np.allclose(g, g[:, :, :1])
    assert np.allclose(g[:, :, 0], input_grad(model, x, SOFTMAX_LOG, 1).mean(axis=2))


def test_invalid_inputs_raise():
    model = random_model("linear", SHAPE)
    with pytest.raises(InvalidArgument):
        input_grad(model, np.zeros(5), SOFTMAX_LOG, 0)
    with pytest.raises(InvalidArgument):
        loss_value(model, random_image(SHAPE), 99, SOFTMAX_LOG)
    with pytest.raises(InvalidArgument):
        LossSpec("hinge")


def test_model_parameters_are_read_only():
    model = random_model("mlp", SHAPE)
    with pytest.raises(ValueError):
        model.params[0][0, 0] = 1.0


def test_softmax_sums_to_one_for_large_scores():
    p = softmax(np.array([1000.0, 999.0, -1000.0]))
    assert p.sum() == pytest.approx(1.0) and np.all(np.isfinite(p))


def test_synthetic_dataset_reproducible_and_shared_prototypes():
    a = generate_synthetic_dataset(4, 3, 8, 8, 8.0, seed=5)
    b = generate_synthetic_dataset(4, 3, 8, 8, 8.0, seed=5)
    test = generate_synthetic_dataset(4, 3, 8, 8, 8.0, seed=5, split="test")
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, test.images)
    assert a.images.shape == (12, 8, 8, 1) and np.bincount(a.labels).tolist() == [3, 3, 3, 3]
    assert a.images.min() >= 0 and a.images.max() <= 255
    protos = class_prototypes(4, 8, 8, 5)
    noiseless = generate_synthetic_dataset(4, 1, 8, 8, 0.0, seed=5)
    for x, y in noiseless:
        assert np.array_equal(x, protos[y])


def test_training_reaches_baseline_accuracy_and_loss_decreases():
    train_set = generate_synthetic_dataset(10, 20, 16, 16, 8.0, seed=0, amplitude=3.0)
    test_set = generate_synthetic_dataset(10, 10, 16, 16, 8.0, seed=0, split="test", amplitude=3.0)
    model, history = train_with_history(ModelSpec("linear"), train_set, TrainConfig())
    assert accuracy(model, test_set) >= 0.90
    assert all(b <= a for a, b in zip(history, history[1:]))


def test_training_is_deterministic_and_mlp_learns():
    data = generate_synthetic_dataset(3, 10, 8, 8, 4.0, seed=2, amplitude=10.0)
    cfg = TrainConfig(epochs=100, learning_rate=0.05, seed=4)
    m1, m2 = train(ModelSpec("mlp", 16), data, cfg), train(ModelSpec("mlp", 16), data, cfg)
    assert m1.same_parameters(m2)
    assert accuracy(m1, data) >= 0.9


def test_empty_dataset_rejected():
    empty = Dataset(np.zeros((0, 2, 2, 1)), np.zeros(0, dtype=int), 2)
    with pytest.raises(InvalidArgument):
        train(ModelSpec(), empty)
    with pytest.raises(InvalidArgument):
        accuracy(random_model("linear", (2, 2, 1), classes=2), empty)


@pytest.mark.parametrize("kind", ["linear", "mlp"])
def test_model_file_round_trip(tmp_path, kind):
    model = random_model(kind, SHAPE, seed=6)
    save_model(tmp_path / "m.tnsr", model)
    back = load_model(tmp_path / "m.tnsr")
    assert back.same_parameters(model) and back.input_shape == SHAPE
    x = random_image(SHAPE, 6)
    assert np.array_equal(scores(back, x), scores(model, x))


def test_dataset_directory_round_trip(tmp_path):
    data = generate_synthetic_dataset(3, 2, 5, 6, 8.0, seed=1)
    save_dataset(tmp_path / "d", data)
    back = load_dataset(tmp_path / "d")
    assert np.array_equal(back.images, data.images) and np.array_equal(back.labels, data.labels)
    assert back.class_count == 3
