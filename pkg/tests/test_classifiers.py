import numpy as np
import pytest

from fieldadv import gradtape as gt
from fieldadv.classifiers import ARCHS, ConvClassifier, ShapeDataset, accuracy, train_classifier
from fieldadv.gradcheck import TOL
from fieldadv.scenes import SHAPE_CLASSES


@pytest.fixture(scope="module")
def tiny_data():
    return ShapeDataset.generate(n_train=4, n_test=2, seed=3, resolution=16, variants=2)


@pytest.mark.parametrize("arch", sorted(ARCHS))
def test_logits_shape_and_softmax(arch, rng):
    clf = ConvClassifier(arch, seed=1)
    z = clf.logits(rng.random((64, 64, 3)))
    assert z.shape == (len(SHAPE_CLASSES),)
    p = np.exp(z.value - z.value.max())
    p /= p.sum()
    assert abs(gt.softmax(z, axis=0).value.sum() - 1.0) <= 1e-12


def test_zero_weights_uniform(rng):
    clf = ConvClassifier("conv3", seed=0)
    for v in clf.params.values():
        v[:] = 0.0
    z = clf.logits(rng.random((64, 64, 3))).value
    assert np.all(z == z[0])


def test_resize_on_mismatched_input(rng):
    clf = ConvClassifier("gap", resolution=16, n_classes=4, seed=0)
    assert clf.logits(rng.random((40, 40, 3))).shape == (4,)
    assert clf.predict(rng.random((3, 40, 40, 3))).shape == (3,)


def test_logit_pixel_gradient(rng):
    clf = ConvClassifier("strided", resolution=16, n_classes=4, seed=2)
    err = gt.finite_diff_check(lambda x: clf.logits(x)[0], rng.uniform(0.05, 0.95, size=(16, 16, 3)))
    assert err <= TOL


def test_deterministic_forward(rng):
    clf = ConvClassifier("wide2", seed=0)
    x = rng.random((64, 64, 3))
    assert np.array_equal(clf.logits(x).value, clf.logits(x).value)


def test_dataset_balanced(tiny_data):
    K = len(SHAPE_CLASSES)
    assert tiny_data.x_train.shape == (4 * K, 16, 16, 3)
    assert np.array_equal(np.bincount(tiny_data.y_train), np.full(K, 4))
    assert np.array_equal(np.bincount(tiny_data.y_test), np.full(K, 2))


def test_memorize_ten_images(rng):
    x = rng.random((10, 16, 16, 3))
    y = np.arange(10) % 6
    ds = ShapeDataset(x, y, x, y)
    model, acc = train_classifier("gap", ds, epochs=60, lr=1e-2, seed=0, batch=10)
    assert accuracy(model, x, y) == 1.0


def test_training_deterministic(tiny_data):
    a, _ = train_classifier("strided", tiny_data, epochs=1, seed=5)
    b, _ = train_classifier("strided", tiny_data, epochs=1, seed=5)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_divergence_aborts(tiny_data):
    with pytest.raises(RuntimeError, match="diverged"), np.errstate(all="ignore"):
        train_classifier("strided", tiny_data, epochs=2, lr=np.inf, seed=0)


def test_prediction_scale_invariant(rng):
    clf = ConvClassifier("conv3", seed=4)
    x = rng.random((5, 64, 64, 3))
    z = clf.predict_logits(x)
    for s in (0.5, 3.0, 100.0):
        assert np.array_equal((s * z).argmax(axis=1), clf.predict(x))


def test_checkpoint_round_trip(tmp_path):
    clf = ConvClassifier("gap", seed=9)
    clf.save(tmp_path / "c.bin")
    back = ConvClassifier.load(tmp_path / "c.bin")
    assert back.arch == clf.arch and back.name == "gap"
    assert all(np.array_equal(back.params[k], clf.params[k]) for k in clf.params)
