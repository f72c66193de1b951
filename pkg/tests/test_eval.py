import math

import numpy as np
import pytest

from fieldadv import evaluation as ev
from fieldadv.classifiers import ConvClassifier
from fieldadv.meshing import colorize, extract_isosurface

from conftest import small_field


class Constant:
    def __init__(self, k):
        self.k = k

    def predict(self, images):
        return np.full(len(images), self.k)


@pytest.fixture(scope="module")
def ball():
    m = extract_isosurface(lambda p: 10.0 * (0.6 - np.linalg.norm(p, axis=1)), 12)
    return colorize(m, small_field(seed=1))


def test_asr_constant_classifiers(ball):
    assert ev.asr(ball, Constant(2), 2, n_views=5) == 100.0
    assert ev.asr(ball, Constant(1), 2, n_views=5) == 0.0


def test_asr_deterministic(ball):
    clf = ConvClassifier("gap", resolution=16, n_classes=4, seed=0)
    a = ev.asr(ball, clf, 1, n_views=6, seed=4)
    assert a == ev.asr(ball, clf, 1, n_views=6, seed=4) and 0.0 <= a <= 100.0


def test_identical_images(rng):
    x = rng.random((20, 20, 3))
    assert ev.ssim(x, x) == 1.0 and ev.psnr(x, x) == 99.0


def test_psnr_uniform_offset(rng):
    x = rng.uniform(0.0, 0.9, size=(16, 16, 3))
    assert abs(ev.psnr(x, x + 0.1) - 20.0) <= 1e-9


def test_ssim_negative_ramp():
    r = np.linspace(0, 1, 24)
    x = np.repeat(np.add.outer(r, r)[..., None] / 2, 3, axis=2)
    assert ev.ssim(x, 1.0 - x) <= 0.0


def ssim_oracle(a, b, win=8):
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for ch in range(a.shape[2]):
        for i in range(a.shape[0] - win + 1):
            for j in range(a.shape[1] - win + 1):
                p = a[i:i + win, j:j + win, ch].ravel()
                q = b[i:i + win, j:j + win, ch].ravel()
                mp, mq = p.mean(), q.mean()
                vp, vq = ((p - mp) ** 2).mean(), ((q - mq) ** 2).mean()
                cv = ((p - mp) * (q - mq)).mean()
                vals.append((2 * mp * mq + c1) * (2 * cv + c2) / ((mp ** 2 + mq ** 2 + c1) * (vp + vq + c2)))
    return float(np.mean(vals))


def test_ssim_oracle_and_symmetry(rng):
    for _ in range(5):
        a, b = rng.random((12, 11, 3)), rng.random((12, 11, 3))
        assert abs(ev.ssim(a, b) - ssim_oracle(a, b)) <= 1e-12
        assert abs(ev.ssim(a, b) - ev.ssim(b, a)) <= 1e-12
        assert -1.0 <= ev.ssim(a, b) <= 1.0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        ev.ssim(np.zeros((8, 8, 3)), np.zeros((9, 8, 3)))
    with pytest.raises(ValueError):
        ev.psnr(np.zeros((8, 8)), np.zeros((8, 9)))


def test_naturalness_clean_is_maximal(ball):
    nat = ev.naturalness(ball, ball, n_views=3)
    assert nat == {"ssim": 1.0, "psnr": 99.0}


def test_report(tmp_path):
    r = ev.EvalReport(meta={"seed": 0})
    r.add(object="a", model="m1", mode="mlp_grid", geometry="tex", beta=1000.0, asr=50.0, ssim=0.9, psnr=30.0)
    r.add(object="b", model="m1", mode="mlp_grid", geometry="tex", beta=1000.0, asr=100.0, ssim=0.9, psnr=30.0)
    assert r.aggregate() == {"m1": 75.0}
    with pytest.raises(ValueError):
        r.add(object="c", model="m1")
    head = r.write_csv(tmp_path / "r.csv").read_text().splitlines()[0]
    assert head == ",".join(ev.REPORT_COLUMNS)
    assert '"aggregate_asr"' in r.write_json(tmp_path / "r.json").read_text()


def test_transfer_on_clean_is_near_chance():
    # clean objects with random targets against untrained classifiers of K classes
    K = 6
    rng = np.random.default_rng(11)
    objs = []
    for i, r in enumerate((0.5, 0.6, 0.7)):
        m = extract_isosurface(lambda p, r=r: 10.0 * (r - np.linalg.norm(p, axis=1)), 10)
        objs.append((f"o{i}", colorize(m, small_field(seed=i)), int(rng.integers(K))))
    models = {"u": Constant(-1), "v": Constant(-2)}
    t = ev.transfer_matrix(objs, models, n_views=4, surrogate="u")
    for row in t["cells"].values():
        assert all(v <= 100.0 / K + 10 for v in row.values())
    assert "u*" in ev.format_transfer(t)
