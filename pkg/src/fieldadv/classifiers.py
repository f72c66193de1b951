"""Small CNN classifiers over rendered shape images, and the synthetic shape dataset."""
from __future__ import annotations

import colorsys
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gradtape as gt
from . import imageops
from .fileio import load_params, save_params
from .meshing import TriMesh, lattice_points, marching_cubes
from .objective import ViewSampler, cross_entropy
from .optim import Adam
from .rasterizer import render
from .scenes import SDFS, SHAPE_CLASSES, Pattern

log = logging.getLogger(__name__)

INPUT_RES = 64

# layer descriptors: ("conv", out, k, stride) / ("pool", k) / ("gap",) / ("fc", out)
ARCHS = {
    "conv3": [("conv", 16, 3, 1), ("pool", 2), ("conv", 32, 3, 1), ("pool", 2),
              ("conv", 32, 3, 1), ("pool", 2), ("pool", 2), ("fc", 64)],
    "conv4": [("conv", 8, 3, 1), ("pool", 2), ("conv", 16, 3, 1), ("pool", 2),
              ("conv", 32, 3, 1), ("pool", 2), ("conv", 32, 3, 1), ("pool", 2), ("fc", 48)],
    "wide2": [("conv", 24, 5, 1), ("pool", 4), ("conv", 48, 3, 1), ("pool", 4), ("fc", 64)],
    "gap": [("conv", 16, 3, 1), ("pool", 2), ("conv", 32, 3, 1), ("pool", 2),
            ("conv", 64, 3, 1), ("gap",)],
    "strided": [("conv", 16, 3, 2), ("conv", 32, 3, 2), ("conv", 32, 3, 2), ("pool", 2), ("fc", 64)],
}
ZOO_ORDER = ("conv3", "conv4", "wide2", "gap", "strided")
# the pooled head underfits at the default rate within the zoo's epoch budget
ZOO_LR = {"gap": 5e-3}


class ConvClassifier:
    """conv/ReLU blocks, pooling and a fully-connected head ending in K logits."""

    def __init__(self, arch, n_classes: int = len(SHAPE_CLASSES), resolution: int = INPUT_RES,
                 params: dict | None = None, seed: int = 0, name: str | None = None):
        if isinstance(arch, str):
            name = name or arch
            arch = ARCHS[arch]
        self.arch = [tuple(l) for l in arch]
        self.name = name or "custom"
        self.n_classes = int(n_classes)
        self.resolution = int(resolution)
        self.params = params if params is not None else self._init(np.random.default_rng(seed))

    def _init(self, rng) -> dict:
        p = {}
        c, h = 3, self.resolution
        flat = None
        for i, layer in enumerate(self.arch):
            kind = layer[0]
            if kind == "conv":
                _, out, k, s = layer
                bound = np.sqrt(6.0 / (c * k * k))
                p[f"l{i}.w"] = rng.uniform(-bound, bound, size=(out, c, k, k))
                p[f"l{i}.b"] = np.zeros(out)
                c = out
                h = (h + 2 * (k // 2) - k) // s + 1
            elif kind == "pool":
                h //= layer[1]
            elif kind == "gap":
                flat = c
            elif kind == "fc":
                fan = flat if flat is not None else c * h * h
                bound = np.sqrt(6.0 / fan)
                p[f"l{i}.w"] = rng.uniform(-bound, bound, size=(fan, layer[1]))
                p[f"l{i}.b"] = np.zeros(layer[1])
                flat = layer[1]
        fan = flat if flat is not None else c * h * h
        bound = np.sqrt(3.0 / fan)
        p["head.w"] = rng.uniform(-bound, bound, size=(fan, self.n_classes))
        p["head.b"] = np.zeros(self.n_classes)
        return p

    def bind(self, tape: gt.Tape, trainable: bool = False) -> dict:
        return {k: tape.leaf(v, requires_grad=trainable) for k, v in self.params.items()}

    def forward(self, x: gt.Tensor, bound: dict) -> gt.Tensor:
        """x [N,3,H,W] -> logits [N,K]."""
        N = x.shape[0]
        h = x
        flat = False
        for i, layer in enumerate(self.arch):
            kind = layer[0]
            if kind == "conv":
                _, out, k, s = layer
                h = gt.relu(gt.conv2d(h, bound[f"l{i}.w"], bound[f"l{i}.b"], stride=s, padding=k // 2))
            elif kind == "pool":
                h = gt.max_pool2d(h, layer[1])
            elif kind == "gap":
                h = gt.mean(h, axis=(2, 3))
                flat = True
            elif kind == "fc":
                if not flat:
                    h = gt.reshape(h, (N, -1))
                    flat = True
                h = gt.relu(gt.matmul(h, bound[f"l{i}.w"]) + gt.broadcast_to(bound[f"l{i}.b"], (N, layer[1])))
        if not flat:
            h = gt.reshape(h, (N, -1))
        return gt.matmul(h, bound["head.w"]) + gt.broadcast_to(bound["head.b"], (N, self.n_classes))

    def logits(self, image) -> gt.Tensor:
        """Logits [K] for one [H,W,3] image (tensor or array), resized if needed.

        Parameters enter the image's tape as constants, so nothing here is trainable.
        """
        img = image if isinstance(image, gt.Tensor) else gt.Tape().const(np.asarray(image, dtype=np.float64))
        img = imageops.resize(img, self.resolution, self.resolution)
        x = gt.reshape(gt.transpose(img, (2, 0, 1)), (1, 3, self.resolution, self.resolution))
        out = self.forward(x, self.bind(img.tape))
        return gt.reshape(out, (self.n_classes,))

    def predict_logits(self, images: np.ndarray, batch: int = 64) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.shape[1:3] != (self.resolution, self.resolution):
            images = np.stack([imageops.resize_np(im, self.resolution, self.resolution) for im in images])
        out = []
        for s in range(0, images.shape[0], batch):
            tape = gt.Tape()
            x = tape.const(np.ascontiguousarray(images[s:s + batch].transpose(0, 3, 1, 2)))
            out.append(self.forward(x, self.bind(tape)).value)
            tape.release()
        return np.concatenate(out) if out else np.zeros((0, self.n_classes))

    def predict(self, images: np.ndarray) -> np.ndarray:
        return self.predict_logits(images).argmax(axis=1)

    def save(self, path) -> None:
        cfg = {"kind": "classifier", "name": self.name, "arch": [list(l) for l in self.arch],
               "n_classes": self.n_classes, "resolution": self.resolution}
        save_params(path, cfg, self.params)

    @classmethod
    def load(cls, path) -> "ConvClassifier":
        cfg, arrays = load_params(path)
        if cfg.get("kind") != "classifier":
            raise ValueError(f"{path}: not a classifier checkpoint")
        return cls([tuple(l) for l in cfg["arch"]], cfg["n_classes"], cfg["resolution"], arrays,
                   name=cfg["name"])


# ---------------------------------------------------------------------------
# dataset

def shape_mesh(shape: str, size: float, pattern: Pattern, resolution: int = 40) -> TriMesh:
    """Marching-cubes mesh of an analytic shape with pattern colors at the vertices."""
    lo, hi = np.full(3, -1.0), np.full(3, 1.0)
    pts = lattice_points(resolution, lo, hi)
    d = SDFS[shape](pts, size).reshape((resolution + 1,) * 3)
    m = marching_cubes(-d, lo, hi)
    m.T = np.clip(pattern(m.V), 0.0, 1.0)
    return m


def class_hue(label: int, n_classes: int = len(SHAPE_CLASSES)) -> float:
    return label / n_classes


def class_color(label: int, saturation: float, value: float, shift: float = 0.0) -> tuple:
    """A color from the hue band of class ``label``."""
    return colorsys.hsv_to_rgb((class_hue(label) + shift) % 1.0, saturation, value)


def random_pattern(rng: np.random.Generator, label: int | None = None, hue_jitter: float = 0.04) -> Pattern:
    """Random pattern; with ``label`` both colors come from that class's hue band."""
    kind = ("solid", "stripes", "checker")[rng.integers(3)]
    if label is None:
        a = tuple(rng.uniform(0.05, 0.9, size=3))
        b = tuple(rng.uniform(0.05, 0.9, size=3))
    else:
        a, b = (class_color(label, rng.uniform(0.45, 0.9), rng.uniform(0.5, 0.95),
                            rng.uniform(-hue_jitter, hue_jitter)) for _ in range(2))
    axis = rng.normal(size=3)
    return Pattern(kind, tuple(a), tuple(b), float(rng.uniform(2.0, 5.0)), tuple(axis / np.linalg.norm(axis)))


@dataclass
class ShapeDataset:
    x_train: np.ndarray  # [N,H,W,3]
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    classes: tuple = SHAPE_CLASSES

    @classmethod
    def generate(cls, n_train: int = 250, n_test: int = 50, seed: int = 0, resolution: int = INPUT_RES,
                 variants: int = 10, palette: str = "class") -> "ShapeDataset":
        """Per class: ``variants`` meshes (random size and pattern), rendered from ViewSampler views.

        ``palette="class"`` draws pattern colors from a hue band per class, so
        surface color carries class evidence alongside the silhouette;
        ``"uniform"`` draws them independently of the class.
        """
        if palette not in ("class", "uniform"):
            raise ValueError("palette must be 'class' or 'uniform'")
        rng = np.random.default_rng(seed)
        xs, ys = [[], []], [[], []]
        for c, shape in enumerate(SHAPE_CLASSES):
            lab = c if palette == "class" else None
            meshes = [shape_mesh(shape, float(rng.uniform(0.8, 1.2)), random_pattern(rng, lab))
                      for _ in range(variants)]
            samplers = [ViewSampler.for_mesh(m.V, resolution=resolution) for m in meshes]
            for split, n in enumerate((n_train, n_test)):
                for i in range(n):
                    j = int(rng.integers(variants))
                    xs[split].append(render(meshes[j], samplers[j].sample(rng)))
                    ys[split].append(c)
        arr = [np.stack(x) for x in xs]
        return cls(arr[0], np.array(ys[0]), arr[1], np.array(ys[1]))

    def save(self, path) -> None:
        save_params(path, {"kind": "shape_dataset", "classes": list(self.classes)},
                    {"x_train": self.x_train, "y_train": self.y_train.astype(np.float64),
                     "x_test": self.x_test, "y_test": self.y_test.astype(np.float64)})

    @classmethod
    def load(cls, path) -> "ShapeDataset":
        cfg, a = load_params(path)
        return cls(a["x_train"], a["y_train"].astype(np.int64), a["x_test"], a["y_test"].astype(np.int64),
                   tuple(cfg["classes"]))


def accuracy(model: ConvClassifier, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.predict(x) == y)) if len(y) else 0.0


def train_classifier(arch, dataset: ShapeDataset, epochs: int = 12, lr: float = 2e-3, seed: int = 0,
                     batch: int = 32, callback=None):
    """Adam on mean cross-entropy with shuffled minibatches. Returns (model, test accuracy)."""
    rng = np.random.default_rng(seed)
    model = ConvClassifier(arch, len(dataset.classes), dataset.x_train.shape[1], seed=seed)
    opt = Adam(model.params, lr)
    x = np.ascontiguousarray(dataset.x_train.transpose(0, 3, 1, 2))
    y = dataset.y_train
    K = model.n_classes
    for ep in range(epochs):
        perm = rng.permutation(len(y))
        for s in range(0, len(y), batch):
            b = perm[s:s + batch]
            tape = gt.Tape()
            bound = model.bind(tape, trainable=True)
            logits = model.forward(tape.const(x[b]), bound)
            onehot = np.eye(K)[y[b]]
            loss = -gt.sum(gt.log_softmax(logits, axis=1) * onehot) / float(len(b))
            lv = float(loss.value)
            if not np.isfinite(lv):
                raise RuntimeError(f"classifier {model.name}: loss diverged at epoch {ep}")
            grads = tape.backward(loss)
            opt.step({k: grads[t.node_id] for k, t in bound.items()})
            tape.release()
            if callback is not None:
                callback(ep, lv)
    acc = accuracy(model, dataset.x_test, dataset.y_test)
    log.info("%s: test accuracy %.3f", model.name, acc)
    return model, acc


@dataclass
class Zoo:
    surrogate: ConvClassifier
    victims: list
    accuracies: dict

    @property
    def members(self) -> list:
        return [self.surrogate] + list(self.victims)


def zoo(seed: int = 0, dataset: ShapeDataset | None = None, cache_dir=None, epochs: int = 15,
        min_accuracy: float = 0.9) -> Zoo:
    """Train the five architectures (first is the surrogate) with per-member seeds.

    With ``cache_dir`` the dataset and checkpoints are stored and reused.
    """
    cache = Path(cache_dir) if cache_dir is not None else None
    if dataset is None:
        dpath = cache / f"shapes_s{seed}.bin" if cache else None
        if dpath is not None and dpath.exists():
            dataset = ShapeDataset.load(dpath)
        else:
            dataset = ShapeDataset.generate(seed=seed)
            if dpath is not None:
                dpath.parent.mkdir(parents=True, exist_ok=True)
                dataset.save(dpath)
    models, accs = [], {}
    for i, arch in enumerate(ZOO_ORDER):
        path = cache / f"clf_{arch}_s{seed}.bin" if cache else None
        if path is not None and path.exists():
            m = ConvClassifier.load(path)
            acc = accuracy(m, dataset.x_test, dataset.y_test)
        else:
            m, acc = train_classifier(arch, dataset, epochs=epochs, lr=ZOO_LR.get(arch, 2e-3),
                                      seed=seed * 1000 + i)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                m.save(path)
        models.append(m)
        accs[arch] = acc
        if acc < min_accuracy:
            raise RuntimeError(f"zoo member {arch} reached only {acc:.3f} test accuracy (< {min_accuracy})")
    return Zoo(models[0], models[1:], accs)
