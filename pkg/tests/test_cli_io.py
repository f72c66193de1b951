import json
from pathlib import Path

import numpy as np
import pytest

from fieldadv.classifiers import ConvClassifier
from fieldadv.cli import main
from fieldadv.fileio import read_ppm
from fieldadv.meshing import colorize, extract_isosurface, read_obj, write_obj
from fieldadv.scenes import Pattern, make_dataset, single_object

from conftest import small_field


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def build_inputs(d: Path) -> Path:
    """Tiny field, colorized mesh, two classifiers and a 4-view dataset under ``d``."""
    f = small_field(seed=3)
    f.save(d / "field.bin")
    mesh = colorize(extract_isosurface(lambda p: 10.0 * (0.6 - np.linalg.norm(p, axis=1)), 10), f)
    write_obj(d / "mesh.obj", mesh)
    for i, arch in enumerate(("gap", "strided")):
        ConvClassifier(arch, resolution=16, seed=i).save(d / f"clf_{arch}.bin")
    assert main(["make-dataset", "--shape", "sphere", "--n-views", "4", "--resolution", "16",
                 "--out", str(d / "ds")]) == 0
    return d


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    return build_inputs(tmp_path_factory.mktemp("inputs"))


def subcommand_argv(name, d):
    atk = ["--field", str(d / "field.bin"), "--mesh", str(d / "mesh.obj"), "--surrogate", str(d / "clf_gap.bin"),
           "--target", "1", "--epochs", "2", "--n-views", "1", "--resolution", "16"]
    return {
        "make-dataset": ["--n-views", "3", "--resolution", "16"],
        "reconstruct": ["--dataset", str(d / "ds"), "--max-steps", "2", "--rays", "64", "--samples", "8"],
        "extract": ["--field", str(d / "field.bin"), "--resolution", "12", "--iso", "0.75"],
        "attack": atk,
        "beta-study": atk + ["--betas", "10,100", "--eval-views", "2"],
        "eval": ["--mesh", str(d / "mesh.obj"), "--clean", str(d / "mesh.obj"), "--target", "0", "--n-views", "3",
                 "--models", str(d / "clf_gap.bin"), str(d / "clf_strided.bin")],
        "render": ["--mesh", str(d / "mesh.obj"), "--view", "10,20,2.5", "--resolution", "16"],
        "train-zoo": ["--dataset-size", "2", "--test-size", "1", "--epochs", "1"],
    }[name]


@pytest.mark.parametrize("name", ["make-dataset", "reconstruct", "extract", "attack", "beta-study", "eval",
                                  "render", "train-zoo"])
def test_subcommand_reproducible(name, inputs, tmp_path):
    outs = []
    for run in ("a", "b"):
        assert main([name, "--seed", "5", "--out", str(tmp_path / run)] + subcommand_argv(name, inputs)) == 0
        outs.append(tree_bytes(tmp_path / run))
    assert outs[0] and outs[0] == outs[1]


def test_make_dataset_contract(tmp_path):
    spec = single_object("sphere", Pattern("solid", (0.2, 0.5, 0.8)), 0.8, n_views=32, resolution=33)
    ds = make_dataset(spec, tmp_path, seed=1)
    doc = json.loads((tmp_path / "dataset.json").read_text())
    assert len(doc["frames"]) == 32 and len(list(tmp_path.glob("*.ppm"))) == 32
    # cameras look at the sphere centre: the silhouette is centred on the principal point
    for cam, img in ds.frames:
        ys, xs = np.nonzero(np.any(img < 1.0, axis=2))
        assert abs(xs.mean() + 0.5 - 16.5) <= 1.0 and abs(ys.mean() + 0.5 - 16.5) <= 1.0


def test_attack_zero_epochs_writes_input(inputs, tmp_path):
    argv = ["attack", "--out", str(tmp_path)] + subcommand_argv("attack", inputs)
    argv[argv.index("--epochs") + 1] = "0"
    assert main(argv) == 0
    assert (tmp_path / "mesh_adv.obj").read_bytes() == (inputs / "mesh.obj").read_bytes()


def test_render_writes_p6(inputs, tmp_path):
    assert main(["render", "--out", str(tmp_path), "--name", "x.ppm"] + subcommand_argv("render", inputs)) == 0
    data = (tmp_path / "x.ppm").read_bytes()
    assert data.startswith(b"P6\n16 16\n255\n")
    assert read_ppm(tmp_path / "x.ppm").shape == (16, 16, 3)


def test_gradcheck_exit_zero(tmp_path):
    assert main(["gradcheck", "--trials", "1", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "gradcheck.json").read_text())
    assert doc["max_error"] <= 1e-4


def test_config_precedence(inputs, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"view": "90,0,3", "resolution": 20}))
    assert main(["render", "--mesh", str(inputs / "mesh.obj"), "--config", str(cfg),
                 "--resolution", "16", "--out", str(tmp_path / "a")]) == 0
    assert read_ppm(tmp_path / "a" / "render.ppm").shape == (16, 16, 3)  # flag wins
    assert main(["render", "--mesh", str(inputs / "mesh.obj"), "--view", "90,0,3",
                 "--resolution", "16", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "render.ppm").read_bytes() == (tmp_path / "b" / "render.ppm").read_bytes()


def test_out_env_default(inputs, tmp_path, monkeypatch):
    monkeypatch.setenv("FIELDADV_OUT", str(tmp_path / "env"))
    assert main(["render", "--mesh", str(inputs / "mesh.obj"), "--resolution", "16"]) == 0
    assert (tmp_path / "env" / "render.ppm").exists()


@pytest.mark.parametrize("argv", [
    [],
    ["render", "--bogus"],
    ["render"],
    ["render", "--mesh", "/nonexistent.obj", "--resolution", "16"],
    ["attack", "--mesh", "m.obj"],
    ["eval", "--config", "/nonexistent.json"],
])
def test_validation_exit_one(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv else argv) == 1
    assert capsys.readouterr().err


def test_runtime_failure_exit_two(inputs, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    argv = ["attack", "--out", str(blocker / "sub")] + subcommand_argv("attack", inputs)
    assert main(argv) == 2


def test_unknown_config_key(inputs, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": 1}))
    assert main(["render", "--mesh", str(inputs / "mesh.obj"), "--config", str(cfg), "--out", str(tmp_path)]) == 1
    # attack accepts AttackConfig fields from the file
    cfg.write_text(json.dumps({"epochs": 1, "lr_grid": 0.01}))
    argv = ["attack", "--config", str(cfg), "--out", str(tmp_path / "o")] + subcommand_argv("attack", inputs)
    assert main(argv) == 0
    assert json.loads((tmp_path / "o" / "config.json").read_text())["lr_grid"] == 0.01
