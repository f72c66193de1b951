"""Command-line entry points.

Every subcommand takes --seed, --config, --out and --threads. Option values
resolve as: flag on the command line, else the key of the same name in the
--config JSON file, else the built-in default listed in the flag's help.
The output root defaults to $FIELDADV_OUT, or ./fieldadv_out.

Exit codes: 0 success, 1 invalid arguments or inputs, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("fieldadv")

OUT_ENV = "FIELDADV_OUT"
COMMANDS = ("make-dataset", "reconstruct", "extract", "attack", "eval", "render", "gradcheck",
            "beta-study", "train-zoo")

# built-in defaults; a flag's value is None until resolved against these
DEFAULTS = {
    "common": {"seed": 0, "threads": None, "verbose": False},
    "make-dataset": {"shape": "sphere_and_cube", "pattern": "solid", "color_a": "0.85,0.2,0.2",
                     "color_b": "0.2,0.3,0.85", "frequency": 3.0, "size": 1.0, "n_views": 32,
                     "resolution": 64, "format": "ppm"},
    "reconstruct": {"dataset": None, "epochs": 3, "lr": 1e-2, "rays": 1024, "samples": 64, "max_steps": None},
    "extract": {"field": None, "resolution": 64, "iso": None},
    "attack": {"field": None, "mesh": None, "surrogate": None},
    "eval": {"mesh": None, "clean": None, "models": None, "target": None, "n_views": 100, "name": None,
             "attack_config": None, "contrast": 1.0, "blur": 0},
    "render": {"mesh": None, "view": "30,20,2.6", "fov": 60.0, "resolution": 64, "name": "render.ppm"},
    "gradcheck": {"trials": 10},
    "beta-study": {"field": None, "mesh": None, "surrogate": None, "betas": "100,1000,10000",
                   "eval_views": 100},
    "train-zoo": {"dataset_size": 250, "test_size": 50, "epochs": 15},
}

# AttackConfig fields exposed as flags (attack and beta-study); unset ones keep AttackConfig defaults
ATTACK_FLAGS = {
    "target": int, "label": int, "epochs": int, "n_views": int, "beta": float, "mode": str,
    "geometry": str, "lr_grid": float, "lr_mlp": float, "lr_offset": float, "lr_color": float,
    "resolution": int, "clamp_fraction": float, "rgb_reduction": str,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; validation errors here exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(s: str) -> tuple:
    try:
        return tuple(float(v) for v in str(s).split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {s!r}") from None


def build_parser() -> _Parser:
    p = _Parser(prog="fieldadv", description="Adversarial textures for field-reconstructed meshes.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--seed", type=int, help="random seed (default 0)")
        sp.add_argument("--config", type=Path, help="JSON file of option values")
        sp.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./fieldadv_out)")
        sp.add_argument("--threads", type=int, help="cap on BLAS threads (default: library default)")
        sp.add_argument("--verbose", "-v", action="store_true", default=None, help="log progress to stderr")
        return sp

    sp = add("make-dataset", "Ray-trace an analytic scene into a multi-view dataset.")
    sp.add_argument("--shape", help="sphere_and_cube (default) or one of the shape classes")
    sp.add_argument("--pattern", choices=("solid", "stripes", "checker"), help="surface pattern (default solid)")
    sp.add_argument("--color-a", help="first pattern color r,g,b")
    sp.add_argument("--color-b", help="second pattern color r,g,b")
    sp.add_argument("--frequency", type=float, help="pattern frequency (default 3)")
    sp.add_argument("--size", type=float, help="shape scale (default 1)")
    sp.add_argument("--n-views", type=int, help="number of views (default 32)")
    sp.add_argument("--resolution", type=int, help="image side in pixels (default 64)")
    sp.add_argument("--format", choices=("ppm", "png"), help="image format (default ppm)")

    sp = add("reconstruct", "Fit a radiance field to a dataset; writes field.bin and reconstruct.json.")
    sp.add_argument("--dataset", type=Path, help="dataset directory or dataset.json")
    sp.add_argument("--epochs", type=int, help="passes over the training rays (default 3)")
    sp.add_argument("--lr", type=float, help="grid learning rate; MLPs use a tenth (default 1e-2)")
    sp.add_argument("--rays", type=int, help="rays per step (default 1024)")
    sp.add_argument("--samples", type=int, help="samples per ray (default 64)")
    sp.add_argument("--max-steps", type=int, help="stop after this many steps")

    sp = add("extract", "Extract and colorize the field's isosurface; writes mesh.obj.")
    sp.add_argument("--field", type=Path, help="field checkpoint")
    sp.add_argument("--resolution", type=int, help="lattice cells per side (default 64)")
    sp.add_argument("--iso", type=float, help="density level (default log 2 + 1)")

    for name, help_ in (("attack", "Run the targeted attack; writes mesh_adv.obj, trace.csv, config.json."),
                        ("beta-study", "Repeat the attack over several beta values; writes beta_study.{json,csv}.")):
        sp = add(name, help_)
        sp.add_argument("--field", type=Path, help="field checkpoint (not needed for mesh_based)")
        sp.add_argument("--mesh", type=Path, help="colorized clean mesh (OBJ); its colors are the clean texture")
        sp.add_argument("--surrogate", type=Path, help="classifier checkpoint")
        for k, t in ATTACK_FLAGS.items():
            sp.add_argument("--" + k.replace("_", "-"), type=t, help=f"attack setting {k}")
        sp.add_argument("--lambdas", help="regularizer weights rgb,cd,lap,edge (default 1,3000,1e-3,1e-2)")
        sp.add_argument("--no-eot", action="store_true", default=None, help="disable view/image transforms")
    sp.add_argument("--betas", help="comma-separated beta values (default 100,1000,10000)")
    sp.add_argument("--eval-views", type=int, help="views for the success rate (default 100)")

    sp = add("eval", "Success rate per classifier and naturalness; writes report.csv and report.json.")
    sp.add_argument("--mesh", type=Path, help="adversarial mesh (OBJ)")
    sp.add_argument("--clean", type=Path, help="clean mesh (OBJ) for SSIM/PSNR")
    sp.add_argument("--models", nargs="+", type=Path, help="classifier checkpoints")
    sp.add_argument("--target", type=int, help="target label")
    sp.add_argument("--n-views", type=int, help="random views (default 100)")
    sp.add_argument("--name", help="object name in the report (default: mesh file stem)")
    sp.add_argument("--attack-config", type=Path, help="config.json of the attack, for report columns")
    sp.add_argument("--contrast", type=float, help="evaluation-time contrast factor (default 1)")
    sp.add_argument("--blur", type=int, choices=(0, 3, 5), help="evaluation-time blur kernel (default 0)")

    sp = add("render", "Rasterize a mesh from one viewpoint; writes one P6 image.")
    sp.add_argument("--mesh", type=Path, help="mesh (OBJ)")
    sp.add_argument("--view", help="azimuth,elevation[,distance] in degrees / world units (default 30,20,2.6)")
    sp.add_argument("--fov", type=float, help="vertical field of view in degrees (default 60)")
    sp.add_argument("--resolution", type=int, help="image side in pixels (default 64)")
    sp.add_argument("--name", help="output file name (default render.ppm)")

    sp = add("gradcheck", "Finite-difference suite; exit 0 only if every check is within 1e-4.")
    sp.add_argument("--trials", type=int, help="random inputs per op kind (default 10)")

    sp = add("train-zoo", "Train the classifier zoo on rendered shapes; writes clf_<arch>.bin and zoo.json.")
    sp.add_argument("--dataset-size", type=int, help="training renders per class (default 250)")
    sp.add_argument("--test-size", type=int, help="test renders per class (default 50)")
    sp.add_argument("--epochs", type=int, help="training epochs per model (default 15)")
    return p


def resolve(args: argparse.Namespace, parser: _Parser) -> tuple[argparse.Namespace, dict]:
    """Fill unset options from --config then DEFAULTS. Returns (args, leftover config keys)."""
    cmd = args.command
    doc = {}
    if args.config is not None:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
    defaults = dict(DEFAULTS["common"], **DEFAULTS[cmd])
    extra = {}
    for k, v in doc.items():
        key = k.replace("-", "_")
        if key in ("config", "command"):
            continue
        if hasattr(args, key):
            if getattr(args, key) is None:
                setattr(args, key, v)
        else:
            extra[key] = v
    for k, v in defaults.items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)
    if args.out is None:
        args.out = os.environ.get(OUT_ENV) or "fieldadv_out"
    args.out = Path(args.out)
    return args, extra


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): "
                         + ", ".join("--" + n.replace("_", "-") for n in missing))


def _write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# subcommands

def cmd_make_dataset(args, extra):
    from .scenes import SHAPE_CLASSES, Pattern, make_dataset, single_object, sphere_and_cube

    res = dict(n_views=int(args.n_views), resolution=int(args.resolution))
    if args.shape == "sphere_and_cube":
        spec = sphere_and_cube(**res)
    elif args.shape in SHAPE_CLASSES:
        pat = Pattern(args.pattern, _floats(args.color_a), _floats(args.color_b), float(args.frequency))
        spec = single_object(args.shape, pat, float(args.size), **res)
    else:
        raise UsageError(f"unknown shape {args.shape!r}; expected sphere_and_cube or one of {SHAPE_CLASSES}")
    make_dataset(spec, args.out, seed=args.seed, fmt=args.format)
    log.info("wrote %d views to %s", spec.n_views, args.out)


def cmd_reconstruct(args, extra):
    from .reconstruct import load_dataset, train_field

    _require(args, "dataset")
    ds = load_dataset(args.dataset)
    field, score = train_field(ds, int(args.epochs), lr=float(args.lr), rays_per_step=int(args.rays),
                               seed=args.seed, n_samples=int(args.samples), max_steps=args.max_steps)
    args.out.mkdir(parents=True, exist_ok=True)
    field.save(args.out / "field.bin")
    _write_json(args.out / "reconstruct.json", {"held_out_psnr": round(float(score), 6), "epochs": args.epochs,
                                                "seed": args.seed})
    log.info("held-out PSNR %.2f dB", score)


def cmd_extract(args, extra):
    from .fields import RadianceField
    from .meshing import colorize, extract_isosurface, write_obj

    _require(args, "field")
    field = RadianceField.load(args.field)
    mesh = colorize(extract_isosurface(field, int(args.resolution), args.iso), field)
    args.out.mkdir(parents=True, exist_ok=True)
    write_obj(args.out / "mesh.obj", mesh)
    log.info("mesh with %d vertices, %d faces", mesh.n, mesh.m)


def _attack_config(args, extra):
    from .objective import AttackConfig, TransformSpec

    unknown = set(extra) - set(AttackConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    d = dict(extra)
    for k in ATTACK_FLAGS:
        v = getattr(args, k)
        if v is not None:
            d[k] = v
    if args.lambdas is not None:
        d["lambdas"] = _floats(args.lambdas)
    if args.no_eot:
        d["eot"] = TransformSpec.identity()
    d["seed"] = args.seed
    return AttackConfig.from_dict(d)


def _attack_inputs(args, cfg):
    from .classifiers import ConvClassifier
    from .fields import RadianceField
    from .meshing import read_obj

    _require(args, "mesh", "surrogate")
    if cfg.target is None:
        raise UsageError("--target is required")
    if cfg.mode != "mesh_based":
        _require(args, "field")
    field = RadianceField.load(args.field) if args.field is not None else None
    mesh = read_obj(args.mesh)
    if mesh.T is None:
        raise UsageError(f"{args.mesh}: mesh has no vertex colors")
    return field, mesh, ConvClassifier.load(args.surrogate)


def cmd_attack(args, extra):
    from .attack import export_adversarial, run_attack

    cfg = _attack_config(args, extra)
    field, mesh, surrogate = _attack_inputs(args, cfg)

    def progress(epoch, parts):
        if epoch % 10 == 0:
            log.info("epoch %d  L_f %.4f  total %.4f", epoch, parts["L_f"], parts["total"])

    res = run_attack(field, mesh, surrogate, cfg, callback=progress)
    export_adversarial(res, args.out)


def cmd_beta_study(args, extra):
    from .attack import export_adversarial, run_attack
    from .evaluation import beta_study

    cfg = _attack_config(args, extra)
    field, mesh, surrogate = _attack_inputs(args, cfg)
    betas = _floats(args.betas)

    def runner(c):
        res = run_attack(field, mesh, surrogate, c)
        export_adversarial(res, args.out / f"beta_{c.beta:g}")
        return res

    rows = beta_study(field, mesh, surrogate, cfg, betas, n_views=int(args.eval_views), seed=args.seed,
                      runner=runner)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "beta_study.json", {"rows": rows, "target": cfg.target})
    with open(args.out / "beta_study.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "asr", "ssim", "psnr", "r_cd"])
        for r in rows:
            w.writerow([f"{r[k]:.6g}" for k in ("beta", "asr", "ssim", "psnr", "r_cd")])


def cmd_eval(args, extra):
    from .classifiers import ConvClassifier
    from .evaluation import EvalReport, asr, eval_cameras, naturalness, render_views
    from .meshing import read_obj
    from .objective import TransformSample

    _require(args, "mesh", "models", "target")
    mesh = read_obj(args.mesh)
    models = [ConvClassifier.load(p) for p in args.models]
    meta = {"mode": "", "geometry": "", "beta": ""}
    if args.attack_config is not None:
        ac = json.loads(Path(args.attack_config).read_text())
        meta.update({k: ac.get(k, "") for k in meta})
    nat = {"ssim": float("nan"), "psnr": float("nan")}
    if args.clean is not None:
        nat = naturalness(mesh, read_obj(args.clean), seed=args.seed)
    tr = None
    if float(args.contrast) != 1.0 or int(args.blur) != 0:
        tr = TransformSample(contrast=float(args.contrast), blur=int(args.blur))
    name = args.name or Path(args.mesh).stem
    report = EvalReport(meta={"seed": args.seed, "n_views": int(args.n_views), "target": int(args.target),
                              "contrast": float(args.contrast), "blur": int(args.blur)})
    imgs = render_views(mesh, eval_cameras(mesh, int(args.n_views), args.seed), tr)
    for path, m in zip(args.models, models):
        report.add(object=name, model=m.name or path.stem, asr=asr(mesh, m, int(args.target), images=imgs),
                   ssim=nat["ssim"], psnr=nat["psnr"], **meta)
    args.out.mkdir(parents=True, exist_ok=True)
    report.write_csv(args.out / "report.csv")
    report.write_json(args.out / "report.json")
    for r in report.rows:
        print(f"{r['model']:12s} ASR {r['asr']:.1f}%")


def cmd_render(args, extra):
    from .camera import Camera, look_at, orbit_eye
    from .fileio import write_ppm
    from .meshing import read_obj
    from .rasterizer import render

    _require(args, "mesh")
    v = _floats(args.view)
    if len(v) not in (2, 3):
        raise UsageError("--view takes azimuth,elevation[,distance]")
    dist = v[2] if len(v) == 3 else 2.6
    mesh = read_obj(args.mesh)
    center = 0.5 * (mesh.V.min(axis=0) + mesh.V.max(axis=0))
    eye = orbit_eye(np.deg2rad(v[0]), np.deg2rad(v[1]), dist, center)
    n = int(args.resolution)
    cam = Camera(look_at(eye, center), np.deg2rad(float(args.fov)), n, n)
    args.out.mkdir(parents=True, exist_ok=True)
    write_ppm(args.out / args.name, render(mesh, cam))


def cmd_gradcheck(args, extra):
    from .gradcheck import TOL, run_suite

    results = run_suite(seed=args.seed, trials=int(args.trials), verbose=bool(args.verbose))
    worst = max(e for _, e in results)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "gradcheck.json", {"tolerance": TOL, "max_error": worst,
                                               "checks": {k: v for k, v in results}})
    failed = [k for k, e in results if not e <= TOL]
    for k in failed:
        print(f"FAIL {k}: {dict(results)[k]:.3e}")
    print(f"{len(results) - len(failed)}/{len(results)} checks within {TOL:g} (max {worst:.2e})")
    return 0 if not failed else 2


def cmd_train_zoo(args, extra):
    from .classifiers import ShapeDataset, zoo

    ds = ShapeDataset.generate(n_train=int(args.dataset_size), n_test=int(args.test_size), seed=args.seed)
    z = zoo(args.seed, dataset=ds, epochs=int(args.epochs), min_accuracy=0.0)
    args.out.mkdir(parents=True, exist_ok=True)
    for m in z.members:
        m.save(args.out / f"clf_{m.name}.bin")
    _write_json(args.out / "zoo.json", {"surrogate": z.surrogate.name, "test_accuracy": z.accuracies})


HANDLERS = {
    "make-dataset": cmd_make_dataset, "reconstruct": cmd_reconstruct, "extract": cmd_extract,
    "attack": cmd_attack, "eval": cmd_eval, "render": cmd_render, "gradcheck": cmd_gradcheck,
    "beta-study": cmd_beta_study, "train-zoo": cmd_train_zoo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("fieldadv: error: a subcommand is required")
        args, extra = resolve(args, parser)
        if extra and args.command not in ("attack", "beta-study"):
            raise UsageError(f"unknown config keys: {sorted(extra)}")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            rc = HANDLERS[args.command](args, extra)
    except (UsageError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"fieldadv {args.command}: invalid input: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, OSError, ArithmeticError) as exc:
        print(f"fieldadv {args.command}: failed: {exc}", file=sys.stderr)
        return 2
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
