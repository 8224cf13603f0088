"""Command line interface for grid denoising experiments.

Subcommands::

    generate   write training and test images (truth and observations)
    train      train, score on train/test, write report, model, trace, predictions
    predict    label observed images with a saved model
    evaluate   score a saved model on a test set at a chosen prediction epsilon
    sweep      run ``train`` for several training epsilons

Exit status: 0 on success, 1 on invalid input, 2 on file errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import datagen
from .experiment import (Model, build_config, cross_epsilon_eval, load_config, load_dataset,
                         predict_images, run_experiment, save_dataset)

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--c-node", dest="c_node", help="vertex entropy weight or 'bethe'")
    p.add_argument("--c-factor", dest="c_factor", type=float)
    p.add_argument("--C", dest="C", type=float)
    p.add_argument("--p", dest="p", type=int, choices=(1, 2))
    p.add_argument("--mode", choices=("full", "shared"))
    p.add_argument("--predict-epsilon", dest="predict_epsilon", type=float)
    p.add_argument("--out", type=Path)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="approxsp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize training and test images")
    _common(p)

    p = sub.add_parser("train", help="train and score a model")
    _common(p)
    p.add_argument("--data", type=Path, help="directory written by 'generate'")

    p = sub.add_parser("predict", help="label observed images with a saved model")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("inputs", nargs="+", type=Path, help="observed image files")

    p = sub.add_parser("evaluate", help="score a saved model on test images")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, help="directory written by 'generate'")

    p = sub.add_parser("sweep", help="train for several epsilons")
    _common(p)
    p.add_argument("--data", type=Path, help="directory written by 'generate'")
    p.add_argument("--epsilons", default="1,0.5,0.01,0",
                   help="comma separated training epsilons (default 1,0.5,0.01,0)")
    p.add_argument("--jobs", type=int, default=1, help="runs executed concurrently")
    return parser


_FLAG_KEYS = ("seed", "epsilon", "c_node", "c_factor", "C", "p", "mode", "predict_epsilon", "out")


def _config(args, require_C: bool):
    values = load_config(args.config) if args.config else {}
    for key in _FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return build_config(values, require_C=require_C)


def _datasets(args, cfg):
    if getattr(args, "data", None):
        return load_dataset(args.data, "train"), load_dataset(args.data, "test")
    return cfg.train_set(), cfg.test_set()


def _need_out(cfg):
    if cfg.out is None:
        raise ValueError("--out DIR is required")
    return Path(cfg.out)


def cmd_generate(args) -> int:
    cfg = _config(args, require_C=False)
    out = _need_out(cfg)
    save_dataset(out, cfg.train_set(), "train")
    save_dataset(out, cfg.test_set(), "test")
    print(f"wrote {cfg.n_train} training and {cfg.n_test} test images to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args, require_C=True)
    train_data, test_data = _datasets(args, cfg)
    run = run_experiment(cfg, train_data, test_data)
    print(run.report.to_text(), end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _config(args, require_C=False)
    out = _need_out(cfg)
    model = Model.load(args.model)
    images = [datagen.read_grid(p) for p in args.inputs]
    for img, path in zip(images, args.inputs):
        if (img.height, img.width) != (model.height, model.width):
            raise ValueError(f"{path}: image is {img.height}x{img.width}, model expects "
                             f"{model.height}x{model.width}")
    obs = np.stack([img.flat for img in images])
    labels = predict_images(model, obs, cfg.predict_epsilon, cfg.infer_tol, cfg.infer_max_sweeps)
    out.mkdir(parents=True, exist_ok=True)
    for lab, path in zip(labels, args.inputs):
        target = out / f"pred_{path.name}"
        datagen.write_grid(target, datagen.GridImage(model.height, model.width, lab.astype(float)))
        print(target)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args, require_C=False)
    model = Model.load(args.model)
    cfg.height, cfg.width = model.height, model.width
    _, test_data = _datasets(args, cfg)
    if (test_data.truth[0].height, test_data.truth[0].width) != (model.height, model.width):
        raise ValueError("test images do not match the model's grid size")
    pe = model.epsilon if cfg.predict_epsilon is None else cfg.predict_epsilon
    result = cross_epsilon_eval(model, test_data, pe, cfg.infer_tol, cfg.infer_max_sweeps)
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if cfg.out is not None:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out) / "evaluation.json").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _config(args, require_C=True)
    out = _need_out(base)
    try:
        epsilons = [float(x) for x in args.epsilons.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"--epsilons: cannot parse {args.epsilons!r}") from None
    if not epsilons or args.jobs < 1:
        raise ValueError("need at least one epsilon and --jobs >= 1")
    train_data, test_data = _datasets(args, base)

    def one(eps):
        cfg = dataclasses.replace(base, train=dataclasses.replace(base.train, epsilon=eps),
                                  out=out / f"eps_{eps!r}")
        return run_experiment(cfg, train_data, test_data).report

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        reports = list(pool.map(one, epsilons))
    rows = ["epsilon,train_error,test_error,test_wrong,relative_gap,iterations,status"]
    for eps, r in zip(epsilons, reports):
        rows.append(f"{eps!r},{r.train_error!r},{r.test_error!r},{r.test_wrong},"
                    f"{r.relative_gap!r},{r.iterations},{r.status}")
    (out / "sweep.csv").write_text("\n".join(rows) + "\n")
    print("\n".join(rows))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
