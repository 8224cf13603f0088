"""End-to-end grid denoising runs: data, training, prediction, scoring, files.

A run is described by an :class:`ExperimentConfig`, which can be read from a
flat ``key = value`` text file (``#`` starts a comment).  Recognized keys:

=================  ==========================================================
``base``           base image kind: halves, stripes, checker-blocks, disk
``height, width``  grid size (default 10 x 10)
``period``         stripe period (default 4)
``noise``          flip, gaussian or bimodal (default flip)
``flip_prob``      flip probability (default 0.2)
``sigma``          gaussian standard deviation (default 0.3)
``n_train``        training copies (default 40)
``n_test``         test copies (default 10)
``mode``           full or shared parameters (default full)
``epsilon``        training epsilon (default 1)
``predict_epsilon`` epsilon used for prediction (default: training epsilon)
``C, p``           regularization constant (required) and power (default 2)
``c_node``         vertex entropy weight, or ``bethe`` (default 1)
``c_factor``       factor entropy weight (default 1)
``max_iter, gap_tol, grad_tol, inner_sweeps, eta0, stop_on_gap, n_jobs``
                   training schedule (see :class:`~approxsp.model.TrainConfig`)
``seed``           data seed (default 0)
=================  ==========================================================

Training copies use noise streams ``0 .. n_train - 1`` and test copies the
following ``n_test`` streams, all keyed by ``seed``.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import datagen
from .graph import FactorGraph, build_grid
from .inference import predict as bp_predict
from .learner import TrainingSet, train
from .model import (TrainConfig, assemble_potentials, bethe_weights, denoising_features,
                    load_model, save_model)


@lru_cache(maxsize=8)
def _grid(height: int, width: int) -> FactorGraph:
    return build_grid(height, width, 2)


@dataclass
class ExperimentConfig:
    base: str = "halves"
    height: int = 10
    width: int = 10
    period: int = 4
    noise: datagen.NoiseSpec = field(default_factory=datagen.NoiseSpec)
    n_train: int = 40
    n_test: int = 10
    mode: str = "full"
    train: TrainConfig = field(default_factory=TrainConfig)
    bethe: bool = False
    predict_epsilon: float | None = None
    seed: int = 0
    infer_tol: float = 1e-8
    infer_max_sweeps: int = 1000
    out: Path | None = None

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be at least 1")
        if self.mode not in ("full", "shared"):
            raise ValueError(f"mode must be full or shared, got {self.mode!r}")
        if self.predict_epsilon is not None and not self.predict_epsilon >= 0:
            raise ValueError("predict_epsilon must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def graph(self) -> FactorGraph:
        return _grid(self.height, self.width)

    def base_image(self) -> datagen.GridImage:
        return datagen.make_base_image(self.base, self.height, self.width, self.period)

    def train_set(self) -> datagen.Dataset:
        return datagen.make_dataset(self.base_image(), self.noise, self.n_train, self.seed, 0)

    def test_set(self) -> datagen.Dataset:
        return datagen.make_dataset(self.base_image(), self.noise, self.n_test, self.seed,
                                    self.n_train)

    def train_config(self) -> TrainConfig:
        if not self.bethe:
            return self.train
        c_node, c_factor = bethe_weights(self.graph)
        return dataclasses.replace(self.train, c_node=c_node, c_factor=c_factor, nonconvex=True)

    def echo(self) -> dict:
        t = self.train
        return {
            "base": self.base, "height": self.height, "width": self.width, "period": self.period,
            "noise": self.noise.kind, "flip_prob": self.noise.prob, "sigma": self.noise.sigma,
            "n_train": self.n_train, "n_test": self.n_test, "mode": self.mode,
            "epsilon": t.epsilon, "predict_epsilon": self.predict_epsilon, "C": t.C, "p": t.p,
            "c_node": "bethe" if self.bethe else float(t.c_node),
            "c_factor": float(t.c_factor), "max_iter": t.max_iter, "gap_tol": t.gap_tol,
            "grad_tol": t.grad_tol, "inner_sweeps": t.inner_sweeps, "eta0": t.eta0,
            "stop_on_gap": t.stop_on_gap, "seed": self.seed,
        }


_TRAIN_KEYS = {"epsilon": float, "C": float, "p": int, "c_factor": float, "max_iter": int,
               "gap_tol": float, "grad_tol": float, "inner_sweeps": int, "eta0": float,
               "n_jobs": int}
_TOP_KEYS = {"base": str, "height": int, "width": int, "period": int, "n_train": int,
             "n_test": int, "mode": str, "seed": int, "infer_tol": float,
             "infer_max_sweeps": int}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a dict of strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def build_config(values: dict, require_C: bool = True) -> ExperimentConfig:
    """An :class:`ExperimentConfig` from string (or already typed) values."""
    values = dict(values)
    known = set(_TRAIN_KEYS) | set(_TOP_KEYS) | {"noise", "flip_prob", "sigma", "c_node",
                                                 "predict_epsilon", "stop_on_gap", "out"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
    if require_C and values.get("C") is None:
        raise ValueError("the regularization constant C must be given explicitly")
    train_kw = {k: conv(values[k]) for k, conv in _TRAIN_KEYS.items() if values.get(k) is not None}
    top_kw = {k: conv(values[k]) for k, conv in _TOP_KEYS.items() if values.get(k) is not None}
    bethe = False
    if values.get("c_node") is not None:
        if str(values["c_node"]).strip().lower() == "bethe":
            bethe = True
        else:
            train_kw["c_node"] = float(values["c_node"])
            train_kw["nonconvex"] = train_kw["c_node"] < 0
    if values.get("stop_on_gap") is not None:
        sv = values["stop_on_gap"]
        train_kw["stop_on_gap"] = sv if isinstance(sv, bool) else _bool(sv)
    noise_kw = {"kind": str(values.get("noise") or "flip")}
    if values.get("flip_prob") is not None:
        noise_kw["prob"] = float(values["flip_prob"])
    if values.get("sigma") is not None:
        noise_kw["sigma"] = float(values["sigma"])
    pe = values.get("predict_epsilon")
    pe = None if pe is None or str(pe).strip().lower() in ("", "none") else float(pe)
    out = values.get("out")
    return ExperimentConfig(noise=datagen.NoiseSpec(**noise_kw), train=TrainConfig(**train_kw),
                            bethe=bethe, predict_epsilon=pe,
                            out=Path(out) if out else None, **top_kw)


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text())


@dataclass
class Report:
    train_error: float
    test_error: float
    train_wrong: int
    test_wrong: int
    train_pixels: int
    test_pixels: int
    primal: float
    dual: float
    gap: float
    relative_gap: float
    iterations: int
    status: str
    predict_epsilon: float
    config: dict
    seconds: float = math.nan

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("seconds")
        return d

    def to_text(self) -> str:
        lines = [
            f"train error     {self.train_error:.4f} %  ({self.train_wrong} / {self.train_pixels} pixels)",
            f"test error      {self.test_error:.4f} %  ({self.test_wrong} / {self.test_pixels} pixels)",
            f"primal          {self.primal!r}",
            f"dual            {self.dual!r}",
            f"gap             {self.gap!r}",
            f"relative gap    {self.relative_gap!r}",
            f"iterations      {self.iterations}",
            f"status          {self.status}",
            f"predict epsilon {self.predict_epsilon!r}",
            "config:",
        ]
        lines.extend(f"  {k} = {v}" for k, v in self.config.items())
        return "\n".join(lines) + "\n"


def score(predicted, truth) -> float:
    """Percentage of pixels whose labels differ."""
    p, t = np.asarray(predicted), np.asarray(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("cannot score empty images")
    return 100.0 * float(np.count_nonzero(p != t)) / p.size


@dataclass
class Model:
    """Learned parameters plus what prediction needs to rebuild potentials."""

    theta: np.ndarray
    height: int
    width: int
    mode: str
    epsilon: float
    c_node: float | str
    c_factor: float

    @property
    def graph(self) -> FactorGraph:
        return _grid(self.height, self.width)

    def weights(self):
        g = self.graph
        if self.c_node == "bethe":
            return bethe_weights(g)
        return np.full(g.n_vertices, float(self.c_node)), np.full(g.n_factors, float(self.c_factor))

    def save(self, path) -> None:
        save_model(path, self.theta, {"graph": (self.height, self.width, 2), "mode": self.mode,
                                      "epsilon": float(self.epsilon),
                                      "c_node": self.c_node if self.c_node == "bethe" else float(self.c_node),
                                      "c_factor": float(self.c_factor)})

    @classmethod
    def load(cls, path) -> "Model":
        theta, meta = load_model(path)
        h, w, labels = meta["graph"]
        if labels != 2:
            raise ValueError(f"{path}: only binary denoising models are supported")
        c_node = meta.get("c_node", "1.0")
        return cls(theta, h, w, meta.get("mode", "full"), float(meta.get("epsilon", "1.0")),
                   c_node if c_node == "bethe" else float(c_node), float(meta.get("c_factor", "1.0")))


def predict_images(model: Model, observations, epsilon: float | None = None,
                   tol: float = 1e-8, max_sweeps: int = 1000) -> np.ndarray:
    """Labels ``(E, n)`` for observed images ``(E, n)`` at ``epsilon``
    (default: the training epsilon)."""
    g = model.graph
    eps = model.epsilon if epsilon is None else float(epsilon)
    feats = denoising_features(g, observations, model.mode)
    pot = assemble_potentials(model.theta, feats)
    c_node, c_factor = model.weights()
    return bp_predict(pot, c_node, c_factor, eps, tol=tol, max_sweeps=max_sweeps)


def _write_predictions(directory: Path, labels, height, width):
    directory.mkdir(parents=True, exist_ok=True)
    for i, lab in enumerate(labels):
        datagen.write_grid(directory / f"test_{i:03d}.txt",
                           datagen.GridImage(height, width, lab.astype(float)))


GNUPLOT = """set datafile separator ','
set key autotitle columnhead
set xlabel 'iteration'
set ylabel 'objective'
plot '{csv}' using 1:2 with lines title 'primal', \\
     '{csv}' using 1:3 with lines title 'dual'
"""


@dataclass
class RunResult:
    report: Report
    model: Model
    trace: object
    test_predictions: np.ndarray


def fit(cfg: ExperimentConfig, train_data: datagen.Dataset | None = None):
    """Train on the configured (or given) training set; returns ``(model, result)``."""
    g = cfg.graph
    data = cfg.train_set() if train_data is None else train_data
    feats = denoising_features(g, data.observations(), cfg.mode)
    tset = TrainingSet(feats, data.labels())
    tc = cfg.train_config()
    result = train(tset, tc)
    model = Model(result.theta, cfg.height, cfg.width, cfg.mode, tc.epsilon,
                  "bethe" if cfg.bethe else float(tc.c_node), float(np.mean(tc.c_factor)))
    return model, result


def run_experiment(cfg: ExperimentConfig, train_data=None, test_data=None) -> RunResult:
    """Train, predict the training and test sets, score, and write outputs to
    ``cfg.out`` when set (report.txt/json, model.txt, trace.csv, trace.gp,
    predictions/, timing.json)."""
    start = time.perf_counter()
    train_data = cfg.train_set() if train_data is None else train_data
    test_data = cfg.test_set() if test_data is None else test_data
    model, result = fit(cfg, train_data)
    pe = cfg.train.epsilon if cfg.predict_epsilon is None else cfg.predict_epsilon
    kw = dict(tol=cfg.infer_tol, max_sweeps=cfg.infer_max_sweeps)
    train_pred = predict_images(model, train_data.observations(), pe, **kw)
    test_pred = predict_images(model, test_data.observations(), pe, **kw)
    train_truth, test_truth = train_data.labels(), test_data.labels()
    report = Report(
        train_error=score(train_pred, train_truth), test_error=score(test_pred, test_truth),
        train_wrong=int(np.count_nonzero(train_pred != train_truth)),
        test_wrong=int(np.count_nonzero(test_pred != test_truth)),
        train_pixels=int(train_truth.size), test_pixels=int(test_truth.size),
        primal=float(result.best_primal), dual=float(result.best_dual), gap=float(result.gap),
        relative_gap=float(result.relative_gap), iterations=result.iterations,
        status=result.status, predict_epsilon=float(pe), config=cfg.echo(),
    )
    report.seconds = time.perf_counter() - start
    if cfg.out is not None:
        write_outputs(Path(cfg.out), report, model, result.trace, test_pred, cfg)
    return RunResult(report, model, result.trace, test_pred)


def write_outputs(out: Path, report: Report, model: Model, trace, test_pred, cfg) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text())
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps({"seconds": report.seconds}) + "\n")
    model.save(out / "model.txt")
    trace.write_csv(out / "trace.csv")
    (out / "trace.gp").write_text(GNUPLOT.format(csv="trace.csv"))
    _write_predictions(out / "predictions", test_pred, cfg.height, cfg.width)


def cross_epsilon_eval(model: Model, test_data: datagen.Dataset, predict_epsilon: float,
                       tol: float = 1e-8, max_sweeps: int = 1000) -> dict:
    """Test error of ``model`` when inference runs at ``predict_epsilon``."""
    pred = predict_images(model, test_data.observations(), predict_epsilon, tol, max_sweeps)
    truth = test_data.labels()
    return {"predict_epsilon": float(predict_epsilon), "train_epsilon": float(model.epsilon),
            "test_error": score(pred, truth), "test_wrong": int(np.count_nonzero(pred != truth)),
            "test_pixels": int(truth.size)}


def save_dataset(directory, ds: datagen.Dataset, prefix: str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, (t, o) in enumerate(zip(ds.truth, ds.observed)):
        datagen.write_grid(directory / f"{prefix}_truth_{i:03d}.txt", t)
        datagen.write_grid(directory / f"{prefix}_obs_{i:03d}.txt", o)


def load_dataset(directory, prefix: str) -> datagen.Dataset:
    directory = Path(directory)
    truths = sorted(directory.glob(f"{prefix}_truth_*.txt"))
    if not truths:
        raise FileNotFoundError(f"no {prefix}_truth_*.txt files in {directory}")
    ds = datagen.Dataset()
    for t in truths:
        o = t.with_name(t.name.replace("_truth_", "_obs_"))
        ds.truth.append(datagen.read_grid(t))
        ds.observed.append(datagen.read_grid(o))
    return ds
