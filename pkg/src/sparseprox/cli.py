"""Command-line entry point.

    sparseprox train CONFIG.json [--override key=value ...]
    sparseprox prox-check [--samples N] [--seed S]
    sparseprox contours KIND [--a A] [--lambda-scad L] [--gamma G] [--p P] -o OUT.csv
    sparseprox contours --preset penalties|tl1-shapes -o OUT_DIR
    sparseprox report CHECKPOINT (--csv PATH | --idx IMAGES LABELS | --config CONFIG.json)

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 training divergence.
"""
import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import data, metrics, nn, oracle, penalties, prox, trainer
from .errors import ConfigError, ShapeError, TrainingDivergence

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3
PROX_CHECK_TOL = 1e-6
SEED_ENV = "SPARSEPROX_SEED"

# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------

_TRAIN_KEYS = {
    "lambda": "lam",
    "s": "s",
    "learning_rate": "learning_rate",
    "batch_size": "batch_size",
    "max_iterations": "max_iterations",
    "loss_delta_tol": "loss_delta_tol",
    "seed": "seed",
    "optimizer": "optimizer",
    "regularizer_mode": "regularizer_mode",
    "a": "a",
    "adam_beta1": "adam_beta1",
    "adam_beta2": "adam_beta2",
    "adam_eps": "adam_eps",
}
_TOP_KEYS = {"train", "architecture", "dataset", "output_dir"}
_ARCH_KEYS = {"input_shape", "init", "layers"}
_DATASET_KEYS = {
    "synthetic": {"kind", "n", "informative", "noise", "classes", "seed", "separation", "test_fraction", "split_seed"},
    "csv": {"kind", "path", "test_path", "image_shape", "num_classes", "feature_scale", "test_fraction", "split_seed"},
    "idx": {"kind", "images", "labels", "test_images", "test_labels", "num_classes", "test_fraction", "split_seed"},
}


@dataclass
class RunConfig:
    train: trainer.TrainConfig
    epochs: int
    architecture: dict
    dataset: dict
    output_dir: str


def _reject_unknown(section, given, allowed):
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def _parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, raw, value


def apply_overrides(raw_cfg, overrides):
    """Apply ``key=value`` overrides to a raw config dict.

    Bare keys address the ``train`` section; dotted keys address
    ``section.key``. The output directory gets a ``_key=value`` suffix per
    override.
    """
    cfg = json.loads(json.dumps(raw_cfg))
    suffix = ""
    for text in overrides:
        key, raw, value = _parse_override(text)
        section, _, name = key.rpartition(".")
        section = section or "train"
        if section not in ("train", "architecture", "dataset"):
            raise ConfigError(f"override {key!r}: unknown section {section!r}")
        cfg.setdefault(section, {})[name] = value
        suffix += f"_{key}={raw}"
    if suffix and "output_dir" in cfg:
        cfg["output_dir"] = str(cfg["output_dir"]).rstrip("/\\") + suffix
    return cfg


def parse_run_config(raw, base_dir="."):
    """Validate a raw config dict. Paths are resolved against ``base_dir``
    and must exist."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown("config", raw, _TOP_KEYS)
    for key in _TOP_KEYS:
        if key not in raw:
            raise ConfigError(f"missing required key: {key}")

    tr = dict(raw["train"])
    epochs = tr.pop("epochs", None)
    _reject_unknown("train", tr, _TRAIN_KEYS)
    kwargs = {_TRAIN_KEYS[k]: v for k, v in tr.items()}
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None and env_seed.strip():
        try:
            kwargs["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env_seed!r} is not an integer") from None
    if epochs is not None:
        if "max_iterations" in kwargs:
            raise ConfigError("train: give either epochs or max_iterations, not both")
        if not (isinstance(epochs, int) and epochs >= 0):
            raise ConfigError("train.epochs must be a nonnegative integer")
        # placeholder until the training set size is known
        kwargs["max_iterations"] = 0
    try:
        train_cfg = trainer.TrainConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

    arch = dict(raw["architecture"])
    _reject_unknown("architecture", arch, _ARCH_KEYS)
    if "input_shape" not in arch or "layers" not in arch:
        raise ConfigError("architecture needs input_shape and layers")
    try:
        nn.InitScheme(arch.get("init", "xavier"))
    except ValueError:
        raise ConfigError(f"architecture.init must be one of {[s.value for s in nn.InitScheme]}") from None
    for i, layer in enumerate(arch["layers"]):
        kind = layer.get("kind")
        allowed = {"dense": {"kind", "units", "activation"}, "conv2d": {"kind", "filters", "kernel_size", "activation"}}
        if kind not in allowed:
            raise ConfigError(f"architecture.layers[{i}].kind must be dense or conv2d, got {kind!r}")
        _reject_unknown(f"architecture.layers[{i}]", layer, allowed[kind])

    ds = dict(raw["dataset"])
    kind = ds.get("kind")
    if kind not in _DATASET_KEYS:
        raise ConfigError(f"dataset.kind must be one of {sorted(_DATASET_KEYS)}, got {kind!r}")
    _reject_unknown("dataset", ds, _DATASET_KEYS[kind])
    for key in ("path", "test_path", "images", "labels", "test_images", "test_labels"):
        if key in ds:
            ds[key] = os.path.join(base_dir, ds[key])
            if not os.path.isfile(ds[key]):
                raise ConfigError(f"dataset.{key}: file not found: {ds[key]}")
    if "feature_scale" in ds and not (isinstance(ds["feature_scale"], (int, float)) and ds["feature_scale"] > 0):
        raise ConfigError("dataset.feature_scale must be a positive number")
    if kind == "csv" and "path" not in ds:
        raise ConfigError("dataset.path is required for csv")
    if kind == "idx" and not {"images", "labels"} <= set(ds):
        raise ConfigError("dataset.images and dataset.labels are required for idx")
    if ("test_images" in ds) != ("test_labels" in ds):
        raise ConfigError("dataset.test_images and dataset.test_labels go together")

    out = os.path.join(base_dir, str(raw["output_dir"]))
    return RunConfig(train_cfg, epochs, arch, ds, out)


def load_run_config(path, overrides=()):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    raw = apply_overrides(raw, overrides)
    return parse_run_config(raw, os.path.dirname(os.path.abspath(path)))


def load_datasets(ds, arch=None):
    """(train, test) datasets for a dataset config section."""
    kind = ds["kind"]
    frac = ds.get("test_fraction", 0.2)
    split_seed = ds.get("split_seed", 0)
    test = None
    if kind == "synthetic":
        full = data.synthetic_classification(
            int(ds["n"]),
            int(ds.get("informative", 5)),
            int(ds.get("noise", 0)),
            int(ds.get("classes", 2)),
            seed=int(ds.get("seed", 0)),
            separation=float(ds.get("separation", 3.0)),
        )
    elif kind == "csv":
        k = ds.get("num_classes")
        full = data.load_csv(ds["path"], k)
        if "test_path" in ds:
            test = data.load_csv(ds["test_path"], k if k is not None else full.num_classes, split="test")
        scale = float(ds.get("feature_scale", 1.0))
        if scale != 1.0:
            # e.g. 16 for 0..16 digit pixels, mirroring the /255 of IDX
            full = data.Dataset(full.features / scale, full.labels, full.num_classes, full.split)
            if test is not None:
                test = data.Dataset(test.features / scale, test.labels, test.num_classes, "test")
    else:
        k = ds.get("num_classes")
        full = data.load_idx(ds["images"], ds["labels"], k)
        if "test_images" in ds:
            test = data.load_idx(ds["test_images"], ds["test_labels"], k or full.num_classes, split="test")
    if test is None:
        train_ds, test = data.train_test_split(full, frac, split_seed)
    else:
        train_ds = full
        if test.num_classes != train_ds.num_classes:
            k = max(test.num_classes, train_ds.num_classes)
            train_ds = data.Dataset(train_ds.features, train_ds.labels, k)
            test = data.Dataset(test.features, test.labels, k, "test")
    shape = ds.get("image_shape") or (arch or {}).get("input_shape")
    if shape is not None and tuple(train_ds.features.shape[1:]) != tuple(shape):
        train_ds, test = train_ds.reshape(shape), test.reshape(shape)
    return train_ds, test


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_train(args):
    cfg = load_run_config(args.config, args.override)
    try:
        train_ds, test_ds = load_datasets(cfg.dataset, cfg.architecture)
        arch = cfg.architecture
        model = nn.build_network(
            arch["input_shape"], arch["layers"], init=arch.get("init", "xavier"), seed=cfg.train.seed
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    tc = cfg.train
    if cfg.epochs is not None:
        per_epoch = math.ceil(len(train_ds) / tc.batch_size)
        tc = replace(tc, max_iterations=cfg.epochs * per_epoch)
    if tc.batch_size > len(train_ds):
        raise ConfigError(f"batch_size {tc.batch_size} exceeds training set size {len(train_ds)}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    model, trace = trainer.train(model, train_ds, tc, test_ds)
    nn.save_checkpoint(model, os.path.join(cfg.output_dir, "checkpoint.json"))
    trace.write_csv(os.path.join(cfg.output_dir, "trace.csv"))
    report = metrics.sparsity_report(model, test_ds.features, test_ds.labels)
    _write_json(os.path.join(cfg.output_dir, "report.json"), report.to_dict())
    print(f"wrote {cfg.output_dir}: {len(trace)} epochs, {json.dumps(report.to_dict(), sort_keys=True)}")
    return EXIT_OK


def run_prox_check(samples, seed):
    """Closed form vs brute force over seeded triples.

    Returns ``(max_abs_deviation, worst_triple)``.
    """
    w, beta, a = oracle.sample_triples(samples, seed)
    worst, worst_triple = -1.0, None
    for wi, bi, ai in zip(w, beta, a):
        closed = prox.tl1_prox_scalar(wi, prox.ProxStep(float(bi), float(ai)))
        brute = oracle.brute_force_tl1_prox(wi, bi, ai)
        dev = abs(closed - brute)
        if dev > worst:
            worst, worst_triple = dev, (float(wi), float(bi), float(ai), closed, brute)
    return worst, worst_triple


def cmd_prox_check(args):
    if args.samples < 1:
        raise ConfigError("--samples must be >= 1")
    t0 = time.perf_counter()
    worst, (w, b, a, closed, brute) = run_prox_check(args.samples, args.seed)
    elapsed = time.perf_counter() - t0
    print(f"samples={args.samples} seed={args.seed} max_abs_deviation={worst:.3e} tol={PROX_CHECK_TOL:.0e}")
    if worst > PROX_CHECK_TOL:
        print(f"FAIL worst triple: w={w!r} beta={b!r} a={a!r} closed_form={closed!r} brute_force={brute!r}")
        return EXIT_VERIFY
    print(f"PASS ({elapsed:.2f}s)", file=sys.stderr)
    return EXIT_OK


CONTOUR_PRESETS = {
    "penalties": [
        ("l0", {}),
        ("l1", {}),
        ("scad", {"lambda_scad": 0.28, "gamma": 3.7}),
        ("mcp", {"lambda_scad": 0.4, "gamma": 2.0}),
        ("capped_l1", {"a": 0.3}),
        ("log", {"gamma": 1e3}),
        ("lp", {"p": 0.5}),
        ("l1_minus_l2", {}),
        ("tl1", {"a": 1.0}),
    ],
    "tl1-shapes": [("tl1", {"a": 1e-2}), ("tl1", {"a": 1.0}), ("tl1", {"a": 1e2})],
}


def _contour_name(kind, params):
    tail = "".join(f"_{k}={v:g}" for k, v in sorted(params.items()))
    return f"{kind}{tail}.csv"


def cmd_contours(args):
    kinds = [k.value for k in penalties.PenaltyKind]
    if args.preset:
        if args.kind:
            raise ConfigError("give either KIND or --preset, not both")
        os.makedirs(args.output, exist_ok=True)
        for kind, params in CONTOUR_PRESETS[args.preset]:
            spec = penalties.PenaltySpec(kind, **params)
            axis, grid = penalties.contour_grid(spec, args.half_width, args.resolution)
            path = os.path.join(args.output, _contour_name(kind, params))
            penalties.write_contour_csv(path, axis, grid)
            print(path)
        return EXIT_OK
    if args.kind not in kinds:
        raise ConfigError(f"unknown penalty kind {args.kind!r}; supported: {', '.join(kinds)}")
    params = {k: v for k, v in (("a", args.a), ("lambda_scad", args.lambda_scad), ("gamma", args.gamma), ("p", args.p)) if v is not None}
    try:
        spec = penalties.PenaltySpec(args.kind, **params)
        axis, grid = penalties.contour_grid(spec, args.half_width, args.resolution)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    parent = os.path.dirname(os.path.abspath(args.output))
    os.makedirs(parent, exist_ok=True)
    penalties.write_contour_csv(args.output, axis, grid)
    print(args.output)
    return EXIT_OK


def cmd_report(args):
    try:
        model = nn.load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load checkpoint {args.checkpoint}: {exc}") from None
    try:
        if args.config:
            cfg = load_run_config(args.config)
            _, ds = load_datasets(cfg.dataset, cfg.architecture)
        elif args.csv:
            ds = data.load_csv(args.csv)
        else:
            ds = data.load_idx(*args.idx)
        if tuple(ds.features.shape[1:]) != model.input_shape:
            if int(np.prod(ds.features.shape[1:])) != int(np.prod(model.input_shape)):
                raise ShapeError(f"dataset sample shape {ds.features.shape[1:]} does not match model input {model.input_shape}")
            ds = ds.reshape(model.input_shape)
        report = metrics.sparsity_report(model, ds.features, ds.labels)
    except (ShapeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="sparseprox", description=__doc__.split("\n")[0] if __doc__ else None)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a network from a JSON run config")
    t.add_argument("config")
    t.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("prox-check", help="compare the closed-form prox with a brute-force minimizer")
    c.add_argument("--samples", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_prox_check)

    g = sub.add_parser("contours", help="write penalty contour grids as CSV")
    g.add_argument("kind", nargs="?")
    g.add_argument("--preset", choices=sorted(CONTOUR_PRESETS))
    g.add_argument("--a", type=float)
    g.add_argument("--lambda-scad", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--p", type=float)
    g.add_argument("--half-width", type=float, default=1.0)
    g.add_argument("--resolution", type=int, default=101)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_contours)

    r = sub.add_parser("report", help="print the sparsity report of a checkpoint as JSON")
    r.add_argument("checkpoint")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv")
    src.add_argument("--idx", nargs=2, metavar=("IMAGES", "LABELS"))
    src.add_argument("--config")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
