"""Command line front end: train, unlearn, ablate, eval, dump-latents.

Experiments are described by a JSON config file. Every run's RNG seed is
derived from the master seed plus a checksum of the run's identity, so a
sweep is reproducible regardless of execution order or worker count.
"""
from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor

from .attacks import AttackConfig
from .data import (
    ForgetSplit,
    LabeledDataset,
    load_idx,
    split_forget_retain,
    subsample,
    synth_blobs_train_test,
)
from .metrics import EvalReport, emit_report, evaluate
from .model import (
    SplitClassifier,
    TrainConfig,
    build_model,
    dump_latents,
    load_checkpoint,
    save_checkpoint,
    train_original,
)
from .unlearn import BASELINES, BaselineConfig, UnlearnConfig, run_method

DATA_DIR_ENV = "ULAB_DATA_DIR"
ALL_METHODS = ("lau",) + tuple(BASELINES)


class ConfigError(ValueError):
    """Config file problem, reported with the dotted path of the bad field."""


def derive_seed(master: int, *parts: str) -> int:
    """Stable per-run seed: master shifted by a checksum of the run identity."""
    tag = "|".join(parts).encode("utf-8")
    return (int(master) + zlib.crc32(tag)) % 2 ** 32


def _build_dataclass(cls, obj, path: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object, got {type(obj).__name__}")
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(obj) - set(field_map))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown field")
    kwargs = {}
    for name, value in obj.items():
        f = field_map[name]
        if name == "attack" and isinstance(value, dict):
            value = _build_dataclass(AttackConfig, value, f"{path}.attack")
        elif isinstance(value, list) and isinstance(f.default, tuple):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _data_path(name: str) -> str:
    base = os.environ.get(DATA_DIR_ENV, "data")
    return name if os.path.isabs(name) else os.path.join(base, name)


def _build_datasets(obj, path: str) -> tuple[LabeledDataset, LabeledDataset]:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    kind = obj.get("kind")
    if kind == "blobs":
        allowed = {"kind", "num_classes", "per_class", "test_per_class",
                   "dim", "spread", "seed", "min_separation"}
        unknown = sorted(set(obj) - allowed)
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}: unknown field")
        try:
            return synth_blobs_train_test(
                num_classes=obj.get("num_classes", 5),
                per_class=obj.get("per_class", 1000),
                test_per_class=obj.get("test_per_class", 200),
                dim=obj.get("dim", 32),
                spread=obj.get("spread", 1.0),
                seed=obj.get("seed", 7),
                min_separation=obj.get("min_separation", 5.0),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if kind == "idx":
        needed = ("train_images", "train_labels", "test_images", "test_labels")
        for key in needed:
            if key not in obj:
                raise ConfigError(f"{path}.{key}: required for kind 'idx'")
        unknown = sorted(set(obj) - {"kind", *needed})
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}: unknown field")
        try:
            train = load_idx(_data_path(obj["train_images"]),
                             _data_path(obj["train_labels"]))
            test = load_idx(_data_path(obj["test_images"]),
                            _data_path(obj["test_labels"]))
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read data file: {exc}") from exc
        num_classes = max(train.num_classes, test.num_classes)
        train.num_classes = num_classes
        test.num_classes = num_classes
        return train, test
    raise ConfigError(f"{path}.kind: expected 'blobs' or 'idx', got {kind!r}")


@dataclasses.dataclass
class Experiment:
    """Everything a subcommand needs, decoded and validated from the config."""

    train_data: LabeledDataset
    test_data: LabeledDataset
    forget_classes: list[int]
    feature_widths: tuple[int, ...]
    head_widths: tuple[int, ...]
    train_cfg: TrainConfig
    unlearn_cfg: UnlearnConfig
    baseline_cfgs: dict[str, BaselineConfig]
    methods: list[str]
    seeds: list[int]
    data_ratio: float
    deterministic: bool
    ablate_axes: dict[str, list]
    raw: dict

    def train_split(self) -> ForgetSplit:
        return split_forget_retain(self.train_data, self.forget_classes)

    def test_split(self) -> ForgetSplit:
        return split_forget_retain(self.test_data, self.forget_classes)


_TOP_LEVEL = {"data", "forget_classes", "model", "train", "unlearn",
              "baseline", "baselines", "methods", "seeds", "data_ratio",
              "output", "ablate"}


def load_experiment(config_path: str) -> Experiment:
    try:
        with open(config_path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(raw) - _TOP_LEVEL)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")

    train_data, test_data = _build_datasets(raw.get("data", {"kind": "blobs"}),
                                            "data")

    forget_classes = raw.get("forget_classes", [0])
    if (not isinstance(forget_classes, list) or not forget_classes
            or not all(isinstance(c, int) for c in forget_classes)):
        raise ConfigError("forget_classes: expected a non-empty list of ints")

    model_obj = raw.get("model", {})
    if not isinstance(model_obj, dict):
        raise ConfigError("model: expected an object")
    unknown = sorted(set(model_obj) - {"feature_widths", "head_widths"})
    if unknown:
        raise ConfigError(f"model.{unknown[0]}: unknown field")
    feature_widths = tuple(model_obj.get("feature_widths", (256, 64)))
    head_widths = tuple(model_obj.get("head_widths", ()))

    train_cfg = _build_dataclass(TrainConfig, raw.get("train", {}), "train")
    unlearn_cfg = _build_dataclass(UnlearnConfig, raw.get("unlearn", {}),
                                   "unlearn")

    base_default = _build_dataclass(BaselineConfig, raw.get("baseline", {}),
                                    "baseline")
    baseline_cfgs = {name: base_default for name in BASELINES}
    overrides = raw.get("baselines", {})
    if not isinstance(overrides, dict):
        raise ConfigError("baselines: expected an object of per-method settings")
    for name, obj in overrides.items():
        if name not in BASELINES:
            raise ConfigError(
                f"baselines.{name}: unknown method, expected one of "
                f"{tuple(BASELINES)}")
        merged = dict(raw.get("baseline", {}))
        merged.update(obj if isinstance(obj, dict) else {})
        baseline_cfgs[name] = _build_dataclass(BaselineConfig, merged,
                                               f"baselines.{name}")

    methods = raw.get("methods", ["lau"])
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods: expected a non-empty list")
    for m in methods:
        if m not in ALL_METHODS:
            raise ConfigError(
                f"methods: unknown method {m!r}, expected one of {ALL_METHODS}")

    seeds = raw.get("seeds", [0])
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) for s in seeds)):
        raise ConfigError("seeds: expected a non-empty list of ints")

    data_ratio = raw.get("data_ratio", 1.0)
    if not isinstance(data_ratio, (int, float)) or not 0 < data_ratio <= 1:
        raise ConfigError(f"data_ratio: expected a number in (0, 1], got "
                          f"{data_ratio!r}")

    output = raw.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output: expected an object")
    unknown = sorted(set(output) - {"deterministic"})
    if unknown:
        raise ConfigError(f"output.{unknown[0]}: unknown field")
    deterministic = bool(output.get("deterministic", False))

    ablate_axes = raw.get("ablate", {
        "attack_mode": ["partial", "full"],
        "distill_mode": ["double_softmax", "raw_logits"],
    })
    if not isinstance(ablate_axes, dict) or not all(
            isinstance(v, list) and v for v in ablate_axes.values()):
        raise ConfigError("ablate: expected an object of non-empty value lists")

    return Experiment(
        train_data=train_data,
        test_data=test_data,
        forget_classes=list(forget_classes),
        feature_widths=feature_widths,
        head_widths=head_widths,
        train_cfg=train_cfg,
        unlearn_cfg=unlearn_cfg,
        baseline_cfgs=baseline_cfgs,
        methods=list(methods),
        seeds=list(seeds),
        data_ratio=float(data_ratio),
        deterministic=deterministic,
        ablate_axes={k: list(v) for k, v in ablate_axes.items()},
        raw=raw,
    )


def _set_dotted(cfg, dotted: str, value):
    """dataclasses.replace through one level of nesting ('attack.epsilon')."""
    if "." in dotted:
        head, rest = dotted.split(".", 1)
        inner = getattr(cfg, head)
        return dataclasses.replace(cfg, **{head: _set_dotted(inner, rest, value)})
    if isinstance(value, list):
        value = tuple(value)
    return dataclasses.replace(cfg, **{dotted: value})


def _train_one(exp: Experiment, master: int, sweep_seed: int) -> SplitClassifier:
    model = build_model(
        exp.train_data.input_dim, exp.train_data.num_classes,
        feature_widths=exp.feature_widths, head_widths=exp.head_widths,
        seed=derive_seed(master, "init", f"seed={sweep_seed}"))
    cfg = dataclasses.replace(
        exp.train_cfg, seed=derive_seed(master, "train", f"seed={sweep_seed}"))
    train_original(model, exp.train_data, cfg)
    return model


def _run_cell(exp: Experiment, master: int, method: str, sweep_seed: int,
              model: SplitClassifier, cell: dict | None = None) -> EvalReport:
    train_split = exp.train_split()
    run_seed = derive_seed(
        master, method, f"seed={sweep_seed}",
        *(f"{k}={v}" for k, v in sorted((cell or {}).items())))

    if method == "lau":
        cfg = dataclasses.replace(exp.unlearn_cfg, seed=run_seed)
        for key, value in (cell or {}).items():
            try:
                cfg = _set_dotted(cfg, key, value)
            except (TypeError, ValueError, AttributeError) as exc:
                raise ConfigError(f"ablate.{key}: {exc}") from exc
    else:
        cfg = dataclasses.replace(exp.baseline_cfgs[method], seed=run_seed)

    if exp.data_ratio < 1.0:
        # ratio trims whichever side the method actually trains on;
        # evaluation below always uses the full splits
        sub_seed = derive_seed(master, "subsample", f"seed={sweep_seed}")
        if method in ("retrain", "finetune"):
            train_split = ForgetSplit(
                forget=train_split.forget,
                retain=subsample(train_split.retain, exp.data_ratio, sub_seed),
                forget_classes=train_split.forget_classes)
        else:
            train_split = ForgetSplit(
                forget=subsample(train_split.forget, exp.data_ratio, sub_seed),
                retain=train_split.retain,
                forget_classes=train_split.forget_classes)

    result = run_method(method, model, train_split, cfg)
    config_snapshot = dataclasses.asdict(cfg)
    config_snapshot["data_ratio"] = exp.data_ratio
    if cell:
        config_snapshot["cell"] = dict(sorted(cell.items()))
    report = evaluate(
        result.model, result.method, sweep_seed,
        exp.train_split(), exp.test_split(),
        wall_seconds=result.wall_seconds, data_used=result.data_used,
        config=config_snapshot)
    if exp.deterministic:
        report.wall_seconds = 0.0
    return report


def _run_many(exp: Experiment, master: int, jobs: int,
              tasks: list[tuple[str, int, dict | None]]) -> tuple[list[EvalReport], list[dict]]:
    """Train originals per sweep seed, then run every (method, seed, cell)."""
    models = {}
    errors = []
    for s in sorted({s for _, s, _ in tasks}):
        try:
            models[s] = _train_one(exp, master, s)
        except Exception as exc:  # noqa: BLE001 - reported in the summary
            errors.append({"stage": "train", "seed": s, "error": str(exc)})
    reports = []

    def run(task):
        method, s, cell = task
        return _run_cell(exp, master, method, s, models[s], cell)

    runnable = [t for t in tasks if t[1] in models]
    if jobs > 1 and len(runnable) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run, t): t for t in runnable}
            for future, task in futures.items():
                method, s, cell = task
                try:
                    reports.append(future.result())
                except Exception as exc:  # noqa: BLE001
                    errors.append({"stage": method, "seed": s,
                                   "cell": cell, "error": str(exc)})
    else:
        for task in runnable:
            method, s, cell = task
            try:
                reports.append(run(task))
            except Exception as exc:  # noqa: BLE001
                errors.append({"stage": method, "seed": s, "cell": cell,
                               "error": str(exc)})

    def sort_key(r: EvalReport):
        return (r.method, r.seed,
                json.dumps(r.config.get("cell", {}), sort_keys=True))

    reports.sort(key=sort_key)
    return reports, errors


def _finish(reports: list[EvalReport], errors: list[dict], out: str,
            fmt: str) -> int:
    if reports:
        emit_report(reports, out, fmt=fmt)
        for r in reports:
            print(f"{r.method} seed={r.seed}: acc_Dr={r.acc_Dr:.2f} "
                  f"acc_Df={r.acc_Df:.2f} acc_Dtr={r.acc_Dtr:.2f} "
                  f"acc_Dtf={r.acc_Dtf:.2f} us={r.us:.4f}")
        print(f"wrote {out} ({len(reports)} rows)")
    if errors:
        print(json.dumps({"status": "error", "completed": len(reports),
                          "failed": errors}))
        return 1
    return 0


def _cmd_train(args) -> int:
    exp = load_experiment(args.config)
    model = _train_one(exp, args.seed, args.seed)
    out = args.out or "model.json"
    save_checkpoint(model, out)
    pred = model.predict(exp.train_data.features)
    acc = float((pred == exp.train_data.labels).mean() * 100.0)
    print(f"trained on {exp.train_data.name}: train acc {acc:.2f}")
    print(f"wrote {out}")
    return 0


def _load_or_train(exp: Experiment, args, sweep_seed: int) -> SplitClassifier:
    if args.checkpoint:
        return load_checkpoint(args.checkpoint)
    return _train_one(exp, args.seed, sweep_seed)


def _cmd_unlearn(args) -> int:
    exp = load_experiment(args.config)
    tasks = [(m, s, None) for m in exp.methods for s in exp.seeds]
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        models = {s: model for s in exp.seeds}
        reports, errors = [], []
        for method, s, cell in tasks:
            try:
                reports.append(_run_cell(exp, args.seed, method, s,
                                         models[s], cell))
            except Exception as exc:  # noqa: BLE001
                errors.append({"stage": method, "seed": s, "error": str(exc)})
        reports.sort(key=lambda r: (r.method, r.seed))
    else:
        reports, errors = _run_many(exp, args.seed, args.jobs, tasks)
    return _finish(reports, errors, args.out or f"report.{args.format}",
                   args.format)


def _cmd_ablate(args) -> int:
    exp = load_experiment(args.config)
    axes = sorted(exp.ablate_axes.items())
    names = [k for k, _ in axes]
    cells = [dict(zip(names, combo))
             for combo in itertools.product(*(v for _, v in axes))]
    tasks = [("lau", s, cell) for s in exp.seeds for cell in cells]
    reports, errors = _run_many(exp, args.seed, args.jobs, tasks)
    return _finish(reports, errors, args.out or f"ablate.{args.format}",
                   args.format)


def _cmd_eval(args) -> int:
    exp = load_experiment(args.config)
    model = _load_or_train(exp, args, exp.seeds[0])
    report = evaluate(model, "original", exp.seeds[0],
                      exp.train_split(), exp.test_split(),
                      wall_seconds=0.0, data_used=len(exp.train_data),
                      config={"checkpoint": args.checkpoint or ""})
    return _finish([report], [], args.out or f"report.{args.format}",
                   args.format)


def _cmd_dump_latents(args) -> int:
    exp = load_experiment(args.config)
    model = _load_or_train(exp, args, exp.seeds[0])
    out = args.out or "latents.csv"
    dump_latents(model, exp.train_data, out)
    print(f"wrote {out} ({len(exp.train_data)} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ulab",
        description="class-wise unlearning laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--checkpoint", default=None,
                       help="existing model checkpoint to start from")
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--seed", type=int, default=0,
                       help="master seed for derived per-run seeds")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker threads for independent runs")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="report file format")

    for name, fn in (("train", _cmd_train), ("unlearn", _cmd_unlearn),
                     ("ablate", _cmd_ablate), ("eval", _cmd_eval),
                     ("dump-latents", _cmd_dump_latents)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(json.dumps({"status": "error",
                          "failed": [{"stage": "config", "error": str(exc)}]}))
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"status": "error",
                          "failed": [{"stage": args.command,
                                      "error": str(exc)}]}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
