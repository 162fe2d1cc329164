"""Command-line front end: synth, train, eval, ablate, params, burst-sweep.

Exit status: 0 success, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import checkpoint, dataset, evaluation, modem, reports, training, zoo
from .dataset import FormatError

logger = logging.getLogger("amclab")

ABLATION_MODELS = zoo.GRID_NAMES + ["xvector-base", "resnet"]


def _ints(text: str) -> List[int]:
    return [int(v) for v in str(text).replace(",", " ").split()]


def _strs(text: str) -> List[str]:
    return [v for v in str(text).replace(",", " ").split()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("1", "true", "yes", "on"):
        return True
    if str(text).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# every accepted configuration key with its parser and default
KEYS = {
    "out": (str, os.environ.get("AMCLAB_OUT", "runs")),
    "seed": (int, 0),
    "model": (str, "1110"),
    "models": (_strs, ABLATION_MODELS),
    "dataset": (str, None),
    "test": (str, None),
    "checkpoint": (str, None),
    "test_fraction": (float, 0.2),
    "schemes": (_strs, list(modem.DEFAULT_SCHEMES)),
    "snr_grid": (_ints, list(range(-20, 31, 2))),
    "frames_per_class_per_snr": (int, 10),
    "frame_len": (int, 1024),
    "lengths": (_ints, list(evaluation.BURST_LENGTHS)),
    "format": (str, "csv"),
    "n_classes": (int, zoo.N_CLASSES),
    **{f.name: (type(f.default), f.default) for f in fields(training.TrainConfig)},
}


class UsageError(Exception):
    pass


def parse_config_file(path: str) -> Dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    text = p.read_text()
    if p.suffix == ".json":
        data = json.loads(text)
        return data.get("config", data)
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def resolve_config(file_values: Dict, overrides: Dict) -> Dict:
    raw = dict(file_values)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise UsageError(f"unknown configuration key(s): {', '.join(unknown)}")
    cfg = {}
    for key, (parse, default) in KEYS.items():
        if key not in raw or raw[key] is None:
            cfg[key] = default
            continue
        value = raw[key]
        try:
            if isinstance(value, list) and parse in (_ints, _strs):
                cfg[key] = [int(v) for v in value] if parse is _ints else [str(v) for v in value]
            elif parse is bool:
                cfg[key] = _bool(value)
            else:
                cfg[key] = parse(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {value!r} ({exc})") from None
    return cfg


def train_config(cfg: Dict) -> training.TrainConfig:
    return training.TrainConfig(**{f.name: cfg[f.name] for f in fields(training.TrainConfig)})


def write_run_json(out: Path, command: str, cfg: Dict, extra: Optional[Dict] = None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "config": cfg, **(extra or {})}
    path = out / "run.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def _need_file(cfg: Dict, key: str) -> Path:
    value = cfg.get(key)
    if not value:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    path = Path(value)
    if not path.exists():
        raise UsageError(f"{key} file not found: {value}")
    return path


def load_splits(cfg: Dict):
    """(train, test) from ``dataset`` and optional ``test``, else a stratified split."""
    full = dataset.read_dataset(_need_file(cfg, "dataset"))
    if cfg.get("test"):
        return full, dataset.read_dataset(_need_file(cfg, "test"))
    return dataset.stratified_split(full, dataset.SplitSpec(cfg["test_fraction"], cfg["seed"]))


def _model_spec(name: str, cfg: Dict) -> zoo.ModelSpec:
    try:
        return zoo.preset(name, cfg["n_classes"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def emit_evaluation(ev: evaluation.Evaluation, params: int, out: Path, fmt: str) -> None:
    ext = "." + fmt
    reports.emit_report(reports.snr_rows(ev), out / f"snr_accuracy{ext}", "snr_accuracy")
    reports.emit_report(reports.confusion_rows(ev), out / f"confusion{ext}", "confusion")
    reports.emit_report(reports.topk_rows(ev), out / f"topk{ext}", "topk")
    reports.emit_report([reports.summary_row(ev, params)], out / f"ablation_summary{ext}", "ablation_summary")


# subcommands -----------------------------------------------------------------

def cmd_synth(cfg: Dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    target = Path(cfg["dataset"]) if cfg["dataset"] else out / "dataset.amcd"
    chan = modem.ChannelConfig(cfg["snr_grid"], cfg["frames_per_class_per_snr"], cfg["frame_len"], cfg["seed"])
    try:
        ds = dataset.synth_dataset(cfg["schemes"], chan, target)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_run_json(out, "synth", cfg, {"dataset_path": str(target)})
    print(f"wrote {len(ds)} frames to {target}")
    return 0


def _train_one(name: str, cfg: Dict, train_set, out: Path):
    model = zoo.build_model(_model_spec(name, cfg), seed=cfg["seed"])
    result = training.train(model, train_set, train_config(cfg), out_dir=out)
    return model, result


def cmd_train(cfg: Dict) -> int:
    out = Path(cfg["out"])
    train_set, test_set = load_splits(cfg)
    model, result = _train_one(cfg["model"], cfg, train_set, out)
    ev = evaluation.evaluate(model, test_set, cfg["model"])
    write_run_json(out, "train", cfg, {
        "checkpoint": str(result.checkpoint),
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "test_accuracy": ev.snr_table().average,
    })
    print(f"{cfg['model']}: best epoch {result.best_epoch}, test accuracy {ev.snr_table().average:.4f}")
    return 0


def _load_model(cfg: Dict) -> zoo.Model:
    ckpt = _need_file(cfg, "checkpoint")
    model = zoo.build_model(_model_spec(cfg["model"], cfg), seed=cfg["seed"])
    try:
        checkpoint.load_into(model, ckpt)
    except (FormatError, ValueError) as exc:
        raise UsageError(f"checkpoint {ckpt} does not fit model {cfg['model']}: {exc}") from None
    return model


def cmd_eval(cfg: Dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    model = _load_model(cfg)
    _, test_set = load_splits(cfg)
    ev = evaluation.evaluate(model, test_set, cfg["model"])
    emit_evaluation(ev, model.count_params(), out, cfg["format"])
    write_run_json(out, "eval", cfg)
    print(f"{cfg['model']}: accuracy {ev.snr_table().average:.4f} on {len(test_set)} frames")
    return 0


def cmd_ablate(cfg: Dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    train_set, test_set = load_splits(cfg)
    fmt = "." + cfg["format"]
    snr_rows, summary, evals = [], [], {}
    for name in cfg["models"]:
        _model_spec(name, cfg)
        model, _ = _train_one(name, cfg, train_set, out / name)
        ev = evaluation.evaluate(model, test_set, name)
        evals[name] = ev
        emit_evaluation(ev, model.count_params(), out / name, cfg["format"])
        snr_rows += reports.snr_rows(ev)
        summary.append(reports.summary_row(ev, model.count_params()))
        logger.info("ablate %s: avg %.4f max %.4f", name, summary[-1]["avg_acc"], summary[-1]["max_acc"])
    reports.emit_report(snr_rows, out / f"snr_accuracy{fmt}", "snr_accuracy")
    reports.emit_report(summary, out / f"ablation_summary{fmt}", "ablation_summary")
    if "0000" in evals:
        ref = evals["0000"].correct()
        tests = {}
        for name, ev in evals.items():
            r = evaluation.mcnemar_test(ref, ev.correct())
            tests[name] = {"n01": r.n01, "n10": r.n10, "statistic": r.statistic, "p_value": r.p_value}
        (out / "mcnemar_vs_0000.json").write_text(json.dumps(tests, indent=2))
    write_run_json(out, "ablate", cfg)
    print(f"ablation of {len(summary)} models written to {out}")
    return 0


def cmd_params(cfg: Dict, explicit_model: bool) -> int:
    names = [cfg["model"]] if explicit_model else list(zoo.PRESETS)
    for name in names:
        count = zoo.count_params(_model_spec(name, cfg))
        print(count if explicit_model else f"{name}\t{count}")
    return 0


def cmd_burst(cfg: Dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    model = _load_model(cfg)
    if model.spec.kind != "xvector":
        raise UsageError("burst-sweep needs an X-Vector family model")
    _, test_set = load_splits(cfg)
    lengths = [n for n in cfg["lengths"] if n <= test_set.frame_len]
    results = evaluation.burst_sweep(model, test_set, lengths, seed=cfg["seed"])
    reports.emit_report(reports.burst_rows(cfg["model"], results), out / f"burst_sweep.{cfg['format']}", "burst_sweep")
    write_run_json(out, "burst-sweep", cfg)
    for res in results:
        print(f"n={res.length}\taccuracy {res.table.average:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amclab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{synth,train,eval,ablate,params,burst-sweep}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file (or a previous run.json)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    for key in ("out", "seed", "model", "dataset", "test", "checkpoint", "format", "max_epochs"):
        common.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    for name in ("synth", "train", "eval", "ablate", "params", "burst-sweep"):
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s")
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        overrides = {k: getattr(args, k) for k in ("out", "seed", "model", "dataset", "test", "checkpoint", "format", "max_epochs")}
        for item in args.set:
            if "=" not in item:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        cfg = resolve_config(file_values, overrides)
        if args.command == "params":
            return cmd_params(cfg, args.model is not None or "model" in file_values)
        handler = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "burst-sweep": cmd_burst}
        return handler[args.command](cfg)
    except UsageError as exc:
        print(f"amclab: error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"amclab: error: {exc}", file=sys.stderr)
        return 2
    except training.TrainingAborted as exc:
        print(f"amclab: training aborted: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        logger.exception("run failed")
        print(f"amclab: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
