"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort.
Data goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .imaging import ImageFormatError, read_image_dir, read_pgm, write_pgm
from .model import ArchSpec, ModelFormatError, load_model, save_model
from .nn import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# name -> (type, default); None default means "required" where a command needs it
TRAIN_KEYS = {
    "corpus": (str, None),
    "block_size": (int, 16),
    "rate": (float, 0.25),
    "layers": (int, 2),
    "redundancy": (int, 8),
    "epochs": (int, 100),
    "batch": (int, 16),
    "lr": (float, 0.005),
    "patches": (int, 5_000_000),
    "seed": (int, 42),
    "checkpoint_every": (int, 0),
    "checkpoint": (str, None),
    "strict_linear": (bool, False),
}

COMMAND_KEYS = {
    "train": {**TRAIN_KEYS, "out": (str, None), "history": (str, None)},
    "sense": {"model": (str, None), "image": (str, None), "out": (str, None)},
    "reconstruct": {"model": (str, None), "measurements": (str, None), "out": (str, None)},
    "evaluate": {"model": (str, None), "images": (str, None), "report": (str, None)},
    "sweep": {
        **TRAIN_KEYS,
        "images": (str, None),
        "axis": (str, None),
        "values": (str, None),
        "report": (str, None),
    },
    "time": {"model": (str, None), "image": (str, None), "reps": (int, 5)},
}

HELP = {
    "train": "train a model on random patches from a PGM corpus",
    "sense": "compute block measurements of a PGM image",
    "reconstruct": "reconstruct a PGM image from a measurement file",
    "evaluate": "PSNR/SSIM of sense+reconstruct over a directory of PGM images",
    "sweep": "train and evaluate one model per value of a hyperparameter",
    "time": "median sense+reconstruct time for one image",
}


def _to_bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` comments and blank lines ignored."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(command: str, flags: dict, config_file=None) -> dict:
    """Merge defaults < config file < flags, converting and checking keys."""
    keys = COMMAND_KEYS[command]
    merged = {k: default for k, (_, default) in keys.items()}
    if config_file is not None:
        file_vals = read_config_file(config_file)
        unknown = sorted(set(file_vals) - set(keys))
        if unknown:
            raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        merged.update(file_vals)
    merged.update({k: v for k, v in flags.items() if v is not None})
    for k, (typ, _) in keys.items():
        if merged[k] is None:
            continue
        try:
            merged[k] = _to_bool(merged[k]) if typ is bool else typ(merged[k])
        except ValueError as exc:
            raise ConfigError(f"invalid value for {k}: {merged[k]!r} ({exc})") from exc
    return merged


def _need(cfg, *names):
    missing = [n for n in names if cfg.get(n) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _train_config(cfg) -> pipeline.TrainConfig:
    try:
        spec = ArchSpec(cfg["block_size"], cfg["rate"], cfg["layers"], cfg["redundancy"])
        tc = pipeline.TrainConfig(
            spec=spec,
            learning_rate=cfg["lr"],
            batch_size=cfg["batch"],
            epochs=cfg["epochs"],
            patch_count=cfg["patches"],
            corpus=cfg["corpus"],
            seed=cfg["seed"],
            checkpoint_every=cfg["checkpoint_every"],
            checkpoint_path=cfg["checkpoint"],
            strict_linear=cfg["strict_linear"],
        )
        tc.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not Path(cfg["corpus"]).is_dir():
        raise DataError(f"corpus directory {cfg['corpus']} does not exist")
    return tc


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError as exc:
        raise DataError(f"model file not found: {path}") from exc
    except ModelFormatError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _read_image(path):
    try:
        return read_pgm(path)
    except FileNotFoundError as exc:
        raise DataError(f"image not found: {path}") from exc
    except ImageFormatError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _image_dir(path):
    if not Path(path).is_dir():
        raise DataError(f"image directory {path} does not exist")
    try:
        images = read_image_dir(path)
    except ImageFormatError as exc:
        raise DataError(str(exc)) from exc
    if not images:
        raise DataError(f"no .pgm images in {path}")
    return images


def _write_report(report, path):
    text = report.to_json() if str(path).endswith(".json") else report.to_csv()
    Path(path).write_text(text)


def cmd_train(cfg):
    _need(cfg, "corpus", "out")
    tc = _train_config(cfg)
    model, history = pipeline.train(tc)
    save_model(model, cfg["out"])
    history_path = cfg["history"] or cfg["out"] + ".history.json"
    Path(history_path).write_text(history.to_json())
    print(f"epochs={len(history.losses)} final_loss={history.losses[-1]!r} sha256={history.checksum}")
    return EXIT_OK


def cmd_sense(cfg):
    _need(cfg, "model", "image", "out")
    model = _load_model(cfg["model"])
    ms = pipeline.sense(model, _read_image(cfg["image"]))
    pipeline.save_measurements(ms, cfg["out"])
    print(f"blocks={len(ms.values)} m={ms.m} values={ms.values.size}")
    return EXIT_OK


def cmd_reconstruct(cfg):
    _need(cfg, "model", "measurements", "out")
    model = _load_model(cfg["model"])
    try:
        ms = pipeline.load_measurements(cfg["measurements"])
    except FileNotFoundError as exc:
        raise DataError(f"measurement file not found: {cfg['measurements']}") from exc
    except pipeline.MeasurementFormatError as exc:
        raise DataError(f"{cfg['measurements']}: {exc}") from exc
    try:
        image = pipeline.reconstruct(model, ms)
    except pipeline.SpecMismatchError as exc:
        raise ConfigError(f"spec mismatch: {exc}") from exc
    write_pgm(image, cfg["out"])
    print(f"width={image.width} height={image.height}")
    return EXIT_OK


def cmd_evaluate(cfg):
    _need(cfg, "model", "images")
    model = _load_model(cfg["model"])
    report = pipeline.evaluate(model, _image_dir(cfg["images"]))
    sys.stdout.write(report.to_csv())
    if cfg["report"]:
        _write_report(report, cfg["report"])
    return EXIT_OK


def cmd_sweep(cfg):
    _need(cfg, "corpus", "images", "axis", "values")
    if cfg["axis"] not in pipeline.SWEEP_AXES:
        raise ConfigError(f"--axis must be one of {', '.join(sorted(pipeline.SWEEP_AXES))}")
    values = [v.strip() for v in cfg["values"].split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    base = _train_config(cfg)
    images = _image_dir(cfg["images"])
    print(f"{cfg['axis']},mean_psnr_db,mean_ssim", flush=True)

    def emit(row):
        print(f"{row.value},{row.mean_psnr:.4f},{row.mean_ssim:.5f}", flush=True)

    try:
        rows = pipeline.sweep(base, cfg["axis"], values, images, on_row=emit)
    except pipeline.SweepError as exc:
        if cfg["report"]:
            Path(cfg["report"]).write_text(pipeline.sweep_table(cfg["axis"], exc.rows))
        cause = exc.__cause__
        if isinstance(cause, (NumericalError, ImageFormatError, FileNotFoundError)):
            raise cause
        raise ConfigError(str(exc)) from cause
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["report"]:
        Path(cfg["report"]).write_text(pipeline.sweep_table(cfg["axis"], rows))
    return EXIT_OK


def cmd_time(cfg):
    _need(cfg, "model", "image")
    if cfg["reps"] < 1:
        raise ConfigError("--reps must be >= 1")
    model = _load_model(cfg["model"])
    image = _read_image(cfg["image"])
    runs = []
    median = pipeline.time_reconstruction(model, image, cfg["reps"], timings=runs)
    print(f"median_seconds={median:.6f} reps={len(runs)} scope=sense+reconstruct,no-file-io")
    print("runs=" + ",".join(f"{t:.6f}" for t in runs))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "sense": cmd_sense,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "time": cmd_time,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcsnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="flat key=value file; flags override it")
        for key, (typ, default) in keys.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_const", const=True, default=None)
            else:
                # parsed as text and converted in resolve() so config-file and
                # flag values go through the same validation
                p.add_argument(flag, default=None, metavar=typ.__name__.upper(),
                               help=None if default is None else f"default {default}")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = resolve(args.command, flags, args.config)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"bcsnet {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"bcsnet {args.command}: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ImageFormatError, ModelFormatError, FileNotFoundError) as exc:
        print(f"bcsnet {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
