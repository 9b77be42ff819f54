"""Command line entry point: ``tae <command> [--config FILE] [--key value ...]``.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence, 4 I/O.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import config as config_mod
from .compute.rng import seeded_rng
from .config import ConfigError, RunConfig
from .corruption import NoiseSpec
from .data_io import (CorruptedDataset, DataFormatError, MissingSpec, SCurve, load_har, load_idx,
                      materialize_corruption, read_manifest, synth_2d, write_manifest, write_pgm_grid)
from .evaluation import (ClassifierConfig, OracleZeroMass, RefitDiverged, classification_accuracy,
                         count_modes, cross_entropy, diversity, mean_diversity, oracle_posterior_2d,
                         posterior_means, psnr, refit_elbo)
from .models import load_checkpoint, posterior_mean, save_checkpoint
from .objectives import NonFiniteTermError
from .training import TrainingDiverged, sweep, train

log = logging.getLogger("tae")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
METRIC_COLUMNS = ["metric", "dataset", "missing_ratio", "model", "seed", "value"]
IDX_NAMES = {"train": "train", "test": "t10k"}


# config plumbing

def _parse_value(text: str, annotation: str):
    optional = annotation.startswith("Optional[")
    inner = annotation[len("Optional["):-1] if optional else annotation
    if optional and text.strip().lower() in ("none", "null", ""):
        return None
    if inner == "bool":
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if inner == "int":
        return int(text)
    if inner == "float":
        return float(text)
    if inner == "list":
        text = text.strip()
        if text.startswith("["):
            return json.loads(text)
        return [json.loads(t) if _is_number(t) else t for t in text.split(",") if t]
    return text


def _is_number(t: str) -> bool:
    try:
        float(t)
        return True
    except ValueError:
        return False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tae", allow_abbrev=False,
                                     description="Posterior recovery from corrupted data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("corrupt", "materialise a corrupted dataset"),
                        ("train", "train a TAE, MVAE or MIWAE posterior"),
                        ("recover", "posterior means and draws for chosen observations"),
                        ("evaluate", "refit ELBO, PSNR, diversity, classification"),
                        ("sweep", "train and score a grid over C and lambda"),
                        ("oracle2d", "compare posterior draws with the exact 2-D posterior")]:
        p = sub.add_parser(name, help=help_, allow_abbrev=False)
        p.add_argument("--config", help="JSON file with RunConfig keys")
        p.add_argument("--preset", choices=sorted(config_mod.PRESETS))
        for f in fields(RunConfig):
            flags = ["--" + f.name.replace("_", "-")] + (["--metric"] if f.name == "metrics" else [])
            p.add_argument(*flags, dest=f.name, default=None,
                           metavar=f.type.replace("Optional[", "").rstrip("]").upper())
    return parser


def resolve_config(args) -> RunConfig:
    preset, file_values = (None, {})
    if args.config:
        preset, file_values = config_mod.load_file(args.config)
    if args.preset:
        preset = args.preset
    overrides = {}
    for f in fields(RunConfig):
        raw = getattr(args, f.name)
        if raw is None:
            continue
        try:
            overrides[f.name] = _parse_value(raw, f.type)
        except (ValueError, json.JSONDecodeError) as err:
            raise ConfigError(f"--{f.name.replace('_', '-')}: {err}") from err
    return config_mod.build(preset, file_values, overrides)


def _prepare_out(cfg: RunConfig, command: str) -> Path:
    out = cfg.output_dir() if command == "corrupt" else cfg.run_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / f"config.{command}.json").write_text(cfg.to_json())
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "inf" if math.isinf(v) and v > 0 else repr(float(v))
    return "" if v is None else str(v)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# data

def load_dataset(cfg: RunConfig):
    if cfg.dataset == "synth2d":
        return synth_2d(cfg.synth_n, cfg.synth_seed)
    if cfg.dataset in ("mnist", "fashion"):
        root = cfg.data_dir
        if not root:
            raise FileNotFoundError(f"{cfg.dataset}: set data_dir to the IDX directory")
        stem = IDX_NAMES.get(cfg.split, cfg.split)
        images = _find(Path(root), f"{stem}-images-idx3-ubyte")
        labels = _find(Path(root), f"{stem}-labels-idx1-ubyte", required=False)
        ds = load_idx(images, labels, name=cfg.dataset)
    else:
        root = cfg.data_dir
        if not root:
            raise FileNotFoundError("har: set data_dir to the directory holding X_<split>.txt")
        ds = load_har(root, cfg.split, cfg.har_scaling)
    if cfg.n_samples is not None:
        ds = ds.subset(np.arange(min(cfg.n_samples, len(ds))))
    return ds


def _find(root: Path, stem: str, required: bool = True):
    for cand in (root / stem, root / (stem + ".gz"), root / stem.replace("-idx", ".idx")):
        if cand.exists():
            return cand
    if required:
        raise FileNotFoundError(f"{stem}[.gz] not found in {root}")
    return None


def load_corrupted(cfg: RunConfig) -> CorruptedDataset:
    path = cfg.corrupted_path()
    if not path.exists():
        raise FileNotFoundError(f"corrupted dataset {path} not found; run `tae corrupt` first")
    mpath = path.with_name("manifest.json")
    manifest = read_manifest(mpath) if mpath.exists() else {}
    return CorruptedDataset.load(path, manifest)


def _missing_ratio(data: CorruptedDataset):
    ratio = data.manifest.get("observed_ratio")
    return "" if ratio is None else 1.0 - float(ratio)


# commands

def cmd_corrupt(cfg: RunConfig) -> int:
    _prepare_out(cfg, "corrupt")
    ds = load_dataset(cfg)
    missing = MissingSpec(cfg.observed_ratio, tuple(cfg.window) if cfg.window else None)
    data = materialize_corruption(ds, missing, NoiseSpec(sigma=cfg.sigma), cfg.corruption_seed)
    path = cfg.corrupted_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    data.save(path)
    write_manifest(data.manifest, path.with_name("manifest.json"))
    print(f"{len(data)} samples, d={data.d}, observed fraction {data.alpha.mean():.4f}, "
          f"sigma {cfg.sigma} -> {path}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    out = _prepare_out(cfg, "train")
    data = load_corrupted(cfg)
    tcfg = cfg.train_config()
    arch = cfg.arch(data.d)
    try:
        model, trace = train(tcfg, data, arch=arch, out_dir=out)
    except TrainingDiverged as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    save_checkpoint(model, cfg.checkpoint_path())
    trace.to_csv(out / "train_log.csv")
    if trace.condition:
        print(f"final objective {trace.objective[-1]:.4f}; running R-Q {trace.running_condition():.4f}")
    print(f"checkpoint -> {cfg.checkpoint_path()}")
    return EXIT_OK


def cmd_recover(cfg: RunConfig) -> int:
    out = _prepare_out(cfg, "recover")
    data = load_corrupted(cfg)
    model = _load_model(cfg, data.d)
    rng = seeded_rng(cfg.seed)
    rows, coords = [], []
    for i in cfg.observations:
        if not 0 <= i < len(data):
            raise ConfigError(f"observation {i} out of range (dataset has {len(data)})")
        y, a = data.y[i], data.alpha[i]
        mean = posterior_mean(model, y, a, 100, rng)
        draws = model.draw(y, a, cfg.n_draws, rng)
        tiles = [mean] + list(draws)
        if data.shape is not None and data.shape[0] == data.shape[1]:
            cols = min(len(tiles), 10)
            write_pgm_grid(tiles, -(-len(tiles) // cols), cols, out / f"recover_{i:05d}.pgm")
        else:
            coords.append((i, "mean", 0, *mean))
            coords.extend((i, "draw", j, *x) for j, x in enumerate(draws))
        score = psnr(data.x[i], mean) if data.x is not None else None
        div = diversity(draws) if cfg.n_draws >= 2 else None
        rows.append((i, score, div))
    if coords:
        _write_csv(out / "recover_draws.csv", ["obs", "kind", "index"] + [f"x{j + 1}" for j in range(data.d)],
                   coords)
    _write_csv(out / "recover_metrics.csv", ["obs", "psnr", "diversity"], rows)
    print(f"{len(rows)} observations -> {out}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    out = _prepare_out(cfg, "evaluate")
    data = load_corrupted(cfg)
    if data.x is None:
        raise FileNotFoundError("evaluation needs the clean ground truth, which this dataset lacks")
    model = _load_model(cfg, data.d)
    ev = data.subset(np.arange(min(cfg.n_eval, len(data))))
    base = [data.name, _missing_ratio(data), model.kind, cfg.seed]
    rows = []
    for metric in cfg.metrics:
        rng = seeded_rng(cfg.seed)
        if metric == "refit_elbo":
            value = refit_elbo(model, ev.x, ev.y, ev.alpha, cfg.refit_config(), rng)
        elif metric == "psnr":
            means = posterior_means(model, ev.y, ev.alpha, 100, rng)
            value = float(np.mean([psnr(ev.x[i], means[i]) for i in range(len(ev))]))
        else:
            value = mean_diversity(model, ev.y, ev.alpha, max(cfg.n_draws, 2), rng)
        rows.append([metric, *base, value])
    if cfg.classify:
        if data.labels is None:
            raise FileNotFoundError("classification needs labels")
        acc, _ = classification_accuracy(model, data.y, data.alpha, data.labels, cfg.n_labelled,
                                         cfg.class_draws, ClassifierConfig(cfg.classifier_iterations),
                                         cfg.seed)
        rows.append(["classification_accuracy", *base, acc])
    _write_csv(out / "metrics.csv", METRIC_COLUMNS, rows)
    for r in rows:
        print(f"{r[0]}: {_fmt(r[-1])}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    out = _prepare_out(cfg, "sweep")
    data = load_corrupted(cfg)
    if data.x is None:
        raise FileNotFoundError("the sweep scores cells against clean ground truth, which is missing")
    ev = data.subset(np.arange(min(cfg.n_eval, len(data))))
    rows = sweep(cfg.train_config(), cfg.sweep_C, cfg.sweep_lambda, data, (ev.x, ev.y, ev.alpha),
                 cfg.refit_config(), arch=cfg.arch(data.d), csv_path=out / "sweep.csv")
    for r in rows:
        print(f"C={r['C']} lambda={r['lambda']}: {r['status']} {_fmt(r.get('refit_elbo'))}")
    return EXIT_OK


def cmd_oracle2d(cfg: RunConfig) -> int:
    out = _prepare_out(cfg, "oracle2d")
    data = load_corrupted(cfg)
    if data.d != 2:
        raise ConfigError("oracle2d needs the 2-D synthetic dataset")
    model = _load_model(cfg, 2)
    sigma = float(data.manifest.get("sigma", cfg.sigma))
    grid_spec = cfg.grid_spec()
    rng = seeded_rng(cfg.seed)
    summary, cells, draws_rows = [], [], []
    baseline = math.log(cfg.ce_bins ** 2)
    for i in range(min(cfg.oracle_obs, len(data))):
        y, a = data.y[i], data.alpha[i]
        observed = "".join(str(int(v)) for v in a)
        try:
            grid = oracle_posterior_2d(SCurve(), y, a, sigma, grid_spec)
        except OracleZeroMass:
            summary.append((i, observed, "zero_mass", None, None, None, baseline))
            continue
        draws = model.draw(y, a, cfg.oracle_draws, rng)
        modes = count_modes(grid)
        summary.append((i, observed, "ok", modes, cross_entropy(grid, draws, cfg.ce_bins),
                        diversity(draws), baseline))
        nz = np.argwhere(grid.mass >= 1e-9)
        cells.extend((i, int(r), int(c), grid.mass[r, c]) for r, c in nz)
        draws_rows.extend((i, j, *x) for j, x in enumerate(draws))
    _write_csv(out / "oracle_grid.csv", ["obs", "i", "j", "mass"], cells)
    _write_csv(out / "oracle_draws.csv", ["obs", "draw", "x1", "x2"], draws_rows)
    _write_csv(out / "oracle_summary.csv",
               ["obs", "observed", "status", "modes", "cross_entropy", "diversity", "uniform_baseline"], summary)
    ok = [s for s in summary if s[2] == "ok"]
    if ok:
        print(f"{len(ok)} observations; mean cross-entropy {np.mean([s[4] for s in ok]):.4f} "
              f"(uniform baseline {baseline:.4f})")
    return EXIT_OK


def _load_model(cfg: RunConfig, d: int):
    path = cfg.checkpoint_path()
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found")
    model = load_checkpoint(path)
    if model.arch.d != d:
        raise ConfigError(f"checkpoint expects d={model.arch.d}, data has d={d}")
    return model


COMMANDS = {"corrupt": cmd_corrupt, "train": cmd_train, "recover": cmd_recover,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep, "oracle2d": cmd_oracle2d}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, RefitDiverged, NonFiniteTermError, FloatingPointError) as err:
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, DataFormatError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
