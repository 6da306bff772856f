"""Command-line entry point.

Subcommands: featurize, train, eval, ensemble, sweep, synth.  All take
``--config PATH`` (JSON), optional ``--seed``, ``--threads``, and repeated
``--set key.path=value`` overrides.  Exit codes: 0 success, 1 bad input
data, 2 bad configuration, 3 runtime failure.

Primary outputs (datasets, features, checkpoints, CSV reports) are
byte-deterministic for a fixed config; wall-clock timestamps only ever go
into the ``*.meta.json`` sidecars.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint, config, evaluate, ingest, kernels, pipeline, train
from .errors import ConfigError, ParseError, StructuralError, SwpsError
from .types import SplitSpec


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swps-lru", description="Sliding-window signature sequence classifier.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON config file (defaults apply when omitted)")
        sp.add_argument("--seed", type=int, default=None, help="override the run seed")
        sp.add_argument("--threads", type=int, default=None, help="cap compiled-kernel threads")
        sp.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="override one config leaf (repeatable)")
        return sp

    common(sub.add_parser("synth", help="generate the synthetic dataset and write it out"))
    common(sub.add_parser("featurize", help="write per-sample window features for both splits"))
    common(sub.add_parser("train", help="train a model; writes checkpoints and history"))
    ev = common(sub.add_parser("eval", help="score a checkpoint on the rotation-grid test set"))
    ev.add_argument("--ckpt", default=None, help="checkpoint path (default: OUTPUT_DIR/final.ckpt)")
    en = common(sub.add_parser("ensemble", help="score soft/hard voting over several checkpoints"))
    en.add_argument("--ckpt", action="append", default=[], help="member checkpoint (repeat for each)")
    sw = common(sub.add_parser("sweep", help="train and score a grid of configurations"))
    sw.add_argument("--experiment", choices=("window", "rotation"), default="window")
    sw.add_argument("--w-list", default="3,5,7", help="comma list of window widths")
    sw.add_argument("--m-list", default="1,2", help="comma list of truncation degrees")
    sw.add_argument("--hanging-list", default="on,off", help="comma list from {on,off}")
    sw.add_argument("--ranges", default="0,30,90,180", help="comma list of rotation ranges, degrees")
    sw.add_argument("--seeds", default="0", help="comma list of seeds per cell")
    return p


def _load_run_config(args) -> config.RunConfig:
    overrides = list(args.sets)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return config.load_config(args.config, overrides)


def _load_samples(cfg: config.RunConfig):
    d = cfg.data
    if d.path is None:
        return ingest.synth_generate(d.n_classes, d.n_per_class, noise=d.noise, seed=cfg.seed)
    if d.format == "binary":
        return ingest.parse_stroke_binary(Path(d.path).read_bytes())
    return ingest.parse_text_dataset(Path(d.path).read_text())


def _splits(cfg: config.RunConfig):
    samples = _load_samples(cfg)
    return ingest.split_dataset(samples, SplitSpec(cfg.data.train_fraction, cfg.seed))


def _out_dir(cfg: config.RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sidecar(out: Path, name: str, command: str, extra=None):
    meta = {"command": command, "created_unix": time.time()}
    if extra:
        meta.update(extra)
    with open(out / f"{name}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _grid(cfg: config.RunConfig) -> evaluate.RotationGrid:
    return evaluate.RotationGrid(count=cfg.grid.count, step=cfg.grid.step_radians)


def _cmd_synth(cfg: config.RunConfig) -> int:
    out = _out_dir(cfg)
    ds = ingest.synth_generate(cfg.data.n_classes, cfg.data.n_per_class, noise=cfg.data.noise, seed=cfg.seed)
    (out / "dataset.txt").write_text(ingest.serialize_text_dataset(ds))
    (out / "dataset.bin").write_bytes(ingest.write_stroke_binary(ds.samples))
    _sidecar(out, "dataset", "synth", {"n_samples": len(ds)})
    print(f"wrote {len(ds)} samples to {out / 'dataset.txt'} and {out / 'dataset.bin'}")
    return 0


def _cmd_featurize(cfg: config.RunConfig) -> int:
    out = _out_dir(cfg)
    train_set, test_set = _splits(cfg)
    for name, ds in (("train", train_set), ("test", test_set)):
        windows = []
        for s in ds.samples:
            w, _ = pipeline.sample_windows(s, cfg)
            windows.append(w)
        checkpoint.write_features(out / f"features_{name}.bin", out / f"features_{name}.csv",
                                  windows, [s.tag for s in ds.samples])
        print(f"wrote {len(windows)} {name} samples -> {out / f'features_{name}.bin'}")
    _sidecar(out, "features", "featurize")
    return 0


def _cmd_train(cfg: config.RunConfig) -> int:
    out = _out_dir(cfg)
    train_set, test_set = _splits(cfg)
    model = train.build_model_for(cfg, train_set.n_classes)
    model, history = train.train_loop(model, train_set, cfg, val_set=test_set, out_dir=str(out))
    train.history_to_csv(history, out / "history.csv")
    config.save_config(cfg, out / "config.json")
    _sidecar(out, "train", "train", {"epochs_run": len(history.rows)})
    last = history.final()
    print(f"epochs={len(history.rows)} loss={last.loss!r} train_acc={last.train_acc!r} val_acc={last.val_acc!r}")
    print(f"checkpoints in {out}")
    return 0


def _cmd_eval(cfg: config.RunConfig, ckpt_path) -> int:
    out = _out_dir(cfg)
    path = Path(ckpt_path) if ckpt_path else out / "final.ckpt"
    model, meta = checkpoint.load_model(path)
    _, test_set = _splits(cfg)
    expanded = evaluate.rotation_grid_expand(test_set, _grid(cfg))
    acc = evaluate.accuracy(model, expanded, cfg)
    report = evaluate.ExperimentReport(
        rows=[evaluate.ReportRow("grid", acc, len(expanded), (cfg.seed,))]
    )
    evaluate.report_to_csv(report, out / "eval.csv")
    conf = evaluate.confusion(model, expanded, cfg)
    np.savetxt(out / "confusion.csv", conf, fmt="%d", delimiter=",")
    _sidecar(out, "eval", "eval", {"checkpoint": str(path)})
    print(f"grid accuracy {acc!r} over {len(expanded)} rotated samples ({path})")
    return 0


def _cmd_ensemble(cfg: config.RunConfig, ckpt_paths) -> int:
    if not ckpt_paths:
        raise ConfigError(["ensemble: at least one --ckpt is required"])
    out = _out_dir(cfg)
    models = [checkpoint.load_model(p)[0] for p in ckpt_paths]
    _, test_set = _splits(cfg)
    expanded = evaluate.rotation_grid_expand(test_set, _grid(cfg))
    report = evaluate.ExperimentReport()
    for mode in ("soft", "hard"):
        acc = evaluate.ensemble_accuracy(models, expanded, cfg, mode=mode)
        report.rows.append(evaluate.ReportRow(f"vote={mode}", acc, len(expanded), (cfg.seed,)))
        print(f"{mode} vote accuracy {acc!r} over {len(expanded)} rotated samples")
    evaluate.report_to_csv(report, out / "ensemble.csv")
    _sidecar(out, "ensemble", "ensemble", {"members": [str(p) for p in ckpt_paths]})
    return 0


def _ints(text: str):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _cmd_sweep(cfg: config.RunConfig, args) -> int:
    out = _out_dir(cfg)
    train_set, test_set = _splits(cfg)
    grid = _grid(cfg)
    seeds = _ints(args.seeds)
    if args.experiment == "window":
        hanging = tuple(h.strip() == "on" for h in args.hanging_list.split(",") if h.strip())
        report = evaluate.sweep_window_degree(
            cfg, train_set, test_set,
            w_list=_ints(args.w_list), m_list=_ints(args.m_list),
            hanging_list=hanging, grid=grid, seeds=seeds,
        )
    else:
        ranges = tuple(math.radians(float(v)) for v in args.ranges.split(",") if v.strip())
        report = evaluate.rotation_range_experiment(cfg, train_set, test_set, ranges=ranges, grid=grid, seeds=seeds)
    evaluate.report_to_csv(report, out / "sweep.csv")
    for key, msg in report.errors:
        print(f"cell {key} failed: {msg}", file=sys.stderr)
    for row in report.sorted_rows():
        print(f"{row.config_key} accuracy={row.accuracy!r} n={row.n_samples}")
    _sidecar(out, "sweep", "sweep", {"experiment": args.experiment})
    if not report.rows and report.errors:
        return 3
    return 0


def _run(argv) -> int:
    args = _parser().parse_args(argv)
    if args.threads is not None:
        kernels.set_threads(args.threads)
    cfg = _load_run_config(args)
    if args.command == "synth":
        return _cmd_synth(cfg)
    if args.command == "featurize":
        return _cmd_featurize(cfg)
    if args.command == "train":
        return _cmd_train(cfg)
    if args.command == "eval":
        return _cmd_eval(cfg, args.ckpt)
    if args.command == "ensemble":
        return _cmd_ensemble(cfg, args.ckpt)
    return _cmd_sweep(cfg, args)


def main(argv=None) -> int:
    try:
        return _run(argv)
    except (ParseError, StructuralError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SwpsError, ValueError, RuntimeError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
