"""``modhdr`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchConfig, aggregate, markdown_table, run_benchmark, TABLE_COLUMNS
from .features import FEATURE_ROWS, FeatureConfig, Normalization, build_features
from .io import PfmError, read_pfm, read_pfm_array, write_pfm, write_png_preview
from .learn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint, write_loss_csv
from .learn.objective import TrainConfig, make_samples, restore
from .learn.train import TrainingDiverged, train
from .metrics import MetricReport, evaluate, reinhard_tonemap
from .scenes import DatasetManifest, ItohEnforcementError, SceneKind, SceneSpec, build_dataset
from .sensor import HdrImage, ModuloImage, scale, wrap, wrap_array
from .unwrap import Gauge, unwrap_exact

log = logging.getLogger("modhdr")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
EVAL_COLUMNS = ("method", *MetricReport.COLUMNS)


class ConfigError(Exception):
    pass


def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _write_config(out_dir: Path, command: str, args: argparse.Namespace, resolved: dict) -> None:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    record = {"command": command, "version": __version__, "flags": flags, "resolved": resolved}
    (out_dir / f"{command}_config.json").write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_modulo(path, b: int) -> ModuloImage:
    # float32 storage can round values just below 2^b up to 2^b; re-wrap on load
    return ModuloImage(wrap_array(read_pfm_array(path), b), b)


def cmd_datagen(args) -> int:
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    splits = _floats(args.splits, 3)
    kinds = [k.value for k in SceneKind] if args.kind == "mixed" else [SceneKind(args.kind).value]
    specs = [
        SceneSpec(kinds[k % len(kinds)], (args.size, args.size), args.channels, args.peak_factor,
                  args.bit_depth, 0, args.itoh_mode)
        for k in range(args.count)
    ]
    out = _out_dir(args)
    manifest = build_dataset(specs, splits, out, global_seed=args.seed, threads=args.threads)
    _write_config(out, "datagen", args, {"splits": splits, "kinds": kinds, "scenes": len(manifest.entries)})
    print(json.dumps({"manifest": str(out / "manifest.json"), "scenes": len(manifest.entries)}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    x = read_pfm(args.input)
    if args.alpha != 1.0:
        x = scale(x, args.alpha)
    y = wrap(x, args.bit_depth, quantize=args.quantize)
    out = _out_dir(args)
    dest = Path(args.output) if args.output else out / f"{Path(args.input).stem}_mod.pfm"
    write_pfm(dest, y.data)
    _write_config(out, "simulate", args, {"output": str(dest)})
    print(json.dumps({"output": str(dest), "bit_depth": y.bit_depth}))
    return EXIT_OK


def cmd_unwrap(args) -> int:
    y = _load_modulo(args.input, args.bit_depth)
    if args.gauge == Gauge.ANCHOR_VALUE.value and args.anchor_value is None:
        raise ConfigError("--gauge anchor-to-value needs --anchor-value")
    sol = unwrap_exact(y, args.gauge, args.anchor_value)
    out = _out_dir(args)
    dest = Path(args.output) if args.output else out / f"{Path(args.input).stem}_x0.pfm"
    write_pfm(dest, sol.image)
    _write_config(out, "unwrap", args, {"output": str(dest)})
    print(json.dumps({"output": str(dest), "gauge": sol.gauge.value, "residual_norm": sol.residual_norm}))
    return EXIT_OK


def cmd_features(args) -> int:
    try:
        cfg = FeatureConfig.from_name(args.config, args.normalization)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    y = _load_modulo(args.input, args.bit_depth)
    stack = build_features(y, cfg)
    out = _out_dir(args)
    stem = Path(args.output).with_suffix("") if args.output else out / f"{Path(args.input).stem}_features"
    np.save(f"{stem}.npy", stack.data)
    layout = {"channel_layout": list(stack.channel_layout), "shape": list(stack.data.shape),
              "feature_config": cfg.to_dict(), "bit_depth": y.bit_depth}
    Path(f"{stem}.json").write_text(json.dumps(layout, indent=2) + "\n")
    _write_config(out, "features", args, {"output": f"{stem}.npy"})
    print(json.dumps({"output": f"{stem}.npy", "channels": len(stack.channel_layout)}))
    return EXIT_OK


def _manifest_split(path, split: str):
    manifest = DatasetManifest.load(path)
    root = Path(path).parent
    entries = manifest.split(split)
    if not entries:
        raise ConfigError(f"manifest has no {split!r} entries")
    bits = {e.spec.wrap_bit_depth for e in entries}
    if len(bits) != 1:
        raise ConfigError("split mixes bit depths")
    return [(e, read_pfm(root / e.path)) for e in entries], bits.pop()


def cmd_train(args) -> int:
    try:
        cfg = FeatureConfig.from_name(args.features)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        tc = TrainConfig(gamma=args.gamma, alpha_range=_floats(args.alpha_range, 2), lr=args.lr,
                         batch_size=args.batch_size, epochs=args.epochs, seed=args.seed,
                         alpha_draws=args.alpha_draws, reduction=args.reduction, eq_target=args.eq_target)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    pairs, b = _manifest_split(args.manifest, args.split)
    samples = make_samples([img for _, img in pairs], b)
    model, trace = train(samples, cfg, tc)
    out = _out_dir(args)
    ckpt = out / "model.ckpt"
    save_checkpoint(ckpt, model, cfg, tc, {"bit_depth": b})
    write_loss_csv(out / "loss.csv", trace)
    _write_config(out, "train", args, {"feature_config": cfg.to_dict(), "train_config": tc.to_dict(), "bit_depth": b})
    print(json.dumps({"checkpoint": str(ckpt), "loss_csv": str(out / "loss.csv"),
                      "final_total": trace[-1].total if trace else None}))
    return EXIT_OK


def _estimate(method: str, x: HdrImage, b: int, align: bool, models: dict) -> np.ndarray:
    y = wrap(x, b)
    if method == "gt":
        return x.data
    if method == "dct":
        est = unwrap_exact(y).image
    else:
        model, cfg = models[method]
        est = restore(model, y, cfg)
    if align:
        est = est + (x.data.mean(axis=(0, 1)) - est.mean(axis=(0, 1)))
    return np.maximum(est, 0.0)


def _fmt(v: float) -> str:
    return "inf" if v == float("inf") else repr(float(v))


def cmd_eval(args) -> int:
    pairs, b = _manifest_split(args.manifest, args.split)
    methods = list(args.method or [])
    models = {}
    for path in args.checkpoint or []:
        try:
            model, cfg, _, _ = load_checkpoint(path)
        except (CheckpointError, KeyError, ValueError) as exc:
            raise ConfigError(f"bad checkpoint {path}: {exc}") from exc
        if model.out_channels != pairs[0][1].channels:
            raise ConfigError(f"checkpoint {path} predicts {model.out_channels} channels, data has {pairs[0][1].channels}")
        name = f"model:{Path(path).stem}"
        models[name] = (model, cfg)
        methods.append(name)
    if not methods:
        raise ConfigError("nothing to evaluate: give --method and/or --checkpoint")
    for m in methods:
        if m not in ("gt", "dct") and m not in models:
            raise ConfigError(f"unknown method {m!r}")
    out = _out_dir(args)
    preview_dir = out / "previews"
    if args.previews:
        preview_dir.mkdir(exist_ok=True)

    rows = []
    for method in methods:
        def one(item):
            entry, x = item
            est = _estimate(method, x, b, args.align_mean, models)
            if args.previews:
                tag = method.replace(":", "_")
                write_png_preview(preview_dir / f"{tag}_{Path(entry.path).stem}.png", reinhard_tonemap(est))
            return evaluate(x, est)

        with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
            reports = list(pool.map(one, pairs))
        row = {"method": method}
        for col in MetricReport.COLUMNS:
            vals = np.array([getattr(r, col) for r in reports])
            row[col] = float("inf") if np.isinf(vals).all() else float(vals[np.isfinite(vals)].mean())
        rows.append(row)

    dest = out / "metrics.csv"
    with open(dest, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for row in rows:
            w.writerow([row["method"]] + [_fmt(row[c]) for c in MetricReport.COLUMNS])
    _write_config(out, "eval", args, {"methods": methods, "bit_depth": b})
    print(json.dumps({"metrics_csv": str(dest), "rows": len(rows)}))
    return EXIT_OK


def cmd_bench(args) -> int:
    features = [f.strip() for f in args.features.split(",")] if args.features else list(FEATURE_ROWS)
    for f in features + [args.chosen]:
        try:
            FeatureConfig.from_name(f)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    bc = BenchConfig(
        scenes=args.scenes, size=args.size, bit_depth=args.bit_depth, peak_factor=args.peak_factor,
        dataset_seed=args.seed, seeds=tuple(int(s) for s in _floats(args.seeds)), epochs=args.epochs,
        lr=args.lr, batch_size=args.batch_size, gamma=args.gamma, alpha_range=_floats(args.alpha_range, 2),
    )
    results = run_benchmark(bc, features, args.chosen)
    rows = aggregate(results)
    out = _out_dir(args)
    (out / "bench.md").write_text(markdown_table(rows))
    with open(out / "bench.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            w.writerow([r["features"], repr(r["gamma"]), r["seeds"]] + [_fmt(r[c]) for c in TABLE_COLUMNS[3:]])
    runs = [{"features": r.features, "gamma": r.gamma, "seed": r.seed, "metrics": r.metrics,
             "heldout_rec": r.heldout_rec, "heldout_eq": r.heldout_eq} for r in results]
    (out / "bench_runs.json").write_text(json.dumps(runs, indent=2, sort_keys=True) + "\n")
    _write_config(out, "bench", args, {"bench_config": bc.to_dict()})
    sys.stdout.write(markdown_table(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = argparse.ArgumentParser(prog="modhdr", description="Modulo-sensor HDR simulation and reconstruction")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("datagen", parents=[common], help="generate a synthetic scene dataset")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--channels", type=int, default=1, choices=[1, 3])
    s.add_argument("--bit-depth", type=int, default=4)
    s.add_argument("--peak-factor", type=float, default=3.0)
    s.add_argument("--kind", default="mixed", choices=["mixed"] + [k.value for k in SceneKind])
    s.add_argument("--itoh-mode", default="free", choices=["free", "enforce"])
    s.add_argument("--splits", default="0.7,0.15,0.15")
    s.set_defaults(func=cmd_datagen)

    s = sub.add_parser("simulate", parents=[common], help="wrap an HDR scene through the modulo sensor")
    s.add_argument("--input", required=True)
    s.add_argument("--bit-depth", type=int, required=True)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--quantize", action="store_true")
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("unwrap", parents=[common], help="closed-form DCT unwrap of a modulo image")
    s.add_argument("--input", required=True)
    s.add_argument("--bit-depth", type=int, required=True)
    s.add_argument("--gauge", default=Gauge.ZERO_MEAN.value, choices=[g.value for g in Gauge])
    s.add_argument("--anchor-value", type=float)
    s.add_argument("--output")
    s.set_defaults(func=cmd_unwrap)

    s = sub.add_parser("features", parents=[common], help="dump the network input stack")
    s.add_argument("--input", required=True)
    s.add_argument("--bit-depth", type=int, required=True)
    s.add_argument("--config", default="y+diff", help="y, diff, init, y+diff, y+init, all (or comma form y,diff)")
    s.add_argument("--normalization", default=Normalization.THRESHOLD.value, choices=[n.value for n in Normalization])
    s.add_argument("--output")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", parents=[common], help="train the toy restorer")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", default="train")
    s.add_argument("--features", default="y+diff")
    s.add_argument("--gamma", type=float, default=0.1)
    s.add_argument("--alpha-range", default="0.9,1.1")
    s.add_argument("--alpha-draws", type=int, default=1)
    s.add_argument("--epochs", type=int, default=500)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--reduction", default="mean", choices=["mean", "sum"])
    s.add_argument("--eq-target", default="scaled-truth", choices=["scaled-truth", "scaled-prediction"])
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="score reconstructions on a manifest split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--method", action="append", choices=["gt", "dct"])
    s.add_argument("--checkpoint", action="append")
    s.add_argument("--align-mean", action="store_true")
    s.add_argument("--previews", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", parents=[common], help="feature ablation and equivariance benchmark")
    s.add_argument("--features", help="comma-separated rows (default: all six)")
    s.add_argument("--chosen", default="y+diff")
    s.add_argument("--seeds", default="0,1,2,3,4")
    s.add_argument("--scenes", type=int, default=200)
    s.add_argument("--size", type=int, default=16)
    s.add_argument("--bit-depth", type=int, default=4)
    s.add_argument("--peak-factor", type=float, default=3.0)
    s.add_argument("--epochs", type=int, default=200)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--gamma", type=float, default=0.1)
    s.add_argument("--alpha-range", default="0.9,1.1")
    s.set_defaults(func=cmd_bench, seed=2024)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ItohEnforcementError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except (OSError, PfmError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
