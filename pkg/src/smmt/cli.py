"""Command-line harness.

Subcommands: gen-data, train, eval, ablate, mask-sweep, bench, gradcheck,
co2. Global flags: --seed, --config (line-oriented `key = value` text
whose keys mirror the model/training/synthetic-data config fields), and
--out for report directories. Exit codes: 0 success, 1 validation
failure, 2 runtime error.
"""

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .attention import SparseAttentionFlags
from .bench import BENCH_CSV_HEADER, bench_sweep, co2_estimate, energy_proxy_kwh
from .data import (SyntheticSpec, generate_synthetic, holdout_split, load_dataset,
                   save_dataset)
from .errors import DimensionError, FormatError, InputError
from .flops import DEFAULT_FLOP_MODEL
from .gradsuite import layer_gradchecks
from .masking import MaskConfig
from .metrics import MetricsReport
from .model import SmmtConfig, SmmtModel
from .training import (TrainConfig, ablation_run, evaluate, masking_sweep, train,
                       write_grid_csv, write_rows_csv)


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InputError(f"expected a boolean, got {s!r}")


def _parse_int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _parse_str_tuple(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _parse_opt_int(s: str):
    return None if s.strip().lower() == "none" else int(s)


def _parse_opt_int_tuple(s: str):
    return None if s.strip().lower() == "none" else _parse_int_tuple(s)


CONFIG_PARSERS = {
    # model
    "d_model": int, "heads": int, "cascade_order": _parse_str_tuple,
    "use_sparse": _parse_bool, "use_mask": _parse_bool, "mask_ratio": float,
    "mask_seed": int, "scaled_logits": _parse_bool, "literal_eq3": _parse_bool,
    "classifier_hidden": _parse_opt_int_tuple, "image_hw": _parse_int_tuple,
    "conv_channels": _parse_int_tuple, "numeric_hidden": _parse_int_tuple,
    "tabular_tokens": str, "cascade_repeats": int, "residual": _parse_bool,
    "fused_queries": _parse_bool, "kmeans_iters": int,
    "cluster_count_override": _parse_opt_int,
    # training
    "epochs": int, "batch_size": int, "lr": float, "folds": int,
    # synthetic data
    "n_samples": int, "class_balance": float, "snr_image": float,
    "snr_numeric": float, "snr_categorical": float, "redundancy": float,
    # shared
    "seed": int,
}

_MODEL_FIELDS = {f.name for f in dataclasses.fields(SmmtConfig)} - {"mask", "flags"}
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
_SYNTH_FIELDS = {f.name for f in dataclasses.fields(SyntheticSpec)}


def parse_config_file(path) -> dict:
    """Line-oriented `key = value`; blank lines and # comments ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_PARSERS:
            raise InputError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = CONFIG_PARSERS[key](value.strip())
    return values


def _smmt_config(cfg_values: dict, seed: int | None) -> SmmtConfig:
    kwargs = {k: v for k, v in cfg_values.items() if k in _MODEL_FIELDS}
    mask_kwargs = {}
    if "mask_ratio" in cfg_values:
        mask_kwargs["ratio"] = cfg_values["mask_ratio"]
    if "mask_seed" in cfg_values:
        mask_kwargs["seed"] = cfg_values["mask_seed"]
    flag_kwargs = {k: cfg_values[k] for k in ("scaled_logits", "literal_eq3")
                   if k in cfg_values}
    if seed is not None:
        kwargs["seed"] = seed
        mask_kwargs.setdefault("seed", seed)
    kwargs["mask"] = MaskConfig(**mask_kwargs)
    if flag_kwargs:
        kwargs["flags"] = SparseAttentionFlags(**flag_kwargs)
    return SmmtConfig(**kwargs)


def _train_config(cfg_values: dict, args) -> TrainConfig:
    kwargs = {k: v for k, v in cfg_values.items() if k in _TRAIN_FIELDS}
    for name in ("epochs", "batch_size", "lr"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    if args.seed is not None:
        kwargs["seed"] = args.seed
    return TrainConfig(**kwargs)


def _synth_spec(cfg_values: dict, args) -> SyntheticSpec:
    kwargs = {k: v for k, v in cfg_values.items() if k in _SYNTH_FIELDS}
    for name in ("n_samples", "class_balance", "snr_image", "snr_numeric",
                 "snr_categorical", "redundancy"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    if args.seed is not None:
        kwargs["seed"] = args.seed
    kwargs.setdefault("n_samples", 600)
    return SyntheticSpec(**kwargs)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


METRICS_HEADER = ("accuracy", "precision", "recall", "specificity", "f1", "auc",
                  "tp", "tn", "fp", "fn")


def _metrics_row(m: MetricsReport) -> list:
    cm = m.confusion
    return [f"{m.accuracy:.6f}", f"{m.precision:.6f}", f"{m.recall:.6f}",
            f"{m.specificity:.6f}", f"{m.f1:.6f}", f"{m.auc:.6f}",
            cm.tp, cm.tn, cm.fp, cm.fn]


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


# -- subcommands -------------------------------------------------------------


def _cmd_gen_data(args, cfg_values) -> int:
    spec = _synth_spec(cfg_values, args)
    ds = generate_synthetic(spec)
    out = _out_dir(args) / "dataset.smmtds"
    save_dataset(ds, out)
    counts = np.bincount(ds.labels, minlength=2)
    print(f"wrote {out} ({len(ds)} records, {counts[0]} CN / {counts[1]} AD)")
    return 0


def _cmd_train(args, cfg_values) -> int:
    ds = load_dataset(args.data)
    cfg = _smmt_config(cfg_values, args.seed)
    tc = _train_config(cfg_values, args)
    train_ds, eval_ds = holdout_split(ds, args.eval_fraction, seed=tc.seed)
    result = train(cfg, tc, train_ds, val_ds=eval_ds)
    out = _out_dir(args)
    model_path = out / "model.smmt"
    result.model.save(model_path)
    _write_csv(out / "history.csv",
               ("epoch", "loss", "train_accuracy", "val_accuracy"),
               [(h.epoch, f"{h.loss:.6f}", f"{h.train_accuracy:.6f}",
                 "" if h.val_accuracy is None else f"{h.val_accuracy:.6f}")
                for h in result.history])
    report = evaluate(result.model, eval_ds)
    _write_csv(out / "metrics.csv", METRICS_HEADER, [_metrics_row(report)])
    print(f"wrote {model_path}")
    print(f"holdout accuracy {report.accuracy:.4f}  auc {report.auc:.4f}  "
          f"train_seconds {result.train_seconds:.1f}  attn_flops {result.attn_flops}")
    return 0


def _cmd_eval(args, cfg_values) -> int:
    model = SmmtModel.load(args.model)
    ds = load_dataset(args.data)
    report = evaluate(model, ds)
    _write_csv(_out_dir(args) / "metrics.csv", METRICS_HEADER, [_metrics_row(report)])
    print(",".join(METRICS_HEADER))
    print(",".join(str(v) for v in _metrics_row(report)))
    return 0


def _cmd_ablate(args, cfg_values) -> int:
    ds = load_dataset(args.data)
    cfg = _smmt_config(cfg_values, args.seed)
    tc = _train_config(cfg_values, args)
    train_ds, eval_ds = holdout_split(ds, args.eval_fraction, seed=tc.seed)
    fractions = tuple(float(x) for x in args.fractions.split(","))
    result = ablation_run(cfg, tc, train_ds, eval_ds, fractions=fractions,
                          runs=args.runs)
    out = _out_dir(args)
    write_rows_csv(out / "ablation_runs.csv", result.rows)
    write_grid_csv(out / "ablation_grid.csv", result.grid)
    print(f"wrote {out / 'ablation_runs.csv'} ({len(result.rows)} runs) and "
          f"{out / 'ablation_grid.csv'} ({len(result.grid)} cells)")
    return 0


def _cmd_mask_sweep(args, cfg_values) -> int:
    ds = load_dataset(args.data)
    cfg = _smmt_config(cfg_values, args.seed)
    tc = _train_config(cfg_values, args)
    train_ds, eval_ds = holdout_split(ds, args.eval_fraction, seed=tc.seed)
    ratios = tuple(float(x) for x in args.ratios.split(","))
    result = masking_sweep(cfg, tc, train_ds, eval_ds, ratios=ratios,
                           runs=args.runs, fraction=args.fraction)
    out = _out_dir(args)
    write_rows_csv(out / "mask_sweep_runs.csv", result.rows)
    write_grid_csv(out / "mask_sweep_grid.csv", result.grid)
    print(f"wrote {out / 'mask_sweep_runs.csv'} ({len(result.rows)} runs)")
    return 0


def _cmd_bench(args, cfg_values) -> int:
    sizes = [int(x) for x in args.sizes.split(",")]
    modes = ("dense", "sparse") if args.mode == "both" else (args.mode,)
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else 0
    print(f"# flop_model: {DEFAULT_FLOP_MODEL.describe()}")
    for mode in modes:
        rows = bench_sweep(sizes, d_k=args.d_k, heads=args.heads, mode=mode,
                           repeats=args.repeats, seed=seed)
        path = out / f"bench_{mode}.csv"
        _write_csv(path, BENCH_CSV_HEADER, [r.as_csv() for r in rows])
        print(f"wrote {path}")
        for r in rows:
            print(f"{mode} n={r.n} flops={r.flops} wall_ns={r.wall_ns} "
                  f"peak_bytes={r.peak_bytes}")
    (out / "bench_flop_model.txt").write_text(DEFAULT_FLOP_MODEL.describe() + "\n")
    return 0


def _cmd_gradcheck(args, cfg_values) -> int:
    seed = args.seed if args.seed is not None else 0
    names = _parse_str_tuple(args.layers) if args.layers else None
    results = layer_gradchecks(seed=seed, names=names)
    rows = [(name, f"{err:.3e}", args.tolerance, "pass" if err <= args.tolerance
             else "FAIL") for name, err in results.items()]
    _write_csv(_out_dir(args) / "gradcheck.csv",
               ("layer", "rel_error", "tolerance", "status"), rows)
    for name, err, tol, status in rows:
        print(f"{name:>22}: {err} ({status})")
    return 0 if all(r[3] == "pass" for r in rows) else 1


def _cmd_co2(args, cfg_values) -> int:
    if args.kwh is None and args.flops is None:
        raise InputError("co2 needs --kwh or --flops")
    kwh = args.kwh if args.kwh is not None else energy_proxy_kwh(
        args.flops, args.joules_per_flop)
    kg = co2_estimate(kwh, args.ci)
    print(f"{kg:.4f} kgCO2 ({kwh:.6f} kWh x {args.ci} kgCO2/kWh)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smmt",
        description="Cluster-sparse multi-modal transformer harness")
    parser.add_argument("--seed", type=int, default=None, help="global seed override")
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--out", default="out", help="report directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--n-samples", type=int, default=None, dest="n_samples")
    p.add_argument("--class-balance", type=float, default=None, dest="class_balance")
    p.add_argument("--snr-image", type=float, default=None, dest="snr_image")
    p.add_argument("--snr-numeric", type=float, default=None, dest="snr_numeric")
    p.add_argument("--snr-categorical", type=float, default=None, dest="snr_categorical")
    p.add_argument("--redundancy", type=float, default=None)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--eval-fraction", type=float, default=0.2, dest="eval_fraction")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="variant x fraction ablation grid")
    p.add_argument("--data", required=True)
    p.add_argument("--fractions", default="0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--eval-fraction", type=float, default=0.2, dest="eval_fraction")
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("mask-sweep", help="accuracy across mask ratios")
    p.add_argument("--data", required=True)
    p.add_argument("--ratios", default="0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--eval-fraction", type=float, default=0.2, dest="eval_fraction")
    p.set_defaults(fn=_cmd_mask_sweep)

    p = sub.add_parser("bench", help="attention kernel wall-time/FLOP sweep")
    p.add_argument("--sizes", default="256,512,1024,2048,4096")
    p.add_argument("--d-k", type=int, default=64, dest="d_k")
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--mode", choices=("dense", "sparse", "both"), default="both")
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference checks per layer")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--layers", default=None,
                   help="comma-separated layer subset (default: all)")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("co2", help="emissions from energy and grid intensity")
    p.add_argument("--kwh", type=float, default=None)
    p.add_argument("--ci", type=float, required=True)
    p.add_argument("--flops", type=int, default=None)
    p.add_argument("--joules-per-flop", type=float, default=1e-9,
                   dest="joules_per_flop")
    p.set_defaults(fn=_cmd_co2)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg_values = parse_config_file(args.config) if args.config else {}
        return args.fn(args, cfg_values)
    except (InputError, DimensionError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse:-h exits 0, bad usage exits 2
        code = exc.code if isinstance(exc.code, int) else 2
        return 0 if code == 0 else 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
