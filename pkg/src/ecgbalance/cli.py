"""Command-line front end.

Each command is a thin composition of library calls; all randomness flows
from explicit --seed flags, and every output file is byte-deterministic
for a fixed invocation. Exit codes: 0 success, 1 usage error, 2 data or
configuration error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

from . import __version__
from .data import (
    Dataset,
    SplitSpec,
    generate_synthetic,
    load_csv,
    split,
    write_csv_dataset,
)
from .equalizer import (
    MAGNITUDE_MODES,
    channel_stats,
    cme_pipeline,
    encode_image,
    window_record,
    write_image_csv,
    write_image_raw,
    write_stats_csv,
)
from .errors import EcgBalanceError, SpecError
from .experiment import (
    SYNTH_KEYS,
    parse_experiment_spec,
    parse_kv_file,
    run_experiment,
    synth_spec_from_mapping,
    write_results_csv,
)
from .imbalance import longtail_counts, resample, write_histogram_csv
from .losses import (
    GRADCHECK_LOSSES,
    BaselineLossConfig,
    IwlConfig,
    canonical_loss_name,
    gradient_check,
)
from .trainer import (
    EncoderSpec,
    TrainConfig,
    evaluate,
    load_model,
    save_model,
    train,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting with 2."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _loss_config_from_args(args) -> IwlConfig | BaselineLossConfig:
    kind = canonical_loss_name(args.loss)
    if kind == "iwl":
        return IwlConfig(
            beta=args.beta,
            epsilon=args.epsilon,
            log_base=10.0 if args.log_base == "10" else math.e,
            stop_weight_gradient=args.stop_weight_gradient,
        )
    return BaselineLossConfig(
        kind=kind,
        gamma=args.gamma,
        cb_beta=args.cb_beta,
        ldam_mu=args.ldam_mu,
        ldam_s=args.ldam_s,
        class_counts=None,
    )


def _add_loss_flags(p: argparse.ArgumentParser, default: str = "iwl") -> None:
    p.add_argument("--loss", default=default, help="iwl, ce, focal, cb, cb_focal, or ldam")
    p.add_argument("--beta", type=float, default=0.3, help="IWL temperature")
    p.add_argument("--epsilon", type=float, default=1e-12, help="IWL weight denominator guard")
    p.add_argument("--log-base", choices=("e", "10"), default="e", help="base of both IWL logarithms")
    p.add_argument(
        "--stop-weight-gradient",
        action="store_true",
        help="treat the IWL weight as a constant during differentiation",
    )
    p.add_argument("--gamma", type=float, default=2.0, help="focal exponent")
    p.add_argument("--cb-beta", type=float, default=0.999, help="class-balanced effective-number parameter")
    p.add_argument("--ldam-mu", type=float, default=0.2, help="LDAM maximum margin")
    p.add_argument("--ldam-s", type=float, default=20.0, help="LDAM logit scale")


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--encode", choices=("cme", "raw"), default="cme", help="input representation")
    p.add_argument("--height", type=int, default=128, help="image height (cme)")
    p.add_argument("--width", type=int, default=128, help="image width (cme)")
    p.add_argument("--skip", type=int, default=500, help="samples dropped from the start (cme)")
    p.add_argument("--take", type=int, default=2500, help="samples kept after the skip (cme)")
    p.add_argument("--raw-take", type=int, default=3000, help="samples kept from the start (raw)")
    p.add_argument("--mode", choices=MAGNITUDE_MODES, default="rms", help="channel magnitude statistic")


def _encoder_from_args(args) -> EncoderSpec:
    return EncoderSpec(
        kind=args.encode,
        height=args.height,
        width=args.width,
        skip=args.skip,
        take=args.take,
        raw_take=args.raw_take,
        magnitude_mode=args.mode,
    )


def _load_dataset(args) -> Dataset:
    return load_csv(args.data, manifest=getattr(args, "manifest", None))


# ---------------------------------------------------------------------------
# Command handlers


def _cmd_synth(args) -> int:
    mapping = parse_kv_file(args.spec)
    unknown = set(mapping) - set(SYNTH_KEYS)
    if unknown:
        raise SpecError(f"unknown synth keys: {sorted(unknown)}")
    spec = synth_spec_from_mapping(mapping)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    d = generate_synthetic(spec)
    write_csv_dataset(d, args.out)
    print(f"wrote {len(d)} records over {d.num_classes} classes to {args.out}")
    return 0


def _cmd_analyze(args) -> int:
    d = _load_dataset(args)
    stats = channel_stats(d)
    if args.out:
        write_stats_csv(stats, d.class_names, args.out)
        print(f"wrote channel stats for {d.num_channels} channels to {args.out}")
    else:
        for c in range(d.num_channels):
            print(f"channel {c}: rms {stats.per_channel_rms[c]:.6g}, mean power {stats.per_channel_mean_power[c]:.6g}")
    return 0


def _cmd_encode(args) -> int:
    d = _load_dataset(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = d.records
    if args.record is not None:
        records = tuple(r for r in records if r.record_id == args.record)
        if not records:
            raise _UsageError(f"record {args.record!r} not found in {args.data}")
    for r in records:
        if args.no_equalize:
            img = encode_image(window_record(r, args.skip, args.take), args.height, args.width)
        else:
            img = cme_pipeline(r, args.height, args.width, skip=args.skip, take=args.take, mode=args.mode)
        if args.format in ("csv", "both"):
            write_image_csv(img, out / f"{r.record_id}.csv")
        if args.format in ("raw", "both"):
            write_image_raw(img, out / f"{r.record_id}.f64")
    print(f"encoded {len(records)} records at {args.height}x{args.width} into {out}")
    return 0


def _cmd_resample(args) -> int:
    if args.alpha is None and not args.no_resample:
        raise _UsageError("resample: --alpha is required (or pass --no-resample)")
    d = _load_dataset(args)
    before = d.class_counts()
    if args.no_resample:
        out_d = d
    else:
        profile = longtail_counts(before, args.alpha)
        out_d = resample(d, profile, args.seed)
    out = Path(args.out)
    write_csv_dataset(out_d, out)
    write_histogram_csv(d.class_names, before, out_d.class_counts(), out / "histogram.csv")
    print(f"wrote {len(out_d)} records to {out}")
    return 0


def _cmd_gradcheck(args) -> int:
    names = GRADCHECK_LOSSES if args.loss == "all" else (canonical_loss_name(args.loss),)
    results = []
    for name in names:
        if name == "iwl":
            cfg = IwlConfig(
                beta=args.beta,
                epsilon=args.epsilon,
                log_base=10.0 if args.log_base == "10" else math.e,
                stop_weight_gradient=args.stop_weight_gradient,
            )
        else:
            cfg = BaselineLossConfig(
                kind=name,
                gamma=args.gamma,
                cb_beta=args.cb_beta,
                ldam_mu=args.ldam_mu,
                ldam_s=args.ldam_s,
                class_counts=None,
            )
        results.append(
            gradient_check(
                cfg,
                trials=args.trials,
                seed=args.seed,
                threshold=args.threshold,
                num_classes=args.classes,
            )
        )
    for res in results:
        status = "pass" if res.passed else "FAIL"
        print(
            f"gradcheck {res.loss}: {res.trials} trials, max relative error "
            f"{res.max_rel_error:.3e} (threshold {res.threshold:g}): {status}"
        )
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("loss,trials,max_rel_error,threshold,status\n")
            for res in results:
                fh.write(
                    f"{res.loss},{res.trials},{repr(res.max_rel_error)},{repr(res.threshold)},"
                    f"{'pass' if res.passed else 'fail'}\n"
                )
    return 0 if all(r.passed for r in results) else 3


def _cmd_train(args) -> int:
    d = _load_dataset(args)
    if args.train_fraction < 1.0:
        d, _ = split(d, SplitSpec(train_fraction=args.train_fraction, seed=args.seed))
    cfg = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        seed=args.seed,
        loss=_loss_config_from_args(args),
        encode=_encoder_from_args(args),
        hidden=tuple(int(h) for h in args.hidden.split(",") if h.strip()),
    )
    model, log = train(d, cfg)
    save_model(model, args.out)
    if args.log:
        with open(args.log, "w") as fh:
            fh.write("epoch,mean_loss\n")
            for epoch, value in enumerate(log):
                fh.write(f"{epoch},{repr(value)}\n")
    final = log[-1] if log else float("nan")
    print(f"trained {cfg.epochs} epochs on {len(d)} records; final mean loss {final:.6g}; model at {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    d = _load_dataset(args)
    if args.split != "all":
        d_train, d_test = split(d, SplitSpec(train_fraction=args.train_fraction, seed=args.split_seed))
        d = d_train if args.split == "train" else d_test
    metrics = evaluate(model, d)
    lines = ["metric,value", f"accuracy,{repr(metrics.accuracy)}", f"macro_f1,{repr(metrics.macro_f1)}", ""]
    lines.append("class,precision,recall,f1,support")
    support = metrics.confusion.sum(axis=1)
    for m, name in enumerate(d.class_names):
        lines.append(
            f"{name},{repr(float(metrics.per_class_precision[m]))},"
            f"{repr(float(metrics.per_class_recall[m]))},"
            f"{repr(float(metrics.per_class_f1[m]))},{int(support[m])}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.confusion:
        with open(args.confusion, "w") as fh:
            fh.write("," + ",".join(d.class_names) + "\n")
            for m, name in enumerate(d.class_names):
                fh.write(name + "," + ",".join(str(int(v)) for v in metrics.confusion[m]) + "\n")
    print(f"accuracy {metrics.accuracy:.4f}, macro F1 {metrics.macro_f1:.4f} on {len(d)} records")
    return 0


def _cmd_experiment(args) -> int:
    spec = parse_experiment_spec(args.spec)
    rows = run_experiment(spec, jobs=args.jobs)
    write_results_csv(rows, args.out)
    print(f"wrote {len(rows)} result rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> _Parser:
    parser = _Parser(prog="ecgbalance", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic dataset from a spec file")
    p.add_argument("--spec", required=True, help="key-value spec file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("analyze", help="report per-channel magnitude statistics")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--manifest", default=None, help="manifest path (default: <data>/manifest.csv)")
    p.add_argument("--out", default=None, help="stats CSV path (default: print a summary)")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("encode", help="encode records to fixed-size images")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--record", default=None, help="encode only this record id")
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--skip", type=int, default=500)
    p.add_argument("--take", type=int, default=2500)
    p.add_argument("--mode", choices=MAGNITUDE_MODES, default="rms")
    p.add_argument("--no-equalize", action="store_true", help="skip channel magnitude equalization")
    p.add_argument("--format", choices=("csv", "raw", "both"), default="csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("resample", help="impose a long-tail class profile")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--alpha", type=float, default=None, help="imbalance factor in (0, 1]")
    p.add_argument("--no-resample", action="store_true", help="keep the original distribution")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=_cmd_resample)

    p = sub.add_parser("gradcheck", help="verify analytical gradients against finite differences")
    p.add_argument("--loss", default="all", help="a loss name or 'all'")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--classes", type=int, default=9)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--log-base", choices=("e", "10"), default="e")
    p.add_argument("--stop-weight-gradient", action="store_true")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--cb-beta", type=float, default=0.999)
    p.add_argument("--ldam-mu", type=float, default=0.2)
    p.add_argument("--ldam-s", type=float, default=20.0)
    p.add_argument("--out", default=None, help="write the report as CSV")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", required=True, help="model file path")
    p.add_argument("--log", default=None, help="per-epoch loss CSV")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", default="64,32", help="comma-separated hidden layer sizes")
    p.add_argument(
        "--train-fraction",
        type=float,
        default=1.0,
        help="train on a stratified fraction (1.0 = every record)",
    )
    _add_loss_flags(p)
    _add_encoder_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--split", choices=("all", "train", "test"), default="all")
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", default=None, help="metrics CSV path (default: stdout)")
    p.add_argument("--confusion", default=None, help="confusion matrix CSV path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("experiment", help="run a {loss, beta, alpha, encode} x seeds grid")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for grid cells")
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            print("error: a command is required", file=sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EcgBalanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
