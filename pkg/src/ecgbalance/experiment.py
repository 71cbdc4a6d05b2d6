"""Deterministic experiment grids: {loss, beta, alpha, encode} x seeds.

An experiment spec is a flat key-value text file (``key = value`` lines,
``#`` comments). Grid keys take comma-separated lists; everything else is
a scalar. Each grid cell runs once per seed: generate (or load) the
dataset, optionally impose a long-tail profile, split, train, evaluate.
Rows aggregate mean and sample standard deviation over seeds.

Cells are self-contained, so they may run in a process pool; results are
merged in cell order, never completion order, and are therefore identical
for any worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset, SplitSpec, SynthSpec, generate_synthetic, load_csv, split
from .errors import SpecError
from .imbalance import longtail_counts, resample
from .losses import BaselineLossConfig, IwlConfig, canonical_loss_name
from .trainer import EncoderSpec, TrainConfig, evaluate, train

RESULT_COLUMNS = (
    "loss",
    "beta",
    "alpha",
    "encode",
    "seeds",
    "accuracy_mean",
    "accuracy_sd",
    "macro_f1_mean",
    "macro_f1_sd",
)

_GRID_KEYS = ("loss", "beta", "alpha", "encode", "seeds")
SYNTH_KEYS = (
    "classes",
    "counts",
    "head_count",
    "channels",
    "channel_gain",
    "class_names",
    "length",
    "noise_sd",
    "seed",
    "sample_rate",
    "amplitude",
    "base_frequency",
    "frequency_spacing",
)
_SCALAR_KEYS = (
    "epochs",
    "learning_rate",
    "batch_size",
    "hidden",
    "train_fraction",
    "image.height",
    "image.width",
    "window.skip",
    "window.take",
    "raw.take",
    "iwl.epsilon",
    "focal.gamma",
    "cb.beta",
    "ldam.mu",
    "ldam.s",
    "data.dir",
    "data.classes",
    "data.class_names",
    "data.counts",
    "data.head_count",
    "data.channels",
    "data.length",
    "data.sample_rate",
    "data.noise_sd",
    "data.amplitude",
    "data.channel_gain",
    "data.base_frequency",
    "data.frequency_spacing",
    "data.seed",
)


def parse_kv_file(path) -> dict[str, str]:
    """``key = value`` lines; '#' starts a comment; blank lines ignored."""
    mapping: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise SpecError(f"{path}: line {lineno} is not a 'key = value' pair: {line!r}")
        key, value = body.split("=", 1)
        key = key.strip()
        if key in mapping:
            raise SpecError(f"{path}: duplicate key {key!r} on line {lineno}")
        mapping[key] = value.strip()
    return mapping


def _split_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise SpecError(f"key {key!r}: {raw!r} is not a number") from exc


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise SpecError(f"key {key!r}: {raw!r} is not an integer") from exc


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved grid plus shared training and data settings."""

    losses: tuple[str, ...] = ("iwl",)
    betas: tuple[float, ...] = (0.3,)
    alphas: tuple[Optional[float], ...] = (None,)
    encodes: tuple[str, ...] = ("cme",)
    seeds: tuple[int, ...] = (0,)
    epochs: int = 30
    learning_rate: float = 0.001
    batch_size: int = 64
    hidden: tuple[int, ...] = (64, 32)
    train_fraction: float = 0.9
    image_height: int = 128
    image_width: int = 128
    window_skip: int = 500
    window_take: int = 2500
    raw_take: int = 3000
    iwl_epsilon: float = 1e-12
    focal_gamma: float = 2.0
    cb_beta: float = 0.999
    ldam_mu: float = 0.2
    ldam_s: float = 20.0
    data_dir: Optional[str] = None
    synth: Optional[SynthSpec] = None

    def __post_init__(self):
        if self.data_dir is None and self.synth is None:
            raise SpecError("an experiment needs either data.dir or synthetic data settings")
        for name in self.losses:
            canonical_loss_name(name)
        for enc in self.encodes:
            if enc not in ("cme", "raw"):
                raise SpecError(f"unknown encode {enc!r}; expected cme or raw")
        for a in self.alphas:
            if a is not None and not 0.0 < a <= 1.0:
                raise SpecError(f"alpha must lie in (0, 1], got {a}")


@dataclass(frozen=True)
class CellKey:
    """One grid cell; beta is None for losses that do not use it."""

    loss: str
    beta: Optional[float]
    alpha: Optional[float]
    encode: str


@dataclass(frozen=True)
class ResultRow:
    cell: CellKey
    n_seeds: int
    accuracy_mean: float
    accuracy_sd: float
    macro_f1_mean: float
    macro_f1_sd: float


def parse_experiment_spec(path) -> ExperimentSpec:
    mapping = parse_kv_file(path)
    unknown = set(mapping) - set(_GRID_KEYS) - set(_SCALAR_KEYS)
    if unknown:
        raise SpecError(f"unknown experiment keys: {sorted(unknown)}")

    kwargs: dict = {}
    if "loss" in mapping:
        kwargs["losses"] = tuple(canonical_loss_name(n) for n in _split_list(mapping["loss"]))
    if "beta" in mapping:
        kwargs["betas"] = tuple(_parse_float("beta", v) for v in _split_list(mapping["beta"]))
    if "alpha" in mapping:
        kwargs["alphas"] = tuple(
            None if v.lower() == "none" else _parse_float("alpha", v) for v in _split_list(mapping["alpha"])
        )
    if "encode" in mapping:
        kwargs["encodes"] = tuple(_split_list(mapping["encode"]))
    if "seeds" in mapping:
        kwargs["seeds"] = tuple(_parse_int("seeds", v) for v in _split_list(mapping["seeds"]))

    for key, attr, conv in (
        ("epochs", "epochs", _parse_int),
        ("batch_size", "batch_size", _parse_int),
        ("image.height", "image_height", _parse_int),
        ("image.width", "image_width", _parse_int),
        ("window.skip", "window_skip", _parse_int),
        ("window.take", "window_take", _parse_int),
        ("raw.take", "raw_take", _parse_int),
        ("learning_rate", "learning_rate", _parse_float),
        ("train_fraction", "train_fraction", _parse_float),
        ("iwl.epsilon", "iwl_epsilon", _parse_float),
        ("focal.gamma", "focal_gamma", _parse_float),
        ("cb.beta", "cb_beta", _parse_float),
        ("ldam.mu", "ldam_mu", _parse_float),
        ("ldam.s", "ldam_s", _parse_float),
    ):
        if key in mapping:
            kwargs[attr] = conv(key, mapping[key])
    if "hidden" in mapping:
        kwargs["hidden"] = tuple(_parse_int("hidden", v) for v in _split_list(mapping["hidden"]))

    if "data.dir" in mapping:
        kwargs["data_dir"] = mapping["data.dir"]
    else:
        kwargs["synth"] = synth_spec_from_mapping(mapping, prefix="data.")
    return ExperimentSpec(**kwargs)


def synth_spec_from_mapping(mapping: dict[str, str], prefix: str = "") -> SynthSpec:
    """Build a SynthSpec from flat keys like ``classes`` / ``data.classes``.

    Per-class counts come from ``counts`` (explicit list) or ``head_count``
    (balanced at that size); the seed key is a default that callers may
    override per run.
    """

    def get(name: str, default: Optional[str] = None) -> Optional[str]:
        return mapping.get(prefix + name, default)

    classes = _parse_int("classes", get("classes", "9"))
    counts_raw = get("counts")
    if counts_raw is not None:
        counts = tuple(_parse_int("counts", v) for v in _split_list(counts_raw))
    else:
        head = _parse_int("head_count", get("head_count", "64"))
        counts = (head,) * classes
    gain_raw = get("channel_gain")
    if gain_raw is not None:
        gains = tuple(_parse_float("channel_gain", v) for v in _split_list(gain_raw))
    else:
        gains = (1.0,) * _parse_int("channels", get("channels", "12"))
    names_raw = get("class_names")
    return SynthSpec(
        n_classes=classes,
        n_channels=len(gains),
        length=_parse_int("length", get("length", "3000")),
        per_class_counts=counts,
        channel_gain=gains,
        noise_sd=_parse_float("noise_sd", get("noise_sd", "0.0")),
        seed=_parse_int("seed", get("seed", "0")),
        sample_rate=_parse_float("sample_rate", get("sample_rate", "500.0")),
        amplitude=_parse_float("amplitude", get("amplitude", "5.0")),
        class_names=tuple(_split_list(names_raw)) if names_raw else None,
        base_frequency=_parse_float("base_frequency", get("base_frequency", "2.0")),
        frequency_spacing=_parse_float("frequency_spacing", get("frequency_spacing", "1.0")),
    )


def grid_cells(spec: ExperimentSpec) -> list[CellKey]:
    """Cells in deterministic order; beta multiplies only the iwl loss."""
    cells = []
    for loss in spec.losses:
        betas = spec.betas if loss == "iwl" else (None,)
        for beta in betas:
            for alpha in spec.alphas:
                for encode in spec.encodes:
                    cells.append(CellKey(loss=loss, beta=beta, alpha=alpha, encode=encode))
    return cells


def _loss_config(spec: ExperimentSpec, cell: CellKey):
    if cell.loss == "iwl":
        return IwlConfig(beta=cell.beta if cell.beta is not None else 0.3, epsilon=spec.iwl_epsilon)
    return BaselineLossConfig(
        kind=cell.loss,
        gamma=spec.focal_gamma,
        cb_beta=spec.cb_beta,
        ldam_mu=spec.ldam_mu,
        ldam_s=spec.ldam_s,
        class_counts=None,
    )


def _encoder(spec: ExperimentSpec, cell: CellKey) -> EncoderSpec:
    return EncoderSpec(
        kind=cell.encode,
        height=spec.image_height,
        width=spec.image_width,
        skip=spec.window_skip,
        take=spec.window_take,
        raw_take=spec.raw_take,
    )


def _dataset_for_run(spec: ExperimentSpec, seed: int) -> Dataset:
    if spec.data_dir is not None:
        return load_csv(spec.data_dir)
    assert spec.synth is not None
    return generate_synthetic(dataclasses.replace(spec.synth, seed=seed))


def run_cell(spec: ExperimentSpec, cell: CellKey) -> list[tuple[float, float]]:
    """(accuracy, macro F1) per seed for one grid cell."""
    out = []
    for seed in spec.seeds:
        d = _dataset_for_run(spec, seed)
        if cell.alpha is not None:
            profile = longtail_counts(d.class_counts(), cell.alpha)
            d = resample(d, profile, seed)
        d_train, d_test = split(d, SplitSpec(train_fraction=spec.train_fraction, seed=seed))
        cfg = TrainConfig(
            epochs=spec.epochs,
            learning_rate=spec.learning_rate,
            batch_size=spec.batch_size,
            seed=seed,
            loss=_loss_config(spec, cell),
            encode=_encoder(spec, cell),
            hidden=spec.hidden,
        )
        model, _ = train(d_train, cfg)
        metrics = evaluate(model, d_test)
        out.append((metrics.accuracy, metrics.macro_f1))
    return out


def _cell_worker(args: tuple[ExperimentSpec, CellKey]) -> list[tuple[float, float]]:
    spec, cell = args
    return run_cell(spec, cell)


def _aggregate(cell: CellKey, pairs: list[tuple[float, float]]) -> ResultRow:
    acc = np.array([a for a, _ in pairs])
    f1 = np.array([f for _, f in pairs])
    n = len(pairs)
    sd = lambda v: float(np.std(v, ddof=1)) if n >= 2 else 0.0
    return ResultRow(
        cell=cell,
        n_seeds=n,
        accuracy_mean=float(acc.mean()),
        accuracy_sd=sd(acc),
        macro_f1_mean=float(f1.mean()),
        macro_f1_sd=sd(f1),
    )


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list[ResultRow]:
    """Run every cell over every seed; one aggregated row per cell."""
    cells = grid_cells(spec)
    if not cells:
        return []
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_worker, [(spec, c) for c in cells]))
    else:
        results = [run_cell(spec, c) for c in cells]
    return [_aggregate(cell, pairs) for cell, pairs in zip(cells, results)]


def _fmt_pct(v: float) -> str:
    return f"{100.0 * v:.1f}"


def write_results_csv(rows: list[ResultRow], path) -> None:
    """One row per cell; accuracy and F1 as percentages with one decimal."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.cell.loss,
                    "" if row.cell.beta is None else repr(float(row.cell.beta)),
                    "none" if row.cell.alpha is None else repr(float(row.cell.alpha)),
                    row.cell.encode,
                    row.n_seeds,
                    _fmt_pct(row.accuracy_mean),
                    _fmt_pct(row.accuracy_sd),
                    _fmt_pct(row.macro_f1_mean),
                    _fmt_pct(row.macro_f1_sd),
                ]
            )


def read_results_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
