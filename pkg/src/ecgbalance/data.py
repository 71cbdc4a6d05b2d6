"""ECG records and datasets: CSV ingestion, synthesis, windowing, splits.

A record is a channels-by-samples float64 matrix with a sample rate and an
optional integer class label. Record CSV files on disk use the transposed
layout (one row per sample, one column per channel), which is what most
export tools produce; the loader transposes on the way in.

All containers are immutable after construction. Arrays are frozen with
``writeable = False`` so accidental in-place edits fail loudly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    MalformedRecord,
    NonFiniteSample,
    SpecError,
    UnknownClass,
    WindowOutOfRange,
)

# The canonical acquisition setup this package was built around: 12-lead
# recordings at 500 Hz with nine rhythm/morphology classes.
CANONICAL_CLASS_NAMES = ("RBBB", "AF", "Normal", "STD", "I-AVB", "PVC", "PAC", "STE", "LBBB")
CANONICAL_SAMPLE_RATE = 500.0
CANONICAL_LEADS = 12

MANIFEST_FIELDS = ("file", "record_id", "label", "sample_rate")


def _frozen(arr) -> np.ndarray:
    """Return a read-only float64 view or copy of ``arr``.

    Arrays that are already read-only are adopted as-is (the library's own
    constructors use this to avoid copying); writeable caller arrays are
    defensively copied before freezing.
    """
    out = np.asarray(arr, dtype=np.float64)
    if out is arr and out.flags.writeable:
        out = out.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class EcgRecord:
    """One multi-channel recording: a (channels, samples) amplitude matrix."""

    channels: np.ndarray
    sample_rate: float
    label: Optional[int] = None
    record_id: str = ""

    def __post_init__(self):
        arr = _frozen(self.channels)
        object.__setattr__(self, "channels", arr)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise MalformedRecord(self.record_id, f"expected a 2-D channels-by-samples matrix, got shape {arr.shape}")
        if self.sample_rate <= 0:
            raise MalformedRecord(self.record_id, f"sample rate must be positive, got {self.sample_rate}")
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            chan, samp = bad[0]
            raise NonFiniteSample(self.record_id, int(samp), int(chan))
        if self.label is not None and self.label < 0:
            raise UnknownClass(f"record {self.record_id!r}: negative label {self.label}")

    @property
    def num_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def length(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of records sharing one layout."""

    records: tuple[EcgRecord, ...]
    class_names: tuple[str, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "class_names", tuple(str(n) for n in self.class_names))
        if len(self.class_names) < 2:
            raise SpecError("a dataset needs at least two class names")
        if len(set(self.class_names)) != len(self.class_names):
            raise SpecError("class names must be distinct")
        rates = {r.sample_rate for r in self.records}
        chans = {r.num_channels for r in self.records}
        if len(rates) > 1 or len(chans) > 1:
            raise SpecError("all records must share channel count and sample rate")
        m = len(self.class_names)
        for r in self.records:
            if r.label is not None and r.label >= m:
                raise UnknownClass(f"record {r.record_id!r} has label {r.label} but only {m} classes exist")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[EcgRecord]:
        return iter(self.records)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_channels(self) -> int:
        if not self.records:
            raise EmptyDataset("dataset has no records")
        return self.records[0].num_channels

    @property
    def sample_rate(self) -> float:
        if not self.records:
            raise EmptyDataset("dataset has no records")
        return self.records[0].sample_rate

    def labels(self) -> np.ndarray:
        """Labels in record order; records without a label raise."""
        out = np.empty(len(self.records), dtype=np.int64)
        for i, r in enumerate(self.records):
            if r.label is None:
                raise SpecError(f"record {r.record_id!r} has no label")
            out[i] = r.label
        return out

    def class_counts(self) -> np.ndarray:
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for r in self.records:
            if r.label is not None:
                counts[r.label] += 1
        return counts


@dataclass(frozen=True)
class SplitSpec:
    """Stratified split description. ``test_fraction`` is derived, so the
    two fractions sum to one by construction."""

    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise SpecError(f"train_fraction must lie strictly between 0 and 1, got {self.train_fraction}")

    @property
    def test_fraction(self) -> float:
        return 1.0 - self.train_fraction


# ---------------------------------------------------------------------------
# CSV ingestion and export


def _read_manifest(path: Path):
    if not path.exists():
        raise MalformedRecord(str(path), "manifest file not found")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        for f in MANIFEST_FIELDS:
            if f not in header:
                raise MalformedRecord(str(path), f"manifest is missing required column {f!r}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(
                    (
                        row["file"],
                        row["record_id"],
                        int(row["label"]),
                        float(row["sample_rate"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise MalformedRecord(str(path), f"manifest line {lineno} is unparsable: {exc}") from exc
    return rows


def _read_record_csv(path: Path, record_id: str) -> np.ndarray:
    if not path.exists():
        raise MalformedRecord(record_id, f"record file {path} not found")
    try:
        data = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise MalformedRecord(record_id, str(exc)) from exc
    if data.size == 0:
        raise MalformedRecord(record_id, "record file is empty")
    return data


def load_csv(path, manifest=None, class_names: Optional[Sequence[str]] = None) -> Dataset:
    """Load a dataset directory of per-record CSV files plus a manifest.

    ``path`` holds one CSV per record (rows are samples, columns are
    channels) and, by default, ``manifest.csv`` with the columns
    ``file,record_id,label,sample_rate``. Class names come from the
    ``class_names`` argument, else ``classes.txt`` in the directory, else
    generated placeholder names sized by the largest label seen.
    """
    base = Path(path)
    mpath = Path(manifest) if manifest is not None else base / "manifest.csv"
    rows = _read_manifest(mpath)
    if class_names is None:
        cfile = base / "classes.txt"
        if cfile.exists():
            class_names = tuple(ln.strip() for ln in cfile.read_text().splitlines() if ln.strip())
        else:
            top = max((label for _, _, label, _ in rows), default=1)
            class_names = tuple(f"class_{i}" for i in range(max(top + 1, 2)))
    m = len(class_names)
    records = []
    for fname, record_id, label, rate in rows:
        if not 0 <= label < m:
            raise UnknownClass(f"record {record_id!r}: label {label} outside [0, {m})")
        table = _read_record_csv(base / fname, record_id)
        records.append(
            EcgRecord(
                channels=_frozen(np.ascontiguousarray(table.T)),
                sample_rate=rate,
                label=label,
                record_id=record_id,
            )
        )
    return Dataset(records=tuple(records), class_names=tuple(class_names))


def write_csv_dataset(d: Dataset, out_dir) -> None:
    """Write ``d`` as a directory loadable by :func:`load_csv`.

    Output is deterministic: record order, file naming, and float
    formatting (shortest round-trip repr) depend only on the dataset.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "classes.txt", "w") as fh:
        for name in d.class_names:
            fh.write(name + "\n")
    with open(out / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for r in d.records:
            if r.label is None:
                raise SpecError(f"record {r.record_id!r} has no label; cannot write a training manifest")
            writer.writerow([f"{r.record_id}.csv", r.record_id, r.label, repr(float(r.sample_rate))])
    for r in d.records:
        _write_record_csv(r, out / f"{r.record_id}.csv")


def _write_record_csv(r: EcgRecord, path: Path) -> None:
    rows = r.channels.T.tolist()
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(repr(v) for v in row))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Synthesis


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic multi-channel dataset.

    Each class gets a distinct quasi-periodic waveform (its own fundamental
    frequency and pulse sharpness). The waveform is a pure function of the
    class, channel count, and length; the seed only drives additive noise
    and the final record shuffle. ``amplitude`` is the root-mean-square of
    the clean waveform before per-channel gain, so channel RMS is
    approximately ``amplitude * channel_gain[c]``.
    """

    n_classes: int
    n_channels: int
    length: int
    per_class_counts: tuple[int, ...]
    channel_gain: tuple[float, ...]
    noise_sd: float = 0.0
    seed: int = 0
    sample_rate: float = CANONICAL_SAMPLE_RATE
    amplitude: float = 5.0
    class_names: Optional[tuple[str, ...]] = None
    base_frequency: float = 2.0
    frequency_spacing: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "per_class_counts", tuple(int(c) for c in self.per_class_counts))
        object.__setattr__(self, "channel_gain", tuple(float(g) for g in self.channel_gain))
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(str(n) for n in self.class_names))

    def validate(self) -> None:
        if self.n_classes < 2:
            raise SpecError("need at least two classes")
        if self.n_channels < 1 or self.length < 2:
            raise SpecError("need at least one channel and two samples")
        if len(self.per_class_counts) != self.n_classes:
            raise SpecError(
                f"per_class_counts has {len(self.per_class_counts)} entries for {self.n_classes} classes"
            )
        if any(c < 0 for c in self.per_class_counts):
            raise SpecError("per-class counts must be nonnegative")
        if len(self.channel_gain) != self.n_channels:
            raise SpecError(
                f"channel_gain has {len(self.channel_gain)} entries for {self.n_channels} channels"
            )
        if any(g <= 0 for g in self.channel_gain):
            raise SpecError("channel gains must be positive")
        if self.noise_sd < 0:
            raise SpecError("noise_sd must be nonnegative")
        if self.amplitude <= 0 or self.sample_rate <= 0:
            raise SpecError("amplitude and sample_rate must be positive")
        if self.class_names is not None and len(self.class_names) != self.n_classes:
            raise SpecError("class_names length must match n_classes")


def _class_waveform(spec: SynthSpec, m: int) -> np.ndarray:
    """Clean (channels, length) waveform for class ``m``, gains applied.

    Deterministic in (spec geometry, m): no randomness enters here.
    """
    t = np.arange(spec.length, dtype=np.float64) / spec.sample_rate
    f0 = spec.base_frequency + spec.frequency_spacing * m
    sharpness = 2.0 + 1.5 * (m % 4)
    mix = 0.25 + 0.05 * m
    rows = np.empty((spec.n_channels, spec.length), dtype=np.float64)
    for c in range(spec.n_channels):
        phase = 2.0 * np.pi * f0 * t + 0.35 * c
        pulse = np.exp(sharpness * (np.cos(phase) - 1.0))
        pulse -= pulse.mean()
        rows[c] = pulse + mix * np.sin(2.0 * phase + 0.6 * m)
    rms = float(np.sqrt(np.mean(rows * rows)))
    rows *= spec.amplitude / rms
    rows *= np.asarray(spec.channel_gain, dtype=np.float64)[:, None]
    return rows


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Generate a labeled dataset from ``spec``; fully seeded and repeatable."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    records = []
    for m in range(spec.n_classes):
        count = spec.per_class_counts[m]
        if count == 0:
            continue
        clean = _class_waveform(spec, m)
        for j in range(count):
            if spec.noise_sd > 0:
                x = clean + rng.normal(0.0, spec.noise_sd, size=clean.shape)
            else:
                x = clean.copy()
            x.flags.writeable = False
            records.append(
                EcgRecord(channels=x, sample_rate=spec.sample_rate, label=m, record_id=f"synth-c{m}-r{j:04d}")
            )
    if spec.class_names is not None:
        names = spec.class_names
    elif spec.n_classes == len(CANONICAL_CLASS_NAMES):
        names = CANONICAL_CLASS_NAMES
    else:
        names = tuple(f"class_{i}" for i in range(spec.n_classes))
    order = rng.permutation(len(records))
    return Dataset(records=tuple(records[i] for i in order), class_names=names, seed=spec.seed)


# ---------------------------------------------------------------------------
# Windowing and splitting


def window_record(r: EcgRecord, skip: int, take: int) -> EcgRecord:
    """Return samples ``[skip, skip + take)`` of every channel."""
    if skip < 0 or take < 1 or skip + take > r.length:
        raise WindowOutOfRange(
            f"window [{skip}, {skip + take}) does not fit in record {r.record_id!r} of length {r.length}"
        )
    segment = r.channels[:, skip : skip + take]
    return EcgRecord(channels=segment, sample_rate=r.sample_rate, label=r.label, record_id=r.record_id)


def split(d: Dataset, s: SplitSpec) -> tuple[Dataset, Dataset]:
    """Stratified train/test split.

    Per class, records are shuffled with the split seed and the first
    ``floor(count * train_fraction)`` go to the train side. Every record
    lands in exactly one side.
    """
    if len(d) == 0:
        raise EmptyDataset("cannot split an empty dataset")
    labels = d.labels()
    rng = np.random.default_rng(s.seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for m in range(d.num_classes):
        idx = np.flatnonzero(labels == m)
        if idx.size == 0:
            continue
        shuffled = idx[rng.permutation(idx.size)]
        k = math.floor(idx.size * s.train_fraction)
        train_idx.extend(int(i) for i in shuffled[:k])
        test_idx.extend(int(i) for i in shuffled[k:])
    train = Dataset(tuple(d.records[i] for i in train_idx), d.class_names, seed=s.seed)
    test = Dataset(tuple(d.records[i] for i in test_idx), d.class_names, seed=s.seed)
    return train, test
