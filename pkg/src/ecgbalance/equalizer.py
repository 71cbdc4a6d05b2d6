"""Channel magnitude diagnostics and the channel magnitude equalizer (CME).

Multi-lead recordings routinely span two orders of magnitude across
channels. The equalizer computes one scale factor per channel as a softmax
over the negated channel magnitude statistic, so quiet channels are boosted
relative to loud ones while the factors stay positive and sum to one. The
scaled record is then interpolated onto a fixed-size image grid so a
classifier sees a uniform input shape regardless of record length or
channel count.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, EcgRecord, window_record
from .errors import DimensionError, EmptyDataset, EncodeError, SpecError

MAGNITUDE_MODES = ("rms", "l2")

CANONICAL_SKIP = 500
CANONICAL_TAKE = 2500


def _channel_magnitude(channels: np.ndarray, mode: str) -> np.ndarray:
    if mode == "rms":
        return np.sqrt(np.mean(channels * channels, axis=1))
    if mode == "l2":
        return np.sqrt(np.sum(channels * channels, axis=1))
    raise SpecError(f"unknown magnitude mode {mode!r}; expected one of {MAGNITUDE_MODES}")


@dataclass(frozen=True)
class ChannelMagnitudeStats:
    """Per-channel and per-class magnitude summary of a labeled dataset.

    ``per_class_scale[m, c]`` is the mean per-record RMS of channel ``c``
    over class-``m`` records, divided by the grand mean RMS over all
    (record, channel) pairs. Classes with no records get a NaN row and a
    cleared ``class_defined`` flag.
    """

    per_channel_rms: np.ndarray
    per_channel_mean_power: np.ndarray
    per_class_scale: np.ndarray
    class_defined: np.ndarray

    def __post_init__(self):
        for name in ("per_channel_rms", "per_channel_mean_power", "per_class_scale", "class_defined"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def channel_stats(d: Dataset) -> ChannelMagnitudeStats:
    """Pooled RMS, mean absolute amplitude, and per-class scale profile."""
    if len(d) == 0:
        raise EmptyDataset("channel statistics need at least one record")
    labels = d.labels()
    n_channels = d.num_channels
    n_classes = d.num_classes
    sq_sum = np.zeros(n_channels)
    abs_sum = np.zeros(n_channels)
    total_samples = 0
    per_record_rms = np.empty((len(d), n_channels))
    for i, r in enumerate(d.records):
        x = r.channels
        sq_sum += np.sum(x * x, axis=1)
        abs_sum += np.sum(np.abs(x), axis=1)
        total_samples += r.length
        per_record_rms[i] = _channel_magnitude(x, "rms")
    grand_mean = float(per_record_rms.mean())
    scale = np.full((n_classes, n_channels), np.nan)
    defined = np.zeros(n_classes, dtype=bool)
    for m in range(n_classes):
        mask = labels == m
        if mask.any():
            scale[m] = per_record_rms[mask].mean(axis=0) / grand_mean
            defined[m] = True
    return ChannelMagnitudeStats(
        per_channel_rms=np.sqrt(sq_sum / total_samples),
        per_channel_mean_power=abs_sum / total_samples,
        per_class_scale=scale,
        class_defined=defined,
    )


@dataclass(frozen=True)
class ChannelScaleFactors:
    """Positive per-channel factors summing to one."""

    k: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.k, dtype=np.float64)
        arr.flags.writeable = False
        object.__setattr__(self, "k", arr)
        if arr.ndim != 1 or arr.size < 1:
            raise DimensionError(f"scale factors must be a 1-D vector, got shape {arr.shape}")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise SpecError("scale factors must be finite and nonnegative")
        if abs(float(arr.sum()) - 1.0) > 1e-9:
            raise SpecError("scale factors must sum to one")

    def __len__(self) -> int:
        return self.k.size


def cme_factors(r: EcgRecord, mode: str = "rms") -> ChannelScaleFactors:
    """Softmax over negated channel magnitudes.

    ``mode`` picks the magnitude statistic: per-channel RMS (default, length
    independent) or the raw L2 norm. Raw norms grow with record length and
    push the softmax into saturation on long records, which is exactly the
    behaviour the RMS variant avoids; the mode is kept for side-by-side
    comparisons.

    The denominator is an exactly rounded float sum, so the factors are
    invariant under channel permutation, not merely close.
    """
    g = _channel_magnitude(r.channels, mode)
    shifted = -g - (-g).max()
    weights = np.exp(shifted)
    total = math.fsum(weights.tolist())
    return ChannelScaleFactors(k=weights / total)


def scale_channels(r: EcgRecord, k) -> EcgRecord:
    """Multiply channel ``c`` of ``r`` by ``k[c]``."""
    factors = k.k if isinstance(k, ChannelScaleFactors) else np.asarray(k, dtype=np.float64)
    if factors.shape != (r.num_channels,):
        raise DimensionError(
            f"got {factors.shape[0] if factors.ndim == 1 else factors.shape} factors for {r.num_channels} channels"
        )
    return EcgRecord(
        channels=r.channels * factors[:, None],
        sample_rate=r.sample_rate,
        label=r.label,
        record_id=r.record_id,
    )


@dataclass(frozen=True)
class EncodedImage:
    """A (height, width) float64 image interpolated from one record."""

    pixels: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)
        if arr.ndim != 2:
            raise EncodeError(f"image must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise EncodeError("image contains non-finite pixels")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def encode_image(r: EcgRecord, height: int, width: int) -> EncodedImage:
    """Piecewise-linear resample of a record onto a (height, width) grid.

    Stage one interpolates each channel along time onto ``width`` points;
    stage two interpolates across channels onto ``height`` rows. Both axes
    pin their endpoints, so when the grid matches the record shape the
    image reproduces the record exactly, and every pixel stays inside the
    per-stage convex hull of its neighbours (no overshoot).
    """
    n_channels, length = r.channels.shape
    if length < 2:
        raise EncodeError(f"record {r.record_id!r} is too short to interpolate (length {length})")
    if height < n_channels:
        raise EncodeError(f"height {height} is smaller than the channel count {n_channels}")
    if width < 1:
        raise EncodeError(f"width must be positive, got {width}")
    xs = np.linspace(0.0, length - 1.0, width)
    sample_axis = np.arange(length, dtype=np.float64)
    rows = np.empty((n_channels, width))
    for c in range(n_channels):
        rows[c] = np.interp(xs, sample_axis, r.channels[c])
    if n_channels == 1:
        pixels = np.repeat(rows, height, axis=0)
    else:
        pos = np.linspace(0.0, n_channels - 1.0, height)
        lo = np.minimum(pos.astype(np.int64), n_channels - 2)
        frac = (pos - lo)[:, None]
        pixels = (1.0 - frac) * rows[lo] + frac * rows[lo + 1]
    return EncodedImage(pixels=pixels, source_id=r.record_id)


def cme_pipeline(
    r: EcgRecord,
    height: int,
    width: int,
    skip: int = CANONICAL_SKIP,
    take: int = CANONICAL_TAKE,
    mode: str = "rms",
) -> EncodedImage:
    """window -> factors -> scale -> encode, composed exactly in that order."""
    windowed = window_record(r, skip, take)
    factors = cme_factors(windowed, mode=mode)
    scaled = scale_channels(windowed, factors)
    return encode_image(scaled, height, width)


def write_stats_csv(stats: ChannelMagnitudeStats, class_names, path) -> None:
    """One row per channel: pooled RMS, mean |amplitude|, per-class scale."""
    names = tuple(class_names)
    if stats.per_class_scale.shape[0] != len(names):
        raise DimensionError(
            f"stats cover {stats.per_class_scale.shape[0]} classes, got {len(names)} names"
        )
    with open(path, "w") as fh:
        header = ["channel", "rms", "mean_power"] + [f"scale_{n}" for n in names]
        fh.write(",".join(header) + "\n")
        for c in range(stats.per_channel_rms.size):
            cells = [str(c), repr(float(stats.per_channel_rms[c])), repr(float(stats.per_channel_mean_power[c]))]
            for m in range(len(names)):
                v = stats.per_class_scale[m, c]
                cells.append("nan" if not np.isfinite(v) else repr(float(v)))
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# Image export: a text form for inspection and a raw form for exact exchange


def write_image_csv(img: EncodedImage, path) -> None:
    """Rows of comma-separated shortest round-trip decimals."""
    with open(path, "w") as fh:
        for row in img.pixels.tolist():
            fh.write(",".join(repr(v) for v in row))
            fh.write("\n")


def read_image_csv(path) -> np.ndarray:
    out = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return out


def write_image_raw(img: EncodedImage, path) -> None:
    """16-byte header (height, width as little-endian uint64), then
    row-major little-endian float64 pixels. Byte-exact round trip."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", img.height, img.width))
        fh.write(np.ascontiguousarray(img.pixels, dtype="<f8").tobytes())


def read_image_raw(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise EncodeError(f"{path} is too short to hold a raw image header")
    height, width = struct.unpack("<QQ", blob[:16])
    body = blob[16:]
    expected = height * width * 8
    if len(body) != expected:
        raise EncodeError(f"{path}: expected {expected} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(height, width).astype(np.float64)
