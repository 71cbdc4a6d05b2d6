import math
import struct

import numpy as np
import pytest

from ecgbalance import (
    channel_stats,
    cme_factors,
    cme_pipeline,
    encode_image,
    scale_channels,
    window_record,
)
from ecgbalance.equalizer import (
    read_image_csv,
    read_image_raw,
    write_image_csv,
    write_image_raw,
    write_stats_csv,
)
from ecgbalance.errors import DimensionError, EmptyDataset, EncodeError, SpecError

from conftest import dataset_from_arrays, make_record, random_record, tiny_dataset


# ---------------------------------------------------------------------------
# channel_stats


def test_stats_constant_channels_are_symmetric():
    arrays = [np.full((3, 10), -2.0), np.full((3, 10), -2.0)]
    d = dataset_from_arrays(arrays, [0, 1], ("a", "b"))
    stats = channel_stats(d)
    assert np.allclose(stats.per_channel_rms, 2.0)
    assert np.allclose(stats.per_channel_mean_power, 2.0)
    assert np.allclose(stats.per_class_scale, 1.0)


def test_stats_doubled_channel_scales_by_two():
    rng = np.random.default_rng(5)
    arrays = []
    for _ in range(6):
        base = rng.normal(size=(1, 40))
        arrays.append(np.vstack([base, 2.0 * base]))
    d = dataset_from_arrays(arrays, [0, 0, 1, 1, 2, 2], ("a", "b", "c"))
    stats = channel_stats(d)
    for m in range(3):
        ratio = stats.per_class_scale[m, 1] / stats.per_class_scale[m, 0]
        assert ratio == pytest.approx(2.0, rel=1e-12)


def test_stats_match_generator_gains():
    # Two seconds at 500 Hz covers whole periods for every class frequency,
    # so per-channel phase offsets do not perturb the rms ratios.
    d = tiny_dataset(n_channels=3, per_class=5, length=1000, noise_sd=0.0)
    # Gains fall by decades: 1, 0.1, 0.01.
    stats = channel_stats(d)
    ratios = stats.per_channel_rms / stats.per_channel_rms[0]
    assert ratios[1] == pytest.approx(0.1, rel=0.10)
    assert ratios[2] == pytest.approx(0.01, rel=0.10)


def test_stats_class_frequency_weighted_scale_mean_is_one():
    d = tiny_dataset(n_classes=3, per_class=4, noise_sd=0.3)
    stats = channel_stats(d)
    weights = d.class_counts() / len(d)
    grand = float((stats.per_class_scale * weights[:, None]).sum() / d.num_channels * 1.0)
    # Weighted row mean over classes, averaged over channels, recovers 1.
    assert grand == pytest.approx(1.0, abs=1e-9)


def test_stats_empty_class_is_flagged_not_fabricated():
    arrays = [np.ones((2, 8)), np.ones((2, 8))]
    d = dataset_from_arrays(arrays, [0, 0], ("a", "b"))
    stats = channel_stats(d)
    assert stats.class_defined.tolist() == [True, False]
    assert np.isnan(stats.per_class_scale[1]).all()


def test_stats_need_records():
    from ecgbalance import Dataset

    with pytest.raises(EmptyDataset):
        channel_stats(Dataset(records=(), class_names=("a", "b")))


def test_stats_csv_lists_every_channel(tmp_path):
    d = tiny_dataset()
    stats = channel_stats(d)
    out = tmp_path / "stats.csv"
    write_stats_csv(stats, d.class_names, out)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("channel,rms,mean_power,scale_")
    assert len(lines) == 1 + d.num_channels


# ---------------------------------------------------------------------------
# cme_factors


def test_factors_equal_magnitudes_are_uniform():
    r = make_record(np.ones((4, 10)))
    k = cme_factors(r).k
    assert np.array_equal(k, np.full(4, 0.25))


def test_factors_two_channel_softmax_oracle():
    # RMS magnitudes exactly 1 and 2; softmax(-g) of [1, 2].
    r = make_record(np.vstack([np.ones(16), 2.0 * np.ones(16)]))
    k = cme_factors(r).k
    assert k[0] == pytest.approx(0.7310585786300049, abs=1e-15)
    assert k[1] == pytest.approx(0.2689414213699951, abs=1e-15)


def test_factors_all_zero_record_is_uniform():
    r = make_record(np.zeros((12, 30)))
    assert np.array_equal(cme_factors(r).k, np.full(12, 1.0 / 12.0))


def test_factors_survive_extreme_magnitudes():
    r = make_record(np.vstack([np.full(8, 1e6), np.full(8, 1e-6), np.zeros(8)]))
    k = cme_factors(r).k
    assert np.all(np.isfinite(k))
    assert math.fsum(k.tolist()) == pytest.approx(1.0, abs=1e-12)
    assert k[0] < k[1] < k[2]


def test_factors_sum_permutation_and_antimonotone(rng):
    for _ in range(300):
        r = random_record(rng)
        k = cme_factors(r).k
        assert abs(math.fsum(k.tolist()) - 1.0) <= 1e-12
        perm = rng.permutation(r.num_channels)
        k_perm = cme_factors(make_record(r.channels[perm])).k
        # Equivariance is exact, not approximate.
        assert np.array_equal(k_perm, k[perm])
        rms = np.sqrt(np.mean(r.channels**2, axis=1))
        for a in range(r.num_channels):
            for b in range(r.num_channels):
                if rms[a] - rms[b] > 1e-9:
                    # Strictly anti-monotone until the softmax underflows;
                    # factors that collapse to subnormals can only tie.
                    if k[b] > 1e-280:
                        assert k[a] < k[b]
                    else:
                        assert k[a] <= k[b]


def test_factors_l2_mode_is_length_sensitive():
    # Same RMS pair, doubled length: RMS factors stay put, L2 factors move.
    short = make_record(np.vstack([np.ones(8), 2.0 * np.ones(8)]))
    long = make_record(np.vstack([np.ones(32), 2.0 * np.ones(32)]))
    assert np.array_equal(cme_factors(short).k, cme_factors(long).k)
    k_short = cme_factors(short, mode="l2").k
    k_long = cme_factors(long, mode="l2").k
    assert not np.array_equal(k_short, k_long)
    assert k_long[0] > k_short[0]


def test_factors_unknown_mode():
    r = make_record(np.ones((2, 4)))
    with pytest.raises(SpecError):
        cme_factors(r, mode="power")


# ---------------------------------------------------------------------------
# scale_channels


def test_scale_uniform_factor():
    r = make_record(np.arange(12.0).reshape(3, 4))
    out = scale_channels(r, np.full(3, 1.0 / 3.0))
    # Scaling multiplies by the factor; x * (1/3) and x / 3 differ by an ulp.
    assert np.array_equal(out.channels, r.channels * (1.0 / 3.0))
    assert out.label == r.label and out.record_id == r.record_id


def test_scale_sets_rms_ratio_exactly(rng):
    for _ in range(50):
        r = random_record(rng)
        k = cme_factors(r)
        out = scale_channels(r, k)
        rms_in = np.sqrt(np.mean(r.channels**2, axis=1))
        rms_out = np.sqrt(np.mean(out.channels**2, axis=1))
        mask = rms_in > 0
        assert np.allclose(rms_out[mask] / rms_in[mask], k.k[mask], atol=1e-12)


def test_scale_length_mismatch():
    r = make_record(np.ones((3, 4)))
    with pytest.raises(DimensionError):
        scale_channels(r, np.array([0.5, 0.5]))


# ---------------------------------------------------------------------------
# encode_image


def test_encode_identity_grid_reproduces_record():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 25))
    img = encode_image(make_record(x), height=4, width=25)
    assert np.array_equal(img.pixels, x)


def test_encode_constant_channel_rows():
    x = np.vstack([np.full(10, 3.0), np.full(10, -1.0)])
    img = encode_image(make_record(x), height=5, width=7)
    assert np.allclose(img.pixels[0], 3.0)
    assert np.allclose(img.pixels[-1], -1.0)


def test_encode_rows_are_convex_combinations_of_adjacent_channels():
    x = np.vstack([np.zeros(6), np.ones(6)])
    img = encode_image(make_record(x), height=3, width=6)
    assert np.allclose(img.pixels[1], 0.5)


def test_encode_pixels_stay_in_input_range(rng):
    for _ in range(100):
        r = random_record(rng, length=int(rng.integers(2, 40)))
        h = int(rng.integers(r.num_channels, 2 * r.num_channels + 4))
        w = int(rng.integers(1, 60))
        img = encode_image(r, height=h, width=w)
        assert img.pixels.min() >= r.channels.min() - 1e-12
        assert img.pixels.max() <= r.channels.max() + 1e-12


def test_encode_single_channel_repeats_rows():
    x = np.sin(np.linspace(0, 2 * np.pi, 30))[None, :]
    img = encode_image(make_record(x), height=4, width=30)
    for row in img.pixels:
        assert np.array_equal(row, img.pixels[0])


def test_encode_tone_keeps_peak_frequency():
    fs = 500.0
    n = 1000
    t = np.arange(n) / fs
    tone = np.sin(2 * np.pi * 5.0 * t)
    img = encode_image(make_record(tone[None, :], sample_rate=fs), height=1, width=500)
    span = (n - 1) / fs
    freqs = np.fft.rfftfreq(500, d=span / 499)
    row = img.pixels[0] - img.pixels[0].mean()
    peak = freqs[np.argmax(np.abs(np.fft.rfft(row)))]
    assert abs(peak - 5.0) <= freqs[1]


def test_encode_rejects_short_records_and_small_heights():
    with pytest.raises(EncodeError):
        encode_image(make_record(np.ones((2, 1))), height=4, width=8)
    with pytest.raises(EncodeError):
        encode_image(make_record(np.ones((4, 10))), height=3, width=8)
    with pytest.raises(EncodeError):
        encode_image(make_record(np.ones((2, 10))), height=2, width=0)


# ---------------------------------------------------------------------------
# cme_pipeline


def test_pipeline_equals_manual_composition(rng):
    r = random_record(rng, n_channels=4, length=3000)
    img = cme_pipeline(r, height=8, width=64)
    windowed = window_record(r, 500, 2500)
    scaled = scale_channels(windowed, cme_factors(windowed))
    manual = encode_image(scaled, 8, 64)
    assert np.array_equal(img.pixels, manual.pixels)
    assert img.source_id == r.record_id


def test_pipeline_dominant_channel_gets_smallest_factor():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(3, 3000))
    x[1] *= 50.0
    r = make_record(x)
    k = cme_factors(window_record(r, 500, 2500)).k
    assert np.argmin(k) == 1


def test_pipeline_channel_permutation_permutes_rows():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 3000)) * np.array([1.0, 3.0, 0.2, 7.0])[:, None]
    perm = np.array([2, 0, 3, 1])
    a = cme_pipeline(make_record(x), height=4, width=40)
    b = cme_pipeline(make_record(x[perm]), height=4, width=40)
    # H = C keeps one row per channel, so rows permute exactly.
    assert np.array_equal(b.pixels, a.pixels[perm])


# ---------------------------------------------------------------------------
# image export


def test_image_csv_round_trip(tmp_path, rng):
    img = encode_image(random_record(rng, n_channels=3, length=40), height=5, width=16)
    path = tmp_path / "img.csv"
    write_image_csv(img, path)
    back = read_image_csv(path)
    assert np.array_equal(back, img.pixels)


def test_image_raw_format_and_round_trip(tmp_path, rng):
    img = encode_image(random_record(rng, n_channels=2, length=20), height=4, width=9)
    path = tmp_path / "img.f64"
    write_image_raw(img, path)
    blob = path.read_bytes()
    # Exactly a 16-byte header then H*W little-endian doubles.
    assert len(blob) == 16 + 4 * 9 * 8
    h, w = struct.unpack("<QQ", blob[:16])
    assert (h, w) == (4, 9)
    assert np.array_equal(read_image_raw(path), img.pixels)


def test_image_raw_truncation_detected(tmp_path):
    path = tmp_path / "bad.f64"
    path.write_bytes(struct.pack("<QQ", 2, 3) + b"\x00" * 10)
    with pytest.raises(EncodeError):
        read_image_raw(path)
