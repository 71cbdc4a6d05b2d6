import subprocess
import sys

import pytest

from ecgbalance import load_csv, load_model
from ecgbalance.cli import main

SYNTH_SPEC = """\
classes = 3
head_count = 5
channels = 2
length = 80
noise_sd = 0.4
sample_rate = 200
seed = 3
"""

EXPERIMENT_SPEC = """\
loss = iwl
alpha = none
encode = cme, raw
seeds = 0
epochs = 1
learning_rate = 0.01
batch_size = 8
hidden = 8
train_fraction = 0.75
image.height = 4
image.width = 10
window.skip = 0
window.take = 80
raw.take = 80
data.classes = 3
data.head_count = 5
data.channels = 2
data.length = 80
data.noise_sd = 0.4
data.sample_rate = 200
"""

TRAIN_FLAGS = [
    "--epochs", "2",
    "--hidden", "8",
    "--batch-size", "8",
    "--height", "4",
    "--width", "10",
    "--skip", "0",
    "--take", "80",
    "--raw-take", "80",
]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "synth.txt"
    spec.write_text(SYNTH_SPEC)
    out = root / "data"
    assert main(["synth", "--spec", str(spec), "--out", str(out)]) == 0
    return out


# ---------------------------------------------------------------------------
# Entry point plumbing


def test_no_command_is_a_usage_error(capsys):
    assert main([]) == 1
    assert "a command is required" in capsys.readouterr().err


def test_unknown_flag_is_a_usage_error(capsys):
    assert main(["synth", "--bogus", "x"]) == 1
    assert "error" in capsys.readouterr().err


def test_version_via_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "ecgbalance", "--version"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip().startswith("ecgbalance ")


# ---------------------------------------------------------------------------
# synth


def test_synth_is_byte_deterministic(tmp_path, data_dir):
    spec = tmp_path / "synth.txt"
    spec.write_text(SYNTH_SPEC)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["synth", "--spec", str(spec), "--out", str(a)]) == 0
    assert main(["synth", "--spec", str(spec), "--out", str(b)]) == 0
    files_a = sorted(p.name for p in a.iterdir())
    assert files_a == sorted(p.name for p in b.iterdir())
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # The fixture dataset used the same spec: identical bytes there too.
    assert (a / "manifest.csv").read_bytes() == (data_dir / "manifest.csv").read_bytes()


def test_synth_seed_override_changes_data(tmp_path):
    spec = tmp_path / "synth.txt"
    spec.write_text(SYNTH_SPEC)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["synth", "--spec", str(spec), "--out", str(a)]) == 0
    assert main(["synth", "--spec", str(spec), "--out", str(b), "--seed", "7"]) == 0
    names = sorted(p.name for p in a.iterdir() if p.suffix == ".csv" and p.name != "manifest.csv")
    assert any((a / n).read_bytes() != (b / n).read_bytes() for n in names)


def test_synth_rejects_typo_keys(tmp_path, capsys):
    spec = tmp_path / "synth.txt"
    spec.write_text(SYNTH_SPEC + "noise_ds = 1.0\n")
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "x")]) == 2
    assert "noise_ds" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# analyze


def test_analyze_to_file(tmp_path, data_dir):
    out = tmp_path / "stats.csv"
    assert main(["analyze", "--data", str(data_dir), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("channel,")
    assert len(lines) > 1


def test_analyze_to_stdout(capsys, data_dir):
    assert main(["analyze", "--data", str(data_dir)]) == 0
    assert "channel 0:" in capsys.readouterr().out


def test_analyze_missing_directory(tmp_path, capsys):
    assert main(["analyze", "--data", str(tmp_path / "nope")]) == 2
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# encode


def test_encode_both_formats(tmp_path, data_dir):
    out = tmp_path / "img"
    args = ["encode", "--data", str(data_dir), "--out", str(out), "--height", "4", "--width", "10", "--skip", "0", "--take", "80", "--format", "both"]
    assert main(args) == 0
    csvs = sorted(out.glob("*.csv"))
    raws = sorted(out.glob("*.f64"))
    assert len(csvs) == 15 and len(raws) == 15
    assert raws[0].stat().st_size == 16 + 4 * 10 * 8


def test_encode_single_record_and_no_equalize(tmp_path, data_dir):
    record_id = load_csv(data_dir).records[0].record_id
    out = tmp_path / "one"
    args = ["encode", "--data", str(data_dir), "--out", str(out), "--height", "4", "--width", "10", "--skip", "0", "--take", "80", "--record", record_id, "--no-equalize"]
    assert main(args) == 0
    assert [p.name for p in out.iterdir()] == [f"{record_id}.csv"]


def test_encode_unknown_record(tmp_path, data_dir, capsys):
    args = ["encode", "--data", str(data_dir), "--out", str(tmp_path / "x"), "--record", "ghost"]
    assert main(args) == 1
    assert "ghost" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# resample


def test_resample_requires_a_choice(data_dir, tmp_path, capsys):
    assert main(["resample", "--data", str(data_dir), "--out", str(tmp_path / "x")]) == 1
    assert "--alpha" in capsys.readouterr().err


def test_resample_alpha(tmp_path, data_dir):
    out = tmp_path / "tail"
    assert main(["resample", "--data", str(data_dir), "--alpha", "0.5", "--out", str(out)]) == 0
    d = load_csv(out)
    assert d.class_counts().tolist() == [5, 3, 2]
    hist = (out / "histogram.csv").read_text().splitlines()
    assert hist[0] == "class,before,after"
    assert len(hist) == 4


def test_resample_passthrough(tmp_path, data_dir):
    out = tmp_path / "same"
    assert main(["resample", "--data", str(data_dir), "--no-resample", "--out", str(out)]) == 0
    assert load_csv(out).class_counts().tolist() == [5, 5, 5]


# ---------------------------------------------------------------------------
# gradcheck


def test_gradcheck_all_losses_pass(capsys, tmp_path):
    out = tmp_path / "report.csv"
    assert main(["gradcheck", "--loss", "all", "--trials", "10", "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert stdout.count("gradcheck") == 6
    assert "FAIL" not in stdout
    lines = out.read_text().splitlines()
    assert lines[0] == "loss,trials,max_rel_error,threshold,status"
    assert len(lines) == 7 and all(l.endswith(",pass") for l in lines[1:])


def test_gradcheck_absurd_threshold_fails(capsys, tmp_path):
    out = tmp_path / "report.csv"
    code = main(["gradcheck", "--loss", "iwl", "--trials", "5", "--threshold", "1e-20", "--out", str(out)])
    assert code == 3
    assert "FAIL" in capsys.readouterr().out
    assert out.read_text().splitlines()[1].endswith(",fail")


def test_gradcheck_base_ten(capsys):
    assert main(["gradcheck", "--loss", "iwl", "--log-base", "10", "--trials", "10"]) == 0


# ---------------------------------------------------------------------------
# train / eval


def test_train_then_eval(tmp_path, data_dir, capsys):
    model_path = tmp_path / "model.bin"
    log_path = tmp_path / "log.csv"
    args = ["train", "--data", str(data_dir), "--out", str(model_path), "--log", str(log_path)] + TRAIN_FLAGS
    assert main(args) == 0
    model = load_model(model_path)
    assert model.num_classes == 3
    log_lines = log_path.read_text().splitlines()
    assert log_lines[0] == "epoch,mean_loss"
    assert len(log_lines) == 3

    metrics_path = tmp_path / "metrics.csv"
    cm_path = tmp_path / "cm.csv"
    capsys.readouterr()
    args = [
        "eval", "--model", str(model_path), "--data", str(data_dir),
        "--split", "test", "--train-fraction", "0.75",
        "--out", str(metrics_path), "--confusion", str(cm_path),
    ]
    assert main(args) == 0
    assert "accuracy" in capsys.readouterr().out
    metric_lines = metrics_path.read_text().splitlines()
    assert metric_lines[0] == "metric,value"
    assert metric_lines[1].startswith("accuracy,")
    cm_lines = cm_path.read_text().splitlines()
    assert len(cm_lines) == 4  # header + one row per class


def test_eval_to_stdout(tmp_path, data_dir, capsys):
    model_path = tmp_path / "model.bin"
    assert main(["train", "--data", str(data_dir), "--out", str(model_path)] + TRAIN_FLAGS) == 0
    capsys.readouterr()
    assert main(["eval", "--model", str(model_path), "--data", str(data_dir)]) == 0
    out = capsys.readouterr().out
    assert "metric,value" in out
    assert "class,precision,recall,f1,support" in out


def test_eval_rejects_non_model_file(tmp_path, data_dir, capsys):
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"not a model")
    assert main(["eval", "--model", str(junk), "--data", str(data_dir)]) == 2


def test_train_bad_loss_name(tmp_path, data_dir):
    args = ["train", "--data", str(data_dir), "--out", str(tmp_path / "m.bin"), "--loss", "hinge"] + TRAIN_FLAGS
    assert main(args) == 2


def test_train_raw_encoder(tmp_path, data_dir):
    model_path = tmp_path / "model.bin"
    args = ["train", "--data", str(data_dir), "--out", str(model_path), "--encode", "raw"] + TRAIN_FLAGS
    assert main(args) == 0
    assert load_model(model_path).input_dim == 2 * 80


# ---------------------------------------------------------------------------
# experiment


def test_experiment_command(tmp_path, capsys):
    spec = tmp_path / "grid.txt"
    spec.write_text(EXPERIMENT_SPEC)
    out = tmp_path / "results.csv"
    assert main(["experiment", "--spec", str(spec), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3  # header + cme + raw cells
    assert lines[1].startswith("iwl,0.3,none,cme,1,")
    assert "wrote 2 result rows" in capsys.readouterr().out
