import numpy as np
import pytest

from trisleep.harness.cli import main
from trisleep.streamio import read_labels, read_segments, read_stream


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    # 120 s keeps the CLI path fast; the hours flag takes fractions
    assert main(["synth", "--seed", "7", "--hours", str(120 / 3600), "--out", str(out)]) == 0
    return out


def test_synth_writes_streams_and_labels(synth_dir):
    for name in ("audio.lbcs", "ecg.lbcs", "imu.lbcs", "labels.csv"):
        assert (synth_dir / name).exists()
    audio = read_stream(synth_dir / "audio.lbcs")
    assert audio.sample_rate == 24000
    imu = read_stream(synth_dir / "imu.lbcs")
    assert imu.channels == 6
    track = read_labels(synth_dir / "labels.csv")
    assert len(track.intervals) >= 1


def test_synth_is_deterministic(synth_dir, tmp_path):
    again = tmp_path / "again"
    assert main(["synth", "--seed", "7", "--hours", str(120 / 3600), "--out", str(again)]) == 0
    assert (again / "audio.lbcs").read_bytes() == (synth_dir / "audio.lbcs").read_bytes()
    assert (again / "labels.csv").read_text() == (synth_dir / "labels.csv").read_text()


@pytest.fixture(scope="module")
def segment_archive(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("segs") / "segments.lbsg"
    code = main(
        [
            "sync",
            "--audio", str(synth_dir / "audio.lbcs"),
            "--ecg", str(synth_dir / "ecg.lbcs"),
            "--imu", str(synth_dir / "imu.lbcs"),
            "--labels", str(synth_dir / "labels.csv"),
            "--out", str(out),
            "--window", "2",
            "--audio-rate", "2000",
            "--ecg-rate", "2000",
        ]
    )
    assert code == 0
    return out


def test_sync_archive_contents(segment_archive):
    segments, audio_rate, ecg_rate, imu_rate, window = read_segments(segment_archive)
    assert (audio_rate, ecg_rate, imu_rate) == (2000, 2000, 150)
    assert window == pytest.approx(2.0)
    assert len(segments) >= 40
    assert segments[0].audio.shape == (1, 4000)
    assert segments[0].imu.shape == (6, 300)


def test_finetune_eval_round_trip(segment_archive, tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(
        "seed=5\nscale=toy\nwindow_seconds=2\naudio_rate=2000\necg_rate=2000\n"
        "max_steps=12\nbatch_size=8\nlr=0.0005\n"
    )
    out = tmp_path / "run"
    code = main(
        ["finetune", "--config", str(cfg), "--fusion", "cross", "--schedule", "mod4",
         "--data", str(segment_archive), "--out", str(out)]
    )
    assert code == 0
    assert (out / "model.lbck").exists()
    assert (out / "report.json").exists()
    log = (out / "run.log").read_text()
    assert "seed=5" in log and "schedule=mod4" in log and "version=" in log

    code = main(
        ["eval", "--config", str(cfg), "--seed", "5", "--checkpoint", str(out / "model.lbck"),
         "--data", str(segment_archive)]
    )
    assert code == 0


def test_eval_rejects_mismatched_config(segment_archive, tmp_path, capsys):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(
        "seed=5\nscale=toy\nwindow_seconds=2\naudio_rate=2000\necg_rate=2000\n"
        "max_steps=6\nbatch_size=8\n"
    )
    out = tmp_path / "run"
    assert main(["finetune", "--config", str(cfg), "--data", str(segment_archive), "--out", str(out)]) == 0
    wrong = tmp_path / "wrong.cfg"
    wrong.write_text(cfg.read_text() + "mode=late\nschedule=none\n")
    code = main(
        ["eval", "--config", str(wrong), "--checkpoint", str(out / "model.lbck"),
         "--data", str(segment_archive)]
    )
    assert code == 1
    assert "different model config" in capsys.readouterr().err


def test_pretrain_command(segment_archive, tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(
        "seed=6\nscale=toy\nwindow_seconds=2\naudio_rate=2000\necg_rate=2000\nbatch_size=8\n"
    )
    out = tmp_path / "imu_pre.lbck"
    code = main(
        ["pretrain", "--config", str(cfg), "--modality", "imu", "--data", str(segment_archive),
         "--out", str(out), "--steps", "8"]
    )
    assert code == 0
    assert out.exists()


def test_gradcheck_command(tmp_path):
    code = main(["gradcheck", "--seed", "4", "--max-elements", "3"])
    assert code == 0


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--seed", "1", "--frobnicate", "yes"])
    assert exc.value.code == 2


def test_runtime_failure_exits_1(tmp_path, capsys):
    code = main(["eval", "--seed", "1", "--checkpoint", str(tmp_path / "absent.lbck"),
                 "--data", str(tmp_path / "absent.lbsg")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1  # single-line diagnostic


def test_missing_seed_without_config_fails(tmp_path, capsys):
    code = main(["gradcheck"])
    assert code == 1
    assert "--seed is required" in capsys.readouterr().err
