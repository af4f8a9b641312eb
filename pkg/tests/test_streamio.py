import numpy as np
import pytest

from trisleep.streamio import (
    FormatError,
    read_labels,
    read_segments,
    read_stream,
    write_labels,
    write_segments,
    write_stream,
)
from trisleep.sync import AUDIO, IMU, Chunk, ChunkedStream, LabelInterval, LabelTrack, Segment


def test_stream_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    chunks = [
        Chunk(0.0, 2.0, 0, 180, rng.normal(size=180).astype(np.float32)),
        Chunk(2.5, 4.0, 180, 330, rng.normal(size=150).astype(np.float32)),
    ]
    stream = ChunkedStream(AUDIO, 100, 1, chunks)
    path = tmp_path / "audio.lbcs"
    write_stream(path, stream)
    back = read_stream(path)
    assert back.modality == AUDIO and back.sample_rate == 100 and back.channels == 1
    assert len(back.chunks) == 2
    for a, b in zip(stream.chunks, back.chunks):
        assert (a.t_start, a.t_end, a.s_start, a.s_end) == (b.t_start, b.t_end, b.s_start, b.s_end)
        np.testing.assert_array_equal(a.samples, b.samples)


def test_stream_multichannel_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    chunks = [Chunk(10.0, 11.0, 0, 150, rng.normal(size=150 * 6).astype(np.float32))]
    stream = ChunkedStream(IMU, 150, 6, chunks)
    path = tmp_path / "imu.lbcs"
    write_stream(path, stream)
    back = read_stream(path)
    assert back.channels == 6
    np.testing.assert_array_equal(back.chunks[0].samples, chunks[0].samples)


def test_stream_bad_magic(tmp_path):
    path = tmp_path / "junk.lbcs"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(FormatError):
        read_stream(path)


def test_stream_truncated_file(tmp_path):
    rng = np.random.default_rng(2)
    stream = ChunkedStream(AUDIO, 100, 1, [Chunk(0.0, 1.0, 0, 100, rng.normal(size=100).astype(np.float32))])
    path = tmp_path / "audio.lbcs"
    write_stream(path, stream)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(FormatError):
        read_stream(path)


def test_labels_round_trip(tmp_path):
    track = LabelTrack([LabelInterval(0.0, 90.5, 1), LabelInterval(90.5, 120.25, 0)])
    path = tmp_path / "labels.csv"
    write_labels(path, track)
    text = path.read_text()
    assert text.splitlines()[0] == "t_start,t_end,label"
    back = read_labels(path)
    assert [(iv.t_start, iv.t_end, iv.label) for iv in back.intervals] == [
        (0.0, 90.5, 1),
        (90.5, 120.25, 0),
    ]


def test_labels_reject_bad_header(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("start,end,label\n0,1,0\n")
    with pytest.raises(FormatError):
        read_labels(path)


def test_segment_archive_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    segments = [
        Segment(
            audio=rng.normal(size=(1, 320)).astype(np.float32),
            ecg=rng.normal(size=(1, 320)).astype(np.float32),
            imu=rng.normal(size=(6, 30)).astype(np.float32),
            t_start=2.0 * i,
            t_end=2.0 * (i + 1),
            label=i % 2,
        )
        for i in range(3)
    ]
    path = tmp_path / "segments.lbsg"
    write_segments(path, segments, audio_rate=160, ecg_rate=160, imu_rate=15)
    back, audio_rate, ecg_rate, imu_rate, window = read_segments(path)
    assert (audio_rate, ecg_rate, imu_rate) == (160, 160, 15)
    assert window == pytest.approx(2.0)
    assert len(back) == 3
    for a, b in zip(segments, back):
        assert a.label == b.label
        assert a.t_start == b.t_start
        np.testing.assert_array_equal(a.audio, b.audio)
        np.testing.assert_array_equal(a.ecg, b.ecg)
        np.testing.assert_array_equal(a.imu, b.imu)


def test_segment_archive_requires_labels(tmp_path):
    seg = Segment(
        audio=np.zeros((1, 4), dtype=np.float32),
        ecg=np.zeros((1, 4), dtype=np.float32),
        imu=np.zeros((6, 2), dtype=np.float32),
        t_start=0.0,
        t_end=2.0,
    )
    with pytest.raises(ValueError):
        write_segments(tmp_path / "x.lbsg", [seg], 160, 160, 15)
