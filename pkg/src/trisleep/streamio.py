"""On-disk formats for chunked streams, label tracks, and segment archives.

All binary layouts are little-endian; see FORMATS.md at the repo root for the
byte-level documentation. Floats in sample payloads are 32-bit.
"""

import csv
import struct

import numpy as np

from .sync import AUDIO, ECG, IMU, Chunk, ChunkedStream, LabelInterval, LabelTrack, Segment

STREAM_MAGIC = b"LBCS"
SEGMENT_MAGIC = b"LBSG"
SEGMENT_VERSION = 1

_MODALITY_CODE = {AUDIO: 0, ECG: 1, IMU: 2}
_CODE_MODALITY = {v: k for k, v in _MODALITY_CODE.items()}


class FormatError(ValueError):
    """A file does not parse as the format it claims to be."""


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


# ---- chunked stream files (LBCS) --------------------------------------------


def write_stream(path, stream: ChunkedStream) -> None:
    with open(path, "wb") as f:
        f.write(STREAM_MAGIC)
        f.write(struct.pack("<BIB I", _MODALITY_CODE[stream.modality], stream.sample_rate, stream.channels, len(stream.chunks)))
        for c in stream.chunks:
            f.write(struct.pack("<ddQQ", c.t_start, c.t_end, c.s_start, c.s_end))
            f.write(np.asarray(c.samples, dtype="<f4").tobytes())


def read_stream(path) -> ChunkedStream:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != STREAM_MAGIC:
            raise FormatError(f"{path}: bad magic, not a chunked stream file")
        code, rate, channels, n_chunks = struct.unpack("<BIB I", _read_exact(f, 10))
        if code not in _CODE_MODALITY:
            raise FormatError(f"{path}: unknown modality code {code}")
        chunks = []
        for _ in range(n_chunks):
            t0, t1, s0, s1 = struct.unpack("<ddQQ", _read_exact(f, 32))
            n_values = (s1 - s0) * channels
            samples = np.frombuffer(_read_exact(f, 4 * n_values), dtype="<f4").copy()
            chunks.append(Chunk(t0, t1, int(s0), int(s1), samples))
    return ChunkedStream(_CODE_MODALITY[code], rate, channels, chunks)


# ---- label files (CSV) -------------------------------------------------------


def write_labels(path, track: LabelTrack) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t_start", "t_end", "label"])
        for iv in track.intervals:
            writer.writerow([f"{iv.t_start:.6f}", f"{iv.t_end:.6f}", iv.label])


def read_labels(path) -> LabelTrack:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["t_start", "t_end", "label"]:
            raise FormatError(f"{path}: expected header t_start,t_end,label, got {header}")
        intervals = []
        for row in reader:
            if not row:
                continue
            t0, t1, label = float(row[0]), float(row[1]), int(row[2])
            if label not in (0, 1):
                raise FormatError(f"{path}: label must be 0 or 1, got {label}")
            intervals.append(LabelInterval(t0, t1, label))
    return LabelTrack(intervals)


# ---- segment archives (LBSG) --------------------------------------------------


def write_segments(path, segments: list[Segment], audio_rate: int, ecg_rate: int, imu_rate: int) -> None:
    if any(s.label is None for s in segments):
        raise ValueError("segments must be labeled before archiving")
    window = segments[0].t_end - segments[0].t_start if segments else 0.0
    imu_channels = segments[0].imu.shape[0] if segments else 6
    with open(path, "wb") as f:
        f.write(SEGMENT_MAGIC)
        f.write(struct.pack("<HIIIBfI", SEGMENT_VERSION, audio_rate, ecg_rate, imu_rate, imu_channels, window, len(segments)))
        for s in segments:
            f.write(struct.pack("<dBIII", s.t_start, s.label, s.audio.shape[1], s.ecg.shape[1], s.imu.shape[1]))
            f.write(np.asarray(s.audio, dtype="<f4").tobytes())
            f.write(np.asarray(s.ecg, dtype="<f4").tobytes())
            f.write(np.asarray(s.imu.T, dtype="<f4").tobytes())  # frame-major on disk


def read_segments(path):
    """Returns (segments, audio_rate, ecg_rate, imu_rate, window_seconds)."""
    with open(path, "rb") as f:
        if _read_exact(f, 4) != SEGMENT_MAGIC:
            raise FormatError(f"{path}: bad magic, not a segment archive")
        version, audio_rate, ecg_rate, imu_rate, imu_channels, window, count = struct.unpack(
            "<HIIIBfI", _read_exact(f, 23)
        )
        if version != SEGMENT_VERSION:
            raise FormatError(f"{path}: unsupported segment archive version {version}")
        segments = []
        for _ in range(count):
            t_start, label, n_audio, n_ecg, n_imu = struct.unpack("<dBIII", _read_exact(f, 21))
            audio = np.frombuffer(_read_exact(f, 4 * n_audio), dtype="<f4").reshape(1, n_audio).copy()
            ecg = np.frombuffer(_read_exact(f, 4 * n_ecg), dtype="<f4").reshape(1, n_ecg).copy()
            imu = (
                np.frombuffer(_read_exact(f, 4 * n_imu * imu_channels), dtype="<f4")
                .reshape(n_imu, imu_channels)
                .T.copy()
            )
            segments.append(
                Segment(audio=audio, ecg=ecg, imu=imu, t_start=t_start, t_end=t_start + window, label=int(label))
            )
    return segments, audio_rate, ecg_rate, imu_rate, window
