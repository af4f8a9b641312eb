"""Reconstruction of gap-free, time-aligned trimodal streams.

Raw recordings arrive as chunks stamped with absolute UTC start/end times and
sample indices. A chunk whose UTC span implies more samples than it carries
lost its tail; those slots are filled with zeros, as are gaps between chunks.
The three modalities are then truncated to their common UTC overlap, resampled
to the model rates, cut into fixed windows, and labeled by majority duration.

All timeline arithmetic rounds a UTC offset to a slot index with
round-half-up (floor(x + 0.5)); each modality rounds its own boundaries
independently on its own sample grid.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np


class StreamError(ValueError):
    """A chunked stream violates its structural invariants."""


class OverlapError(StreamError):
    """Two chunks of one stream overlap in time."""


class CorruptChunkError(StreamError):
    """A chunk carries more samples than its UTC span allows."""


class AlignmentError(ValueError):
    """Streams passed to segmentation do not cover the same UTC span."""


AUDIO, ECG, IMU = "audio", "ecg", "imu"
MODALITIES = (AUDIO, ECG, IMU)


def slot(rate: float, dt: float) -> int:
    """UTC offset (seconds) -> sample slot count, round half up."""
    return int(np.floor(rate * dt + 0.5))


@dataclass
class Chunk:
    t_start: float
    t_end: float
    s_start: int
    s_end: int
    samples: np.ndarray  # flat float32, frame-major interleaved channels

    @property
    def recorded(self) -> int:
        return self.s_end - self.s_start


@dataclass
class ChunkedStream:
    modality: str
    sample_rate: int
    channels: int
    chunks: list = field(default_factory=list)

    def validate(self) -> None:
        if self.modality not in MODALITIES:
            raise StreamError(f"unknown modality {self.modality!r}")
        prev_end = None
        for i, c in enumerate(self.chunks):
            if c.t_end <= c.t_start:
                raise StreamError(f"chunk {i}: t_end {c.t_end} <= t_start {c.t_start}")
            if c.s_end < c.s_start:
                raise StreamError(f"chunk {i}: s_end {c.s_end} < s_start {c.s_start}")
            if c.samples.size != c.recorded * self.channels:
                raise StreamError(
                    f"chunk {i}: buffer holds {c.samples.size} values, "
                    f"expected {c.recorded * self.channels}"
                )
            if prev_end is not None and c.t_start < prev_end:
                raise OverlapError(f"chunk {i} starts at {c.t_start} before previous end {prev_end}")
            expected = slot(self.sample_rate, c.t_end - c.t_start)
            if c.recorded > expected:
                raise CorruptChunkError(
                    f"chunk {i}: {c.recorded} recorded samples exceed UTC span of {expected}"
                )
            prev_end = c.t_end


@dataclass
class DenseStream:
    modality: str
    sample_rate: int
    channels: int
    t0: float
    samples: np.ndarray  # (channels, frames) float32

    @property
    def frames(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.frames / self.sample_rate

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration


@dataclass(frozen=True)
class LabelInterval:
    t_start: float
    t_end: float
    label: int  # 0 wake, 1 sleep


@dataclass
class LabelTrack:
    intervals: list

    def validate(self) -> None:
        ordered = sorted(self.intervals, key=lambda iv: iv.t_start)
        for i, iv in enumerate(ordered):
            if iv.label not in (0, 1):
                raise ValueError(f"label interval {i}: label must be 0 or 1, got {iv.label}")
            if iv.t_end <= iv.t_start:
                raise ValueError(f"label interval {i}: empty or inverted span")
            if i and iv.t_start < ordered[i - 1].t_end:
                raise ValueError(f"label intervals {i - 1} and {i} overlap")


@dataclass
class Segment:
    """One fixed-length trimodal window. ``label`` is None until assigned."""

    audio: np.ndarray  # (1, n_audio)
    ecg: np.ndarray  # (1, n_ecg)
    imu: np.ndarray  # (channels, n_imu)
    t_start: float
    t_end: float
    label: int | None = None
    family: str | None = None


def zero_fill(stream: ChunkedStream) -> DenseStream:
    """Expand a chunked stream to a dense timeline with missing slots zeroed.

    Each chunk's recorded samples land at the slots implied by its UTC start;
    the unrecorded tail and inter-chunk gaps stay zero. The output always has
    exactly slot(F_s, t_last_end - t0) frames.
    """
    stream.validate()
    if not stream.chunks:
        raise StreamError("cannot zero-fill a stream with no chunks")
    t0 = stream.chunks[0].t_start
    total = slot(stream.sample_rate, stream.chunks[-1].t_end - t0)
    out = np.zeros((stream.channels, total), dtype=np.float32)
    for c in stream.chunks:
        offset = slot(stream.sample_rate, c.t_start - t0)
        n = min(c.recorded, total - offset)
        if n > 0:
            frames = np.asarray(c.samples, dtype=np.float32).reshape(c.recorded, stream.channels).T
            out[:, offset : offset + n] = frames[:, :n]
    return DenseStream(stream.modality, stream.sample_rate, stream.channels, t0, out)


def align_overlap(streams: list[DenseStream]) -> list[DenseStream]:
    """Truncate every stream to the UTC intersection of all of them.

    An empty intersection yields empty streams (with a warning), not an error.
    """
    start = max(s.t0 for s in streams)
    end = min(s.t_end for s in streams)
    if end <= start:
        warnings.warn("streams do not overlap in time; alignment produced empty streams")
        return [
            replace(s, t0=start, samples=np.zeros((s.channels, 0), dtype=np.float32))
            for s in streams
        ]
    out = []
    for s in streams:
        i0 = slot(s.sample_rate, start - s.t0)
        n = slot(s.sample_rate, end - start)
        clipped = s.samples[:, i0 : i0 + n]
        if clipped.shape[1] < n:  # boundary rounding can run one slot past the buffer
            pad = np.zeros((s.channels, n - clipped.shape[1]), dtype=np.float32)
            clipped = np.concatenate([clipped, pad], axis=1)
        out.append(replace(s, t0=start, samples=clipped))
    return out


def resample(stream: DenseStream, target_rate: int) -> DenseStream:
    """Linear interpolation onto a uniform grid at ``target_rate``.

    Output length is round(duration * target_rate); positions past the last
    source sample hold the edge value.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == stream.sample_rate:
        return replace(stream, samples=stream.samples.copy())
    n_src = stream.frames
    n_out = slot(target_rate, stream.duration)
    if n_src == 0 or n_out == 0:
        return replace(stream, sample_rate=target_rate, samples=np.zeros((stream.channels, 0), dtype=np.float32))
    pos = np.arange(n_out) * (stream.sample_rate / target_rate)
    pos = np.clip(pos, 0.0, n_src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_src - 1)
    frac = (pos - lo).astype(np.float32)
    out = stream.samples[:, lo] * (1.0 - frac) + stream.samples[:, hi] * frac
    return replace(stream, sample_rate=target_rate, samples=out.astype(np.float32))


def segment(streams: list[DenseStream], window_seconds: float = 30.0) -> list[Segment]:
    """Cut aligned audio/ECG/IMU streams into consecutive fixed windows.

    The final partial window is discarded. Streams must share their UTC span
    (to within one sample period of the coarsest modality).
    """
    by_mod = {s.modality: s for s in streams}
    if set(by_mod) != set(MODALITIES):
        raise AlignmentError(f"need exactly one stream per modality, got {sorted(by_mod)}")
    audio, ecg, imu = by_mod[AUDIO], by_mod[ECG], by_mod[IMU]

    coarsest_period = 1.0 / min(s.sample_rate for s in streams)
    t0s = [s.t0 for s in streams]
    ends = [s.t_end for s in streams]
    if max(t0s) - min(t0s) > coarsest_period or max(ends) - min(ends) > coarsest_period:
        raise AlignmentError(
            f"streams are not aligned: starts {t0s}, ends {ends}; run align_overlap first"
        )

    windows = {m: slot(by_mod[m].sample_rate, window_seconds) for m in MODALITIES}
    count = min(by_mod[m].frames // windows[m] for m in MODALITIES)
    out = []
    for i in range(count):
        sl = {m: by_mod[m].samples[:, i * windows[m] : (i + 1) * windows[m]] for m in MODALITIES}
        out.append(
            Segment(
                audio=sl[AUDIO],
                ecg=sl[ECG],
                imu=sl[IMU],
                t_start=audio.t0 + i * window_seconds,
                t_end=audio.t0 + (i + 1) * window_seconds,
            )
        )
    return out


def assign_labels(segments: list[Segment], track: LabelTrack, drop_zero_segments: bool = False) -> list[Segment]:
    """Label each window with the state covering the longer duration.

    Exact sleep/wake ties resolve to wake (0). Windows with no label coverage
    at all are dropped. ``drop_zero_segments`` additionally drops windows whose
    every sample is zero (pure zero-fill)."""
    track.validate()
    out = []
    for seg in segments:
        durations = [0.0, 0.0]
        for iv in track.intervals:
            ov = min(seg.t_end, iv.t_end) - max(seg.t_start, iv.t_start)
            if ov > 0:
                durations[iv.label] += ov
        if durations[0] == 0.0 and durations[1] == 0.0:
            continue
        if drop_zero_segments and not (seg.audio.any() or seg.ecg.any() or seg.imu.any()):
            continue
        label = 1 if durations[1] > durations[0] else 0
        out.append(replace(seg, label=label))
    return out
