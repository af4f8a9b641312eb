"""Synthetic trimodal recordings with a known sleep/wake ground truth.

A two-state latent chain with exponential dwell times drives per-state
emissions at the real device rates (audio 24 kHz, ECG 2381 Hz, IMU 150 Hz).
Because the model normalizes per-frame energy, the states are separated by
signal *structure*, not loudness:

  audio  — wake is broadband noise with frequent voice-band bursts
           (0.5/s, 250-600 Hz); sleep is band-limited noise (breathing-like
           spectrum, ~40 Hz) with rare bursts (0.04/s);
  ecg    — a pulse train whose inter-beat interval lengthens in sleep
           (0.40 s wake vs 0.55 s sleep) riding on a respiratory baseline
           wander that is pronounced and slow in sleep, faint and faster
           in wake;
  imu    — sleep is lying still: gravity fixed on one accelerometer axis,
           a slow breathing tilt, near-silent gyros; wake is held/carried:
           the gravity direction wanders per block, gyros are active, and
           movement bursts arrive at 0.6/s.

Two knobs make the task realistically hard: per-dwell intensity jitter, and a
per-modality chance (``confusion_prob``) that one dwell period emits with the
other state's parameters. Confusions are drawn independently per modality, so
single-branch classifiers hit a ceiling that trimodal fusion can exceed.

Streams are chunked with missing tails and per-modality span offsets so the
synchronization path is exercised end to end; labels are the true states.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..numcore.random import generator
from ..sync import AUDIO, ECG, IMU, Chunk, ChunkedStream, LabelInterval, LabelTrack

AUDIO_RATE = 24000
ECG_RATE = 2381
IMU_RATE = 150
IMU_CHANNELS = 6


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    duration: float = 3600.0
    wake_dwell_mean: float = 90.0
    sleep_dwell_mean: float = 120.0
    min_dwell: float = 20.0
    confusion_prob: float = 0.15
    confusion_by_modality: tuple | None = None  # (audio, ecg, imu) overrides
    confusion_block_seconds: float = 10.0
    intensity_jitter: float = 0.25
    audio_noise: tuple = (0.25, 0.20)  # (wake, sleep)
    audio_burst_rate: tuple = (0.5, 0.04)
    audio_burst_amp: tuple = (0.8, 0.25)
    audio_sleep_bandwidth: float = 40.0  # Hz; wake noise is broadband
    breathing_hz: float = 0.4
    breathing_depth: float = 0.5
    imu_sleep_bandwidth: float = 3.0
    ecg_ibi: tuple = (0.40, 0.55)
    ecg_jitter: tuple = (0.050, 0.010)
    ecg_wander_amp: tuple = (0.03, 0.18)
    ecg_wander_hz: tuple = (0.9, 0.35)
    imu_noise: tuple = (0.08, 0.02)
    imu_gyro_noise: tuple = (0.15, 0.01)
    imu_burst_rate: tuple = (0.6, 0.05)
    imu_burst_amp: tuple = (1.0, 0.30)
    imu_tilt_amp: float = 0.08
    chunk_seconds: float = 60.0
    missing_tail_fraction: float = 0.01
    modality_offset: float = 1.5

    def __post_init__(self):
        if self.duration < 60.0:
            raise ValueError("synthetic recordings must be at least 60 s long")


def synth_states(spec: SynthSpec) -> LabelTrack:
    """The latent wake/sleep intervals covering [0, duration]."""
    rng = generator(spec.seed, "synth", "states")
    intervals = []
    t = 0.0
    state = int(rng.integers(0, 2))
    while t < spec.duration:
        mean = spec.sleep_dwell_mean if state == 1 else spec.wake_dwell_mean
        dwell = max(spec.min_dwell, float(rng.exponential(mean)))
        end = min(t + dwell, spec.duration)
        intervals.append(LabelInterval(t, end, state))
        t = end
        state = 1 - state
    return LabelTrack(intervals)


def _emission_params(spec: SynthSpec, intervals, modality: str):
    """Effective emission state and intensity per block for one modality.

    Dwell intervals are subdivided into ~confusion_block_seconds pieces; each
    piece independently flips to the opposite state's parameters with
    probability confusion_prob and jitters its intensity. Independent draws
    per modality keep single-branch accuracy bounded away from 1 while the
    majority across three modalities stays reliable."""
    rng = generator(spec.seed, "synth", "confusion", modality)
    if spec.confusion_by_modality is not None:
        prob = spec.confusion_by_modality[(AUDIO, ECG, IMU).index(modality)]
    else:
        prob = spec.confusion_prob
    out = []
    for iv in intervals:
        n_blocks = max(1, int(round((iv.t_end - iv.t_start) / spec.confusion_block_seconds)))
        edges = np.linspace(iv.t_start, iv.t_end, n_blocks + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            state = iv.label
            if rng.random() < prob:
                state = 1 - state
            intensity = 1.0 + spec.intensity_jitter * float(rng.uniform(-1.0, 1.0))
            out.append((LabelInterval(float(a), float(b), iv.label), state, intensity))
    return out


def _slow_noise(n: int, rate: float, bandwidth_hz: float, rng) -> np.ndarray:
    """Unit-variance noise band-limited to ~bandwidth_hz: white noise drawn on
    a coarse grid and linearly upsampled."""
    coarse_n = max(2, int(n * bandwidth_hz / rate) + 2)
    coarse = rng.normal(0.0, 1.0, coarse_n)
    pos = np.linspace(0.0, coarse_n - 1.0, n)
    return np.interp(pos, np.arange(coarse_n), coarse).astype(np.float32)


def _window_burst(n: int, freq_per_sample: float, rng) -> np.ndarray:
    t = np.arange(n)
    envelope = np.sin(np.pi * t / n) ** 2
    phase = float(rng.uniform(0, 2 * math.pi))
    return (envelope * np.sin(2 * math.pi * freq_per_sample * t + phase)).astype(np.float32)


def _synth_audio(spec: SynthSpec, intervals) -> np.ndarray:
    rng = generator(spec.seed, "synth", AUDIO)
    n_total = int(round(spec.duration * AUDIO_RATE))
    wave = np.empty(n_total, dtype=np.float32)
    for iv, state, intensity in _emission_params(spec, intervals, AUDIO):
        a = int(round(iv.t_start * AUDIO_RATE))
        b = min(int(round(iv.t_end * AUDIO_RATE)), n_total)
        n = b - a
        if n <= 0:
            continue
        if state == 1:
            noise = _slow_noise(n, AUDIO_RATE, spec.audio_sleep_bandwidth, rng)
            noise *= spec.audio_noise[1] * intensity
            t = (np.arange(n) / AUDIO_RATE).astype(np.float32)
            noise *= 1.0 + spec.breathing_depth * np.sin(
                2 * math.pi * spec.breathing_hz * t + float(rng.uniform(0, 2 * math.pi))
            ).astype(np.float32)
        else:
            noise = rng.normal(0.0, spec.audio_noise[0] * intensity, n).astype(np.float32)
        wave[a:b] = noise
        n_bursts = rng.poisson(spec.audio_burst_rate[state] * (n / AUDIO_RATE))
        for _ in range(n_bursts):
            width = int(rng.uniform(0.15, 0.45) * AUDIO_RATE)
            start = int(rng.integers(a, max(a + 1, b - width)))
            stop = min(start + width, b)
            freq = float(rng.uniform(250.0, 600.0)) / AUDIO_RATE
            amp = spec.audio_burst_amp[state] * intensity
            wave[start:stop] += amp * _window_burst(stop - start, freq, rng)
    return wave


def _ecg_pulse() -> np.ndarray:
    # narrow biphasic spike, vaguely QRS-shaped, ~24 ms wide at 2381 Hz
    t = np.linspace(-3.0, 3.0, 57)
    return (-t * np.exp(-t * t)).astype(np.float32) * 1.8


_PULSE = _ecg_pulse()


def _synth_ecg(spec: SynthSpec, intervals) -> np.ndarray:
    rng = generator(spec.seed, "synth", ECG)
    n_total = int(round(spec.duration * ECG_RATE))
    wave = rng.normal(0.0, 0.02, n_total).astype(np.float32)
    half = len(_PULSE) // 2
    for iv, state, intensity in _emission_params(spec, intervals, ECG):
        a = int(round(iv.t_start * ECG_RATE))
        b = min(int(round(iv.t_end * ECG_RATE)), n_total)
        if b <= a:
            continue
        t_axis = (np.arange(b - a) / ECG_RATE).astype(np.float32)
        wander = spec.ecg_wander_amp[state] * intensity * np.sin(
            2 * math.pi * spec.ecg_wander_hz[state] * t_axis + float(rng.uniform(0, 2 * math.pi))
        ).astype(np.float32)
        wave[a:b] += wander
        t = iv.t_start
        while t < iv.t_end:
            center = int(round(t * ECG_RATE))
            lo, hi = center - half, center - half + len(_PULSE)
            if lo >= 0 and hi <= n_total:
                wave[lo:hi] += _PULSE
            ibi = spec.ecg_ibi[state] / intensity
            t += max(0.2, ibi + float(rng.normal(0.0, spec.ecg_jitter[state])))
    return wave


def _synth_imu(spec: SynthSpec, intervals) -> np.ndarray:
    rng = generator(spec.seed, "synth", IMU)
    n_total = int(round(spec.duration * IMU_RATE))
    data = np.zeros((IMU_CHANNELS, n_total), dtype=np.float32)
    for iv, state, intensity in _emission_params(spec, intervals, IMU):
        a = int(round(iv.t_start * IMU_RATE))
        b = min(int(round(iv.t_end * IMU_RATE)), n_total)
        n = b - a
        if n <= 0:
            continue
        t = (np.arange(n) / IMU_RATE).astype(np.float32)
        if state == 1:
            # lying still: gravity on the z accelerometer, breathing tilt,
            # gyros nearly silent
            data[2, a:b] = 1.0
            direction = np.zeros(IMU_CHANNELS, dtype=np.float32)
            direction[:3] = rng.normal(0.0, 1.0, 3).astype(np.float32)
            direction /= max(1e-6, float(np.linalg.norm(direction)))
            tilt = spec.imu_tilt_amp * intensity * np.sin(
                2 * math.pi * spec.breathing_hz * 0.9 * t + float(rng.uniform(0, 2 * math.pi))
            ).astype(np.float32)
            data[:, a:b] += direction[:, None] * tilt[None, :]
            for ch in range(3):
                data[ch, a:b] += _slow_noise(n, IMU_RATE, spec.imu_sleep_bandwidth, rng) * (
                    spec.imu_noise[1] * intensity
                )
            data[3:, a:b] += rng.normal(0.0, spec.imu_gyro_noise[1] * intensity, (3, n)).astype(np.float32)
        else:
            # held or carried: posture (gravity direction) varies per block
            posture = rng.normal(0.0, 1.0, 3).astype(np.float32)
            posture /= max(1e-6, float(np.linalg.norm(posture)))
            data[:3, a:b] = posture[:, None]
            data[:3, a:b] += rng.normal(0.0, spec.imu_noise[0] * intensity, (3, n)).astype(np.float32)
            data[3:, a:b] += rng.normal(0.0, spec.imu_gyro_noise[0] * intensity, (3, n)).astype(np.float32)
        n_bursts = rng.poisson(spec.imu_burst_rate[state] * (n / IMU_RATE))
        for _ in range(n_bursts):
            width = int(rng.uniform(0.3, 1.5) * IMU_RATE)
            start = int(rng.integers(a, max(a + 1, b - width)))
            stop = min(start + width, b)
            direction = rng.normal(0.0, 1.0, IMU_CHANNELS).astype(np.float32)
            direction /= max(1e-6, float(np.linalg.norm(direction)))
            freq = float(rng.uniform(1.0, 5.0)) / IMU_RATE
            amp = spec.imu_burst_amp[state] * intensity
            burst = amp * _window_burst(stop - start, freq, rng)
            data[:, start:stop] += direction[:, None] * burst[None, :]
    return data


def _chunkify(spec: SynthSpec, modality: str, rate: int, samples: np.ndarray) -> ChunkedStream:
    """Cut a dense (channels, n) recording into stamped chunks, trimming a
    per-modality offset at each end and dropping a random tail per chunk."""
    rng = generator(spec.seed, "synth", "chunking", modality)
    channels = samples.shape[0]
    start_off = float(rng.uniform(0.0, spec.modality_offset))
    end_off = float(rng.uniform(0.0, spec.modality_offset))
    t0 = start_off
    t1 = spec.duration - end_off
    chunks = []
    s_index = 0
    t = t0
    while t < t1 - 1e-9:
        t_end = min(t + spec.chunk_seconds, t1)
        a = int(round(t * rate))
        b = int(round(t_end * rate))
        capacity = b - a
        max_drop = int(spec.missing_tail_fraction * capacity)
        drop = int(rng.integers(0, max_drop + 1)) if max_drop > 0 else 0
        kept = capacity - drop
        payload = samples[:, a : a + kept].T.reshape(-1).astype(np.float32)
        chunks.append(Chunk(t, t_end, s_index, s_index + kept, payload))
        s_index += kept
        t = t_end
    return ChunkedStream(modality, rate, channels, chunks)


def synth_generate(spec: SynthSpec):
    """Returns ({modality: ChunkedStream}, LabelTrack)."""
    track = synth_states(spec)
    intervals = track.intervals
    streams = {
        AUDIO: _chunkify(spec, AUDIO, AUDIO_RATE, _synth_audio(spec, intervals)[None, :]),
        ECG: _chunkify(spec, ECG, ECG_RATE, _synth_ecg(spec, intervals)[None, :]),
        IMU: _chunkify(spec, IMU, IMU_RATE, _synth_imu(spec, intervals)),
    }
    return streams, track
