"""Waveforms, mel spectrogram extraction and partial-utterance windowing.

Two framing presets are used throughout: the 40-channel encoder features
(16 kHz, 25 ms window, 10 ms hop) and the 80-channel synthesizer features
(22.05 kHz, 50 ms window, 12.5 ms hop). Framing is center-padded (reflect)
so that a spectrogram always has ``ceil(num_samples / hop_samples)`` frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.io.wavfile
import scipy.fft

from .errors import ConfigError, ConfigMismatch, EmptyInput, TooShort

# Fixed partial-utterance geometry used by the speaker encoder.
PARTIAL_FRAMES = 160
PARTIAL_OVERLAP = 0.5

# Dynamic range of log-mel values: natural log of mel power, clamped below.
LOG_FLOOR = -12.0
# Upper anchor used when mapping log-mels to the synthesizer's [0, 1] range.
# Peak-normalized audio stays below this under both presets.
LOG_CEIL = 12.0

DEFAULT_PEAK = 0.95


@dataclass(frozen=True)
class Waveform:
    """Mono time-domain signal with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def peak_normalize(waveform: Waveform, peak: float = DEFAULT_PEAK) -> Waveform:
    """Scale so the largest absolute sample equals ``peak``. Silence is returned unchanged."""
    top = float(np.max(np.abs(waveform.samples))) if len(waveform) else 0.0
    if top == 0.0:
        return waveform
    return Waveform(waveform.samples * (peak / top), waveform.sample_rate)


@dataclass(frozen=True)
class MelConfig:
    """Framing and filterbank parameters for one mel representation."""

    sample_rate: int
    window_ms: float
    hop_ms: float
    n_mels: int
    fmin: float = 0.0
    fmax: float | None = None  # defaults to Nyquist
    log_floor: float = LOG_FLOOR

    def __post_init__(self):
        if self.fmax is None:
            object.__setattr__(self, "fmax", self.sample_rate / 2)
        if self.hop_ms >= self.window_ms:
            raise ConfigError("hop_ms must be smaller than window_ms")
        if self.n_mels < 1:
            raise ConfigError("n_mels must be >= 1")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ConfigError("need 0 <= fmin < fmax <= sample_rate / 2")

    @property
    def win_samples(self) -> int:
        return int(self.sample_rate * self.window_ms / 1000)

    @property
    def hop_samples(self) -> int:
        return int(self.sample_rate * self.hop_ms / 1000)

    @property
    def n_fft(self) -> int:
        return 1 << (self.win_samples - 1).bit_length()


def encoder_mel_config() -> MelConfig:
    """40-channel filterbank over 25 ms / 10 ms framing at 16 kHz."""
    return MelConfig(sample_rate=16000, window_ms=25.0, hop_ms=10.0, n_mels=40)


def synthesizer_mel_config(sample_rate: int = 22050) -> MelConfig:
    """80-channel filterbank over 50 ms / 12.5 ms framing (22.05 kHz by default).

    Pass ``sample_rate=16000`` for corpora recorded at the encoder rate; the
    framing ratios are preserved.
    """
    return MelConfig(sample_rate=sample_rate, window_ms=50.0, hop_ms=12.5, n_mels=80)


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-mel energy matrix of shape [T, n_mels]."""

    frames: np.ndarray
    config: MelConfig

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[1] != self.config.n_mels:
            raise ConfigMismatch(
                f"expected [T, {self.config.n_mels}] frames, got {frames.shape}"
            )
        if not np.all(np.isfinite(frames)):
            raise ValueError("mel frames contain non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class PartialWindow:
    """Fixed-length slice of an encoder mel spectrogram."""

    frames: np.ndarray
    source_utterance_id: str
    start_frame: int


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _filterbank_cached(sample_rate, n_fft, n_mels, fmin, fmax):
    fft_freqs = np.linspace(0.0, sample_rate / 2, n_fft // 2 + 1)
    mel_points = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_points = mel_to_hz(mel_points)

    weights = np.zeros((n_mels, len(fft_freqs)))
    for k in range(n_mels):
        lo, center, hi = hz_points[k], hz_points[k + 1], hz_points[k + 2]
        rising = (fft_freqs - lo) / (center - lo)
        falling = (hi - fft_freqs) / (hi - center)
        weights[k] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def mel_filterbank(config: MelConfig) -> np.ndarray:
    """Triangular mel filterbank of shape [n_mels, n_fft // 2 + 1]."""
    return _filterbank_cached(
        config.sample_rate, config.n_fft, config.n_mels, config.fmin, config.fmax
    )


def frame_count(num_samples: int, config: MelConfig) -> int:
    return -(-num_samples // config.hop_samples)


def compute_mel(waveform: Waveform, config: MelConfig) -> MelSpectrogram:
    """Log-mel spectrogram with ``ceil(len / hop)`` center-padded frames."""
    if len(waveform) == 0:
        raise EmptyInput("cannot compute mel of an empty waveform")
    if waveform.sample_rate != config.sample_rate:
        raise ConfigMismatch(
            f"waveform at {waveform.sample_rate} Hz vs config {config.sample_rate} Hz"
        )

    hop = config.hop_samples
    n_fft = config.n_fft
    win = config.win_samples
    n_frames = frame_count(len(waveform), config)

    pad = n_fft // 2
    x = np.asarray(waveform.samples, dtype=np.float64)
    padded = np.pad(x, pad, mode="reflect") if len(x) > 1 else np.pad(x, pad, mode="edge")

    # Hann window of the analysis length, centered in the FFT buffer.
    window = np.zeros(n_fft)
    offset = (n_fft - win) // 2
    window[offset : offset + win] = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win) / win)

    starts = np.arange(n_frames) * hop
    idx = starts[:, None] + np.arange(n_fft)[None, :]
    frames = padded[idx] * window

    spectrum = scipy.fft.rfft(frames, axis=1)
    power = np.abs(spectrum) ** 2
    mel_power = power @ mel_filterbank(config).T
    log_mel = np.log(np.maximum(mel_power, math.exp(config.log_floor)))
    return MelSpectrogram(log_mel.astype(np.float32), config)


def partial_starts(n_frames: int, frame_len: int = PARTIAL_FRAMES,
                   overlap: float = PARTIAL_OVERLAP) -> list[int]:
    """Window start offsets: multiples of the step, plus a tail window anchored
    at the end whenever the last step-aligned window would leave frames uncovered."""
    if n_frames < frame_len:
        raise TooShort(f"{n_frames} frames < window of {frame_len}")
    step = max(1, int(round(frame_len * (1.0 - overlap))))
    starts = list(range(0, n_frames - frame_len + 1, step))
    if starts[-1] + frame_len < n_frames:
        starts.append(n_frames - frame_len)
    return starts


def slice_partials(
    mel: MelSpectrogram,
    frame_len: int = PARTIAL_FRAMES,
    overlap: float = PARTIAL_OVERLAP,
    utterance_id: str = "",
    strict: bool = False,
) -> list[PartialWindow]:
    """Split into fixed-length windows with the given overlap.

    Inputs shorter than one window raise ``TooShort`` in strict mode and are
    extended by cyclic repetition otherwise (the inference default).
    """
    frames = mel.frames
    n = frames.shape[0]
    if n < frame_len:
        if strict:
            raise TooShort(f"{n} frames < window of {frame_len}")
        reps = np.take(frames, np.arange(frame_len) % n, axis=0)
        return [PartialWindow(reps, utterance_id, 0)]
    return [
        PartialWindow(frames[s : s + frame_len], utterance_id, s)
        for s in partial_starts(n, frame_len, overlap)
    ]


def sample_training_crop(
    mel: MelSpectrogram,
    rng: np.random.Generator,
    frame_len: int = PARTIAL_FRAMES,
    utterance_id: str = "",
) -> PartialWindow:
    """Uniform random ``frame_len``-frame crop for training batches."""
    n = mel.frames.shape[0]
    if n < frame_len:
        raise TooShort(f"{n} frames < window of {frame_len}")
    start = int(rng.integers(0, n - frame_len + 1))
    return PartialWindow(mel.frames[start : start + frame_len], utterance_id, start)


def normalize_mel(frames: np.ndarray, log_floor: float = LOG_FLOOR,
                  log_ceil: float = LOG_CEIL) -> np.ndarray:
    """Map log-mel values onto [0, 1] for synthesizer training."""
    return np.clip((frames - log_floor) / (log_ceil - log_floor), 0.0, 1.0)


def denormalize_mel(frames: np.ndarray, log_floor: float = LOG_FLOOR,
                    log_ceil: float = LOG_CEIL) -> np.ndarray:
    return frames * (log_ceil - log_floor) + log_floor


def read_wav(path) -> Waveform:
    """Load a mono PCM WAV file as float samples in [-1, 1]."""
    rate, data = scipy.io.wavfile.read(path)
    if data.ndim != 1:
        raise ConfigMismatch(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ConfigMismatch(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, int(rate))


def write_wav(path, waveform: Waveform) -> None:
    """Write 16-bit PCM WAV."""
    scaled = np.round(waveform.samples * 32768.0)
    pcm = np.clip(scaled, -32768, 32767).astype(np.int16)
    scipy.io.wavfile.write(path, waveform.sample_rate, pcm)
