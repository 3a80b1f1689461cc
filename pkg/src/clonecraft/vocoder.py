"""Classical spectrogram inversion and mel export for external vocoders.

Phase is recovered by Griffin-Lim iterations over a linear spectrogram
estimated through the pseudo-inverse of the mel filterbank. The STFT here
mirrors the analysis framing of ``compute_mel`` (center reflect padding,
Hann window centered in the FFT buffer), so a spectrogram of T frames
inverts to exactly ``T * hop_samples`` output samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .audio import MelConfig, MelSpectrogram, Waveform, mel_filterbank
from .errors import ConfigError, ConfigMismatch, NumericalError
from .formats import write_melf

DEFAULT_ITERATIONS = 60
OUTPUT_PEAK = 0.95


@dataclass(frozen=True)
class InversionConfig:
    mel_config: MelConfig
    n_iterations: int = DEFAULT_ITERATIONS
    power: float = 2.0  # exponent the mel energies were computed with
    mel_pseudo_inverse: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ConfigError("n_iterations must be >= 1")
        if self.power <= 0:
            raise ConfigError("power must be positive")
        if self.mel_pseudo_inverse is None:
            pinv = np.linalg.pinv(mel_filterbank(self.mel_config))
            object.__setattr__(self, "mel_pseudo_inverse", np.maximum(pinv, 0.0))


def _analysis_window(config: MelConfig) -> np.ndarray:
    n_fft, win = config.n_fft, config.win_samples
    window = np.zeros(n_fft)
    offset = (n_fft - win) // 2
    window[offset : offset + win] = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win) / win)
    return window


def _stft(x: np.ndarray, config: MelConfig, n_frames: int) -> np.ndarray:
    hop, n_fft = config.hop_samples, config.n_fft
    pad = n_fft // 2
    padded = np.pad(x, pad, mode="reflect") if len(x) > 1 else np.pad(x, pad, mode="edge")
    starts = np.arange(n_frames) * hop
    idx = starts[:, None] + np.arange(n_fft)[None, :]
    return scipy.fft.rfft(padded[idx] * _analysis_window(config), axis=1)


def _istft(spectrum: np.ndarray, config: MelConfig) -> np.ndarray:
    hop, n_fft = config.hop_samples, config.n_fft
    n_frames = spectrum.shape[0]
    window = _analysis_window(config)
    frames = scipy.fft.irfft(spectrum, n=n_fft, axis=1) * window

    length = (n_frames - 1) * hop + n_fft
    out = np.zeros(length)
    weight = np.zeros(length)
    for i in range(n_frames):
        out[i * hop : i * hop + n_fft] += frames[i]
        weight[i * hop : i * hop + n_fft] += window**2
    out = out / np.maximum(weight, 1e-10)

    pad = n_fft // 2
    return out[pad : pad + n_frames * hop]


def invert_mel(mel: MelSpectrogram, config: InversionConfig) -> Waveform:
    """Waveform of exactly ``T * hop_samples`` samples, peak-limited to 0.95."""
    if mel.config != config.mel_config:
        raise ConfigMismatch("mel spectrogram and inversion config disagree")
    if not np.all(np.isfinite(mel.frames)):
        raise NumericalError("non-finite mel input")

    mel_power = np.exp(mel.frames.astype(np.float64))
    linear = np.maximum(mel_power @ config.mel_pseudo_inverse.T, 0.0)
    magnitude = linear ** (1.0 / config.power)

    cfg = config.mel_config
    n_frames = magnitude.shape[0]
    spectrum = magnitude.astype(complex)  # zero initial phase
    for _ in range(config.n_iterations):
        x = _istft(spectrum, cfg)
        rebuilt = _stft(x, cfg, n_frames)
        phases = np.exp(1j * np.angle(rebuilt))
        spectrum = magnitude * phases
    x = _istft(spectrum, cfg)

    peak = np.max(np.abs(x))
    if peak > OUTPUT_PEAK:  # never amplify: silence stays silent
        x = x * (OUTPUT_PEAK / peak)
    return Waveform(x, cfg.sample_rate)


def export_mel(path, mel: MelSpectrogram) -> None:
    """Write the synthesizer's predicted mel in MELF format for a neural vocoder."""
    write_melf(path, mel)
