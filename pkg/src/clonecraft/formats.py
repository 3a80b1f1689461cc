"""Binary file formats: MELF mel spectrograms and DVEC embedding vectors.

MELF layout (little-endian): magic ``MELF``, version u16, n_mels u16, T u32,
hop_ms f32, then T * n_mels f32 values row-major by frame.

DVEC layout: magic ``DVEC``, dim u16, then dim f32 values.
"""

from __future__ import annotations

import struct

import numpy as np

from .audio import MelConfig, MelSpectrogram, encoder_mel_config, synthesizer_mel_config
from .errors import FormatError

MELF_MAGIC = b"MELF"
MELF_VERSION = 1
DVEC_MAGIC = b"DVEC"

_MELF_HEADER = struct.Struct("<4sHHIf")
_DVEC_HEADER = struct.Struct("<4sH")


def write_melf(path, mel: MelSpectrogram) -> None:
    frames = np.ascontiguousarray(mel.frames, dtype="<f4")
    n_frames, n_mels = frames.shape
    with open(path, "wb") as fh:
        fh.write(_MELF_HEADER.pack(MELF_MAGIC, MELF_VERSION, n_mels, n_frames,
                                   float(mel.config.hop_ms)))
        fh.write(frames.tobytes())


def read_melf(path, config: MelConfig | None = None) -> MelSpectrogram:
    """Read a MELF file. Without an explicit config the paper preset matching
    the stored channel count is assumed (40 -> encoder, 80 -> synthesizer)."""
    with open(path, "rb") as fh:
        header = fh.read(_MELF_HEADER.size)
        if len(header) < _MELF_HEADER.size:
            raise FormatError(f"{path}: truncated MELF header")
        magic, version, n_mels, n_frames, hop_ms = _MELF_HEADER.unpack(header)
        if magic != MELF_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != MELF_VERSION:
            raise FormatError(f"{path}: unsupported MELF version {version}")
        payload = fh.read(4 * n_frames * n_mels)
    if len(payload) != 4 * n_frames * n_mels:
        raise FormatError(f"{path}: truncated MELF payload")
    frames = np.frombuffer(payload, dtype="<f4").reshape(n_frames, n_mels)

    if config is None:
        if n_mels == 40:
            config = encoder_mel_config()
        elif n_mels == 80:
            config = synthesizer_mel_config()
        else:
            raise FormatError(f"{path}: no default config for {n_mels} mel channels")
    if config.n_mels != n_mels:
        raise FormatError(f"{path}: file has {n_mels} channels, config {config.n_mels}")
    if abs(config.hop_ms - hop_ms) > 1e-4:
        raise FormatError(f"{path}: file hop {hop_ms} ms, config {config.hop_ms} ms")
    return MelSpectrogram(frames, config)


def write_dvec(path, values: np.ndarray) -> None:
    vec = np.ascontiguousarray(np.asarray(values).reshape(-1), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_DVEC_HEADER.pack(DVEC_MAGIC, vec.shape[0]))
        fh.write(vec.tobytes())


def read_dvec(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_DVEC_HEADER.size)
        if len(header) < _DVEC_HEADER.size:
            raise FormatError(f"{path}: truncated DVEC header")
        magic, dim = _DVEC_HEADER.unpack(header)
        if magic != DVEC_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        payload = fh.read(4 * dim)
    if len(payload) != 4 * dim:
        raise FormatError(f"{path}: truncated DVEC payload")
    return np.frombuffer(payload, dtype="<f4").copy()
