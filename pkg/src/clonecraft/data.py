"""Dataset manifests, speaker-batch sampling and the synthetic desk corpus.

A manifest is a UTF-8 text file of tab-separated records, one utterance per
line: ``speaker_id  utterance_id  audio_path  transcript  duration_s``. An
optional ``# split=<name>`` header line records which split the file holds.
Audio lives at ``<root>/<speaker_id>/<utterance_id>.wav`` for generated
corpora; paths in the manifest may be relative to the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import (
    MelConfig,
    MelSpectrogram,
    Waveform,
    compute_mel,
    encoder_mel_config,
    peak_normalize,
    read_wav,
    sample_training_crop,
    write_wav,
)
from .errors import ManifestError, MissingAsset, SamplerError

_FORBIDDEN = ("\t", "\n", "\r")


@dataclass(frozen=True)
class ManifestEntry:
    speaker_id: str
    utterance_id: str
    audio_path: str
    transcript: str
    duration_s: float

    def __post_init__(self):
        for value in (self.speaker_id, self.utterance_id, self.audio_path, self.transcript):
            if any(c in value for c in _FORBIDDEN):
                raise ManifestError(f"field contains tab or newline: {value!r}")
        if not self.duration_s > 0:
            raise ManifestError(
                f"{self.speaker_id}/{self.utterance_id}: duration must be positive")


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    split: str = "train"
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        entries = tuple(self.entries)
        seen = set()
        for entry in entries:
            key = (entry.speaker_id, entry.utterance_id)
            if key in seen:
                raise ManifestError(f"duplicate utterance {key}")
            seen.add(key)
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def speakers(self) -> list[str]:
        out, seen = [], set()
        for entry in self.entries:
            if entry.speaker_id not in seen:
                seen.add(entry.speaker_id)
                out.append(entry.speaker_id)
        return out

    def by_speaker(self) -> dict[str, list[ManifestEntry]]:
        grouped: dict[str, list[ManifestEntry]] = {}
        for entry in self.entries:
            grouped.setdefault(entry.speaker_id, []).append(entry)
        return grouped

    def resolve_path(self, entry: ManifestEntry) -> Path:
        path = Path(entry.audio_path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path


def save_manifest(path, manifest: DatasetManifest) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# split={manifest.split}\n")
        for e in manifest.entries:
            fh.write(f"{e.speaker_id}\t{e.utterance_id}\t{e.audio_path}\t"
                     f"{e.transcript}\t{e.duration_s!r}\n")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    entries: list[ManifestEntry] = []
    split = "train"
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("split="):
                    split = body[len("split="):]
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise ManifestError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
            spk, utt, audio, transcript, duration = fields
            try:
                duration_s = float(duration)
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: bad duration {duration!r}") from exc
            entries.append(ManifestEntry(spk, utt, audio, transcript, duration_s))
    return DatasetManifest(tuple(entries), split=split, root=path.parent)


def load_waveform(manifest: DatasetManifest, entry: ManifestEntry) -> Waveform:
    path = manifest.resolve_path(entry)
    if not path.exists():
        raise MissingAsset(f"audio file not found: {path}")
    return read_wav(path)


class MelStore:
    """Lazy utterance -> log-mel cache (peak-normalizes audio on ingest)."""

    def __init__(self, manifest: DatasetManifest, config: MelConfig | None = None):
        self.manifest = manifest
        self.config = config or encoder_mel_config()
        self._cache: dict[tuple[str, str], MelSpectrogram] = {}

    def mel(self, entry: ManifestEntry) -> MelSpectrogram:
        key = (entry.speaker_id, entry.utterance_id)
        if key not in self._cache:
            wav = peak_normalize(load_waveform(self.manifest, entry))
            self._cache[key] = compute_mel(wav, self.config)
        return self._cache[key]

    def n_frames(self, entry: ManifestEntry) -> int:
        return self.mel(entry).n_frames


@dataclass(frozen=True)
class SpeakerBatchSpec:
    n_speakers: int = 8
    m_utterances: int = 4

    def __post_init__(self):
        if self.n_speakers < 2 or self.m_utterances < 2:
            raise SamplerError("batch needs N >= 2 speakers and M >= 2 utterances")


@dataclass(frozen=True)
class SpeakerBatch:
    """N x M stack of 160-frame training crops."""

    windows: np.ndarray  # [N, M, frame_len, n_mels] float32
    speaker_ids: tuple[str, ...]
    utterance_ids: tuple[tuple[str, ...], ...]


def eligible_by_speaker(manifest: DatasetManifest, mels,
                        min_frames: int = 160) -> dict[str, list[ManifestEntry]]:
    """Speakers mapped to their utterances that are long enough to crop."""
    out: dict[str, list[ManifestEntry]] = {}
    for speaker, entries in manifest.by_speaker().items():
        keep = [e for e in entries if mels.n_frames(e) >= min_frames]
        if keep:
            out[speaker] = keep
    return out


def sample_batch(manifest: DatasetManifest, spec: SpeakerBatchSpec,
                 rng: np.random.Generator, mels,
                 eligible: dict[str, list[ManifestEntry]] | None = None) -> SpeakerBatch:
    """Draw N distinct speakers and M random 160-frame crops per speaker.

    Utterances are drawn without replacement when a speaker has at least M
    eligible utterances, with replacement otherwise.
    """
    if eligible is None:
        eligible = eligible_by_speaker(manifest, mels)
    speakers = sorted(eligible)
    if len(speakers) < spec.n_speakers:
        raise SamplerError(
            f"{len(speakers)} eligible speakers < N={spec.n_speakers}")

    chosen = rng.choice(len(speakers), size=spec.n_speakers, replace=False)
    windows = []
    utterance_ids = []
    speaker_ids = []
    for idx in chosen:
        speaker = speakers[int(idx)]
        pool = eligible[speaker]
        replace_draw = len(pool) < spec.m_utterances
        picks = rng.choice(len(pool), size=spec.m_utterances, replace=replace_draw)
        crops, ids = [], []
        for p in picks:
            entry = pool[int(p)]
            crop = sample_training_crop(mels.mel(entry), rng,
                                        utterance_id=entry.utterance_id)
            crops.append(crop.frames)
            ids.append(entry.utterance_id)
        windows.append(np.stack(crops))
        utterance_ids.append(tuple(ids))
        speaker_ids.append(speaker)
    return SpeakerBatch(np.stack(windows).astype(np.float32),
                        tuple(speaker_ids), tuple(utterance_ids))


def split_manifest(manifest: DatasetManifest,
                   test_per_speaker: int) -> tuple[DatasetManifest, DatasetManifest]:
    """Hold out the last ``test_per_speaker`` utterances of every speaker."""
    train, test = [], []
    for speaker, entries in manifest.by_speaker().items():
        if len(entries) <= test_per_speaker:
            raise ManifestError(
                f"speaker {speaker} has only {len(entries)} utterances, "
                f"cannot hold out {test_per_speaker}")
        train.extend(entries[:-test_per_speaker])
        test.extend(entries[-test_per_speaker:])
    return (DatasetManifest(tuple(train), split="train", root=manifest.root),
            DatasetManifest(tuple(test), split="test", root=manifest.root))


_SYLLABLES = ("ba", "da", "ga", "ka", "la", "ma", "na", "pa", "ra", "sa", "ta", "wa")
_MAX_HARMONICS = 12


def _speaker_template(rng: np.random.Generator) -> dict:
    return {
        "f0": float(rng.uniform(80.0, 300.0)),
        "log_gains": rng.uniform(-2.5, 0.0, size=_MAX_HARMONICS),
        "phases": rng.uniform(0.0, 2 * np.pi, size=_MAX_HARMONICS),
    }


def _render_utterance(template: dict, rng: np.random.Generator,
                      sample_rate: int) -> np.ndarray:
    duration = float(rng.uniform(2.2, 3.5))
    amplitude = float(rng.uniform(0.4, 0.9))
    noise_std = float(rng.uniform(0.002, 0.02))
    jitter = float(rng.uniform(0.97, 1.03))
    trem_rate = float(rng.uniform(2.0, 6.0))
    trem_depth = float(rng.uniform(0.0, 0.3))
    vib_depth = float(rng.uniform(0.0, 0.01))

    n = int(duration * sample_rate)
    t = np.arange(n) / sample_rate
    f0 = template["f0"] * jitter
    inst = f0 * (1.0 + vib_depth * np.sin(2 * np.pi * 5.0 * t))
    phase = 2 * np.pi * np.cumsum(inst) / sample_rate

    x = np.zeros(n)
    gains = np.exp(template["log_gains"])
    for h in range(1, _MAX_HARMONICS + 1):
        if h * f0 >= 0.45 * sample_rate:
            break
        x += gains[h - 1] * np.sin(h * phase + template["phases"][h - 1])

    envelope = 1.0 + trem_depth * np.sin(2 * np.pi * trem_rate * t)
    fade = min(n // 2, int(0.05 * sample_rate))
    ramp = np.ones(n)
    ramp[:fade] = np.linspace(0.0, 1.0, fade)
    ramp[n - fade:] = np.linspace(1.0, 0.0, fade)
    x = x * envelope * ramp
    x += rng.normal(0.0, noise_std, size=n)
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= amplitude / peak
    return x


def _random_transcript(rng: np.random.Generator) -> str:
    n_words = int(rng.integers(3, 6))
    words = []
    for _ in range(n_words):
        n_syll = int(rng.integers(1, 3))
        picks = rng.integers(0, len(_SYLLABLES), size=n_syll)
        words.append("".join(_SYLLABLES[int(i)] for i in picks))
    return " ".join(words)


def generate_synthetic_corpus(out_dir, n_speakers: int, utts_per_speaker: int,
                              seed: int = 0, sample_rate: int = 16000) -> DatasetManifest:
    """Write a harmonic-template corpus: WAVs under <root>/<speaker>/<utt>.wav
    plus a validated manifest at <root>/manifest.tsv.

    Each speaker is a fixed random fundamental (80-300 Hz) and harmonic
    envelope; utterances vary duration, amplitude, jitter, tremolo and noise,
    so same-speaker mels stay closer than cross-speaker mels by construction.
    """
    if n_speakers < 2:
        raise ValueError("need at least 2 speakers")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    entries = []
    for s in range(n_speakers):
        speaker_id = f"spk{s:02d}"
        template = _speaker_template(rng)
        (out_dir / speaker_id).mkdir(exist_ok=True)
        for u in range(utts_per_speaker):
            utterance_id = f"utt{u:03d}"
            samples = _render_utterance(template, rng, sample_rate)
            rel_path = f"{speaker_id}/{utterance_id}.wav"
            write_wav(out_dir / rel_path, Waveform(samples, sample_rate))
            entries.append(ManifestEntry(
                speaker_id, utterance_id, rel_path,
                _random_transcript(rng), len(samples) / sample_rate))

    manifest = DatasetManifest(tuple(entries), split="train", root=out_dir)
    save_manifest(out_dir / "manifest.tsv", manifest)
    return manifest


def ingest_directory(audio_root, transcript: str = "") -> DatasetManifest:
    """Build a manifest from a <root>/<speaker>/<utterance>.wav directory tree."""
    audio_root = Path(audio_root)
    entries = []
    for speaker_dir in sorted(p for p in audio_root.iterdir() if p.is_dir()):
        for wav_path in sorted(speaker_dir.glob("*.wav")):
            wav = read_wav(wav_path)
            text = transcript
            sidecar = wav_path.with_suffix(".txt")
            if sidecar.exists():
                text = sidecar.read_text(encoding="utf-8").strip()
            entries.append(ManifestEntry(
                speaker_dir.name, wav_path.stem,
                str(wav_path.relative_to(audio_root)), text,
                wav.duration_s))
    return DatasetManifest(tuple(entries), split="train", root=audio_root)
