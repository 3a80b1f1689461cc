"""Character-to-mel sequence-to-sequence synthesizer with attention.

A compact Tacotron-style network: character embeddings through a
bidirectional GRU text encoder, location-sensitive attention, and a GRU
decoder emitting ``reduction_factor`` mel frames per step plus a stop token.
The speaker identity enters by concatenating an embedding vector to every
text-encoder state, either directly or after a learned linear projection
(the projection is trained jointly with the rest of the network).

The network operates on mel values normalized to [0, 1]; ``infer`` converts
its output back to log-mel units.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

from .audio import MelSpectrogram, denormalize_mel, synthesizer_mel_config
from .errors import ConfigError, ConfigMismatch, EmptyInput, NumericalError, ShapeError

_CHARS = " abcdefghijklmnopqrstuvwxyz0123456789.,;:!?'-"
UNK_ID = 0
VOCABULARY = ["<unk>"] + list(_CHARS)
_CHAR_TO_ID = {c: i + 1 for i, c in enumerate(_CHARS)}

CONDITIONING_MODES = ("direct_concat", "linear_then_concat")


@dataclass(frozen=True)
class TextSequence:
    token_ids: np.ndarray
    raw_text: str

    def __post_init__(self):
        ids = np.asarray(self.token_ids, dtype=np.int64)
        if ids.size == 0:
            raise EmptyInput("empty token sequence")
        if ids.min() < 0 or ids.max() >= len(VOCABULARY):
            raise ValueError("token id outside vocabulary")
        object.__setattr__(self, "token_ids", ids)

    def __len__(self) -> int:
        return len(self.token_ids)


def tokenize(text: str) -> TextSequence:
    """Lowercase character tokenization; unknown characters map to <unk>."""
    ids = [_CHAR_TO_ID.get(c, UNK_ID) for c in text.lower()]
    return TextSequence(np.asarray(ids, dtype=np.int64), text)


@dataclass(frozen=True)
class SynthesizerConfig:
    embedding_conditioning: str = "direct_concat"
    speaker_embedding_dim: int = 256
    conditioning_proj_dim: int = 256
    char_embedding_dim: int = 128
    encoder_dim: int = 256
    decoder_dim: int = 512
    prenet_dim: int = 128
    attention_dim: int = 128
    location_filters: int = 32
    location_kernel: int = 31
    n_mels: int = 80
    reduction_factor: int = 2
    max_decoder_steps: int = 400
    stop_threshold: float = 0.5
    prenet_dropout: float = 0.5

    def __post_init__(self):
        if self.embedding_conditioning not in CONDITIONING_MODES:
            raise ConfigError(
                f"unknown conditioning mode {self.embedding_conditioning!r}")
        if self.encoder_dim % 2 != 0:
            raise ConfigError("encoder_dim must be even (bidirectional halves)")
        if self.reduction_factor < 1 or self.max_decoder_steps < 1:
            raise ConfigError("reduction_factor and max_decoder_steps must be >= 1")

    @property
    def conditioned_dim(self) -> int:
        if self.embedding_conditioning == "direct_concat":
            return self.encoder_dim + self.speaker_embedding_dim
        return self.encoder_dim + self.conditioning_proj_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(record: dict) -> "SynthesizerConfig":
        return SynthesizerConfig(**record)


@dataclass(frozen=True)
class SynthOutput:
    """Teacher-forced decode results (normalized mel units)."""

    mel_pred: np.ndarray      # [T, n_mels]
    stop_logits: np.ndarray   # [steps]
    alignment: np.ndarray     # [steps, T_enc]


@dataclass(frozen=True)
class SynthesisResult:
    """Autoregressive inference output."""

    mel: MelSpectrogram
    alignment: np.ndarray
    non_converged_stop: bool


class _LocationAttention(nn.Module):
    """Additive attention with convolutional features over cumulated weights."""

    def __init__(self, query_dim, memory_dim, attention_dim, filters, kernel):
        super().__init__()
        self.query_layer = nn.Linear(query_dim, attention_dim, bias=False)
        self.memory_layer = nn.Linear(memory_dim, attention_dim, bias=False)
        self.location_conv = nn.Conv1d(1, filters, kernel, padding=kernel // 2,
                                       bias=False)
        self.location_layer = nn.Linear(filters, attention_dim, bias=False)
        self.v = nn.Linear(attention_dim, 1, bias=False)

    def forward(self, query, processed_memory, cumulative):
        location = self.location_conv(cumulative.view(1, 1, -1)).squeeze(0).T
        energies = self.v(torch.tanh(
            self.query_layer(query) + processed_memory + self.location_layer(location)
        )).squeeze(-1)
        return torch.softmax(energies, dim=0)


class Synthesizer(nn.Module):
    def __init__(self, config: SynthesizerConfig):
        super().__init__()
        self.config = config
        c = config

        self.char_embedding = nn.Embedding(len(VOCABULARY), c.char_embedding_dim)
        self.text_encoder = nn.GRU(c.char_embedding_dim, c.encoder_dim // 2,
                                   batch_first=True, bidirectional=True)
        if c.embedding_conditioning == "linear_then_concat":
            self.cond_proj = nn.Linear(c.speaker_embedding_dim, c.conditioning_proj_dim)
        else:
            self.cond_proj = None

        self.prenet = nn.Sequential(
            nn.Linear(c.n_mels, c.prenet_dim), nn.ReLU(),
            nn.Dropout(c.prenet_dropout),
            nn.Linear(c.prenet_dim, c.prenet_dim), nn.ReLU(),
            nn.Dropout(c.prenet_dropout),
        )
        self.attention = _LocationAttention(
            c.decoder_dim, self.config.conditioned_dim, c.attention_dim,
            c.location_filters, c.location_kernel)
        self.decoder_cell = nn.GRUCell(c.prenet_dim + c.conditioned_dim, c.decoder_dim)
        self.mel_head = nn.Linear(c.decoder_dim + c.conditioned_dim,
                                  c.n_mels * c.reduction_factor)
        self.stop_head = nn.Linear(c.decoder_dim + c.conditioned_dim, 1)

    # -- text encoding and conditioning ------------------------------------

    def encode_text(self, tokens: TextSequence) -> torch.Tensor:
        """One encoder state per input token, [T_enc, encoder_dim]."""
        ids = torch.as_tensor(tokens.token_ids)
        embedded = self.char_embedding(ids).unsqueeze(0)
        states, _ = self.text_encoder(embedded)
        return states.squeeze(0)

    def condition(self, states: torch.Tensor, embedding) -> torch.Tensor:
        """Broadcast-concatenate the (optionally projected) embedding to every state."""
        vec = torch.as_tensor(np.asarray(
            embedding.values if hasattr(embedding, "values") else embedding,
            dtype=np.float32))
        if vec.shape != (self.config.speaker_embedding_dim,):
            raise ConfigMismatch(
                f"embedding of shape {tuple(vec.shape)}, expected "
                f"({self.config.speaker_embedding_dim},)")
        if self.cond_proj is not None:
            vec = self.cond_proj(vec)
        return torch.cat([states, vec.expand(states.shape[0], -1)], dim=1)

    # -- decoding -----------------------------------------------------------

    def _decode_step(self, prev_frame, hidden, memory, processed_memory, cumulative):
        prenet_out = self.prenet(prev_frame)
        align = self.attention(hidden, processed_memory, cumulative)
        context = align @ memory
        hidden = self.decoder_cell(torch.cat([prenet_out, context]), hidden)
        features = torch.cat([hidden, context])
        frames = self.mel_head(features).view(self.config.reduction_factor,
                                              self.config.n_mels)
        stop_logit = self.stop_head(features).squeeze(-1)
        return frames, stop_logit, align, hidden

    def teacher_forced(self, tokens: TextSequence, embedding,
                       target: torch.Tensor):
        """Decode against groundtruth previous frames.

        ``target`` is [T, n_mels] in normalized units. Returns torch tensors
        (mel [T, n_mels], stop_logits [steps], alignment [steps, T_enc]).
        """
        r = self.config.reduction_factor
        t_frames = target.shape[0]
        n_steps = -(-t_frames // r)
        padded = torch.cat(
            [target, target.new_zeros(n_steps * r - t_frames, target.shape[1])])

        memory = self.condition(self.encode_text(tokens), embedding)
        processed = self.attention.memory_layer(memory)
        hidden = memory.new_zeros(self.config.decoder_dim)
        cumulative = memory.new_zeros(memory.shape[0])
        prev = memory.new_zeros(self.config.n_mels)

        mel_out, stops, aligns = [], [], []
        for step in range(n_steps):
            frames, stop_logit, align, hidden = self._decode_step(
                prev, hidden, memory, processed, cumulative)
            cumulative = cumulative + align
            mel_out.append(frames)
            stops.append(stop_logit)
            aligns.append(align)
            prev = padded[step * r + r - 1]  # teacher forcing

        mel = torch.cat(mel_out)[:t_frames]
        if not torch.all(torch.isfinite(mel)):
            raise NumericalError("non-finite decoder output")
        return mel, torch.stack(stops), torch.stack(aligns)

    def infer_tokens(self, tokens: TextSequence, embedding,
                     max_steps: int | None = None):
        """Autoregressive decode until the stop head fires or the cap is hit."""
        r = self.config.reduction_factor
        cap = max_steps or self.config.max_decoder_steps
        memory = self.condition(self.encode_text(tokens), embedding)
        processed = self.attention.memory_layer(memory)
        hidden = memory.new_zeros(self.config.decoder_dim)
        cumulative = memory.new_zeros(memory.shape[0])
        prev = memory.new_zeros(self.config.n_mels)

        mel_out, aligns = [], []
        non_converged = True
        for _ in range(cap):
            frames, stop_logit, align, hidden = self._decode_step(
                prev, hidden, memory, processed, cumulative)
            cumulative = cumulative + align
            mel_out.append(frames)
            aligns.append(align)
            prev = frames[-1]
            if torch.sigmoid(stop_logit).item() > self.config.stop_threshold:
                non_converged = False
                break
        return torch.cat(mel_out), torch.stack(aligns), non_converged


def build_synthesizer(config: SynthesizerConfig, seed: int = 0) -> Synthesizer:
    torch.manual_seed(seed)
    model = Synthesizer(config)
    for param in model.parameters():
        if param.dim() >= 2:
            nn.init.xavier_uniform_(param)
        else:
            nn.init.zeros_(param)
    model.eval()
    return model


def encode_text(model: Synthesizer, tokens: TextSequence) -> np.ndarray:
    model.eval()
    with torch.no_grad():
        return model.encode_text(tokens).numpy()


def condition(model: Synthesizer, states, embedding) -> np.ndarray:
    model.eval()
    with torch.no_grad():
        return model.condition(torch.as_tensor(np.asarray(states, dtype=np.float32)),
                               embedding).numpy()


def decode_teacher_forced(model: Synthesizer, tokens: TextSequence, embedding,
                          target: np.ndarray) -> SynthOutput:
    model.eval()
    with torch.no_grad():
        mel, stops, aligns = model.teacher_forced(
            tokens, embedding, torch.as_tensor(np.asarray(target, dtype=np.float32)))
    return SynthOutput(mel.numpy(), stops.numpy(), aligns.numpy())


def synth_loss(pred, target) -> float:
    """Mean absolute difference between two equally-shaped mel matrices."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def infer(model: Synthesizer, text: TextSequence, embedding,
          mel_config=None, max_steps: int | None = None) -> SynthesisResult:
    """Synthesize a mel spectrogram for a text conditioned on one embedding."""
    mel_config = mel_config or synthesizer_mel_config()
    if mel_config.n_mels != model.config.n_mels:
        raise ConfigMismatch("mel config channel count differs from the model")
    model.eval()
    with torch.no_grad():
        mel_norm, aligns, non_converged = model.infer_tokens(text, embedding, max_steps)
    log_mel = denormalize_mel(mel_norm.numpy(), mel_config.log_floor)
    return SynthesisResult(
        mel=MelSpectrogram(log_mel.astype(np.float32), mel_config),
        alignment=aligns.numpy(),
        non_converged_stop=non_converged,
    )
