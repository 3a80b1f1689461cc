"""Speaker encoder architectures and d-vector aggregation.

Five selectable stacks (rec_conv, rec_conv_2, gru, advanced_gru, lstm) map a
[T, 40] log-mel sequence to a unit-norm embedding taken from the top layer's
final-frame output through a last linear layer. Utterance-level embeddings
average the window-wise d-vectors over 50%-overlapped 160-frame partials.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import torch
from torch import nn

from .audio import MelSpectrogram, PartialWindow, slice_partials
from .errors import ConfigError, EmptyInput, NumericalError

ARCHITECTURES = ("rec_conv", "rec_conv_2", "gru", "advanced_gru", "lstm")

# (conv layers, recurrent layers, cell type, per-layer linear projection)
_ARCH_LAYOUT = {
    "rec_conv": (5, 1, "gru", False),
    "rec_conv_2": (3, 2, "gru", True),
    "gru": (0, 3, "gru", True),
    "advanced_gru": (1, 3, "gru", True),
    "lstm": (1, 3, "lstm", True),
}

CONV_KERNEL = 5


@dataclass(frozen=True)
class EncoderConfig:
    architecture: str = "advanced_gru"
    recurrent_units: int = 512
    projection_dim: int = 256
    embedding_dim: int = 256
    dropout: float = 0.2
    input_mels: int = 40

    def __post_init__(self):
        if self.architecture not in _ARCH_LAYOUT:
            raise ConfigError(f"unknown architecture {self.architecture!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(record: dict) -> "EncoderConfig":
        return EncoderConfig(**record)


@dataclass(frozen=True)
class EmbeddingVector:
    """Unit-norm d-vector for one window or one utterance."""

    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32).reshape(-1)
        norm = float(np.linalg.norm(values))
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-4:
            raise ValueError(f"embedding norm {norm} is not 1")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SpeakerEmbedding:
    """Arithmetic mean of a speaker's utterance embeddings, not re-normalized."""

    values: np.ndarray
    speaker_id: str = ""
    n_utterances: int = 0


class SpeakerEncoder(nn.Module):
    """Configurable conv/recurrent stack ending in a linear embedding layer."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        n_convs, n_recurrent, cell, projected = _ARCH_LAYOUT[config.architecture]

        units = config.recurrent_units
        self.convs = nn.ModuleList()
        width = config.input_mels
        for _ in range(n_convs):
            self.convs.append(nn.Conv1d(width, units, CONV_KERNEL,
                                        padding=CONV_KERNEL // 2))
            width = units

        rnn_cls = nn.GRU if cell == "gru" else nn.LSTM
        self.rnns = nn.ModuleList()
        self.projections = nn.ModuleList()
        for _ in range(n_recurrent):
            self.rnns.append(rnn_cls(width, units, batch_first=True))
            if projected:
                self.projections.append(nn.Linear(units, config.projection_dim))
                width = config.projection_dim
            else:
                width = units

        self.embedding = nn.Linear(width, config.embedding_dim)
        self.drop = nn.Dropout(config.dropout)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """Map [B, T, n_mels] frame batches to [B, embedding_dim] unit vectors."""
        x = frames
        for conv in self.convs:
            x = torch.relu(conv(x.transpose(1, 2)).transpose(1, 2))
            x = self.drop(x)
        for i, rnn in enumerate(self.rnns):
            x, _ = rnn(x)
            if self.projections:
                x = self.projections[i](x)
            x = self.drop(x)
        out = self.embedding(x[:, -1, :])
        norm = torch.linalg.vector_norm(out, dim=-1, keepdim=True)
        if not torch.all(torch.isfinite(out)) or bool(torch.any(norm == 0)):
            raise NumericalError("non-finite or zero-norm encoder output")
        return out / norm

    def layer_names(self) -> list[str]:
        """Human-readable stack summary in forward order."""
        names = [f"conv1d({c.out_channels})" for c in self.convs]
        for i, rnn in enumerate(self.rnns):
            kind = "gru" if isinstance(rnn, nn.GRU) else "lstm"
            names.append(f"{kind}({rnn.hidden_size})")
            if self.projections:
                names.append(f"proj({self.projections[i].out_features})")
        names.append(f"linear({self.embedding.out_features})")
        return names


def build_encoder(config: EncoderConfig, seed: int = 0) -> SpeakerEncoder:
    """Construct and Glorot-initialize an encoder, deterministically per seed."""
    torch.manual_seed(seed)
    model = SpeakerEncoder(config)
    for name, param in model.named_parameters():
        if param.dim() >= 2:
            nn.init.xavier_uniform_(param)
        else:
            nn.init.zeros_(param)
    model.eval()
    return model


def forward_window(model: SpeakerEncoder, window: PartialWindow,
                   train_mode: bool = False) -> EmbeddingVector:
    """Single-window d-vector; dropout is active only in train mode."""
    was_training = model.training
    model.train(train_mode)
    try:
        frames = torch.as_tensor(np.asarray(window.frames, dtype=np.float32))
        with torch.set_grad_enabled(train_mode):
            out = model(frames.unsqueeze(0))[0]
    finally:
        model.train(was_training)
    return EmbeddingVector(out.detach().numpy(), source=window.source_utterance_id)


def aggregate_window_embeddings(per_window: np.ndarray) -> np.ndarray:
    """Element-wise average of unit-norm window d-vectors, re-normalized.

    A single window passes through unchanged (the mean of one vector is that
    vector, already unit-norm).
    """
    per_window = np.asarray(per_window, dtype=np.float32)
    if per_window.shape[0] == 1:
        return per_window[0]
    mean = per_window.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0:
        raise NumericalError("window d-vectors cancelled exactly")
    return mean / norm


def embed_utterance(model: SpeakerEncoder, mel: MelSpectrogram,
                    utterance_id: str = "", strict: bool = False) -> EmbeddingVector:
    """Utterance d-vector: average the window d-vectors, then re-normalize."""
    windows = slice_partials(mel, utterance_id=utterance_id, strict=strict)
    batch = torch.as_tensor(
        np.stack([w.frames for w in windows]).astype(np.float32))
    model.eval()
    with torch.no_grad():
        per_window = model(batch).numpy()
    return EmbeddingVector(aggregate_window_embeddings(per_window),
                           source=utterance_id)


def speaker_embedding(embeddings: list[EmbeddingVector],
                      speaker_id: str = "") -> SpeakerEmbedding:
    """Plain arithmetic mean of utterance embeddings (norm <= 1, no re-norm)."""
    if not embeddings:
        raise EmptyInput("no embeddings to average")
    stacked = np.stack([e.values for e in embeddings])
    return SpeakerEmbedding(stacked.mean(axis=0), speaker_id=speaker_id,
                            n_utterances=len(embeddings))


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def state_tensors(model: nn.Module, prefix: str = "model.") -> dict[str, np.ndarray]:
    return {prefix + k: v.detach().numpy() for k, v in model.state_dict().items()}


def load_state_tensors(model: nn.Module, tensors: dict[str, np.ndarray],
                       prefix: str = "model.") -> None:
    state = {k[len(prefix):]: torch.as_tensor(v.copy())
             for k, v in tensors.items() if k.startswith(prefix)}
    model.load_state_dict(state)


def save_encoder(path, model: SpeakerEncoder, extra_config: dict | None = None,
                 extra_tensors: dict[str, np.ndarray] | None = None) -> None:
    """Write an encoder checkpoint (named-parameter archive with its config)."""
    from .checkpoints import save_archive

    config = {"kind": "encoder", "encoder": model.config.to_dict()}
    if extra_config:
        config.update(extra_config)
    tensors = state_tensors(model)
    if extra_tensors:
        tensors.update(extra_tensors)
    save_archive(path, config, tensors)


def load_encoder(path) -> SpeakerEncoder:
    """Rebuild an encoder from a checkpoint, ignoring trainer-state entries."""
    from .checkpoints import load_archive
    from .errors import FormatError

    config, tensors = load_archive(path)
    if config.get("kind") != "encoder":
        raise FormatError(f"{path}: not an encoder checkpoint")
    model = SpeakerEncoder(EncoderConfig.from_dict(config["encoder"]))
    load_state_tensors(model, tensors)
    model.eval()
    return model
