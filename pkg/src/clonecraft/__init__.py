"""Desk-scale voice cloning: speaker encoder, conditioned synthesizer, inversion."""

__version__ = "0.1.0"

from .audio import (
    MelConfig,
    MelSpectrogram,
    PartialWindow,
    Waveform,
    compute_mel,
    encoder_mel_config,
    peak_normalize,
    sample_training_crop,
    slice_partials,
    synthesizer_mel_config,
)
from .encoder import (
    EmbeddingVector,
    EncoderConfig,
    SpeakerEmbedding,
    SpeakerEncoder,
    build_encoder,
    embed_utterance,
    forward_window,
    speaker_embedding,
)
from .ge2e import (
    GE2EParams,
    centroids,
    centroids_leave_one_out,
    ge2e_loss,
    ge2e_loss_oracle,
    similarity_matrix,
)

__all__ = [
    "MelConfig",
    "MelSpectrogram",
    "PartialWindow",
    "Waveform",
    "compute_mel",
    "encoder_mel_config",
    "peak_normalize",
    "sample_training_crop",
    "slice_partials",
    "synthesizer_mel_config",
    "EmbeddingVector",
    "EncoderConfig",
    "SpeakerEmbedding",
    "SpeakerEncoder",
    "build_encoder",
    "embed_utterance",
    "forward_window",
    "speaker_embedding",
    "GE2EParams",
    "centroids",
    "centroids_leave_one_out",
    "ge2e_loss",
    "ge2e_loss_oracle",
    "similarity_matrix",
]
