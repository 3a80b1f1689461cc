"""Objective evaluation: SV-EER, similarity reports and 2D projections.

The equal error rate uses a sweep over all distinct trial scores (decision
rule: accept when score >= threshold) with linear interpolation between the
two sweep points that bracket the FAR/FRR crossing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import DatasetManifest, MelStore
from .encoder import EmbeddingVector, SpeakerEncoder, embed_utterance
from .errors import ProtocolError

# Full-scale SV-EERs reported for the five encoder architectures and the
# baseline system; documentation constants, not desk-reproducible.
REFERENCE_SV_EER = {
    "rec_conv": 0.073,
    "rec_conv_2": 0.075,
    "gru": 0.054,
    "advanced_gru": 0.040,
    "lstm": 0.052,
    "baseline": 0.049,
}
# Full-scale per-speaker generated-vs-groundtruth cosine range (8 speakers).
REFERENCE_SIMILARITY_RANGE = (0.56, 0.76)


@dataclass(frozen=True)
class Trial:
    """One verification trial: cosine score plus same-speaker ground truth."""

    score: float
    is_genuine: bool

    def __post_init__(self):
        if not -1.0 - 1e-6 <= self.score <= 1.0 + 1e-6:
            raise ValueError(f"cosine trial score {self.score} outside [-1, 1]")


@dataclass(frozen=True)
class EERResult:
    eer: float
    threshold: float
    n_genuine: int
    n_impostor: int


def _eer_from_scores(genuine: np.ndarray, impostor: np.ndarray) -> tuple[float, float]:
    thresholds = np.unique(np.concatenate([genuine, impostor]))
    # Sentinel above every score: FAR = 0, FRR = 1 there.
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)

    # Counts via sorted positions: FAR(t) = #(imp >= t) / n_i, FRR(t) = #(gen < t) / n_g.
    imp_sorted = np.sort(impostor)
    gen_sorted = np.sort(genuine)
    far = 1.0 - np.searchsorted(imp_sorted, thresholds, side="left") / len(impostor)
    frr = np.searchsorted(gen_sorted, thresholds, side="left") / len(genuine)

    diff = far - frr  # starts at 1 - 0, ends at 0 - 1; non-increasing
    k = int(np.argmax(diff <= 0))
    d_prev, d_k = diff[k - 1], diff[k]
    lam = d_prev / (d_prev - d_k)
    eer = far[k - 1] + lam * (far[k] - far[k - 1])
    threshold = thresholds[k - 1] + lam * (thresholds[k] - thresholds[k - 1])
    return float(eer), float(threshold)


def compute_eer(trials: list[Trial]) -> EERResult:
    """Equal error rate of a trial list (threshold sweep, linear interpolation)."""
    genuine = np.array([t.score for t in trials if t.is_genuine], dtype=np.float64)
    impostor = np.array([t.score for t in trials if not t.is_genuine], dtype=np.float64)
    if len(genuine) == 0 or len(impostor) == 0:
        raise ProtocolError("need at least one genuine and one impostor trial")
    eer, threshold = _eer_from_scores(genuine, impostor)
    return EERResult(eer, threshold, len(genuine), len(impostor))


def _values(embedding) -> np.ndarray:
    if isinstance(embedding, EmbeddingVector):
        return embedding.values
    return np.asarray(embedding, dtype=np.float32)


def cosine(a, b) -> float:
    va, vb = _values(a), _values(b)
    return float(np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb)))


def utterance_embeddings(model: SpeakerEncoder, manifest: DatasetManifest,
                         store: MelStore | None = None) -> list[tuple[str, str, EmbeddingVector]]:
    """(speaker_id, utterance_id, embedding) for every manifest utterance."""
    store = store or MelStore(manifest)
    out = []
    for entry in manifest.entries:
        vec = embed_utterance(model, store.mel(entry), utterance_id=entry.utterance_id)
        out.append((entry.speaker_id, entry.utterance_id, vec))
    return out


def protocol_trials(model: SpeakerEncoder, manifest: DatasetManifest,
                    enroll_per_speaker: int = 6,
                    store: MelStore | None = None) -> list[Trial]:
    """Enrollment-centroid verification trials.

    The first ``enroll_per_speaker`` utterances of each speaker (manifest
    order) build a normalized enrollment centroid; every remaining utterance
    is scored against every centroid, genuine when speakers match.
    """
    grouped = manifest.by_speaker()
    for speaker, entries in grouped.items():
        if len(entries) <= enroll_per_speaker:
            raise ProtocolError(
                f"speaker {speaker} has {len(entries)} utterances, needs "
                f"more than {enroll_per_speaker}")

    store = store or MelStore(manifest)
    centroids: dict[str, np.ndarray] = {}
    tests: list[tuple[str, np.ndarray]] = []
    for speaker, entries in grouped.items():
        enrolled = [
            embed_utterance(model, store.mel(e), utterance_id=e.utterance_id).values
            for e in entries[:enroll_per_speaker]
        ]
        mean = np.stack(enrolled).mean(axis=0)
        centroids[speaker] = mean / np.linalg.norm(mean)
        for e in entries[enroll_per_speaker:]:
            vec = embed_utterance(model, store.mel(e), utterance_id=e.utterance_id)
            tests.append((speaker, vec.values))

    trials = []
    for true_speaker, values in tests:
        for enrolled_speaker, centroid in centroids.items():
            trials.append(Trial(score=float(np.dot(values, centroid)),
                                is_genuine=enrolled_speaker == true_speaker))
    return trials


def sv_eer_protocol(model: SpeakerEncoder, manifest: DatasetManifest,
                    enroll_per_speaker: int = 6,
                    store: MelStore | None = None) -> EERResult:
    return compute_eer(protocol_trials(model, manifest, enroll_per_speaker, store))


def _group_embeddings(pairs) -> dict[str, list[np.ndarray]]:
    grouped: dict[str, list[np.ndarray]] = {}
    for speaker, emb in pairs:
        grouped.setdefault(speaker, []).append(_values(emb))
    return grouped


def similarity_report(generated, groundtruth) -> dict[str, float]:
    """Per-speaker mean cosine between generated and groundtruth embeddings."""
    gen = _group_embeddings(generated)
    ref = _group_embeddings(groundtruth)
    if set(gen) != set(ref):
        raise ProtocolError(
            f"speaker sets differ: {sorted(set(gen) ^ set(ref))}")
    report = {}
    for speaker in sorted(gen):
        scores = [cosine(a, b) for a in gen[speaker] for b in ref[speaker]]
        report[speaker] = float(np.mean(scores))
    return report


def cross_similarity(generated, groundtruth) -> dict[tuple[str, str], float]:
    """Mean cosine for every (generated speaker, groundtruth speaker) pair."""
    gen = _group_embeddings(generated)
    ref = _group_embeddings(groundtruth)
    out = {}
    for sg, gen_list in gen.items():
        for sr, ref_list in ref.items():
            scores = [cosine(a, b) for a in gen_list for b in ref_list]
            out[(sg, sr)] = float(np.mean(scores))
    return out


@dataclass(frozen=True)
class ProjectionResult:
    coords: np.ndarray  # [n, 2]
    degenerate: bool


def project_2d(embeddings) -> ProjectionResult:
    """Top-2 principal-component projection of the embedding set."""
    matrix = np.stack([_values(e) for e in embeddings]).astype(np.float64)
    if matrix.shape[0] < 3:
        raise ProtocolError("projection needs at least 3 embeddings")
    centered = matrix - matrix.mean(axis=0)
    if np.allclose(centered, 0.0, atol=1e-12):
        return ProjectionResult(np.zeros((matrix.shape[0], 2)), degenerate=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:2].T
    if basis.shape[1] < 2:
        basis = np.pad(basis, ((0, 0), (0, 2 - basis.shape[1])))
    # Stable sign: largest-magnitude loading of each component is positive.
    for j in range(2):
        column = basis[:, j]
        if column[np.argmax(np.abs(column))] < 0:
            basis[:, j] = -column
    return ProjectionResult(centered @ basis, degenerate=False)


def write_trials_csv(path, trials: list[Trial]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["score", "is_genuine"])
        for t in trials:
            writer.writerow([f"{t.score:.8f}", int(t.is_genuine)])


def write_similarity_csv(path, report: dict[str, float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["speaker", "mean_cosine"])
        for speaker in sorted(report):
            writer.writerow([speaker, f"{report[speaker]:.6f}"])


def write_projection_csv(path, ids, speakers, result: ProjectionResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "speaker", "x", "y"])
        for i, (utt, speaker) in enumerate(zip(ids, speakers)):
            writer.writerow([utt, speaker,
                             f"{result.coords[i, 0]:.6f}", f"{result.coords[i, 1]:.6f}"])


def write_json_summary(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
