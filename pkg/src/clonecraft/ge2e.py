"""Generalized end-to-end loss over scaled-cosine similarity matrices.

The batch is a tensor of shape [N, M, D]: N speakers, M utterances each.
Entry (j, i, k) of the similarity matrix is w * cos(e_ji, c_k) + b where the
centroid c_j is replaced by its leave-one-out version when k == j. The loss
is the softmax variant: each utterance is pulled toward its own centroid and
pushed from the others through a log-sum-exp over the speaker axis.

``ge2e_loss_oracle`` is an intentionally naive re-implementation (plain
Python loops, explicit re-summation) kept free of any shared code so the
fast path can be verified against it.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .errors import BatchTooSmall, NumericalError

W_INIT = 10.0
B_INIT = -5.0
W_MIN = 1e-4


class GE2EParams(nn.Module):
    """Learnable scale w (kept positive) and bias b of the similarity matrix."""

    def __init__(self, w: float = W_INIT, b: float = B_INIT):
        super().__init__()
        if w <= 0:
            raise ValueError("w must be positive")
        self.w = nn.Parameter(torch.tensor(float(w)))
        self.b = nn.Parameter(torch.tensor(float(b)))

    @torch.no_grad()
    def clamp_(self) -> None:
        self.w.clamp_(min=W_MIN)


def validate_embedding_batch(batch: torch.Tensor, tol: float = 1e-5) -> None:
    if batch.dim() != 3:
        raise BatchTooSmall(f"expected [N, M, D] batch, got shape {tuple(batch.shape)}")
    n, m, _ = batch.shape
    if n < 2 or m < 2:
        raise BatchTooSmall(f"need N >= 2 and M >= 2, got N={n}, M={m}")
    norms = torch.linalg.vector_norm(batch, dim=-1)
    if torch.any(torch.abs(norms - 1.0) > tol):
        raise ValueError("embedding batch rows are not unit-norm")


def centroids(batch: torch.Tensor) -> torch.Tensor:
    """Per-speaker mean embedding, shape [N, D]."""
    return batch.mean(dim=1)


def centroids_leave_one_out(batch: torch.Tensor) -> torch.Tensor:
    """Entry (j, i) is the centroid of speaker j excluding utterance i, [N, M, D]."""
    n, m, _ = batch.shape
    if m < 2:
        raise BatchTooSmall("leave-one-out centroids require M >= 2")
    totals = batch.sum(dim=1, keepdim=True)
    return (totals - batch) / (m - 1)


def _cosine(a: torch.Tensor, b: torch.Tensor, dim: int = -1) -> torch.Tensor:
    na = torch.linalg.vector_norm(a, dim=dim, keepdim=True)
    nb = torch.linalg.vector_norm(b, dim=dim, keepdim=True)
    if bool(torch.any(nb == 0)) or bool(torch.any(na == 0)):
        raise NumericalError("zero-norm vector in cosine similarity")
    return ((a / na) * (b / nb)).sum(dim=dim)


def similarity_matrix(batch: torch.Tensor, params: GE2EParams | None = None,
                      w=None, b=None) -> torch.Tensor:
    """Scaled cosine similarities of shape [N, M, N].

    Accepts either a ``GE2EParams`` module or raw ``w``/``b`` tensors.
    """
    if params is not None:
        w, b = params.w, params.b
    w = torch.as_tensor(w, dtype=batch.dtype)
    b = torch.as_tensor(b, dtype=batch.dtype)
    if float(w.detach()) <= 0:
        raise ValueError("w must be positive")
    n, m, d = batch.shape

    full = centroids(batch)
    norm_e = batch / torch.linalg.vector_norm(batch, dim=-1, keepdim=True)
    full_norms = torch.linalg.vector_norm(full, dim=-1, keepdim=True)
    if bool(torch.any(full_norms == 0)):
        raise NumericalError("degenerate zero-norm centroid")
    cos_full = torch.einsum("jid,kd->jik", norm_e, full / full_norms)

    loo = centroids_leave_one_out(batch)
    loo_norms = torch.linalg.vector_norm(loo, dim=-1, keepdim=True)
    if bool(torch.any(loo_norms == 0)):
        raise NumericalError("degenerate zero-norm leave-one-out centroid")
    cos_loo = (norm_e * (loo / loo_norms)).sum(dim=-1)

    eye = torch.eye(n, dtype=batch.dtype).unsqueeze(1)
    cos = cos_full * (1 - eye) + cos_loo.unsqueeze(-1) * eye
    return w * cos + b


def ge2e_loss(sim: torch.Tensor) -> torch.Tensor:
    """Total softmax-variant loss: sum over (j, i) of -S[j,i,j] + lse_k S[j,i,k]."""
    if not torch.all(torch.isfinite(sim)):
        raise NumericalError("similarity matrix contains non-finite entries")
    n = sim.shape[0]
    own = torch.diagonal(sim, dim1=0, dim2=2).T  # [N, M]
    return (torch.logsumexp(sim, dim=2) - own).sum()


def ge2e_loss_oracle(embeddings, w: float, b: float) -> float:
    """Brute-force reference: explicit loops and naive centroid re-summation."""
    emb = [[list(map(float, e)) for e in spk] for spk in np.asarray(embeddings)]
    n = len(emb)
    m = len(emb[0])
    d = len(emb[0][0])

    def dot(u, v):
        return sum(u[t] * v[t] for t in range(d))

    def norm(u):
        return math.sqrt(sum(x * x for x in u))

    total = 0.0
    for j in range(n):
        for i in range(m):
            e = emb[j][i]
            sims = []
            for k in range(n):
                acc = [0.0] * d
                count = 0
                for mm in range(m):
                    if k == j and mm == i:
                        continue
                    for t in range(d):
                        acc[t] += emb[k][mm][t]
                    count += 1
                cent = [x / count for x in acc]
                sims.append(w * dot(e, cent) / (norm(e) * norm(cent)) + b)
            lse = math.log(sum(math.exp(s) for s in sims))
            total += -sims[j] + lse
    return total
