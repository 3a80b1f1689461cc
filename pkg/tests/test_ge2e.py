import math

import numpy as np
import pytest
import torch

from clonecraft.errors import BatchTooSmall, NumericalError
from clonecraft.ge2e import (
    GE2EParams,
    centroids,
    centroids_leave_one_out,
    ge2e_loss,
    ge2e_loss_oracle,
    similarity_matrix,
    validate_embedding_batch,
)


def unit_batch(rng, n, m, d, dtype=torch.float64):
    raw = rng.normal(size=(n, m, d))
    raw /= np.linalg.norm(raw, axis=-1, keepdims=True)
    return torch.as_tensor(raw, dtype=dtype)


def orthogonal_batch():
    # Speaker 1 utterances all (1, 0); speaker 2 all (0, 1).
    e = torch.zeros(2, 2, 2, dtype=torch.float64)
    e[0, :, 0] = 1.0
    e[1, :, 1] = 1.0
    return e


class TestCentroids:
    def test_identical_utterances(self):
        e = torch.tensor([1.0, 0.0])
        batch = e.repeat(2, 3, 1)
        out = centroids(batch)
        assert torch.allclose(out[0], e) and torch.allclose(out[1], e)

    def test_orthogonal_pair_norm(self):
        batch = torch.zeros(2, 2, 2)
        batch[0, 0, 0] = 1.0
        batch[0, 1, 1] = 1.0
        batch[1, :, 0] = 1.0
        assert torch.linalg.vector_norm(centroids(batch)[0]).item() == pytest.approx(
            math.sqrt(2) / 2)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        batch = unit_batch(rng, 3, 4, 8)
        permuted = batch[:, torch.tensor([2, 0, 3, 1]), :]
        assert torch.allclose(centroids(batch), centroids(permuted))


class TestLeaveOneOut:
    def test_m2_leaves_the_other(self):
        rng = np.random.default_rng(1)
        batch = unit_batch(rng, 2, 2, 4)
        loo = centroids_leave_one_out(batch)
        assert torch.allclose(loo[0, 0], batch[0, 1])
        assert torch.allclose(loo[0, 1], batch[0, 0])

    def test_identical_equals_full(self):
        e = torch.tensor([0.6, 0.8])
        batch = e.repeat(2, 5, 1)
        loo = centroids_leave_one_out(batch)
        full = centroids(batch)
        assert torch.allclose(loo[0, 3], full[0])

    def test_matches_naive_resummation(self):
        rng = np.random.default_rng(2)
        batch = unit_batch(rng, 4, 5, 8)
        loo = centroids_leave_one_out(batch).numpy()
        arr = batch.numpy()
        for j in range(4):
            for i in range(5):
                acc = np.zeros(8)
                for m in range(5):
                    if m != i:
                        acc += arr[j, m]
                assert np.allclose(loo[j, i], acc / 4, atol=1e-6)

    def test_m1_rejected(self):
        with pytest.raises(BatchTooSmall):
            centroids_leave_one_out(torch.ones(2, 1, 4))


class TestSimilarityMatrix:
    def test_orthogonal_batch_entries(self):
        sim = similarity_matrix(orthogonal_batch(), w=1.0, b=0.0)
        for i in range(2):
            assert sim[0, i, 0].item() == pytest.approx(1.0)
            assert sim[0, i, 1].item() == pytest.approx(0.0)
            assert sim[1, i, 1].item() == pytest.approx(1.0)
            assert sim[1, i, 0].item() == pytest.approx(0.0)

    def test_entries_within_bias_plus_minus_scale(self):
        rng = np.random.default_rng(3)
        sim = similarity_matrix(unit_batch(rng, 4, 3, 6), w=10.0, b=-5.0)
        assert sim.min().item() >= -15.0 - 1e-9
        assert sim.max().item() <= 5.0 + 1e-9

    def test_params_module(self):
        rng = np.random.default_rng(4)
        batch = unit_batch(rng, 2, 2, 4, dtype=torch.float32)
        params = GE2EParams()
        sim = similarity_matrix(batch, params)
        assert sim.shape == (2, 2, 2)

    def test_nonpositive_w_rejected(self):
        with pytest.raises(ValueError):
            similarity_matrix(orthogonal_batch(), w=0.0, b=0.0)

    def test_cancelling_centroid_raises(self):
        batch = torch.zeros(2, 2, 2, dtype=torch.float64)
        batch[0, 0, 0] = 1.0
        batch[0, 1, 0] = -1.0  # speaker 0 centroid is exactly zero
        batch[1, :, 1] = 1.0
        with pytest.raises(NumericalError):
            similarity_matrix(batch, w=1.0, b=0.0)

    def test_scale_invariance_of_cosine_pipeline(self):
        # Scaling the raw (pre-normalization) vectors by any positive factor
        # leaves the scaled-cosine matrix unchanged.
        rng = np.random.default_rng(5)
        raw = torch.as_tensor(rng.normal(size=(3, 3, 8)))
        assert torch.allclose(
            similarity_matrix(raw, w=4.0, b=1.0),
            similarity_matrix(raw * 7.3, w=4.0, b=1.0),
        )


class TestGE2ELoss:
    def test_degenerate_identical_batch(self):
        n, m, d = 3, 4, 6
        e = torch.zeros(d, dtype=torch.float64)
        e[0] = 1.0
        batch = e.repeat(n, m, 1)
        loss = ge2e_loss(similarity_matrix(batch, w=2.0, b=1.0)).item()
        assert loss == pytest.approx(n * m * math.log(n), rel=1e-9)

    def test_orthogonal_batch_hand_value(self):
        sim = similarity_matrix(orthogonal_batch(), w=1.0, b=0.0)
        per_utt = math.log(1 + math.exp(-1.0))
        assert ge2e_loss(sim).item() == pytest.approx(4 * per_utt, rel=1e-9)

    def test_loss_decreases_with_scale_on_separated_clusters(self):
        values = [
            ge2e_loss(similarity_matrix(orthogonal_batch(), w=w, b=0.0)).item()
            for w in (1.0, 5.0, 10.0)
        ]
        assert values[0] > values[1] > values[2]

    def test_nonnegative_and_bounded(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(2, 5))
            d = int(rng.integers(2, 16))
            w = float(rng.uniform(0.1, 10))
            b = float(rng.uniform(-5, 5))
            sim = similarity_matrix(unit_batch(rng, n, m, d), w=w, b=b)
            per_utt = torch.logsumexp(sim, dim=2) - torch.diagonal(sim, dim1=0, dim2=2).T
            assert per_utt.min().item() >= -1e-12
            assert per_utt.max().item() <= 2 * w + math.log(n) + 1e-9

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(7)
        batch = unit_batch(rng, 4, 3, 8)
        perm = torch.tensor([2, 0, 3, 1])
        sim = similarity_matrix(batch, w=3.0, b=-1.0)
        sim_perm = similarity_matrix(batch[perm], w=3.0, b=-1.0)
        assert torch.allclose(sim_perm, sim[perm][:, :, perm])
        assert ge2e_loss(sim_perm).item() == pytest.approx(ge2e_loss(sim).item(), rel=1e-12)

    def test_non_finite_rejected(self):
        sim = torch.full((2, 2, 2), float("nan"))
        with pytest.raises(NumericalError):
            ge2e_loss(sim)


class TestOracleEquivalence:
    def test_oracle_on_orthogonal_batch(self):
        value = ge2e_loss_oracle(orthogonal_batch().numpy(), w=1.0, b=0.0)
        assert value == pytest.approx(4 * math.log(1 + math.exp(-1.0)), rel=1e-9)

    def test_oracle_on_degenerate_batch(self):
        e = np.zeros((3, 4, 5))
        e[:, :, 2] = 1.0
        assert ge2e_loss_oracle(e, w=1.0, b=0.0) == pytest.approx(12 * math.log(3), rel=1e-9)

    def test_fast_matches_oracle_random(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(2, 6))
            d = int(rng.integers(2, 17))
            w = float(rng.uniform(0.05, 10))
            b = float(rng.uniform(-5, 5))
            batch = unit_batch(rng, n, m, d)
            fast = ge2e_loss(similarity_matrix(batch, w=w, b=b)).item()
            ref = ge2e_loss_oracle(batch.numpy(), w=w, b=b)
            assert fast == pytest.approx(ref, rel=1e-6)


class TestGradients:
    @staticmethod
    def loss_fn(batch, w, b):
        return ge2e_loss(similarity_matrix(batch, w=w, b=b))

    def test_gradcheck_small_batch(self):
        rng = np.random.default_rng(9)
        batch = unit_batch(rng, 3, 3, 5).requires_grad_(True)
        w = torch.tensor(4.0, dtype=torch.float64, requires_grad=True)
        b = torch.tensor(-1.0, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(self.loss_fn, (batch, w, b), eps=1e-6, atol=1e-6)

    def test_finite_difference_matches_analytic(self):
        rng = np.random.default_rng(10)
        batch = unit_batch(rng, 3, 4, 6).requires_grad_(True)
        w = torch.tensor(5.0, dtype=torch.float64, requires_grad=True)
        b = torch.tensor(0.5, dtype=torch.float64, requires_grad=True)
        loss = self.loss_fn(batch, w, b)
        loss.backward()

        h = 1e-6
        for tensor in (w, b):
            with torch.no_grad():
                tensor += h
                up = self.loss_fn(batch, w, b).item()
                tensor -= 2 * h
                down = self.loss_fn(batch, w, b).item()
                tensor += h
            fd = (up - down) / (2 * h)
            assert fd == pytest.approx(tensor.grad.item(), rel=1e-3)


class TestParams:
    def test_w_clamped_positive(self):
        params = GE2EParams(w=0.5, b=0.0)
        with torch.no_grad():
            params.w -= 2.0  # simulated update driving w negative
        params.clamp_()
        assert params.w.item() >= float(np.float32(1e-4)) > 0

    def test_invalid_init(self):
        with pytest.raises(ValueError):
            GE2EParams(w=-1.0)

    def test_batch_validation(self):
        with pytest.raises(BatchTooSmall):
            validate_embedding_batch(torch.ones(1, 3, 4))
        with pytest.raises(ValueError):
            validate_embedding_batch(torch.full((2, 2, 2), 0.9))
