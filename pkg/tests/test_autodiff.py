"""Finite-difference gradient checks for every differentiable op.

Oracle: central differences at 64-bit precision on a scalar functional
sum(w * f(x)) with fixed random w, compared coordinate-by-coordinate.
"""

import numpy as np
import pytest

from meshgen import autodiff as ad


RNG = np.random.default_rng(42)
EPS = 1e-6
RTOL = 1e-4


def check_grad(fn, *arrays, n_coords=20, eps=EPS, rtol=RTOL, seed=0):
    """fn maps Tensors -> Tensor; checks d sum(w*out) / d each input."""
    rng = np.random.default_rng(seed)
    tensors = [ad.Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)
               for a in arrays]
    out = fn(*tensors)
    w = rng.normal(size=out.data.shape)

    def scalar(arrs):
        ts = [ad.Tensor(a) for a in arrs]
        return float(np.sum(w * fn(*ts).data))

    loss = ad.tsum(ad.mul(out, ad.Tensor(w)))
    loss.backward()
    for ti, t in enumerate(tensors):
        flat = t.data.reshape(-1)
        coords = rng.choice(flat.size, size=min(n_coords, flat.size),
                            replace=False)
        for c in coords:
            base = [np.array(x.data, copy=True) for x in tensors]
            base[ti].reshape(-1)[c] += eps
            up = scalar(base)
            base[ti].reshape(-1)[c] -= 2 * eps
            down = scalar(base)
            num = (up - down) / (2 * eps)
            ana = t.grad.reshape(-1)[c]
            denom = max(abs(num), abs(ana), 1e-8)
            assert abs(num - ana) / denom < rtol, \
                f"input {ti} coord {c}: numeric {num} vs analytic {ana}"


class TestElementwise:
    def test_add(self):
        check_grad(ad.add, RNG.normal(size=(3, 4)), RNG.normal(size=(3, 4)))

    def test_add_broadcast(self):
        check_grad(ad.add, RNG.normal(size=(3, 4)), RNG.normal(size=(4,)))

    def test_mul(self):
        check_grad(ad.mul, RNG.normal(size=(3, 4)), RNG.normal(size=(3, 4)))

    def test_mul_broadcast(self):
        check_grad(ad.mul, RNG.normal(size=(2, 3, 4)), RNG.normal(size=(3, 1)))

    def test_mul_scalar(self):
        check_grad(lambda x: ad.mul_scalar(x, 3.7), RNG.normal(size=(5, 2)))

    def test_relu(self):
        x = RNG.normal(size=(4, 5))
        x[np.abs(x) < 1e-2] = 0.5  # stay away from the kink
        check_grad(ad.relu, x)


class TestMatmul:
    def test_plain(self):
        check_grad(ad.matmul, RNG.normal(size=(3, 4)), RNG.normal(size=(4, 5)))

    def test_batched(self):
        check_grad(ad.matmul, RNG.normal(size=(2, 3, 4)),
                   RNG.normal(size=(2, 4, 5)))

    def test_broadcast_weights(self):
        check_grad(ad.matmul, RNG.normal(size=(2, 3, 4)),
                   RNG.normal(size=(4, 5)))


class TestNormalizers:
    def test_softmax(self):
        check_grad(lambda x: ad.softmax(x, axis=-1), RNG.normal(size=(3, 6)))

    def test_softmax_other_axis(self):
        check_grad(lambda x: ad.softmax(x, axis=1), RNG.normal(size=(2, 5, 3)))

    def test_layer_norm(self):
        check_grad(ad.layer_norm, RNG.normal(size=(4, 8)),
                   RNG.uniform(0.5, 1.5, size=8), RNG.normal(size=8))

    def test_layer_norm_batched(self):
        check_grad(ad.layer_norm, RNG.normal(size=(2, 3, 8)),
                   RNG.uniform(0.5, 1.5, size=8), RNG.normal(size=8))


class TestIndexing:
    def test_embedding(self):
        idx = RNG.integers(0, 7, size=(3, 5))
        check_grad(lambda t: ad.embedding(t, idx), RNG.normal(size=(7, 4)))

    def test_embedding_repeated_rows_accumulate(self):
        idx = np.array([[0, 0, 0]])
        check_grad(lambda t: ad.embedding(t, idx), RNG.normal(size=(2, 4)))

    def test_take_along(self):
        idx = RNG.integers(0, 6, size=(2, 9))
        check_grad(lambda t: ad.take_along(t, idx), RNG.normal(size=(2, 6, 4)))

    def test_slice_axis(self):
        check_grad(lambda t: ad.slice_axis(t, 1, 1, 4), RNG.normal(size=(2, 6, 3)))

    def test_concat(self):
        check_grad(lambda a, b: ad.concat([a, b], axis=-1),
                   RNG.normal(size=(2, 3)), RNG.normal(size=(2, 5)))


class TestShape:
    def test_reshape(self):
        check_grad(lambda t: ad.reshape(t, (6, 2)), RNG.normal(size=(3, 4)))

    def test_transpose(self):
        check_grad(lambda t: ad.transpose(t, (1, 0, 2)), RNG.normal(size=(2, 3, 4)))

    def test_sum_axis(self):
        check_grad(lambda t: ad.tsum(t, axis=1), RNG.normal(size=(3, 4, 2)))

    def test_mean(self):
        check_grad(lambda t: ad.tmean(t, axis=-1), RNG.normal(size=(3, 4)))


class TestAttention:
    def test_unmasked(self):
        check_grad(ad.scaled_dot_attention,
                   RNG.normal(size=(2, 4, 8)), RNG.normal(size=(2, 5, 8)),
                   RNG.normal(size=(2, 5, 8)))

    def test_causal_masked(self):
        t = 4
        mask = np.triu(np.full((t, t), ad.NEG_INF), k=1)
        check_grad(lambda q, k, v: ad.scaled_dot_attention(q, k, v, mask),
                   RNG.normal(size=(1, t, 8)), RNG.normal(size=(1, t, 8)),
                   RNG.normal(size=(1, t, 8)))

    def test_masked_positions_get_zero_attention(self):
        t = 3
        mask = np.triu(np.full((t, t), ad.NEG_INF), k=1)
        q = ad.Tensor(np.random.default_rng(0).normal(size=(1, t, 4)))
        k = ad.Tensor(np.random.default_rng(1).normal(size=(1, t, 4)))
        v = ad.Tensor(np.eye(t)[None].astype(np.float64))
        out = ad.scaled_dot_attention(q, k, v, mask)
        # row 0 can only attend to key 0
        assert np.allclose(out.data[0, 0], [1, 0, 0])


class TestCrossEntropy:
    def test_matches_nll(self):
        logits = RNG.normal(size=(2, 5, 7))
        targets = RNG.integers(0, 7, size=(2, 5))
        t = ad.Tensor(logits)
        loss = ad.cross_entropy_logits(t, targets)
        z = logits - logits.max(axis=-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        want = -logp[np.arange(2)[:, None], np.arange(5)[None], targets].sum()
        assert np.isclose(float(loss.data), want)

    def test_gradient(self):
        targets = RNG.integers(0, 7, size=(2, 5))
        check_grad(lambda t: ad.cross_entropy_logits(t, targets),
                   RNG.normal(size=(2, 5, 7)))

    def test_weighted_gradient(self):
        targets = RNG.integers(0, 6, size=(3, 4))
        w = RNG.uniform(0.0, 1.0, size=(3, 4))
        w[0, 1] = 0.0  # padded positions carry no gradient
        check_grad(lambda t: ad.cross_entropy_logits(t, targets, w),
                   RNG.normal(size=(3, 4, 6)))

    def test_zero_weight_position_has_zero_grad(self):
        targets = np.zeros((1, 3), dtype=np.int64)
        w = np.array([[1.0, 0.0, 1.0]])
        t = ad.Tensor(RNG.normal(size=(1, 3, 4)), requires_grad=True)
        ad.cross_entropy_logits(t, targets, w).backward()
        assert np.all(t.grad[0, 1] == 0.0)


class TestMechanics:
    def test_backward_accumulates_through_shared_node(self):
        x = ad.Tensor(np.array([2.0]), requires_grad=True)
        y = ad.add(x, x)  # dy/dx = 2
        z = ad.mul(y, y)  # dz/dy = 2y = 8
        z.backward()
        assert np.isclose(x.grad[0], 16.0)

    def test_no_grad_disables_graph(self):
        x = ad.Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            y = ad.mul(x, x)
        assert not y.requires_grad

    def test_dropout_train_scales_and_eval_is_identity(self):
        x = ad.Tensor(np.ones((100, 10)), requires_grad=True)
        rng = np.random.default_rng(0)
        y = ad.dropout(x, 0.5, rng, train=True)
        kept = y.data != 0
        assert np.allclose(y.data[kept], 2.0)  # inverted scaling
        assert 0.3 < kept.mean() < 0.7
        y2 = ad.dropout(x, 0.5, rng, train=False)
        assert y2 is x

    def test_dropout_gradient_matches_mask(self):
        x = ad.Tensor(np.ones((5, 5)), requires_grad=True)
        y = ad.dropout(x, 0.4, np.random.default_rng(1), train=True)
        ad.tsum(y).backward()
        assert np.allclose(x.grad, (y.data != 0) / 0.6)
