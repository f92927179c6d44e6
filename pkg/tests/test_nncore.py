import numpy as np
import pytest
import torch

from kgamc.errors import ShapeError
from kgamc.nncore import (
    backward,
    conv1d,
    cosine_matrix,
    cosine_sim,
    glorot_uniform,
    global_avg_pool,
    l2_normalize,
    leaky_relu,
    linear,
    softmax,
)

from oracles import conv1d_ref, fd_gradcheck


def t64(arr, grad=False):
    return torch.tensor(np.asarray(arr), dtype=torch.float64, requires_grad=grad)


class TestConv1d:
    def test_identity_kernel(self):
        x = t64(np.random.default_rng(0).normal(size=(3, 8)))
        w = torch.zeros((3, 3, 1), dtype=torch.float64)
        for c in range(3):
            w[c, c, 0] = 1.0
        out = conv1d(x, w, stride=1)
        assert torch.allclose(out, x)

    def test_same_pad_stride2_length(self):
        x = t64(np.zeros((1, 8)))
        w = t64(np.zeros((4, 1, 3)))
        assert conv1d(x, w, stride=2).shape == (4, 4)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        c_in = int(rng.integers(1, 5))
        c_out = int(rng.integers(1, 5))
        k = int(rng.integers(1, 10))
        t = int(rng.integers(k, 33))
        stride = int(rng.integers(1, 4))
        same = bool(rng.integers(0, 2))
        x = rng.normal(size=(c_in, t))
        w = rng.normal(size=(c_out, c_in, k))
        b = rng.normal(size=c_out)
        got = conv1d(t64(x), t64(w), t64(b), stride=stride, same_pad=same)
        ref = conv1d_ref(x, w, b, stride=stride, same_pad=same)
        assert got.shape == ref.shape
        assert np.allclose(got.numpy(), ref, atol=1e-12)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 2, 10))
        w = rng.normal(size=(3, 2, 5))
        b = rng.normal(size=3)
        batched = conv1d(t64(x), t64(w), t64(b), stride=2)
        for i in range(4):
            single = conv1d(t64(x[i]), t64(w), t64(b), stride=2)
            assert torch.allclose(batched[i], single)

    def test_gradcheck(self):
        rng = np.random.default_rng(4)
        x = t64(rng.normal(size=(2, 8)), grad=True)
        w = t64(rng.normal(size=(3, 2, 3)), grad=True)
        b = t64(rng.normal(size=3), grad=True)
        c = t64(rng.normal(size=(3, 4)))
        err = fd_gradcheck(lambda: (conv1d(x, w, b, stride=2) * c).sum(), [x, w, b])
        assert err < 1e-6

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError, match=r"\(1, 2, 4\).*\(1, 3, 3\)|mismatch"):
            conv1d(torch.zeros(2, 4), torch.zeros(1, 3, 3))


class TestLinear:
    def test_identity(self):
        x = t64(np.random.default_rng(0).normal(size=(4, 3)))
        assert torch.allclose(linear(x, torch.eye(3, dtype=torch.float64)), x)

    def test_scalar_case(self):
        x = t64([[2.0]])
        w = t64([[3.0]])
        b = t64([0.5])
        assert linear(x, w, b).item() == pytest.approx(6.5)

    def test_gradcheck(self):
        rng = np.random.default_rng(1)
        x = t64(rng.normal(size=(3, 4)), grad=True)
        w = t64(rng.normal(size=(4, 2)), grad=True)
        b = t64(rng.normal(size=2), grad=True)
        c = t64(rng.normal(size=(3, 2)))
        err = fd_gradcheck(lambda: (linear(x, w, b) * c).sum(), [x, w, b])
        assert err < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            linear(torch.zeros(2, 3), torch.zeros(4, 2))


class TestActivations:
    def test_leaky_relu_values(self):
        x = t64([2.0, 0.0, -1.0])
        out = leaky_relu(x, 0.01)
        assert out.tolist() == [2.0, 0.0, -0.01]

    def test_leaky_relu_gradcheck(self):
        rng = np.random.default_rng(2)
        vals = rng.normal(size=10)
        vals[np.abs(vals) < 0.05] += 0.1  # stay away from the kink
        x = t64(vals, grad=True)
        c = t64(rng.normal(size=10))
        err = fd_gradcheck(lambda: (leaky_relu(x) * c).sum(), [x])
        assert err < 1e-6

    def test_softmax_uniform(self):
        out = softmax(torch.zeros(2, 5, dtype=torch.float64))
        assert torch.allclose(out, torch.full((2, 5), 0.2, dtype=torch.float64))

    def test_softmax_rows_sum_one(self):
        rng = np.random.default_rng(3)
        out = softmax(t64(rng.normal(size=(6, 9)) * 10))
        assert torch.allclose(out.sum(dim=-1), torch.ones(6, dtype=torch.float64), atol=1e-9)

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(4)
        x = t64(rng.normal(size=(3, 7)))
        assert torch.allclose(softmax(x), softmax(x + 5.0), atol=1e-12)


class TestPoolNormCosine:
    def test_gap_constant_channel(self):
        x = torch.full((3, 9), 2.5, dtype=torch.float64)
        assert torch.allclose(global_avg_pool(x), torch.full((3,), 2.5, dtype=torch.float64))

    def test_gap_t1_squeeze(self):
        x = t64([[4.0], [6.0]])
        assert global_avg_pool(x).tolist() == [4.0, 6.0]

    def test_gap_gradcheck(self):
        rng = np.random.default_rng(5)
        x = t64(rng.normal(size=(2, 6)), grad=True)
        c = t64(rng.normal(size=2))
        err = fd_gradcheck(lambda: (global_avg_pool(x) * c).sum(), [x])
        assert err < 1e-6
        # analytic gradient of the mean is 1/T broadcast
        x.grad = None
        global_avg_pool(x).sum().backward()
        assert torch.allclose(x.grad, torch.full_like(x, 1 / 6))

    def test_l2_normalize_unit_vector(self):
        x = t64([[3.0, 4.0]])
        out = l2_normalize(x)
        assert torch.allclose(out, t64([[0.6, 0.8]]))
        assert torch.allclose(l2_normalize(out), out)

    def test_l2_normalize_zero_guard(self):
        x = t64([[0.0, 0.0], [1.0, 0.0]], grad=True)
        out = l2_normalize(x)
        assert out[0].tolist() == [0.0, 0.0]
        out.sum().backward()
        assert torch.all(torch.isfinite(x.grad))
        assert torch.all(x.grad[0] == 0)  # dead row contributes no gradient

    def test_l2_normalize_norms(self):
        rng = np.random.default_rng(6)
        out = l2_normalize(t64(rng.normal(size=(8, 5)) * 100))
        assert torch.allclose(out.norm(dim=-1), torch.ones(8, dtype=torch.float64), atol=1e-9)

    def test_l2_normalize_gradcheck(self):
        rng = np.random.default_rng(7)
        x = t64(rng.normal(size=(3, 4)), grad=True)
        c = t64(rng.normal(size=(3, 4)))
        err = fd_gradcheck(lambda: (l2_normalize(x) * c).sum(), [x])
        assert err < 1e-6

    def test_cosine_sim_cases(self):
        u = t64([1.0, 2.0, 3.0])
        assert cosine_sim(u, u).item() == pytest.approx(1.0)
        assert cosine_sim(u, -u).item() == pytest.approx(-1.0)
        v = t64([0.0, 3.0, -2.0])
        assert cosine_sim(u, v).item() == pytest.approx(0.0)
        assert cosine_sim(u, torch.zeros(3, dtype=torch.float64)).item() == 0.0

    def test_cosine_sim_gradcheck(self):
        rng = np.random.default_rng(8)
        u = t64(rng.normal(size=5), grad=True)
        v = t64(rng.normal(size=5), grad=True)
        err = fd_gradcheck(lambda: cosine_sim(u, v), [u, v])
        assert err < 1e-6

    def test_cosine_matrix_guard(self):
        x = t64([[1.0, 0.0], [0.0, 0.0]])
        y = t64([[1.0, 0.0], [0.0, 1.0]])
        c = cosine_matrix(x, y)
        assert c[0].tolist() == [1.0, 0.0]
        assert c[1].tolist() == [0.0, 0.0]


class TestBackward:
    def test_sum_gives_ones(self):
        x = t64(np.random.default_rng(0).normal(size=(3, 3)), grad=True)
        backward(x.sum())
        assert torch.allclose(x.grad, torch.ones_like(x))

    def test_accumulation_without_reset(self):
        x = t64([1.0, 2.0], grad=True)
        loss = (x * x).sum()
        backward(loss, retain_graph=True)
        g1 = x.grad.clone()
        backward(loss)
        assert torch.allclose(x.grad, 2 * g1)

    def test_rejects_non_scalar(self):
        x = t64([1.0, 2.0], grad=True)
        with pytest.raises(ShapeError):
            backward(x * 2)

    def test_composed_ops_gradcheck(self):
        rng = np.random.default_rng(9)
        x = t64(rng.normal(size=(2, 12)), grad=True)
        w = t64(rng.normal(size=(3, 2, 3)), grad=True)
        b = t64(rng.normal(size=3), grad=True)
        fc = t64(rng.normal(size=(3, 4)), grad=True)

        def loss():
            h = leaky_relu(conv1d(x, w, b, stride=2))
            pooled = global_avg_pool(h)
            return softmax(linear(pooled.unsqueeze(0), fc)).square().sum()

        err = fd_gradcheck(loss, [x, w, b, fc])
        assert err < 1e-6


class TestInit:
    def test_glorot_bounds_and_determinism(self):
        a = glorot_uniform((20, 30), np.random.default_rng(5))
        b = glorot_uniform((20, 30), np.random.default_rng(5))
        bound = np.sqrt(6 / 50)
        assert torch.all(a.abs() <= bound)
        assert torch.equal(a, b)
        assert a.requires_grad

    def test_conv_fans(self):
        w = glorot_uniform((8, 4, 3), np.random.default_rng(6))
        bound = np.sqrt(6 / (4 * 3 + 8 * 3))
        assert torch.all(w.abs() <= bound)
        assert float(w.detach().abs().max()) > 0.5 * bound  # actually fills the range
