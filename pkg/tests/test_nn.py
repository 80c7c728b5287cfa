import numpy as np
import pytest

from gradcheck import assert_grads_close
from lbsim.autodiff import NumericalError, Tensor, concat
from lbsim.nets import (
    Adam,
    GruCell,
    GruMlp,
    Linear,
    Mlp,
    load_checkpoint,
    save_checkpoint,
)


def rng_of(seed):
    return np.random.default_rng(seed)


class TestMlpForward:
    def test_zero_params_give_zero(self):
        net = Mlp([3, 4, 2], rng_of(0))
        for p in net.parameters():
            p.data[:] = 0.0
        y = net(Tensor([[1.0, -2.0, 3.0]]))
        assert np.array_equal(y.data, np.zeros((1, 2)))

    def test_identity_linear(self):
        layer = Linear(1, 1, rng_of(0))
        layer.w.data[:] = 1.0
        layer.b.data[:] = 0.0
        assert layer(Tensor([[3.0]])).data[0, 0] == 3.0

    def test_matches_plain_numpy(self):
        rng = rng_of(3)
        net = Mlp([3, 5, 2], rng)
        x = rng.standard_normal((4, 3))
        w1, b1 = net.layers[0].w.data, net.layers[0].b.data
        w2, b2 = net.layers[1].w.data, net.layers[1].b.data
        expect = np.maximum(x @ w1 + b1, 0.0) @ w2 + b2
        assert net(Tensor(x)).data == pytest.approx(expect)

    def test_shape_mismatch_raises(self):
        net = Mlp([3, 2], rng_of(0))
        with pytest.raises(ValueError):
            net(Tensor([[1.0, 2.0]]))

    def test_bad_spec_rejected(self):
        with pytest.raises(ValueError):
            Mlp([3], rng_of(0))


def gru_reference(cell, x, h):
    """Scalar-loop recomputation of the gate equations."""
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    z = sig(x @ cell.wz.data + h @ cell.uz.data + cell.bz.data)
    r = sig(x @ cell.wr.data + h @ cell.ur.data + cell.br.data)
    cand = np.tanh(x @ cell.wh.data + (r * h) @ cell.uh.data + cell.bh.data)
    out = np.empty_like(h)
    for i in range(h.shape[0]):
        for j in range(h.shape[1]):
            out[i, j] = (1 - z[i, j]) * h[i, j] + z[i, j] * cand[i, j]
    return out


class TestGru:
    def test_zero_params_halve_hidden(self):
        cell = GruCell(3, 4, rng_of(0))
        for p in cell.parameters():
            p.data[:] = 0.0
        h = Tensor([[1.0, 2.0, -1.0, 0.5]])
        out = cell(Tensor([[0.3, 0.1, -0.2]]), h)
        assert out.data == pytest.approx(0.5 * h.data)

    def test_zero_hidden_zero_params(self):
        cell = GruCell(2, 3, rng_of(0))
        for p in cell.parameters():
            p.data[:] = 0.0
        out = cell(Tensor([[1.0, 1.0]]), cell.initial_state())
        assert np.array_equal(out.data, np.zeros((1, 3)))

    def test_matches_scalar_oracle(self):
        rng = rng_of(5)
        cell = GruCell(3, 4, rng)
        x = rng.standard_normal((2, 3))
        h = rng.standard_normal((2, 4))
        out = cell(Tensor(x), Tensor(h))
        assert out.data == pytest.approx(gru_reference(cell, x, h))


class TestBackward:
    def test_product_rule(self):
        w = Tensor(3.0, requires_grad=True)
        x = Tensor(2.0)
        (w * x).backward()
        assert w.grad == 2.0

    def test_constant_loss_zero_grads(self):
        net = Mlp([2, 3, 1], rng_of(1))
        loss = (net(Tensor([[1.0, 2.0]])) * 0.0).sum()
        loss.backward()
        for p in net.parameters():
            assert np.array_equal(p.grad, np.zeros_like(p.data))

    def test_mlp_finite_difference(self):
        rng = rng_of(7)
        net = Mlp([3, 6, 4, 2], rng)
        x = Tensor(rng.standard_normal((5, 3)))
        assert_grads_close(lambda: (net(x) * net(x)).sum(), net.parameters())

    def test_gru_finite_difference(self):
        rng = rng_of(8)
        cell = GruCell(3, 4, rng)
        x = Tensor(rng.standard_normal((2, 3)))
        h0 = Tensor(rng.standard_normal((2, 4)))

        def loss():
            h = cell(x, h0)
            h = cell(x, h)  # two steps exercise recurrent paths
            return (h * h).sum()

        assert_grads_close(loss, cell.parameters())

    def test_mixed_ops_finite_difference(self):
        rng = rng_of(9)
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 4)), requires_grad=True)

        def loss():
            c = concat([a.elu(), b.abs()], axis=-1)
            p = c.log_softmax(axis=-1)
            picked = p.take_along(np.array([[1], [5], [2]]), axis=-1)
            return (picked * picked).sum() + (a / (b.abs() + 1.0)).sum()

        assert_grads_close(loss, [a, b])

    def test_nan_input_trips_error(self):
        with pytest.raises(NumericalError):
            Tensor([np.nan])


class TestSoftmax:
    def test_rows_sum_to_one(self):
        rng = rng_of(2)
        t = Tensor(rng.standard_normal((4, 6)))
        s = t.softmax(axis=-1)
        assert s.data.sum(axis=-1) == pytest.approx(np.ones(4), abs=1e-12)

    def test_uniform_entropy(self):
        p = Tensor(np.zeros((1, 6))).softmax(axis=-1)
        entropy = -(p * p.log()).sum()
        assert float(entropy.data) == pytest.approx(np.log(6))


class TestAdam:
    def test_zero_grad_leaves_params(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        opt = Adam([p], lr=0.1)
        p.grad = np.zeros(2)
        opt.step()
        assert np.array_equal(p.data, [1.0, 2.0])

    def test_descends_against_constant_gradient(self):
        p = Tensor([0.0], requires_grad=True)
        opt = Adam([p], lr=0.01)
        for _ in range(100):
            p.grad = np.array([2.5])
            opt.step()
        assert p.data[0] < -0.5

    def test_first_step_is_lr_times_sign(self):
        p = Tensor([1.0, -1.0], requires_grad=True)
        opt = Adam([p], lr=0.05)
        p.grad = np.array([3.0, -0.2])
        opt.step()
        assert p.data == pytest.approx([1.0 - 0.05, -1.0 + 0.05], abs=1e-6)


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "ck.npz"
        arrays = {"w": np.arange(6.0).reshape(2, 3), "b": np.ones(3)}
        save_checkpoint(path, arrays, meta={"episode": 7})
        back, meta = load_checkpoint(path)
        assert meta == {"episode": 7}
        assert np.array_equal(back["w"], arrays["w"])

    def test_module_state_round_trip(self, tmp_path):
        net = GruMlp(4, 5, [3], rng_of(11))
        other = GruMlp(4, 5, [3], rng_of(99))
        other.copy_from(net)
        x, h = Tensor(np.ones((1, 4))), net.initial_state()
        a, _ = net(x, h)
        b, _ = other(x, h)
        assert np.array_equal(a.data, b.data)


def test_init_is_seed_reproducible():
    a = Mlp([3, 4, 2], rng_of(42))
    b = Mlp([3, 4, 2], rng_of(42))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa.data, pb.data)
