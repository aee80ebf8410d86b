import math
import zlib

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfrecon import autodiff as ad
from sfrecon import nn
from sfrecon import optim
from sfrecon.autodiff import Tensor
from sfrecon.errors import NonFiniteError, ShapeError
from sfrecon.gradcheck import grad_check


def leaf(rng, shape, lo=-2.0, hi=2.0, name=None):
    return Tensor(rng.uniform(lo, hi, shape), requires_grad=True, name=name)


def random_shape(rng, ndim):
    return tuple(int(n) for n in rng.integers(1, 9, ndim))


# each entry builds (fn, params) for one registered operation on random shapes
def _unary(op, lo=-2.0, hi=2.0):
    def build(rng):
        x = leaf(rng, random_shape(rng, int(rng.integers(1, 4))), lo, hi)
        return (lambda: op(x)), {"x": x}
    return build


def _binary(op, positive_rhs=False):
    def build(rng):
        shape = random_shape(rng, int(rng.integers(1, 4)))
        # right operand broadcasts along a random subset of axes
        rshape = tuple(1 if rng.random() < 0.3 else n for n in shape)
        a = leaf(rng, shape)
        b = leaf(rng, rshape, 0.5, 2.0) if positive_rhs else leaf(rng, rshape)
        return (lambda: op(a, b)), {"a": a, "b": b}
    return build


def _matmul(rng):
    m, k, n = random_shape(rng, 3)
    lead = random_shape(rng, int(rng.integers(0, 2)))
    a, b = leaf(rng, (*lead, m, k)), leaf(rng, (k, n))
    return (lambda: ad.matmul(a, b)), {"a": a, "b": b}


def _softmax(rng):
    x = leaf(rng, random_shape(rng, 2))
    axis = int(rng.integers(0, 2))
    return (lambda: ad.softmax(x, axis=axis)), {"x": x}


def _reduce(op):
    def build(rng):
        x = leaf(rng, random_shape(rng, 3))
        axis = [None, 0, 1, 2, (0, 2)][int(rng.integers(0, 5))]
        keep = bool(rng.integers(0, 2))
        return (lambda: op(x, axis=axis, keepdims=keep)), {"x": x}
    return build


def _reshape(rng):
    x = leaf(rng, random_shape(rng, 2))
    return (lambda: ad.reshape(x, (-1,))), {"x": x}


def _transpose(rng):
    x = leaf(rng, random_shape(rng, 3))
    axes = tuple(int(i) for i in rng.permutation(3))
    return (lambda: ad.transpose(x, axes)), {"x": x}


def _broadcast(rng):
    n = int(rng.integers(1, 9))
    x = leaf(rng, (1, n))
    rows = int(rng.integers(1, 9))
    return (lambda: ad.broadcast_to(x, (rows, n))), {"x": x}


def _concat(rng):
    a, b = leaf(rng, (3, int(rng.integers(1, 9)))), leaf(rng, (3, int(rng.integers(1, 9))))
    return (lambda: ad.concat([a, b], axis=-1)), {"a": a, "b": b}


def _getitem(rng):
    x = leaf(rng, random_shape(rng, 2))
    idx = rng.integers(0, x.shape[0], 5)
    return (lambda: x[idx]), {"x": x}


OPS = {
    "add": _binary(ad.add),
    "sub": _binary(ad.sub),
    "mul": _binary(ad.mul),
    "div": _binary(ad.div, positive_rhs=True),
    "matmul": _matmul,
    "exp": _unary(ad.exp),
    "log": _unary(ad.log, 0.2, 3.0),
    "square": _unary(ad.square),
    "softplus": _unary(ad.softplus, -5, 5),
    "gelu": _unary(ad.gelu, -4, 4),
    "softmax": _softmax,
    "sum": _reduce(ad.sum),
    "mean": _reduce(ad.mean),
    "reshape": _reshape,
    "transpose": _transpose,
    "broadcast_to": _broadcast,
    "concat": _concat,
    "getitem": _getitem,
}


class TestOperationGradients:
    @pytest.mark.parametrize("name", sorted(OPS))
    def test_hundred_random_trials(self, name):
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        worst = 0.0
        for trial in range(100):
            fn, params = OPS[name](rng)
            report = grad_check(fn, params, seed=trial)
            worst = max(worst, report.max_rel_error)
        assert worst < 1e-4

    def test_reused_node_accumulates(self):
        x = Tensor([1.5, -2.0], requires_grad=True)
        y = x * x + x
        ad.sum(y).backward()
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_no_grad_builds_no_graph(self):
        x = Tensor([1.0], requires_grad=True)
        with ad.no_grad():
            y = ad.exp(x)
        assert y._backward is None

    def test_report_lists_failures(self):
        x = Tensor([0.3, 0.7], requires_grad=True)

        def broken():
            # forward squares, backward pretends identity
            return ad._make(x.data ** 2, (x,), lambda g: (g,))
        report = grad_check(broken, {"x": x})
        assert not report.ok and len(report.failures) == 2


class TestGelu:
    def test_zero(self):
        assert ad.gelu(Tensor(0.0)).data == 0.0

    def test_large_input(self):
        assert abs(float(ad.gelu(Tensor(10.0)).data) - 10.0) < 1e-6

    def test_exact_erf_form(self):
        x = np.linspace(-5, 5, 41)
        with mpmath.workdps(40):
            ref = [float(mpmath.mpf(v) * mpmath.ncdf(v)) for v in x]
        np.testing.assert_allclose(ad.gelu(Tensor(x)).data, ref, rtol=1e-13, atol=0)

    def test_gradient_at_zero(self):
        x = Tensor(0.0, requires_grad=True)
        ad.gelu(x).backward()
        h = 1e-6
        fd = (float(ad.gelu(Tensor(h)).data) - float(ad.gelu(Tensor(-h)).data)) / (2 * h)
        assert abs(float(x.grad) - 0.5) < 1e-9 and abs(fd - 0.5) < 1e-9


class TestSdpa:
    def test_single_key(self):
        rng = np.random.default_rng(0)
        q, k, v = rng.normal(size=(4, 3)), rng.normal(size=(1, 3)), rng.normal(size=(1, 5))
        out, w = nn.sdpa(q, k, v)
        np.testing.assert_array_equal(w.data, np.ones((4, 1)))
        np.testing.assert_allclose(out.data, np.repeat(v, 4, axis=0), rtol=1e-15)

    def test_identical_keys_uniform(self):
        rng = np.random.default_rng(1)
        k = np.tile(rng.normal(size=(1, 3)), (6, 1))
        _, w = nn.sdpa(rng.normal(size=(2, 3)), k, rng.normal(size=(6, 2)))
        np.testing.assert_allclose(w.data, 1 / 6, rtol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 8), n=st.integers(1, 8), d=st.integers(1, 8))
    def test_rows_normalized_and_convex(self, seed, m, n, d):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(n, 3))
        out, w = nn.sdpa(rng.normal(size=(m, d)) * 3, rng.normal(size=(n, d)) * 3, v)
        np.testing.assert_allclose(w.data.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(out.data >= v.min(axis=0) - 1e-12) and np.all(out.data <= v.max(axis=0) + 1e-12)

    def test_matches_hand_formula(self):
        rng = np.random.default_rng(2)
        q, k, v = rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 2))
        logits = q @ k.T / 2.0
        w = np.exp(logits - logits.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        out, got = nn.sdpa(q, k, v)
        np.testing.assert_allclose(got.data, w, rtol=1e-13)
        np.testing.assert_allclose(out.data, w @ v, rtol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nn.sdpa(np.ones((2, 3)), np.ones((4, 2)), np.ones((4, 1)))


def attention_params(rng, d_q, d_k, d_v, d_model, d_out, heads):
    params = {}
    nn.init_attention(params, rng, "a", d_q, d_k, d_v, d_model, d_out)
    return params, nn.AttentionParams.from_params(params, "a", heads)


class TestMultiHead:
    def test_single_head_identity_reduces_to_sdpa(self):
        rng = np.random.default_rng(3)
        eye = lambda: Tensor(np.eye(4))
        ap = nn.AttentionParams(1, eye(), eye(), eye(), eye())
        q, k, v = rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        out, _ = nn.multihead_cross_attention(ap, q, k, v)
        np.testing.assert_allclose(out.data, nn.sdpa(q, k, v)[0].data, rtol=1e-14)

    def test_zero_values_zero_output(self):
        rng = np.random.default_rng(4)
        _, ap = attention_params(rng, 2, 2, 3, 8, 5, 4)
        out, _ = nn.multihead_cross_attention(ap, rng.normal(size=(6, 2)), rng.normal(size=(7, 2)), np.zeros((7, 3)))
        np.testing.assert_array_equal(out.data, 0)

    def test_weights_shape_and_normalization(self):
        rng = np.random.default_rng(5)
        _, ap = attention_params(rng, 2, 2, 3, 8, 5, 4)
        _, w = nn.multihead_cross_attention(ap, rng.normal(size=(2, 6, 2)), rng.normal(size=(2, 7, 2)),
                                            rng.normal(size=(2, 7, 3)))
        assert w.shape == (2, 4, 6, 7)
        np.testing.assert_allclose(w.data.sum(-1), 1.0, atol=1e-12)

    def test_projection_gradients(self):
        rng = np.random.default_rng(6)
        params, ap = attention_params(rng, 4, 4, 4, 4, 4, 2)
        q, k, v = (Tensor(rng.normal(size=(4, 4))) for _ in range(3))
        report = grad_check(lambda: nn.multihead_cross_attention(ap, q, k, v)[0], params)
        assert report.max_rel_error < 1e-5

    def test_input_gradients(self):
        rng = np.random.default_rng(7)
        _, ap = attention_params(rng, 3, 3, 2, 6, 2, 3)
        q, k, v = leaf(rng, (4, 3)), leaf(rng, (5, 3)), leaf(rng, (5, 2))
        report = grad_check(lambda: nn.multihead_cross_attention(ap, q, k, v)[0], {"q": q, "k": k, "v": v})
        assert report.max_rel_error < 1e-5

    def test_heads_must_divide_width(self):
        rng = np.random.default_rng(8)
        params = {}
        nn.init_attention(params, rng, "a", 2, 2, 2, 6, 2)
        with pytest.raises(ShapeError):
            nn.AttentionParams.from_params(params, "a", 4)

    def test_input_shape_mismatch(self):
        rng = np.random.default_rng(9)
        _, ap = attention_params(rng, 2, 2, 3, 4, 3, 2)
        with pytest.raises(ShapeError):
            nn.multihead_cross_attention(ap, np.ones((3, 2)), np.ones((4, 2)), np.ones((5, 3)))

    def test_glorot_limits(self):
        w = nn.glorot(np.random.default_rng(0), 30, 70)
        assert np.abs(w).max() <= math.sqrt(6 / 100)


def sa_params(rng, d=8):
    params = {}
    nn.init_self_attention_block(params, rng, "sa", d)
    return params


class TestSelfAttention:
    def test_single_row(self):
        rng = np.random.default_rng(10)
        params = sa_params(rng)
        x = rng.normal(size=(1, 8))
        a = nn.self_attention_block(params, "sa", Tensor(x), 2).data
        b = nn.self_attention_block(params, "sa", Tensor(x), 2).data
        assert np.all(np.isfinite(a)) and a.tobytes() == b.tobytes()
        ap = nn.AttentionParams.from_params(params, "sa.attn", 2)
        _, w = nn.multihead_cross_attention(ap, x, x, x)
        np.testing.assert_array_equal(w.data, 1.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8))
    def test_permutation_equivariance(self, seed, n):
        rng = np.random.default_rng(seed)
        params = sa_params(rng)
        x = rng.normal(size=(n, 8))
        perm = rng.permutation(n)
        out = nn.self_attention_block(params, "sa", Tensor(x), 4).data
        out_p = nn.self_attention_block(params, "sa", Tensor(x[perm]), 4).data
        np.testing.assert_allclose(out_p, out[perm], rtol=1e-13, atol=1e-13)

    def test_gradients(self):
        rng = np.random.default_rng(11)
        params = sa_params(rng, d=4)
        x = leaf(rng, (3, 4))
        report = grad_check(lambda: nn.self_attention_block(params, "sa", x, 2), {**params, "x": x})
        assert report.max_rel_error < 1e-5

    def test_mean_aggregation_permutation_invariant(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(7, 5))
        perm = rng.permutation(7)
        a = ad.mean(Tensor(x), axis=0).data
        b = ad.mean(Tensor(x[perm]), axis=0).data
        np.testing.assert_allclose(a, b, rtol=1e-15, atol=1e-15)


class TestSchedule:
    def test_endpoints(self):
        assert optim.lr_schedule(0) == pytest.approx(1e-5, rel=1e-12)
        assert optim.lr_schedule(20) == 1e-4
        assert optim.lr_schedule(199) == 1e-4
        assert optim.lr_schedule(200) == 1e-5
        assert optim.lr_schedule(299) == 1e-5

    def test_geometric_ramp(self):
        rates = [optim.lr_schedule(e) for e in range(21)]
        ratios = np.array(rates[1:]) / np.array(rates[:-1])
        np.testing.assert_allclose(ratios, 10 ** (1 / 20), rtol=1e-12)

    def test_piecewise_monotone(self):
        rates = np.array([optim.lr_schedule(e) for e in range(300)])
        assert np.all(np.diff(rates[:200]) >= 0) and np.all(np.diff(rates[200:]) == 0)


class TestAdam:
    def test_first_step_is_signed_lr(self):
        for g in [3.7, -0.02, 1e3]:
            p = {"w": Tensor([1.0], requires_grad=True)}
            st_ = optim.OptimizerState(base_lr=1e-3, warmup_epochs=0)
            optim.adam_step(st_, p, epoch=5, grads={"w": np.array([g])})
            assert abs(p["w"].data[0] - (1.0 - 1e-3 * np.sign(g))) < 1e-6

    def test_zero_gradient_is_fixed_point(self):
        rng = np.random.default_rng(0)
        p = {"w": Tensor(rng.normal(size=(3, 4)), requires_grad=True)}
        before = p["w"].data.copy()
        st_ = optim.OptimizerState()
        for e in range(5):
            optim.adam_step(st_, p, e, grads={"w": np.zeros((3, 4))})
        np.testing.assert_array_equal(p["w"].data, before)

    def test_reference_trajectory(self):
        # textbook Adam written out longhand
        rng = np.random.default_rng(1)
        w0 = rng.normal(size=5)
        grads = rng.normal(size=(10, 5))
        p = {"w": Tensor(w0.copy(), requires_grad=True)}
        st_ = optim.OptimizerState(base_lr=1e-2, warmup_epochs=0, decay_epoch=100)
        w, m, v = w0.copy(), np.zeros(5), np.zeros(5)
        for t, g in enumerate(grads, start=1):
            optim.adam_step(st_, p, 1, grads={"w": g})
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            w = w - 1e-2 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(p["w"].data, w, rtol=1e-13)
        assert st_.step == 10

    def test_nonfinite_gradient_aborts(self):
        p = {"a": Tensor([1.0], requires_grad=True), "b": Tensor([2.0], requires_grad=True)}
        st_ = optim.OptimizerState()
        with pytest.raises(NonFiniteError) as info:
            optim.adam_step(st_, p, 0, grads={"a": np.array([0.1]), "b": np.array([np.nan])})
        assert info.value.name == "b"
        assert p["a"].data[0] == 1.0 and st_.step == 0

    def test_deterministic_trajectory(self):
        def run():
            rng = np.random.default_rng(2)
            params = sa_params(rng, d=4)
            st_ = optim.OptimizerState(base_lr=1e-2, warmup_epochs=2)
            x = Tensor(rng.normal(size=(3, 4)))
            for e in range(4):
                for t in params.values():
                    t.grad = None
                ad.sum(ad.square(nn.self_attention_block(params, "sa", x, 2))).backward()
                optim.adam_step(st_, params, e)
            return b"".join(t.data.tobytes() for t in params.values())
        assert run() == run()
