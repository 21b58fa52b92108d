"""Substrate tests: primitive forward values, reverse-mode vs central
finite differences, and the grad_check harness contract."""

import math

import numpy as np
import pytest

from speechalign.errors import ConfigError, DeterminismError, NumericError, ShapeError
from speechalign.nn import ParamStore, Tensor, constant, grad_check, no_grad, ops


def fd_input_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar f w.r.t. every entry of x."""
    g = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = g.reshape(-1)
    for i in range(flat_x.size):
        saved = flat_x[i]
        flat_x[i] = saved + eps
        fp = f(x)
        flat_x[i] = saved - eps
        fm = f(x)
        flat_x[i] = saved
        flat_g[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3)
    return float((np.abs(a - b) / denom).max(initial=0.0))


class TestForwardValues:
    def test_identity_composition(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        t = Tensor(x)
        y = ops.add(ops.mul(t, constant(np.ones((2, 2)))), constant(np.zeros((2, 2))))
        np.testing.assert_array_equal(y.data, x)

    def test_softmax_symmetry(self):
        y = ops.softmax_rows(Tensor(np.array([[0.0, 0.0]])))
        np.testing.assert_allclose(y.data, [[0.5, 0.5]], atol=1e-15)

    def test_layernorm_hand_value(self):
        # row (1, 3): mean 2, population variance 1 -> (-1, 1) at eps ~ 0
        y = ops.layer_norm_rows(Tensor(np.array([[1.0, 3.0]])), eps=1e-12)
        np.testing.assert_allclose(y.data, [[-1.0, 1.0]], atol=1e-6)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n, d = rng.integers(1, 9, size=2)
            y = ops.softmax_rows(Tensor(rng.normal(size=(n, d)) * 5))
            np.testing.assert_allclose(y.data.sum(axis=1), 1.0, atol=1e-12)

    def test_layernorm_moments(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n, d = int(rng.integers(1, 9)), int(rng.integers(2, 9))
            y = ops.layer_norm_rows(Tensor(rng.normal(size=(n, d)) * 3 + 1), eps=1e-12).data
            assert np.abs(y.mean(axis=1)).max() < 1e-10
            assert np.abs(y.var(axis=1) - 1.0).max() < 1e-6

    def test_shape_mismatch_names_op(self):
        with pytest.raises(ShapeError, match="matmul"):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
        with pytest.raises(ShapeError, match="add"):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))))

    def test_nonfinite_rejected_in_checked_mode(self):
        a = Tensor(np.array([[1e308]]))
        with np.errstate(over="ignore"), pytest.raises(NumericError, match="mul"):
            ops.mul(a, a)

    def test_no_grad_blocks_taping(self):
        p = Tensor(np.ones((2, 2)), requires_grad=True)
        with no_grad():
            y = ops.mul(p, p)
        assert not y.requires_grad


def _loss_through(op_builder, x: np.ndarray, w: np.ndarray) -> float:
    t = Tensor(x)
    out = op_builder(t)
    return ops.sum_all(ops.mul(out, constant(w))).item()


PRIMITIVES = {
    "add": lambda t, c: ops.add(t, c),
    "sub": lambda t, c: ops.sub(t, c),
    "mul": lambda t, c: ops.mul(t, c),
    "scale": lambda t, c: ops.scale(t, 1.7),
    "matmul": lambda t, c: ops.matmul(t, ops.transpose(c)),
    "abs": lambda t, c: ops.abs_(t),
    "gelu": lambda t, c: ops.gelu(t),
    "softmax": lambda t, c: ops.softmax_rows(t),
    "layer_norm": lambda t, c: ops.layer_norm_rows(t),
    "concat_rows": lambda t, c: ops.concat_rows(t, c),
    "transpose": lambda t, c: ops.transpose(t),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(name):
    build = PRIMITIVES[name]
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        x = rng.normal(size=(n, d))
        other = rng.normal(size=(n, d))
        if name == "abs":
            x[np.abs(x) < 1e-3] += 0.1  # keep clear of the kink

        def combined(t):
            return build(t, constant(other))

        out_shape = combined(Tensor(x)).shape
        w = np.random.default_rng(seed + 1000).normal(size=out_shape)

        t = Tensor(x, requires_grad=True)
        loss = ops.sum_all(ops.mul(combined(t), constant(w)))
        loss.backward()
        fd = fd_input_grad(lambda arr: _loss_through(combined, arr, w), x.copy())
        assert rel_err(t.grad, fd) < 1e-4, f"{name} seed {seed}"


def test_attention_gradients_match_finite_differences():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        tq, tk = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        heads = int(rng.choice([1, 2]))
        width = heads * int(rng.integers(1, 5))
        mats = [rng.normal(size=(tq, width)), rng.normal(size=(tk, width)), rng.normal(size=(tk, width))]
        w = rng.normal(size=(tq, width))

        def loss_val(arrs):
            q, k, v = (Tensor(a) for a in arrs)
            return ops.sum_all(ops.mul(ops.attention(q, k, v, heads), constant(w))).item()

        tensors = [Tensor(a, requires_grad=True) for a in mats]
        loss = ops.sum_all(ops.mul(ops.attention(*tensors, heads), constant(w)))
        loss.backward()
        for i in range(3):
            def f(arr, i=i):
                arrs = [m.copy() for m in mats]
                arrs[i] = arr
                return loss_val(arrs)

            fd = fd_input_grad(f, mats[i].copy())
            assert rel_err(tensors[i].grad, fd) < 1e-4, f"attention arg {i} seed {seed}"


def test_embed_and_slice_gradients():
    rng = np.random.default_rng(7)
    table = rng.normal(size=(6, 4))
    ids = np.array([1, 1, 4, 0])
    w = rng.normal(size=(2, 4))

    def f(arr):
        t = Tensor(arr)
        e = ops.embed(t, ids)
        return ops.sum_all(ops.mul(ops.slice_rows(e, 1, 3), constant(w))).item()

    t = Tensor(table, requires_grad=True)
    loss = ops.sum_all(ops.mul(ops.slice_rows(ops.embed(t, ids), 1, 3), constant(w)))
    loss.backward()
    fd = fd_input_grad(f, table.copy())
    assert rel_err(t.grad, fd) < 1e-6


def test_cross_entropy_uniform_logits():
    # uniform over 8 classes -> ln 8 per position
    logits = Tensor(np.zeros((3, 8)))
    loss = ops.masked_cross_entropy(logits, np.array([0, 3, 7]))
    assert loss.item() == pytest.approx(math.log(8.0), rel=1e-12)


def test_cross_entropy_gradient():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 5))
    ids = np.array([0, 2, 4, 1])

    def f(arr):
        return ops.masked_cross_entropy(Tensor(arr), ids).item()

    t = Tensor(x, requires_grad=True)
    ops.masked_cross_entropy(t, ids).backward()
    fd = fd_input_grad(f, x.copy())
    assert rel_err(t.grad, fd) < 1e-6


def test_sigmoid_bce_values_and_gradient():
    # logit 0 -> ln 2 regardless of target
    loss = ops.sigmoid_bce(Tensor(np.zeros((2, 2))), np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert loss.item() == pytest.approx(math.log(2.0), rel=1e-12)

    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 4))
    y = (rng.random(size=(3, 4)) < 0.5).astype(float)

    def f(arr):
        return ops.sigmoid_bce(Tensor(arr), y).item()

    t = Tensor(x, requires_grad=True)
    ops.sigmoid_bce(t, y).backward()
    fd = fd_input_grad(f, x.copy())
    assert rel_err(t.grad, fd) < 1e-6


class TestGradCheckHarness:
    def test_sum_of_squares(self):
        ps = ParamStore(dtype=np.float64)
        ps.add("theta", np.array([[1.0, 2.0, 3.0]]))

        def loss(p):
            t = p["theta"]
            return ops.sum_all(ops.mul(t, t))

        report = grad_check(loss, ps, eps=1e-5, tol=1e-4)
        assert report.passed
        assert report.max_rel_err < 1e-8

    def test_constant_loss_passes(self):
        ps = ParamStore(dtype=np.float64)
        ps.add("unused", np.ones((2, 2)))

        def loss(p):
            return constant(np.array([[4.2]]))

        report = grad_check(loss, ps)
        assert report.passed
        assert report.max_rel_err == 0.0

    def test_nondeterministic_loss_rejected(self):
        ps = ParamStore(dtype=np.float64)
        ps.add("x", np.ones((1, 1)))
        state = {"n": 0.0}

        def loss(p):
            state["n"] += 1.0
            return ops.scale(p["x"], state["n"])

        with pytest.raises(DeterminismError):
            grad_check(loss, ps)

    def test_float32_store_rejected(self):
        ps = ParamStore(dtype=np.float32)
        ps.add("x", np.ones((1, 1)))
        with pytest.raises(ConfigError):
            grad_check(lambda p: ops.sum_all(p["x"]), ps)

    def test_frozen_params_excluded(self):
        ps = ParamStore(dtype=np.float64)
        ps.add("a", np.ones((1, 2)))
        ps.add("b", np.ones((1, 2)))
        ps.set_trainable("b", False)

        def loss(p):
            return ops.sum_all(ops.mul(p["a"], p["a"]))

        report = grad_check(loss, ps)
        assert [r.name for r in report.per_param] == ["a"]
        assert report.passed
