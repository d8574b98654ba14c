"""
autograd 测试

前向数值、反向传播语义，以及每个可微算子的有限差分梯度检查（f64）。
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from skupatch.autograd import ComputationRecord, Tensor, gradcheck, no_grad, ops
from skupatch.common.errors import DimensionError, NumericalError, UsageError

SEEDS = range(100)


def leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def weighted_sum(x, rng):
    """sum(x ⊙ w)，w 为固定随机权重，避免梯度全 1 掩盖错误"""
    w = Tensor(rng.normal(size=x.shape))
    return ops.sum(ops.multiply(x, w))


# =============================================================================
# 前向
# =============================================================================

class TestForward:

    def test_matmul_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert_array_equal(ops.matmul(Tensor(np.eye(2)), a).data, a.data)

    def test_matmul_hand_product(self):
        out = ops.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
        assert_array_equal(out.data, [[17.0], [39.0]])

    def test_matmul_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_softmax_uniform(self):
        assert_allclose(ops.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)

    def test_softmax_values(self):
        assert_allclose(ops.softmax(Tensor([1.0, 2.0, 3.0])).data, [0.09003, 0.24473, 0.66524], atol=1e-5)

    def test_softmax_shift_invariance(self, rng):
        x = rng.normal(size=(4, 7))
        assert_allclose(ops.softmax(Tensor(x)).data, ops.softmax(Tensor(x + 123.0)).data, atol=1e-12)

    def test_softmax_rows_sum_to_one_and_positive(self, rng):
        out = ops.softmax(Tensor(rng.normal(scale=5.0, size=(20, 9))), axis=1).data
        assert np.all(out > 0)
        assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)

    def test_softmax_fully_masked_row_is_zero(self):
        mask = np.array([[True, False], [False, False]])
        out = ops.softmax(Tensor(np.zeros((2, 2))), mask=mask).data
        assert_array_equal(out, [[1.0, 0.0], [0.0, 0.0]])

    def test_layer_norm_statistics(self, rng):
        x = Tensor(rng.normal(loc=3.0, scale=4.0, size=(10, 16)))
        out = ops.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=1e-12).data
        assert np.abs(out.mean(axis=1)).max() < 1e-7
        assert np.abs(out.var(axis=1) - 1.0).max() < 1e-6

    def test_smooth_l1_closed_form(self):
        out = ops.smooth_l1(Tensor([0.5, 2.0, -2.0]), np.zeros(3), beta=1.0)
        assert_allclose(out.data, [0.125, 1.5, 1.5])

    def test_cross_entropy_uniform_logits(self):
        loss = ops.cross_entropy_with_logits(Tensor(np.zeros((3, 2))), np.array([0, 1, 0]))
        assert loss.item() == pytest.approx(np.log(2.0))

    def test_gelu_at_zero_and_large(self):
        out = ops.gelu(Tensor([0.0, 10.0, -10.0])).data
        assert_allclose(out, [0.0, 10.0, 0.0], atol=1e-12)

    def test_bilinear_exact_at_token_centers(self, rng):
        grid = Tensor(rng.normal(size=(4, 4, 3)))
        ys, xs = np.meshgrid((np.arange(4) + 0.5) / 4, (np.arange(4) + 0.5) / 4, indexing="ij")
        points = Tensor(np.stack([xs.reshape(-1), ys.reshape(-1)], axis=-1))
        assert_array_equal(ops.bilinear_sample(grid, points).data, grid.data.reshape(16, 3))

    def test_bilinear_midpoint_is_mean(self, rng):
        grid = Tensor(rng.normal(size=(4, 4, 3)))
        out = ops.bilinear_sample(grid, Tensor([[0.5, 0.5]])).data[0]
        assert_allclose(out, grid.data[1:3, 1:3].reshape(4, 3).mean(axis=0), atol=1e-12)

    def test_bilinear_clamps_outside_points(self, rng):
        grid = Tensor(rng.normal(size=(4, 4, 2)))
        out = ops.bilinear_sample(grid, Tensor([[-1.0, -1.0], [2.0, 2.0]])).data
        assert_allclose(out, [grid.data[0, 0], grid.data[3, 3]], atol=1e-12)

    def test_add_rejects_broadcast_beyond_bias(self):
        with pytest.raises(DimensionError):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_forward_is_deterministic(self, rng):
        a, b = rng.normal(size=(5, 6)), rng.normal(size=(6, 4))

        def run():
            h = ops.gelu(ops.matmul(Tensor(a), Tensor(b)))
            return ops.softmax(h, axis=1).data

        assert_array_equal(run(), run())


# =============================================================================
# 反向传播语义
# =============================================================================

class TestBackward:

    def test_square_gradient(self):
        w = Tensor(3.0, requires_grad=True)
        (w * w).backward()
        assert float(w.grad) == 6.0

    def test_detached_tensor_receives_no_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        frozen = x.detach()
        ops.sum(ops.multiply(x, frozen)).backward()
        assert_array_equal(x.grad, [1.0, 2.0])
        assert frozen.grad is None

    def test_fan_out_accumulates(self):
        x = Tensor([1.0, -2.0, 0.5], requires_grad=True)
        ops.sum(ops.add(ops.multiply(x, x), x)).backward()
        assert_allclose(x.grad, 2 * x.data + 1)

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(UsageError):
            (x * 2.0).backward()

    def test_constant_loss_rejected(self):
        with pytest.raises(UsageError):
            Tensor(1.0).backward()

    def test_record_is_topological(self, rng):
        a, b = leaf(rng, 2, 3), leaf(rng, 3, 2)
        loss = ops.sum(ops.relu(ops.matmul(a, b)))
        record = loss.backward()
        position = {id(t): i for i, t in enumerate(record.tensors)}
        for i, t in enumerate(record.tensors):
            if t._node is not None:
                for parent in t._node.parents:
                    if parent.requires_grad:
                        assert position[id(parent)] < i
        assert record.operations == ["matmul", "relu", "sum"]
        assert isinstance(record, ComputationRecord)

    def test_no_grad_records_nothing(self, rng):
        a = leaf(rng, 2, 2)
        with no_grad():
            out = ops.matmul(a, a)
        assert not out.requires_grad and out.is_leaf

    def test_debug_mode_rejects_nan(self):
        with pytest.raises(NumericalError):
            Tensor([1.0, np.nan])


# =============================================================================
# 梯度检查
# =============================================================================

def _binary_elementwise(op):
    def build(rng):
        a, b = leaf(rng, 3, 4), leaf(rng, 3, 4)
        return (lambda: weighted_sum(op(a, b), np.random.default_rng(7))), [a, b]
    return build


def _unary(op, shape=(3, 5)):
    def build(rng):
        x = leaf(rng, *shape)
        return (lambda: weighted_sum(op(x), np.random.default_rng(7))), [x]
    return build


def _matmul(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 4, 5)
    return (lambda: weighted_sum(ops.matmul(a, b), np.random.default_rng(7))), [a, b]


def _batched_matmul(rng):
    a, b = leaf(rng, 2, 3, 4), leaf(rng, 4, 2)
    return (lambda: weighted_sum(ops.matmul(a, b), np.random.default_rng(7))), [a, b]


def _bias_add(rng):
    x, b = leaf(rng, 4, 3), leaf(rng, 3)
    return (lambda: weighted_sum(ops.add(x, b), np.random.default_rng(7))), [x, b]


def _divide(rng):
    a = leaf(rng, 3, 3)
    b = Tensor(rng.uniform(1.0, 2.0, size=(3, 3)), requires_grad=True)
    return (lambda: weighted_sum(ops.divide(a, b), np.random.default_rng(7))), [a, b]


def _concatenate(rng):
    a, b = leaf(rng, 2, 3), leaf(rng, 4, 3)
    return (lambda: weighted_sum(ops.concatenate([a, b], axis=0), np.random.default_rng(7))), [a, b]


def _layer_norm(rng):
    x, g, b = leaf(rng, 4, 6), leaf(rng, 6), leaf(rng, 6)
    return (lambda: weighted_sum(ops.layer_norm(x, g, b), np.random.default_rng(7))), [x, g, b]


def _mean(rng):
    x = leaf(rng, 4, 5)
    return (lambda: weighted_sum(ops.mean(x, axis=1), np.random.default_rng(7))), [x]


def _getitem(rng):
    x = leaf(rng, 5, 3)
    return (lambda: weighted_sum(ops.getitem(x, (np.array([0, 2, 2]), slice(None))), np.random.default_rng(7))), [x]


def _cross_entropy(rng):
    logits = leaf(rng, 6, 2)
    labels = rng.integers(0, 2, size=6)
    weights = np.array([1.0, 0.1])
    return (lambda: ops.cross_entropy_with_logits(logits, labels, weights)), [logits]


def _smooth_l1(rng):
    x = Tensor(rng.normal(scale=2.0, size=(4, 4)), requires_grad=True)
    target = rng.normal(size=(4, 4))
    return (lambda: ops.sum(ops.smooth_l1(x, target))), [x]


def _bilinear(rng):
    grid = leaf(rng, 4, 5, 3)
    # 点落在格内部，远离插值折点
    cells = np.column_stack([rng.integers(0, 4, size=6), rng.integers(0, 3, size=6)])
    frac = rng.uniform(0.1, 0.9, size=(6, 2))
    points = Tensor((cells + frac + 0.5) / np.array([5.0, 4.0]), requires_grad=True)
    return (lambda: weighted_sum(ops.bilinear_sample(grid, points), np.random.default_rng(7))), [grid, points]


PRIMITIVES = {
    "add": _binary_elementwise(ops.add),
    "sub": _binary_elementwise(ops.sub),
    "multiply": _binary_elementwise(ops.multiply),
    "maximum": _binary_elementwise(ops.maximum),
    "minimum": _binary_elementwise(ops.minimum),
    "divide": _divide,
    "bias_add": _bias_add,
    "scale": _unary(lambda x: ops.scale(x, -1.7)),
    "transpose": _unary(lambda x: ops.transpose(x)),
    "reshape": _unary(lambda x: ops.reshape(x, (5, 3))),
    "relu": _unary(ops.relu),
    "gelu": _unary(ops.gelu),
    "sigmoid": _unary(ops.sigmoid),
    "softmax": _unary(lambda x: ops.softmax(x, axis=1)),
    "sum": _unary(lambda x: ops.sum(x, axis=0)),
    "mean": _mean,
    "matmul": _matmul,
    "batched_matmul": _batched_matmul,
    "concatenate": _concatenate,
    "getitem": _getitem,
    "layer_norm": _layer_norm,
    "cross_entropy": _cross_entropy,
    "smooth_l1": _smooth_l1,
    "bilinear_sample": _bilinear,
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(name):
    worst = 0.0
    for seed in SEEDS:
        fn, inputs = PRIMITIVES[name](np.random.default_rng(seed))
        report = gradcheck(fn, inputs, eps=1e-5, max_entries=12, rng=np.random.default_rng(seed))
        worst = max(worst, report.max_error)
    assert worst < 1e-4, f"{name}: max relative error {worst:.2e}"


def test_matmul_gradient_tight_tolerance(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 4, 2)
    report = gradcheck(lambda: ops.sum(ops.matmul(a, b)), [a, b], tol=1e-6)
    assert report.ok, report.max_error
