import numpy as np
import pytest

from hilbertdistill import tape
from hilbertdistill.tape import Var, backward, grad_check


def scalar_probe(y: Var, probe: np.ndarray) -> Var:
    """Deterministic scalar head for gradient-checking array outputs."""
    value = float((y.value * probe).sum())
    return Var(value, (y,), lambda g: (g * probe,))


def check_op(build, shapes, seed, eps=1e-4, exclude=None):
    rng = np.random.default_rng(seed)
    inputs = [rng.normal(size=s) for s in shapes]
    probe = None

    def f(arrays):
        nonlocal probe
        vs = [Var(a) for a in arrays]
        out = build(vs)
        if probe is None:
            probe = np.random.default_rng(seed + 1).normal(size=out.value.shape)
        root = scalar_probe(out, probe) if out.value.shape != () else out
        backward(root)
        return root.value, [v.grad for v in vs]

    return grad_check(f, inputs, eps=eps, exclude=exclude)


def test_add_mul_scale():
    assert check_op(lambda vs: tape.add(vs[0], vs[1]), [(3, 4), (3, 4)], 0) <= 1e-6
    assert check_op(lambda vs: tape.mul(vs[0], vs[1]), [(3, 4), (3, 4)], 1) <= 1e-6
    assert check_op(lambda vs: tape.scale(vs[0], -2.5), [(5,)], 2) <= 1e-6


def test_relu_excludes_kink_points():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 4))
    x[0, 0] = 0.0  # exact kink
    exclude = {0: np.abs(x) < 2e-4}

    def f(arrays):
        v = Var(arrays[0])
        out = tape.relu(v)
        probe = np.random.default_rng(4).normal(size=out.value.shape)
        root = scalar_probe(out, probe)
        backward(root)
        return root.value, [v.grad]

    assert grad_check(f, [x], exclude=exclude) <= 1e-6


@pytest.mark.parametrize("impl", ["numpy", "numba"])
def test_conv2d_gradients(impl):
    err = check_op(
        lambda vs: tape.conv(vs[0], vs[1], vs[2], impl=impl),
        [(2, 2, 5, 5), (3, 2, 3, 3), (3,)],
        5,
    )
    assert err <= 1e-4


@pytest.mark.parametrize("impl", ["numpy", "numba"])
def test_conv3d_gradients(impl):
    err = check_op(
        lambda vs: tape.conv(vs[0], vs[1], vs[2], impl=impl),
        [(1, 2, 3, 4, 4), (2, 2, 3, 3, 3), (2,)],
        6,
    )
    assert err <= 1e-4


def test_conv_impls_agree():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(2, 3, 6, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    from hilbertdistill import kernels

    ya = kernels.conv_forward(x, w, b, "numba")
    yb = kernels.conv_forward(x, w, b, "numpy")
    assert np.allclose(ya, yb, atol=1e-12)
    ga = kernels.conv_backward(x, w, ya, "numba")
    gb = kernels.conv_backward(x, w, ya, "numpy")
    for u, v in zip(ga, gb):
        assert np.allclose(u, v, atol=1e-10)


def test_conv1x1_gradients():
    assert check_op(
        lambda vs: tape.conv1x1(vs[0], vs[1]), [(2, 3, 4, 4), (5, 3)], 8
    ) <= 1e-5


def test_avg_pool_gradients():
    assert check_op(lambda vs: tape.avg_pool(vs[0], 2), [(2, 3, 4, 4)], 9) <= 1e-6
    assert check_op(lambda vs: tape.avg_pool(vs[0], 2), [(1, 2, 4, 4, 4)], 10) <= 1e-6


def test_global_avg_pool_and_flatten():
    assert check_op(lambda vs: tape.global_avg_pool(vs[0]), [(2, 3, 4, 4)], 11) <= 1e-6
    assert check_op(lambda vs: tape.flatten(vs[0]), [(2, 3, 4)], 12) <= 1e-6


def test_linear_gradients():
    assert check_op(
        lambda vs: tape.linear(vs[0], vs[1], vs[2]), [(4, 6), (6, 3), (3,)], 13
    ) <= 1e-5


def test_softmax_cross_entropy_gradients():
    labels = np.array([0, 2, 1, 3])

    def f(arrays):
        v = Var(arrays[0])
        out = tape.softmax_cross_entropy(v, labels)
        backward(out)
        return out.value, [v.grad]

    rng = np.random.default_rng(14)
    assert grad_check(f, [rng.normal(size=(4, 4))]) <= 1e-5


def test_softmax_cross_entropy_value():
    logits = Var(np.zeros((2, 4)))
    out = tape.softmax_cross_entropy(logits, np.array([1, 2]))
    assert out.value == pytest.approx(np.log(4.0))


def test_class_score_gradients():
    def f(arrays):
        v = Var(arrays[0])
        out = tape.class_score(v, 1)
        backward(out)
        return out.value, [v.grad]

    rng = np.random.default_rng(15)
    assert grad_check(f, [rng.normal(size=(3, 4))]) <= 1e-6


def test_external_penalty_injects_gradient():
    x = Var(np.ones((2, 2)))
    g0 = np.arange(4.0).reshape(2, 2)
    out = tape.external_penalty(x, 3.5, g0)
    root = tape.scale(out, 2.0)
    backward(root)
    assert np.allclose(x.grad, 2.0 * g0)
    assert out.value == pytest.approx(3.5)


def test_backward_accumulates_through_shared_nodes():
    x = Var(np.array(2.0))
    y = tape.add(tape.mul(x, x), x)  # x^2 + x -> grad 2x + 1 = 5
    backward(y)
    assert x.grad == pytest.approx(5.0)


def test_backward_requires_scalar_root():
    with pytest.raises(ValueError):
        backward(Var(np.zeros(3)))


def test_grad_check_linear_is_machine_precision():
    def f(arrays):
        return float(arrays[0].sum() * 3.0), [np.full_like(arrays[0], 3.0)]

    assert grad_check(f, [np.arange(5.0)]) <= 1e-9
