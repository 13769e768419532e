import numpy as np
import pytest

from xrfquant import autodiff as ad


def test_evaluate_identity():
    tape = ad.Tape()
    x = tape.placeholder(0.0, "x")
    assert tape.evaluate({x: 3.0}, x) == 3.0


def test_evaluate_sigmoid_zero():
    tape = ad.Tape()
    x = tape.placeholder(0.0)
    y = ad.sigmoid(x)
    assert tape.evaluate(outputs=y) == 0.5


def test_evaluate_sum_of_squares():
    tape = ad.Tape()
    x = tape.placeholder(np.array([1.0, 2.0, 3.0]))
    y = ad.square(x).sum()
    assert tape.evaluate(outputs=y) == 14.0


def test_backprop_square():
    tape = ad.Tape()
    x = tape.parameter(3.0, "x")
    y = ad.square(x)
    tape.backprop(y)
    assert x.grad == pytest.approx(6.0)


def test_backprop_sigmoid_quarter():
    tape = ad.Tape()
    x = tape.parameter(0.0)
    y = ad.sigmoid(x)
    tape.backprop(y)
    assert x.grad == pytest.approx(0.25)


def test_backprop_requires_scalar():
    tape = ad.Tape()
    x = tape.parameter(np.ones(3))
    y = ad.square(x)
    with pytest.raises(ValueError, match="scalar"):
        tape.backprop(y)


def test_matmul_shape_error():
    tape = ad.Tape()
    a = tape.placeholder(np.ones((2, 3)))
    b = tape.placeholder(np.ones((4, 2)))
    with pytest.raises(ValueError):
        tape.evaluate(outputs=ad.matmul(a, b))


def test_gradient_accumulates_until_zeroed():
    tape = ad.Tape()
    x = tape.parameter(2.0)
    y = ad.square(x)
    tape.backprop(y)
    tape.backprop(y)
    assert x.grad == pytest.approx(8.0)
    tape.zero_grad()
    assert x.grad == 0.0


def test_double_evaluation_bit_identical():
    rng = np.random.default_rng(0)
    tape = ad.Tape()
    x = tape.placeholder(rng.normal(size=(5, 7)))
    w = tape.parameter(rng.normal(size=(7, 4)))
    y = ad.sigmoid(ad.matmul(x, w)).sum()
    v1 = tape.evaluate(outputs=y)
    v2 = tape.evaluate(outputs=y)
    assert v1 == v2


def _loss_fn(tape, out):
    return lambda: tape.evaluate(outputs=out)


def test_three_layer_composite_matches_finite_differences():
    rng = np.random.default_rng(42)
    tape = ad.Tape()
    x = tape.placeholder(rng.normal(size=(4, 6)))
    w1 = tape.parameter(rng.normal(size=(6, 5)) * 0.5, "w1")
    b1 = tape.parameter(rng.normal(size=5) * 0.1, "b1")
    w2 = tape.parameter(rng.normal(size=(5, 3)) * 0.5, "w2")
    b2 = tape.parameter(rng.normal(size=3) * 0.1, "b2")
    w3 = tape.parameter(rng.normal(size=(3, 1)) * 0.5, "w3")
    h1 = ad.sigmoid(ad.matmul(x, w1) + b1)
    h2 = ad.softplus(ad.matmul(h1, w2) + b2)
    out = ad.square(ad.matmul(h2, w3)).sum()
    tape.evaluate()
    tape.zero_grad()
    tape.backprop(out)
    err = ad.finite_diff_check(_loss_fn(tape, out), [w1, b1, w2, b2, w3], step=1e-4)
    assert err < 1e-5


def test_finite_diff_linear_is_machine_exact():
    tape = ad.Tape()
    x = tape.parameter(np.array([1.0, -2.0, 0.5]))
    y = (x * 3.0).sum()
    tape.evaluate()
    tape.zero_grad()
    tape.backprop(y)
    err = ad.finite_diff_check(_loss_fn(tape, y), [x], step=1e-4)
    assert err < 1e-9


def test_finite_diff_detects_corrupted_gradient():
    tape = ad.Tape()
    x = tape.parameter(np.array([1.0, 2.0]))
    y = ad.square(x).sum()
    tape.evaluate()
    tape.zero_grad()
    tape.backprop(y)
    x.grad = x.grad * 1.01
    err = ad.finite_diff_check(_loss_fn(tape, y), [x], step=1e-4)
    assert err >= 0.009


def test_finite_diff_rejects_bad_step():
    tape = ad.Tape()
    x = tape.parameter(1.0)
    y = ad.square(x)
    tape.backprop(y)
    with pytest.raises(ValueError):
        ad.finite_diff_check(_loss_fn(tape, y), [x], step=0.0)


def test_gradient_of_sum_is_sum_of_gradients():
    rng = np.random.default_rng(11)
    for trial in range(5):
        tape = ad.Tape()
        x = tape.parameter(rng.normal(size=(3, 4)))
        f = ad.square(x).sum()
        g = ad.sigmoid(x).sum()
        total = f + g
        tape.evaluate()
        tape.zero_grad()
        tape.backprop(f)
        gf = x.grad.copy()
        tape.zero_grad()
        tape.backprop(g)
        gg = x.grad.copy()
        tape.zero_grad()
        tape.backprop(total)
        assert np.allclose(x.grad, gf + gg, rtol=1e-12, atol=1e-14)


PRIMITIVES = [
    ("add_broadcast", lambda t, x, y: (x + y).sum(), (3, 4), (4,)),
    ("sub", lambda t, x, y: ad.sub(x, y).sum(), (3, 4), (3, 4)),
    ("mul_broadcast", lambda t, x, y: (x * y).sum(), (2, 5), (2, 1)),
    ("matmul", lambda t, x, y: ad.matmul(x, y).sum(), (3, 4), (4, 2)),
    ("reciprocal", lambda t, x, y: ad.reciprocal(ad.square(x) + 1.0).sum() + (0 * y).sum(), (6,), (1,)),
    ("square", lambda t, x, y: ad.square(x).sum() + (0 * y).sum(), (4, 3), (1,)),
    ("abs", lambda t, x, y: ad.absolute(x).sum() + (0 * y).sum(), (8,), (1,)),
    ("exp", lambda t, x, y: ad.exp(x).sum() + (0 * y).sum(), (7,), (1,)),
    ("sigmoid", lambda t, x, y: ad.sigmoid(x).sum() + (0 * y).sum(), (9,), (1,)),
    ("softplus", lambda t, x, y: ad.softplus(x).sum() + (0 * y).sum(), (9,), (1,)),
    ("relu", lambda t, x, y: ad.relu(x).sum() + (0 * y).sum(), (9,), (1,)),
    ("sum_axis0", lambda t, x, y: ad.square(ad.reduce_sum(x, axis=0)).sum() + (0 * y).sum(), (3, 4), (1,)),
    ("sum_axis1", lambda t, x, y: ad.square(ad.reduce_sum(x, axis=1)).sum() + (0 * y).sum(), (3, 4), (1,)),
    ("mean", lambda t, x, y: ad.square(x.mean(axis=0)).sum() + (0 * y).sum(), (5, 2), (1,)),
    ("reshape", lambda t, x, y: ad.square(x.reshape((6,))).sum() + (0 * y).sum(), (2, 3), (1,)),
    ("slice_cols", lambda t, x, y: ad.square(ad.slice_cols(x, 1, 3)).sum() + (0 * y).sum(), (4, 5), (1,)),
]


@pytest.mark.parametrize("name,builder,xs,ys", PRIMITIVES, ids=[p[0] for p in PRIMITIVES])
def test_primitive_matches_finite_differences(name, builder, xs, ys):
    rng = np.random.default_rng(hash(name) % 2**32)
    tape = ad.Tape()
    # keep |values| > 1e-3 so relu/abs kinks are never straddled
    xv = rng.uniform(0.2, 1.5, size=xs) * rng.choice([-1.0, 1.0], size=xs)
    yv = rng.uniform(0.2, 1.5, size=ys)
    x = tape.parameter(xv, "x")
    y = tape.parameter(yv, "y")
    out = builder(tape, x, y)
    tape.evaluate()
    tape.zero_grad()
    tape.backprop(out)
    err = ad.finite_diff_check(_loss_fn(tape, out), [x, y], step=1e-4)
    assert err < 1e-6, f"{name}: rel err {err}"


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_conv1d_matches_finite_differences(stride):
    rng = np.random.default_rng(stride)
    tape = ad.Tape()
    x = tape.parameter(rng.normal(size=(2, 3, 17)), "x")
    w = tape.parameter(rng.normal(size=(4, 3, 5)) * 0.3, "w")
    b = tape.parameter(rng.normal(size=4) * 0.1, "b")
    out = ad.square(ad.conv1d(x, w, b, stride=stride)).sum()
    tape.evaluate()
    tape.zero_grad()
    tape.backprop(out)
    err = ad.finite_diff_check(_loss_fn(tape, out), [x, w, b], step=1e-4)
    assert err < 1e-6


def test_conv1d_forward_matches_naive():
    rng = np.random.default_rng(5)
    xv = rng.normal(size=(2, 3, 12))
    wv = rng.normal(size=(4, 3, 5))
    bv = rng.normal(size=4)
    stride = 2
    tape = ad.Tape()
    out = ad.conv1d(tape.placeholder(xv), tape.placeholder(wv), tape.placeholder(bv),
                    stride=stride)
    l_out = (12 - 5) // stride + 1
    naive = np.zeros((2, 4, l_out))
    for n in range(2):
        for f in range(4):
            for l in range(l_out):
                s = l * stride
                naive[n, f, l] = np.sum(xv[n, :, s:s + 5] * wv[f]) + bv[f]
    assert np.allclose(out.value, naive, rtol=1e-12, atol=1e-12)


def test_exp_clips_instead_of_overflowing():
    tape = ad.Tape()
    x = tape.parameter(np.array([1000.0]))
    y = ad.exp(x).sum()
    tape.evaluate()
    assert np.isfinite(y.value)
    tape.zero_grad()
    tape.backprop(y)
    assert x.grad[0] == 0.0


def test_adam_is_deterministic_and_descends():
    def run():
        tape = ad.Tape()
        x = tape.parameter(np.array([5.0, -3.0]))
        loss = ad.square(x - np.array([1.0, 2.0])).sum()
        opt = ad.Adam([x], lr=0.05)
        values = []
        for _ in range(400):
            tape.evaluate()
            opt.zero_grad()
            tape.backprop(loss)
            opt.step()
            values.append(float(loss.value))
        return x.value.copy(), values

    x1, v1 = run()
    x2, v2 = run()
    assert np.array_equal(x1, x2) and v1 == v2
    assert np.allclose(x1, [1.0, 2.0], atol=1e-2)
    assert v1[-1] < v1[0]


def test_sgd_descends():
    tape = ad.Tape()
    x = tape.parameter(np.array([4.0]))
    loss = ad.square(x).sum()
    opt = ad.Sgd([x], lr=0.1)
    for _ in range(100):
        tape.evaluate()
        opt.zero_grad()
        tape.backprop(loss)
        opt.step()
    assert abs(x.value[0]) < 1e-3


def test_feeding_non_placeholder_rejected():
    tape = ad.Tape()
    p = tape.parameter(1.0)
    with pytest.raises(ValueError):
        tape.evaluate({p: 2.0})
