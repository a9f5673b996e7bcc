import numpy as np
from hypothesis import given, settings, strategies as st

from lpgnn.ndmath import Adam, Mlp, adam_step, finite_diff_check, mlp_backward, mlp_forward


def _straight_line(net, x):
    # independent evaluator: explicit loops, no shared code with Mlp.forward
    acts = {"tanh": np.tanh, "identity": lambda z: z, "relu": lambda z: np.maximum(z, 0),
            "sigmoid": lambda z: 1 / (1 + np.exp(-z))}
    h = list(x)
    for W, b, a in zip(net.weights, net.biases, net.activations):
        out = []
        for j in range(W.shape[1]):
            z = b[j]
            for i in range(W.shape[0]):
                z += h[i] * W[i, j]
            out.append(z)
        h = list(acts[a](np.array(out)))
    return np.array(h)


def test_zero_net():
    net = Mlp([3, 2], [np.zeros((3, 2))], [np.zeros(2)], ["identity"])
    np.testing.assert_array_equal(mlp_forward(net, np.ones(3)), 0.0)


def test_affine_scalar():
    net = Mlp([1, 1], [np.array([[2.0]])], [np.array([1.0])], ["identity"])
    assert mlp_forward(net, np.array([3.0]))[0] == 7.0
    assert mlp_backward(net, np.array([3.0]), np.array([1.0])).input[0] == 2.0


def test_against_straight_line():
    rng = np.random.default_rng(0)
    for sizes in ([4, 7, 3], [2, 5, 5, 1], [6, 12, 4]):
        net = Mlp.init(sizes, rng)
        for _ in range(5):
            x = rng.normal(size=sizes[0])
            np.testing.assert_allclose(mlp_forward(net, x), _straight_line(net, x), atol=1e-12)


def test_zero_cotangent():
    rng = np.random.default_rng(1)
    net = Mlp.init([3, 4, 2], rng)
    tape = mlp_backward(net, rng.normal(size=3), np.zeros(2))
    assert all(np.all(g == 0) for g in tape.as_dict().values())
    assert np.all(tape.input == 0)


def test_backward_fd_6_12_4():
    rng = np.random.default_rng(2)
    net = Mlp.init([6, 12, 4], rng)
    x, c = rng.normal(size=6), rng.normal(size=4)
    tape = mlp_backward(net, x, c)
    assert finite_diff_check(lambda z: mlp_forward(net, z) @ c, x, tape.input) < 1e-4
    grads = tape.as_dict()
    for name, p in net.parameters().items():
        def f(val, p=p):
            old = p.copy()
            p[...] = val
            try:
                return mlp_forward(net, x) @ c
            finally:
                p[...] = old
        assert finite_diff_check(f, p.copy(), grads[name]) < 1e-4, name


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.integers(1, 6), min_size=2, max_size=4),
       st.sampled_from(["tanh", "sigmoid", "identity"]))
def test_backward_fd_property(seed, sizes, act):
    rng = np.random.default_rng(seed)
    net = Mlp.init(sizes, rng, hidden=act)
    for b in net.biases:
        b[...] = rng.normal(size=b.shape)
    x, c = rng.normal(size=sizes[0]), rng.normal(size=sizes[-1])
    tape = mlp_backward(net, x, c)
    assert finite_diff_check(lambda z: mlp_forward(net, z) @ c, x, tape.input) < 1e-4


def test_adam_zero_grad():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam(0.1)
    adam_step(opt, p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_ascend_mirrors_descend():
    a, b = {"w": np.zeros(3)}, {"w": np.zeros(3)}
    g = {"w": np.array([0.5, -1.0, 2.0])}
    Adam(0.01).step(a, g)
    Adam(0.01).step(b, g, ascend=True)
    np.testing.assert_allclose(a["w"], -b["w"])
    assert np.all(a["w"] != 0)


def test_adam_quadratic():
    p = {"w": np.array([1.0])}
    opt = Adam(0.1)
    for _ in range(100):
        opt.step(p, {"w": 2 * p["w"]})
    assert abs(p["w"][0]) < 0.05


def test_fd_linear_and_cubic():
    a = np.array([1.5, -2.0, 0.25])
    assert finite_diff_check(lambda x: float(a @ x), np.zeros(3), a) < 1e-9
    assert abs(finite_diff_check(lambda x: float(x[0] ** 3), np.array([2.0]), np.array([12.0]))) < 1e-6
