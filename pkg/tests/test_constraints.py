import numpy as np
import pytest

from lpgnn.constraints import VARIANTS, ConstraintFn, g_eval, g_grad, residual_constraint


@pytest.mark.parametrize("variant", VARIANTS)
def test_zero_at_origin(variant):
    assert g_eval(ConstraintFn(variant, 0.1), 0.0) == 0.0
    assert g_eval(ConstraintFn(variant, 0.0), 0.0) == 0.0


def test_closed_forms():
    assert g_eval(ConstraintFn("squared"), 2.0) == 4.0
    assert g_eval(ConstraintFn("abs"), -1.5) == 1.5
    assert g_eval(ConstraintFn("abs_eps", 0.1), 0.05) == 0.0
    assert g_eval(ConstraintFn("abs_eps", 0.1), 0.3) == pytest.approx(0.2)
    assert g_eval(ConstraintFn("lin_eps", 0.1), -0.3) == pytest.approx(-0.2)
    assert g_grad(ConstraintFn("squared"), 3.0) == 6.0
    assert g_grad(ConstraintFn("abs"), 0.0) == 0.0


def test_flags():
    assert [ConstraintFn(v).unilateral for v in VARIANTS] == [False, False, True, True, True]
    assert [ConstraintFn(v).eps_insensitive for v in VARIANTS] == [False, True, False, True, False]


@pytest.mark.parametrize("variant", VARIANTS)
def test_grad_matches_fd(variant):
    c = ConstraintFn(variant, 0.1)
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, size=1000)
    far = (np.abs(x) > 1e-3) & (np.abs(np.abs(x) - c.epsilon) > 1e-3)
    x, h = x[far], 1e-6
    num = (g_eval(c, x + h) - g_eval(c, x - h)) / (2 * h)
    np.testing.assert_allclose(g_grad(c, x), num, atol=1e-6)


def test_residual_constraint():
    np.testing.assert_array_equal(residual_constraint(ConstraintFn("abs"), np.zeros(4)), 0.0)
    np.testing.assert_allclose(residual_constraint(ConstraintFn("abs"), [0.3, -0.3]), [0.3, 0.3])
    r = np.random.default_rng(0).uniform(-0.4, 0.4, size=(5, 3))
    np.testing.assert_array_equal(residual_constraint(ConstraintFn("abs_eps", 0.5), r), 0.0)


def test_rejects():
    with pytest.raises(ValueError):
        ConstraintFn("cubic")
    with pytest.raises(ValueError):
        ConstraintFn("abs_eps", -0.1)
    assert ConstraintFn("abs-eps", 0.1).variant == "abs_eps"
