import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radial_bump.expressions import ExpressionError, compile_function, parse


@pytest.mark.parametrize("text, args, expected", [
    ("1 + 0.1*q3", (0.0, 0.0, -1.0), 0.9),
    ("q1^2 + q2**2", (3.0, 4.0, 0.0), 25.0),
    ("exp(log(2)) * sqrt(4)", (0.0, 0.0, 0.0), 4.0),
    ("sin(q1)^2 + cos(q1)^2", (0.7, 0.0, 0.0), 1.0),
])
def test_values(text, args, expected):
    f, _ = compile_function(text, ["q1", "q2", "q3"])
    assert f(*[np.array(a) for a in args]) == pytest.approx(expected)


def test_constant_expression_broadcasts():
    f, grad = compile_function("2.5", ["x1", "x2"])
    x = np.zeros((4, 3))
    assert f(x, x).shape == (4, 3)
    assert all(g.shape == (4, 3) and not g.any() for g in grad(x, x))


@pytest.mark.parametrize("text", [
    "__import__('os')", "q1; q2", "lambda: 1", "q1[0]", "open", "q4", "tan(q1)",
    "q1.real", "", "q1 +", "1 = 2",
])
def test_rejected(text):
    with pytest.raises(ExpressionError):
        parse(text, ["q1", "q2", "q3"])


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_gradient_matches_differences(a, b):
    f, grad = compile_function("exp(x1) * cos(x2) + x1^3 * x2", ["x1", "x2"])
    step = 1e-6
    g = grad(np.array(a), np.array(b))
    fd1 = (f(np.array(a + step), np.array(b)) - f(np.array(a - step), np.array(b))) / (2 * step)
    fd2 = (f(np.array(a), np.array(b + step)) - f(np.array(a), np.array(b - step))) / (2 * step)
    assert g[0] == pytest.approx(fd1, rel=1e-6, abs=1e-6)
    assert g[1] == pytest.approx(fd2, rel=1e-6, abs=1e-6)
