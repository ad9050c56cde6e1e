import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magray import expressions as ex
from magray.errors import ExprSyntaxError, UnknownIdentifier


def test_parse_evaluate_basics():
    e = ex.parse("0.3*x^2 - y/2 + 1")
    assert ex.evaluate(e, 2.0, 4.0) == pytest.approx(0.3 * 4 - 2 + 1)


def test_imaginary_unit():
    e = ex.parse("i*(x + 2)")
    assert ex.evaluate(e, 1.0, 0.0) == pytest.approx(3j)


def test_functions():
    e = ex.parse("sin(x)*exp(y) + tanh(x*y)")
    x, y = 0.3, -0.7
    assert ex.evaluate(e, x, y) == pytest.approx(
        np.sin(x) * np.exp(y) + np.tanh(x * y))


def test_power_is_integer_expansion():
    e = ex.parse("(x+y)^3")
    assert ex.evaluate(e, 1.0, 2.0) == pytest.approx(27.0)


def test_syntax_error():
    with pytest.raises(ExprSyntaxError):
        ex.parse("x +* y")


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        ex.parse("x + zebra")


def test_unknown_function():
    with pytest.raises((ExprSyntaxError, UnknownIdentifier)):
        ex.parse("sinh(x)")


def test_diff_against_finite_differences():
    # symbolic derivative vs centred finite differences at scattered points
    rng = np.random.default_rng(7)
    for src in ("0.3*x^2*y - sin(x*y)", "exp(0.2*x - 0.1*y^2)",
                "x*y/(2 + x^2)", "tanh(0.5*x)*cos(y)"):
        e = ex.parse(src)
        dx = ex.compile_expr(ex.diff(e, "x"))
        f = ex.compile_expr(e)
        for _ in range(5):
            x, y = rng.uniform(-0.8, 0.8, 2)
            h = 1e-6
            fd = (f(x + h, y) - f(x - h, y)) / (2 * h)
            assert dx(x, y) == pytest.approx(fd, rel=1e-7, abs=1e-9)


def test_diff_product_and_chain():
    e = ex.parse("sin(x^2)*y")
    d = ex.diff(e, "x")
    x, y = 0.4, 1.3
    assert ex.evaluate(d, x, y) == pytest.approx(2 * x * np.cos(x * x) * y)


def test_compile_vectorized():
    f = ex.compile_expr(ex.parse("x^2 + i*y"))
    xs = np.linspace(-1, 1, 7)
    out = f(xs, xs)
    assert out.shape == xs.shape
    assert np.allclose(out, xs**2 + 1j * xs)


def test_const_complex():
    e = ex.const(1.5 - 2j)
    assert ex.evaluate(e, 0.0, 0.0) == pytest.approx(1.5 - 2j)


# -- formatting round trip ---------------------------------------------------

_leaf = st.sampled_from(["x", "y", "0.5", "2", "1.25", "i"])


def _expr_strings(depth):
    if depth == 0:
        return _leaf
    sub = _expr_strings(depth - 1)
    return st.one_of(
        _leaf,
        st.tuples(sub, st.sampled_from("+-*"), sub).map(
            lambda t: f"({t[0]}{t[1]}{t[2]})"),
        st.tuples(st.sampled_from(("sin", "cos", "exp", "tanh")), sub).map(
            lambda t: f"{t[0]}({t[1]})"),
    )


@settings(max_examples=60, deadline=None)
@given(src=_expr_strings(3))
def test_format_parse_round_trip(src):
    e = ex.parse(src)
    back = ex.parse(ex.format_expr(e))
    xs = np.array([-0.7, 0.1, 0.9])
    ys = np.array([0.3, -0.2, 0.5])
    assert np.allclose(ex.evaluate(e, xs, ys), ex.evaluate(back, xs, ys))


def test_format_readable():
    s = ex.format_expr(ex.parse("0.3*(1 - x^2 - y^2)"))
    assert ex.evaluate(ex.parse(s), 0.5, 0.5) == pytest.approx(0.15)
