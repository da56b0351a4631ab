"""Expression parser, evaluator, and derivative tests."""
import math

import numpy as np
import pytest

from farfield.expr import (DomainError, ExprSyntaxError, UnknownIdentifierError,
                           evaluate, evaluate_many, free_vars, jacobian,
                           jacobian_many, parse_expr, to_text)

CORPUS = [
    ("t^2", ("t",)),
    ("cosh(t)*cos(s)", ("t", "s")),
    ("cosh(t)*sin(s)", ("t", "s")),
    ("sqrt(x^2 + y^2)", ("x", "y")),
    ("(x^2 + y^2 + 1)^(1/3)", ("x", "y")),
    ("log(sqrt(x^2 + y^2) + sqrt(x^2 + y^2 - 1))", ("x", "y")),
    ("u^3 - 3*u*v^2", ("u", "v")),
    ("exp(-t) + atan(s)/2", ("t", "s")),
    ("-x + 2*(y - 1)", ("x", "y")),
    ("sin(x)/x", ("x",)),
]

POINTS = {
    "t": 0.7, "s": 2.1, "x": 1.3, "y": -0.4, "u": 0.9, "v": 1.7,
}


def test_parse_roundtrip_is_stable():
    for text, _ in CORPUS:
        e = parse_expr(text)
        again = parse_expr(to_text(e))
        assert to_text(again) == to_text(e)


def test_evaluate_matches_math():
    e = parse_expr("cosh(t)*cos(s)")
    assert evaluate(e, {"t": 1.0, "s": 0.5}) == pytest.approx(
        math.cosh(1.0) * math.cos(0.5), rel=1e-15)
    e = parse_expr("(x^2 + y^2 + 1)^(1/3)")
    assert evaluate(e, {"x": 2.0, "y": 1.0}) == pytest.approx(6.0 ** (1.0 / 3.0),
                                                              rel=1e-15)


def test_evaluate_many_vectorizes():
    e = parse_expr("sqrt(x^2 + y^2)")
    x = np.linspace(0.5, 3.0, 17)
    y = np.linspace(-1.0, 1.0, 17)
    got = evaluate_many(e, {"x": x, "y": y})
    assert np.allclose(got, np.hypot(x, y), rtol=1e-14)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-6
    for text, params in CORPUS:
        e = parse_expr(text)
        base = np.array([POINTS[p] for p in params])
        for _ in range(5):
            pt = base + rng.uniform(-0.05, 0.05, size=len(params))
            J = jacobian((e,), params, pt)[0]
            for i in range(len(params)):
                lo, hi = pt.copy(), pt.copy()
                lo[i] -= h
                hi[i] += h
                fd = (evaluate(e, dict(zip(params, hi)))
                      - evaluate(e, dict(zip(params, lo)))) / (2.0 * h)
                assert J[i] == pytest.approx(fd, abs=1e-5, rel=1e-5)


def test_jacobian_many_shape_and_agreement():
    texts = ["cosh(t)*cos(s)", "cosh(t)*sin(s)", "t"]
    comps = tuple(parse_expr(t) for t in texts)
    pts = np.array([[0.3, 1.0], [1.2, 4.0], [-0.5, 2.0]])
    J = jacobian_many(comps, ("t", "s"), pts)
    assert J.shape == (3, 3, 2)
    for k, pt in enumerate(pts):
        assert np.allclose(J[k], jacobian(comps, ("t", "s"), pt), rtol=1e-12)


def test_free_vars():
    assert free_vars(parse_expr("cosh(t)*cos(s) + 1")) == {"t", "s"}
    assert free_vars(parse_expr("3.5")) == set()


def test_sqrt_of_negative_raises_domain_error():
    e = parse_expr("sqrt(x)")
    with pytest.raises(DomainError):
        evaluate(e, {"x": -1.0})


def test_log_of_nonpositive_raises_domain_error():
    e = parse_expr("log(x)")
    with pytest.raises(DomainError):
        evaluate(e, {"x": 0.0})


def test_syntax_error_reports_offset():
    with pytest.raises(ExprSyntaxError) as exc:
        parse_expr("2 +* x")
    assert exc.value.offset == 3


def test_unknown_function_rejected():
    with pytest.raises(UnknownIdentifierError):
        parse_expr("foo(x)")


def test_power_right_associative():
    e = parse_expr("2^3^2")
    assert evaluate(e, {}) == pytest.approx(512.0)


def test_unary_minus_binds_tighter_than_addition():
    e = parse_expr("-x^2 + 1")
    assert evaluate(e, {"x": 2.0}) == pytest.approx(-3.0)
