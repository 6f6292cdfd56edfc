"""Restricted arithmetic expressions compiled to vectorised numpy callables."""

from __future__ import annotations

import re

import numpy as np
import sympy
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

FUNCTIONS = {"exp": sympy.exp, "log": sympy.log, "sqrt": sympy.sqrt,
             "sin": sympy.sin, "cos": sympy.cos}

_TOKEN = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_ALLOWED_CHARS = re.compile(r"^[\sA-Za-z_0-9.+\-*/^()]*$")


class ExpressionError(ValueError):
    pass


def parse(text: str, variables: list[str]) -> tuple[sympy.Expr, list[sympy.Symbol]]:
    """Parse ``text`` allowing only ``variables`` and the whitelisted functions."""
    if not isinstance(text, str) or not _ALLOWED_CHARS.match(text):
        raise ExpressionError(f"invalid characters in expression {text!r}")
    for name in _TOKEN.findall(text):
        if name not in variables and name not in FUNCTIONS:
            raise ExpressionError(f"unknown name {name!r} in expression {text!r}")
    symbols = [sympy.Symbol(v, real=True) for v in variables]
    local = dict(zip(variables, symbols))
    local.update(FUNCTIONS)
    try:
        expr = parse_expr(text, local_dict=local, global_dict={"__builtins__": {}, **_sympy_globals()},
                          transformations=standard_transformations + (convert_xor,))
    except Exception as exc:  # sympy raises a zoo of exception types
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from exc
    return sympy.sympify(expr), symbols


def _sympy_globals():
    return {"Integer": sympy.Integer, "Float": sympy.Float, "Rational": sympy.Rational,
            "Symbol": sympy.Symbol}


def compile_function(text: str, variables: list[str]):
    """Return ``(f, grad)`` evaluating the expression and its gradient.

    Both take one array per variable; ``grad`` returns a list of arrays.
    """
    expr, symbols = parse(text, variables)
    f = sympy.lambdify(symbols, expr, modules="numpy")
    grads = [sympy.lambdify(symbols, sympy.diff(expr, s), modules="numpy") for s in symbols]

    def value(*args):
        out = f(*args)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(*args).shape).copy()

    def gradient(*args):
        shape = np.broadcast(*args).shape
        return [np.broadcast_to(np.asarray(g(*args), dtype=float), shape).copy() for g in grads]

    return value, gradient
