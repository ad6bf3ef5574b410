"""Arithmetic and control builtins for the interpreter.

Only what the benchmark generators emit: integer arithmetic through
``is/2`` plus comparisons, and unification control.  Expressions are
written in canonical form, e.g. ``is(N1, +(N, 1))`` or ``=\\=(X, +(Y, D))``.
"""

from __future__ import annotations

from .terms import Var, deref, undo_to, unify


class ArithError(Exception):
    pass


def arith_eval(t) -> int:
    t = deref(t)
    tt = type(t)
    if tt is int:
        return t
    if tt is tuple:
        op = t[0]
        n = len(t) - 1
        if n == 2:
            a = arith_eval(t[1])
            b = arith_eval(t[2])
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "//" or op == "/":
                if b == 0:
                    raise ArithError("integer division by zero")
                return a // b
            if op == "mod":
                if b == 0:
                    raise ArithError("mod by zero")
                return a % b
            if op == "min":
                return a if a < b else b
            if op == "max":
                return a if a > b else b
        elif n == 1:
            a = arith_eval(t[1])
            if op == "-":
                return -a
            if op == "+":
                return a
            if op == "abs":
                return a if a >= 0 else -a
    raise ArithError("cannot evaluate %r as an integer expression" % (t,))


def _is(m, g) -> bool:
    v = arith_eval(g[2])
    a = deref(g[1])
    ta = type(a)
    if ta is Var:
        a.ref = v
        m.trail.append(a)
        return True
    return ta is int and a == v


def _lt(m, g) -> bool:
    return arith_eval(g[1]) < arith_eval(g[2])


def _gt(m, g) -> bool:
    return arith_eval(g[1]) > arith_eval(g[2])


def _le(m, g) -> bool:
    return arith_eval(g[1]) <= arith_eval(g[2])


def _ge(m, g) -> bool:
    return arith_eval(g[1]) >= arith_eval(g[2])


def _eq_arith(m, g) -> bool:
    return arith_eval(g[1]) == arith_eval(g[2])


def _ne_arith(m, g) -> bool:
    return arith_eval(g[1]) != arith_eval(g[2])


def _unify(m, g) -> bool:
    return unify(g[1], g[2], m.trail, m.occurs_check)


def _not_unify(m, g) -> bool:
    mark = len(m.trail)
    if unify(g[1], g[2], m.trail, m.occurs_check):
        undo_to(m.trail, mark)
        return False
    return True


def _true(m, g) -> bool:
    return True


def _fail(m, g) -> bool:
    return False


BUILTINS = {
    ("is", 2): _is,
    ("<", 2): _lt,
    (">", 2): _gt,
    ("=<", 2): _le,
    (">=", 2): _ge,
    ("=:=", 2): _eq_arith,
    ("=\\=", 2): _ne_arith,
    ("=", 2): _unify,
    ("\\=", 2): _not_unify,
    ("true", 0): _true,
    ("fail", 0): _fail,
    ("false", 0): _fail,
}
