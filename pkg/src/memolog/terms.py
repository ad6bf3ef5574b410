"""First-order terms, unification and variant canonicalization.

Term representation is chosen for speed in the interpreter hot loops:

* atoms       -> Python ``str``
* integers    -> Python ``int``
* compounds   -> Python tuple ``(functor, arg1, ..., argn)`` with n >= 1
* variables   -> ``Var`` cells, mutable ``ref`` slot (None = unbound)

Variable cells belong to exactly one execution branch at a time; all
binding/unbinding goes through a trail (a plain list of bound cells) so
that state can be unwound and replayed.
"""

from __future__ import annotations

from typing import Any, Optional

Term = Any  # str | int | tuple | Var


class Var:
    """A logic variable cell.  ``ref`` is None while unbound."""

    __slots__ = ("ref",)

    def __init__(self) -> None:
        self.ref: Optional[Term] = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"_V{id(self) & 0xFFFF:04x}" if self.ref is None else f"Var({self.ref!r})"


class VRef:
    """Placeholder for a variable inside a stored (frozen) answer term."""

    __slots__ = ("i",)

    def __init__(self, i: int) -> None:
        self.i = i

    def __repr__(self) -> str:  # pragma: no cover
        return f"VRef({self.i})"


def struct(name: str, *args: Term) -> Term:
    """Build a compound term; zero-arity collapses to a plain atom."""
    if not args:
        return name
    return (name, *args)


def deref(t: Term) -> Term:
    while type(t) is Var:
        r = t.ref
        if r is None:
            return t
        t = r
    return t


def bind(v: Var, t: Term, trail: list) -> None:
    v.ref = t
    trail.append(v)


def undo_to(trail: list, mark: int) -> None:
    """Unbind every variable bound after `mark`; truncate the trail to it."""
    if mark > len(trail):
        raise ValueError("trail mark %d beyond top %d" % (mark, len(trail)))
    while len(trail) > mark:
        trail.pop().ref = None


def _occurs(v: Var, t: Term) -> bool:
    stack = [t]
    while stack:
        x = stack.pop()
        x = deref(x)
        if x is v:
            return True
        if type(x) is tuple:
            stack.extend(x[1:])
    return False


def unify(a: Term, b: Term, trail: list, occurs_check: bool = False) -> bool:
    """Unify two terms, trailing bindings.

    On failure every binding made during this call is undone, so the net
    binding state is unchanged.
    """
    mark = len(trail)
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        x = deref(x)
        y = deref(y)
        if x is y:
            continue
        tx = type(x)
        ty = type(y)
        if tx is Var:
            if occurs_check and _occurs(x, y):
                undo_to(trail, mark)
                return False
            x.ref = y
            trail.append(x)
        elif ty is Var:
            if occurs_check and _occurs(y, x):
                undo_to(trail, mark)
                return False
            y.ref = x
            trail.append(y)
        elif tx is tuple:
            if ty is not tuple or len(x) != len(y) or x[0] != y[0]:
                undo_to(trail, mark)
                return False
            for i in range(1, len(x)):
                stack.append((x[i], y[i]))
        else:
            # atoms / ints
            if tx is not ty or x != y:
                undo_to(trail, mark)
                return False
    return True


def variant_key(goal: Term) -> tuple:
    """Canonical token sequence of a callable goal.

    Variables are numbered 0, 1, 2, ... in first-occurrence order, so two
    goals that are equal up to variable renaming produce identical keys
    and any other pair of goals produces distinct keys.

    Returns ``(key, varlist)`` where ``varlist`` holds the distinct
    unbound cells of the goal in canonical order.
    """
    goal = deref(goal)
    if type(goal) is Var:
        raise TypeError("ill-formed call: unbound variable as goal")
    if type(goal) is str:
        return (("f", goal, 0),), []
    if type(goal) is int:
        raise TypeError("ill-formed call: integer as goal")
    tokens: list = [("f", goal[0], len(goal) - 1)]
    varlist: list = []
    varno: dict = {}
    stack = list(goal[:0:-1])
    while stack:
        t = deref(stack.pop())
        tt = type(t)
        if tt is Var:
            n = varno.get(id(t))
            if n is None:
                n = len(varlist)
                varno[id(t)] = n
                varlist.append(t)
            tokens.append(("v", n))
        elif tt is tuple:
            tokens.append(("f", t[0], len(t) - 1))
            stack.extend(t[:0:-1])
        else:
            tokens.append(t)
    return tuple(tokens), varlist


def freeze_answer(cells: list) -> "tuple[tuple, tuple, bool]":
    """Snapshot the dereferenced values of `cells` independently of the trail.

    Residual unbound variables become ``VRef`` markers numbered in
    first-occurrence order.  Returns ``(frozen_terms, tokens, has_vars)``
    where `tokens` is the flattened trie path for the answer.
    """
    frozen: list = []
    tokens: list = []
    varno: dict = {}
    for c in cells:
        t = deref(c)
        tt = type(t)
        if tt is int or tt is str:
            frozen.append(t)
            tokens.append(t)
        else:
            frozen.append(_freeze(t, varno, tokens))
    return tuple(frozen), tuple(tokens), bool(varno)


def _freeze(t: Term, varno: dict, tokens: list) -> Term:
    t = deref(t)
    tt = type(t)
    if tt is int or tt is str:
        tokens.append(t)
        return t
    if tt is Var:
        n = varno.get(id(t))
        if n is None:
            n = len(varno)
            varno[id(t)] = n
        tokens.append(("v", n))
        return VRef(n)
    tokens.append(("f", t[0], len(t) - 1))
    return (t[0],) + tuple(_freeze(a, varno, tokens) for a in t[1:])


def thaw_answer(frozen: tuple, has_vars: bool) -> tuple:
    """Rebuild a stored answer, giving residual variables fresh cells."""
    if not has_vars:
        return frozen
    cells: dict = {}
    return tuple(_thaw(t, cells) for t in frozen)


def _thaw(t: Term, cells: dict) -> Term:
    tt = type(t)
    if tt is VRef:
        c = cells.get(t.i)
        if c is None:
            c = Var()
            cells[t.i] = c
        return c
    if tt is tuple:
        return (t[0],) + tuple(_thaw(a, cells) for a in t[1:])
    return t


def term_to_str(t: Term, names: Optional[dict] = None) -> str:
    """Render a term in canonical syntax (used for answer output)."""
    t = deref(t)
    tt = type(t)
    if tt is Var:
        if names is None:
            return "_G%d" % (id(t) & 0xFFFFFF)
        name = names.get(id(t))
        if name is None:
            name = "_%d" % len(names)
            names[id(t)] = name
        return name
    if tt is tuple:
        return "%s(%s)" % (t[0], ",".join(term_to_str(a, names) for a in t[1:]))
    return str(t)
