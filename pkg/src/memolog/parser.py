"""Reader and program representation for the Prolog-subset source format.

Grammar (one clause per ``.``)::

    Program   ::= (Clause | Directive)*
    Directive ::= ':-' 'table' Atom '/' Integer '.'
    Clause    ::= Head '.' | Head ':-' Body '.'
    Body      ::= Literal (',' Literal)*
    Literal   ::= Term | '!'
    Term      ::= Atom | Integer | Variable | Atom '(' Term (',' Term)* ')'

Atoms are lowercase identifiers or runs of symbolic characters (so that
canonical-form arithmetic like ``is(X, +(Y, 1))`` can be written);
variables start with an uppercase letter or ``_``; ``%`` starts a line
comment.  Clause order is source order.
"""

from __future__ import annotations

from typing import Optional

from .builtins import BUILTINS

SYMBOLIC = set("+-*/\\^<>=~:.?@#&")

# body literal kinds
K_CALL = 0
K_TABLED = 1
K_BUILTIN = 2
K_CUT = 3


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int) -> None:
        super().__init__("%s at line %d, column %d" % (msg, line, col))
        self.line = line
        self.col = col


class Slot:
    """Variable placeholder inside a stored clause template."""

    __slots__ = ("i",)

    def __init__(self, i: int) -> None:
        self.i = i

    def __repr__(self) -> str:  # pragma: no cover
        return f"Slot({self.i})"


class TNode:
    """Non-ground compound inside a clause template.

    Ground compounds stay plain tuples, so `instantiate` can return them
    without copying; only TNode subtrees are rebuilt per clause try.
    """

    __slots__ = ("name", "args")

    def __init__(self, name: str, args: tuple) -> None:
        self.name = name
        self.args = args

    def __repr__(self) -> str:  # pragma: no cover
        return f"TNode({self.name}, {self.args!r})"


class Clause:
    __slots__ = ("head", "body", "nvars", "ground")

    def __init__(self, head, body, nvars: int) -> None:
        self.head = head
        self.body = body  # tuple of raw literal templates; compiled later
        self.nvars = nvars
        self.ground = nvars == 0 and not body


class Pred:
    """One predicate: ordered clauses plus call-time dispatch data."""

    __slots__ = ("name", "arity", "clauses", "tabled", "index", "var_clauses",
                 "compiled")

    def __init__(self, name: str, arity: int) -> None:
        self.name = name
        self.arity = arity
        self.clauses: list = []
        self.tabled = False
        self.index: Optional[dict] = None
        self.var_clauses: Optional[tuple] = None
        self.compiled: list = []  # parallel to clauses: (head, body_ops, nvars, ground)

    def __repr__(self) -> str:  # pragma: no cover
        return f"<{self.name}/{self.arity} {len(self.clauses)} clauses>"


class Program:
    def __init__(self) -> None:
        self.preds: dict = {}
        self.tabled: set = set()

    def pred(self, name: str, arity: int) -> Pred:
        key = (name, arity)
        p = self.preds.get(key)
        if p is None:
            p = Pred(name, arity)
            self.preds[key] = p
        return p

    def clauses(self, name: str, arity: int) -> list:
        p = self.preds.get((name, arity))
        return p.clauses if p else []


# ---------------------------------------------------------------------------
# tokenizer

ATOM, VAR, INT, PUNCT, NECK, DOT, EOF = range(7)


class _Lexer:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1
        self.tok = None
        self.val = None
        self.tline = 1
        self.tcol = 1
        self.next()

    def _advance(self, n: int) -> None:
        for _ in range(n):
            if self.text[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def next(self) -> None:
        text, n = self.text, len(self.text)
        while self.pos < n:
            c = text[self.pos]
            if c in " \t\r\n":
                self._advance(1)
            elif c == "%":
                while self.pos < n and text[self.pos] != "\n":
                    self._advance(1)
            else:
                break
        self.tline, self.tcol = self.line, self.col
        if self.pos >= n:
            self.tok, self.val = EOF, None
            return
        c = text[self.pos]
        if c in "(),!":
            self.tok, self.val = PUNCT, c
            self._advance(1)
            return
        if c.isdigit():
            j = self.pos
            while j < n and text[j].isdigit():
                j += 1
            self.tok, self.val = INT, int(text[self.pos:j])
            self._advance(j - self.pos)
            return
        if c.isalpha() or c == "_":
            j = self.pos
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[self.pos:j]
            self._advance(j - self.pos)
            if c.islower():
                self.tok, self.val = ATOM, word
            else:
                self.tok, self.val = VAR, word
            return
        if c in SYMBOLIC:
            j = self.pos
            while j < n and text[j] in SYMBOLIC:
                j += 1
            run = text[self.pos:j]
            if run == ".":
                # end of clause unless used as a functor: ".("
                if j < n and text[j] == "(":
                    self._advance(1)
                    self.tok, self.val = ATOM, "."
                else:
                    self._advance(1)
                    self.tok, self.val = DOT, "."
                return
            if run.startswith(".") and len(run) > 1:
                # e.g. ".." — treat a leading lone dot before symbols as end
                self._advance(1)
                self.tok, self.val = DOT, "."
                return
            self._advance(j - self.pos)
            if run == ":-":
                self.tok, self.val = NECK, run
            else:
                self.tok, self.val = ATOM, run
            return
        raise ParseError("unexpected character %r" % c, self.line, self.col)


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str) -> None:
        self.lx = _Lexer(text)

    def err(self, msg: str):
        raise ParseError(msg, self.lx.tline, self.lx.tcol)

    def expect(self, tok: int, val=None):
        lx = self.lx
        if lx.tok != tok or (val is not None and lx.val != val):
            self.err("expected %r, found %r" % (val if val else tok, lx.val))
        v = lx.val
        lx.next()
        return v

    def parse_term(self, vars: dict):
        lx = self.lx
        if lx.tok == INT:
            v = lx.val
            lx.next()
            return v
        if lx.tok == VAR:
            name = lx.val
            lx.next()
            if name == "_":
                return Slot(self._new_slot(vars))
            slot = vars.get(name)
            if slot is None:
                slot = Slot(self._new_slot(vars))
                vars[name] = slot
                return slot
            return slot
        if lx.tok == ATOM:
            name = lx.val
            lx.next()
            if lx.tok == PUNCT and lx.val == "(":
                lx.next()
                args = [self.parse_term(vars)]
                while lx.tok == PUNCT and lx.val == ",":
                    lx.next()
                    args.append(self.parse_term(vars))
                self.expect(PUNCT, ")")
                return (name, *args)
            return name
        self.err("expected a term, found %r" % (lx.val,))

    @staticmethod
    def _new_slot(vars: dict) -> int:
        n = vars.get("$count", 0)
        vars["$count"] = n + 1
        return n

    def parse_literal(self, vars: dict):
        lx = self.lx
        if lx.tok == PUNCT and lx.val == "!":
            lx.next()
            return "!"
        t = self.parse_term(vars)
        if type(t) is Slot:
            self.err("variable is not a valid body literal")
        if type(t) is int:
            self.err("integer is not a valid body literal")
        return t

    def parse_program(self) -> Program:
        prog = Program()
        lx = self.lx
        while lx.tok != EOF:
            if lx.tok == NECK:
                lx.next()
                self.expect(ATOM, "table")
                name = self.expect(ATOM)
                self.expect(ATOM, "/")
                arity = self.expect(INT)
                self.expect(DOT)
                prog.tabled.add((name, arity))
                continue
            vars: dict = {}
            head = self.parse_term(vars)
            if type(head) is Slot or type(head) is int:
                self.err("clause head must be an atom or compound")
            body: list = []
            if lx.tok == NECK:
                lx.next()
                body.append(self.parse_literal(vars))
                while lx.tok == PUNCT and lx.val == ",":
                    lx.next()
                    body.append(self.parse_literal(vars))
            self.expect(DOT)
            nvars = vars.get("$count", 0)
            name = head if type(head) is str else head[0]
            arity = 0 if type(head) is str else len(head) - 1
            if (name, arity) in BUILTINS:
                self.err("cannot redefine builtin %s/%d" % (name, arity))
            prog.pred(name, arity).clauses.append(Clause(head, tuple(body), nvars))
        _compile(prog)
        return prog


def _literal_key(lit):
    if type(lit) is str:
        return (lit, 0)
    return (lit[0], len(lit) - 1)


def _xform(t):
    """Mark non-ground compounds as TNode; ground subtrees stay shared."""
    if type(t) is tuple:
        args = tuple(_xform(a) for a in t[1:])
        if any(type(a) is Slot or type(a) is TNode for a in args):
            return TNode(t[0], args)
        return t
    return t


def _compile(prog: Program) -> None:
    """Resolve body literals to dispatch records and build first-arg indexes."""
    for (name, arity) in prog.tabled:
        prog.pred(name, arity).tabled = True
    for pred in list(prog.preds.values()):
        for cl in pred.clauses:
            ops = []
            for lit in cl.body:
                if lit == "!":
                    ops.append((K_CUT, None, "!"))
                    continue
                key = _literal_key(lit)
                fn = BUILTINS.get(key)
                if fn is not None:
                    ops.append((K_BUILTIN, fn, _xform(lit)))
                    continue
                target = prog.pred(*key)
                kind = K_TABLED if key in prog.tabled else K_CALL
                ops.append((kind, target, _xform(lit)))
            pred.compiled.append((_xform(cl.head), tuple(ops), cl.nvars, cl.ground))
    for pred in prog.preds.values():
        _build_index(pred)


def _first_arg(head):
    if type(head) is TNode:
        return head.args[0]
    return head[1]


def _build_index(pred: Pred) -> None:
    """First-argument indexing: bucket clauses by first-arg principal token."""
    if pred.arity == 0 or len(pred.clauses) < 4:
        return
    buckets: dict = {}
    var_clauses: list = []
    any_const = False
    for i, rec in enumerate(pred.compiled):
        a0 = _first_arg(rec[0])
        if type(a0) is Slot:
            for b in buckets.values():
                b.append(i)
            var_clauses.append(i)
        elif type(a0) is TNode:
            any_const = True
            tok = ("f", a0.name, len(a0.args))
            b = buckets.setdefault(tok, list(var_clauses))
            b.append(i)
        else:
            any_const = True
            tok = a0 if type(a0) is not tuple else ("f", a0[0], len(a0) - 1)
            b = buckets.setdefault(tok, list(var_clauses))
            b.append(i)
    if not any_const:
        return
    pred.index = {tok: tuple(pred.compiled[i] for i in ixs) for tok, ixs in buckets.items()}
    pred.var_clauses = tuple(pred.compiled[i] for i in var_clauses)


def parse_program(text: str) -> Program:
    """Parse program text; total over the grammar, raises ParseError otherwise."""
    return _Parser(text).parse_program()


def parse_query(text: str):
    """Parse a query goal ("goal." — the final dot is optional).

    Returns ``(goal, names)`` where `goal` has fresh variable cells and
    `names` maps ``id(cell)`` to the source variable name.
    """
    from .terms import Var

    p = _Parser(text)
    vars: dict = {}
    t = p.parse_term(vars)
    if p.lx.tok == DOT:
        p.lx.next()
    if p.lx.tok != EOF:
        p.err("unexpected input after query goal")
    if type(t) is Slot or type(t) is int:
        p.err("query must be an atom or compound goal")
    nvars = vars.get("$count", 0)
    cells = [Var() for _ in range(nvars)]
    goal = instantiate(_xform(t), cells)
    names = {}
    for vname, slot in vars.items():
        if vname != "$count":
            names[id(cells[slot.i])] = vname
    return goal, names


def instantiate(template, cells):
    """Build a term instance from a clause template and fresh cells."""
    tt = type(template)
    if tt is TNode:
        return (template.name,) + tuple(instantiate(a, cells) for a in template.args)
    if tt is Slot:
        return cells[template.i]
    return template
