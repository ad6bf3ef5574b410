"""Independent reference implementations used to check the engine.

Everything here deliberately avoids the engine's code paths: bottom-up
fixpoint evaluation, brute-force graph reachability, permutation search
for queens, and a naive re-count of answer-trie encodings.
"""

from __future__ import annotations

import itertools
from collections import defaultdict


def is_var(x) -> bool:
    return isinstance(x, str) and bool(x) and (x[0].isupper() or x[0] == "_")


def _match(pattern, fact, binds):
    for p, f in zip(pattern, fact):
        if is_var(p):
            v = binds.get(p)
            if v is None:
                binds[p] = f
            elif v != f:
                return False
        elif p != f:
            return False
    return True


def least_model(facts, rules):
    """Semi-naive bottom-up fixpoint of a definite Datalog program.

    `facts`: iterable of (pred, argtuple); `rules`: list of (head, body)
    where head/body literals are (pred, argtuple) and arguments are
    constants or variable names (capitalized strings).  Rules must be
    range-restricted.  Returns dict pred -> set of ground argtuples.
    """
    db: dict = defaultdict(set)
    for p, args in facts:
        db[p].add(tuple(args))
    delta: dict = {p: set(s) for p, s in db.items()}
    while True:
        new: dict = defaultdict(set)
        for head, body in rules:
            n = len(body)
            for dpos in range(n):
                dp, dargs = body[dpos]
                if dp not in delta or not delta[dp]:
                    continue
                stack = [(0, {})]
                while stack:
                    i, binds = stack.pop()
                    if i == n:
                        hp, hargs = head
                        ground = tuple(binds[a] if is_var(a) else a for a in hargs)
                        if ground not in db[hp]:
                            new[hp].add(ground)
                        continue
                    p, args = body[i]
                    source = delta[dp] if i == dpos else db.get(p, ())
                    for fact in source:
                        if len(fact) != len(args):
                            continue
                        b2 = dict(binds)
                        if _match(args, fact, b2):
                            stack.append((i + 1, b2))
        changed = False
        delta = {}
        for p, s in new.items():
            fresh = s - db[p]
            if fresh:
                db[p] |= fresh
                delta[p] = fresh
                changed = True
        if not changed:
            return {p: set(s) for p, s in db.items()}


def pattern_answers(model: dict, pred: str, pattern) -> set:
    """Project the model onto a call pattern's distinct variables.

    `pattern` is the argument tuple of a canonical call: constants and
    ('v', i) markers with first-occurrence numbering.  The result is the
    set of substitution tuples expected for that call, matching the
    engine's answer-table encoding.
    """
    tuples = model.get(pred, set())
    nvars = 0
    for a in pattern:
        if type(a) is tuple and a[0] == "v":
            nvars = max(nvars, a[1] + 1)
    out = set()
    for fact in tuples:
        if len(fact) != len(pattern):
            continue
        sub = [None] * nvars
        ok = True
        for p, f in zip(pattern, fact):
            if type(p) is tuple and p[0] == "v":
                cur = sub[p[1]]
                if cur is None:
                    sub[p[1]] = f
                elif cur != f:
                    ok = False
                    break
            elif p != f:
                ok = False
                break
        if ok:
            out.add(tuple(sub))
    return out


def reachable_pairs(n_nodes: int, edges) -> set:
    """Brute-force transitive closure (non-reflexive unless cyclic)."""
    succ = defaultdict(set)
    for a, b in edges:
        succ[a].add(b)
    out = set()
    for start in range(n_nodes):
        seen = set()
        frontier = list(succ[start])
        while frontier:
            x = frontier.pop()
            if x in seen:
                continue
            seen.add(x)
            frontier.extend(succ[x])
        out |= {(start, x) for x in seen}
    return out


def queens_solutions(n: int) -> int:
    """Count n-queens placements by brute-force permutation search."""
    count = 0
    for perm in itertools.permutations(range(n)):
        if all(abs(perm[i] - perm[j]) != j - i
               for i in range(n) for j in range(i + 1, n)):
            count += 1
    return count


def naive_encoding_count(answers) -> int:
    """Independently count trie nodes needed to store each answer alone.

    One node per token of the flattened answer tuple; compounds cost one
    functor token plus their arguments, variables and constants cost one.
    """
    total = 0
    for ans in answers:
        stack = list(ans)
        while stack:
            t = stack.pop()
            total += 1
            if isinstance(t, tuple):
                stack.extend(t[1:])
    return total
