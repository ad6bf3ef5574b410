"""Sequential tabled-resolution engine.

The machine interprets a program over an explicit choice-point chain and a
goal continuation (a cons list), with four table operations wired into the
search:

* a call to a tabled subgoal either creates a generator node (first call),
  a consumer node (variant call, answers fed from the table), or walks a
  completed table directly without allocating a consumer;
* completed clause bodies of a generator reach an answer marker that
  inserts into the table - repeated answers fail;
* backtracking into a consumer performs answer resolution: feed the next
  unconsumed answer, or suspend / jump to the next consumer that has one;
* backtracking into an exhausted generator runs the completion check; the
  leader of a strongly-connected set of subgoals drives consumers to a
  fixpoint and then closes every table in the set.

Consumer suspension is realized by keeping the consumer's choice point
(with a snapshot of the bound-variable trail along its branch) alive and
replaying the binding suffix when the consumer is resumed.

Two scheduling strategies: "batched" favors forward execution and emits
answers as they are found; "local" keeps answers inside the current
subgoal set until it completes.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .builtins import BUILTINS
from .errors import ResourceLimitError, TabledPruneError
from .parser import (K_BUILTIN, K_CALL, K_CUT, K_TABLED, Pred, Program,
                     instantiate, parse_query)
from .table import TableSpace
from .terms import Var, deref, freeze_answer, thaw_answer, undo_to, unify, variant_key

K_MARKER = 4

GEN, CONS, INT, LOAD = 0, 1, 2, 3

_BACKTRACK = object()   # goal-loop sentinel: current branch failed
_DONE = object()        # all work on this machine exhausted
_NOMATCH = object()     # clause head did not unify

_serials = itertools.count(1)


class ChoicePoint:
    __slots__ = ("kind", "serial", "parent", "trail_mark", "saved_goals",
                 "goal", "alts", "alt_ix", "frame", "varlist", "df",
                 "snapshot", "resumed_from", "exhausted", "or_frame",
                 "older_consumer", "load_cursor")

    def __init__(self, kind: int, parent, trail_mark: int, saved_goals) -> None:
        self.kind = kind
        self.serial = next(_serials)
        self.parent = parent
        self.trail_mark = trail_mark
        self.saved_goals = saved_goals
        self.goal = None
        self.alts = None
        self.alt_ix = 0
        self.frame = None
        self.varlist = None
        self.df = None
        self.snapshot = None
        self.resumed_from = None
        self.exhausted = False
        self.or_frame = None
        self.older_consumer = None
        self.load_cursor = None


class DepFrame:
    """Per-consumer record: consumption cursor plus leader information.

    Shared between workers once the consumer's branch has been copied;
    the consumption cursor is then advanced under the frame's lock.
    """

    __slots__ = ("frame", "lock", "last_leaf", "leader_serial", "consumer_serial")

    def __init__(self, frame, consumer_serial: int) -> None:
        self.frame = frame
        self.lock = None  # created lazily when tables are locking
        self.last_leaf = None
        self.leader_serial = 0
        self.consumer_serial = consumer_serial


@dataclass
class EngineConfig:
    scheduling: str = "batched"          # "batched" | "local"
    occurs_check: bool = False
    hash_threshold: int = 8
    lock_scheme: str = "none"
    sld_only: bool = False               # plain-resolution reference mode
    max_steps: Optional[int] = None
    timeout: Optional[float] = None      # seconds of wall clock
    debug: bool = False


@dataclass
class Solution:
    answers: list                        # frozen substitution tuples, emission order
    var_names: list                      # query variable names, canonical order
    variant_calls: int = 0
    complete_calls: int = 0
    scc_suspends: int = 0
    scc_resumes: int = 0
    table: Optional[TableSpace] = None

    def rendered(self) -> list:
        from .terms import term_to_str
        out = []
        for ans in self.answers:
            if not self.var_names:
                out.append("true")
            else:
                out.append(", ".join("%s = %s" % (n, term_to_str(v))
                                     for n, v in zip(self.var_names, ans)))
        return out


class Machine:
    """One execution branch: stacks, trail, consumer chain, counters."""

    POLL_MASK = 255

    def __init__(self, program: Program, table: TableSpace, cfg: EngineConfig) -> None:
        self.program = program
        self.table = table
        self.cfg = cfg
        self.batched = cfg.scheduling == "batched"
        self.occurs_check = cfg.occurs_check
        self.sld_only = cfg.sld_only
        self.trail: list = []
        self.goals = None
        self.B: Optional[ChoicePoint] = None
        self.youngest_consumer: Optional[ChoicePoint] = None
        self.gens: list = []
        self.ws = table.new_worker_stats()
        self.answers: list = []
        self.query_cells: list = []
        self.variant_calls = 0
        self.complete_calls = 0
        self.scc_suspends = 0
        self.scc_resumes = 0
        self.steps = 0
        self.deadline = (time.monotonic() + cfg.timeout) if cfg.timeout else None

    # -- hooks overridden by the parallel worker ---------------------------

    def poll(self) -> None:
        if self.cfg.max_steps is not None and self.steps > self.cfg.max_steps:
            raise ResourceLimitError("steps")
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise ResourceLimitError("timeout")

    def public_backtrack(self, cp):
        raise AssertionError("public node in sequential engine")

    def compute_leader_serial(self, cons_serial: int, gen_cp) -> int:
        """Leader for a new consumer: hypothesize its generator, then let
        the youngest intervening consumer that depends on something older
        win.  The first such dependency already aggregates the rest."""
        hyp = gen_cp.serial
        cp = self.youngest_consumer
        while cp is not None and cp.serial > hyp:
            dfl = cp.df.leader_serial
            if dfl < hyp:
                return dfl
            cp = cp.older_consumer
        return hyp

    def sweep_complete(self, leader) -> None:
        table = self.table
        gens = self.gens
        while gens and gens[-1].serial >= leader.serial:
            g = gens.pop()
            table.mark_complete(g.frame)

    # -- helpers ------------------------------------------------------------

    def goal_ops(self, goal):
        """Dispatch record for a query goal term."""
        goal = deref(goal)
        if type(goal) is str:
            key = (goal, 0)
        elif type(goal) is tuple:
            key = (goal[0], len(goal) - 1)
        else:
            raise TypeError("query goal must be an atom or compound")
        fn = BUILTINS.get(key)
        if fn is not None:
            return (K_BUILTIN, fn, goal, None)
        pred = self.program.pred(*key)
        kind = K_TABLED if pred.tabled else K_CALL
        return (kind, pred, goal, None)

    def candidates(self, pred: Pred, goal):
        index = pred.index
        if index is None:
            return pred.compiled
        a0 = deref(goal[1])
        ta = type(a0)
        if ta is Var:
            return pred.compiled
        if ta is tuple:
            tok = ("f", a0[0], len(a0) - 1)
        else:
            tok = a0
        return index.get(tok, pred.var_clauses)

    def try_clause(self, rec, goal, rest, barrier):
        """Resolve `goal` against one clause record; _NOMATCH if the head
        does not unify (note: a successful empty continuation is None)."""
        head, ops, nvars, ground = rec
        trail = self.trail
        if ground:
            if unify(goal, head, trail, self.occurs_check):
                return rest
            return _NOMATCH
        cells = [Var() for _ in range(nvars)]
        if not unify(goal, instantiate(head, cells), trail, self.occurs_check):
            return _NOMATCH
        goals = rest
        for k, payload, tmpl in reversed(ops):
            if k == K_CUT:
                goals = (K_CUT, barrier, "!", goals)
            else:
                goals = (k, payload, instantiate(tmpl, cells), goals)
        return goals

    def gen_clause_goals(self, rec, gen):
        """Like try_clause but the body ends at the generator's answer marker."""
        base = (K_MARKER, gen, gen.goal, gen.saved_goals)
        return self.try_clause(rec, gen.goal, base, gen.parent)

    def replay(self, snapshot) -> None:
        trail = self.trail
        n = len(trail)
        if self.cfg.debug:
            for i in range(n):
                assert trail[i] is snapshot[i][0], "branch prefix mismatch on replay"
        for i in range(n, len(snapshot)):
            c, v = snapshot[i]
            c.ref = v
            trail.append(c)

    def df_has_unconsumed(self, df: DepFrame) -> bool:
        if not self.table.locking:
            return df.last_leaf is not df.frame.last_leaf
        lk = df.lock
        if not lk.acquire(False):
            self.ws.bump(df.frame.entry.pred, "dependency_frame")
            lk.acquire()
        try:
            return df.last_leaf is not df.frame.last_leaf
        finally:
            lk.release()

    def df_advance(self, df: DepFrame):
        """Claim the next unconsumed answer leaf, or None."""
        if not self.table.locking:
            leaf = df.frame.first_leaf if df.last_leaf is None else df.last_leaf.next_leaf
            if leaf is not None:
                df.last_leaf = leaf
            return leaf
        lk = df.lock
        if not lk.acquire(False):
            self.ws.bump(df.frame.entry.pred, "dependency_frame")
            lk.acquire()
        try:
            leaf = df.frame.first_leaf if df.last_leaf is None else df.last_leaf.next_leaf
            if leaf is not None:
                df.last_leaf = leaf
            return leaf
        finally:
            lk.release()

    def bind_answer(self, cp, leaf):
        """Load one stored answer into the call's variables."""
        vals = thaw_answer(leaf.value, leaf.has_vars)
        trail = self.trail
        for c, v in zip(cp.varlist, vals):
            c.ref = v
            trail.append(c)
        return cp.saved_goals

    # -- tabled dispatch -----------------------------------------------------

    def tabled_call(self, pred: Pred, goal, rest):
        key, varlist = variant_key(goal)
        table = self.table
        entry = table.entries[(pred.name, pred.arity)]
        frame, is_new = table.lookup_insert(entry, key, self.ws)
        if is_new:
            gen = ChoicePoint(GEN, self.B, len(self.trail), rest)
            gen.goal = goal
            gen.frame = frame
            gen.varlist = varlist
            gen.alts = self.candidates(pred, goal) if pred.arity else pred.compiled
            frame.generator = gen
            self.gens.append(gen)
            self.register_generator(gen)
            self.B = gen
            return self.next_gen_clause(gen)
        if frame.complete:
            self.complete_calls += 1
            if frame.first_leaf is None:
                return _BACKTRACK
            cp = ChoicePoint(LOAD, self.B, len(self.trail), rest)
            cp.varlist = varlist
            cp.load_cursor = frame.first_leaf
            self.B = cp
            return self.next_load(cp)
        # variant call of an incomplete subgoal: consumer node
        self.variant_calls += 1
        cons = ChoicePoint(CONS, self.B, len(self.trail), rest)
        cons.goal = goal
        cons.frame = frame
        cons.varlist = varlist
        df = DepFrame(frame, cons.serial)
        if table.locking:
            df.lock = threading.Lock()
        df.leader_serial = self.compute_leader_serial(cons.serial, frame.generator)
        cons.df = df
        cons.older_consumer = self.youngest_consumer
        self.youngest_consumer = cons
        self.B = cons
        return self.consume(cons)

    def register_generator(self, gen) -> None:
        """Hook for the parallel layer (tracks frames for cross-branch sweeps)."""

    def next_gen_clause(self, gen):
        alts = gen.alts
        n = len(alts)
        trail = self.trail
        i = gen.alt_ix
        while i < n:
            undo_to(trail, gen.trail_mark)
            rec = alts[i]
            i += 1
            gen.alt_ix = i
            goals = self.gen_clause_goals(rec, gen)
            if goals is not _NOMATCH:
                return goals
        gen.exhausted = True
        undo_to(trail, gen.trail_mark)
        return self.completion(gen)

    def next_load(self, cp):
        leaf = cp.load_cursor
        if leaf is None:
            self.B = cp.parent
            return _BACKTRACK
        cp.load_cursor = leaf.next_leaf
        return self.bind_answer(cp, leaf)

    def consume(self, cons):
        """Answer resolution at a consumer positioned at its creation state.

        Control transfers (to another consumer, or back to a leader) are
        staged by repositioning ``B`` and returning the backtrack sentinel,
        so long fixpoint loops stay iterative.
        """
        leaf = self.df_advance(cons.df)
        if leaf is not None:
            return self.bind_answer(cons, leaf)
        if cons.snapshot is None:
            # first backtrack out: freeze this branch and fall below
            cons.snapshot = [(c, c.ref) for c in self.trail]
            self.B = cons.parent
            return _BACKTRACK
        if cons.resumed_from is None:
            # suspended consumer reached again by plain backtracking
            self.B = cons.parent
            return _BACKTRACK
        # resumed from a leader during an unsuccessful completion: move to the
        # next consumer younger than that leader which has unconsumed answers,
        # or back to the leader itself
        leader = cons.resumed_from
        cp = self.youngest_consumer
        while cp is not None and cp.serial > leader.serial:
            if cp is not cons and cp.snapshot is not None and self.df_has_unconsumed(cp.df):
                undo_to(self.trail, leader.trail_mark)
                self.replay(cp.snapshot)
                cp.resumed_from = leader
                self.B = cp
                return _BACKTRACK
            cp = cp.older_consumer
        self.B = leader
        undo_to(self.trail, leader.trail_mark)
        return _BACKTRACK

    # -- completion ----------------------------------------------------------

    def is_leader(self, gen) -> bool:
        yc = self.youngest_consumer
        if yc is None or yc.serial < gen.serial:
            return True
        return yc.df.leader_serial == gen.serial

    def completion(self, gen):
        """Completion check at an exhausted generator (trail at its mark)."""
        if not self.is_leader(gen):
            if not self.batched and gen.df is None:
                self.become_consumer(gen)
                return _BACKTRACK  # re-dispatches as a consumer
            self.B = gen.parent
            return _BACKTRACK
        # leader: drive younger consumers to the fixpoint, youngest first
        cp = self.youngest_consumer
        while cp is not None and cp.serial > gen.serial:
            if cp.snapshot is not None and self.df_has_unconsumed(cp.df):
                self.replay(cp.snapshot)
                cp.resumed_from = gen
                self.B = cp
                return _BACKTRACK
            cp = cp.older_consumer
        return self.complete_scc(gen)

    def become_consumer(self, gen) -> None:
        """Local scheduling: an exhausted non-leader generator consumes its
        own table so answers keep circulating inside the subgoal set."""
        import threading
        df = DepFrame(gen.frame, gen.serial)
        if self.table.locking:
            df.lock = threading.Lock()
        df.leader_serial = self.compute_leader_serial(gen.serial, gen)
        gen.df = df
        gen.kind = CONS
        gen.snapshot = [(c, c.ref) for c in self.trail]
        # insert into the consumer chain at serial order
        prev = None
        cp = self.youngest_consumer
        while cp is not None and cp.serial > gen.serial:
            prev = cp
            cp = cp.older_consumer
        gen.older_consumer = cp
        if prev is None:
            self.youngest_consumer = gen
        else:
            prev.older_consumer = gen

    def complete_scc(self, gen):
        if self.cfg.debug:
            cp = self.youngest_consumer
            while cp is not None and cp.serial > gen.serial:
                assert not self.df_has_unconsumed(cp.df), \
                    "completion with unconsumed answers"
                cp = cp.older_consumer
        self.sweep_complete(gen)
        # drop dependency frames younger than the leader
        cp = self.youngest_consumer
        while cp is not None and cp.serial > gen.serial:
            cp = cp.older_consumer
        self.youngest_consumer = cp
        if self.batched:
            self.B = gen.parent
            return _BACKTRACK
        # local scheduling: the leader now feeds its own answers outward
        frame = gen.frame
        if frame.first_leaf is None:
            self.B = gen.parent
            return _BACKTRACK
        gen.kind = LOAD
        gen.load_cursor = frame.first_leaf
        return self.next_load(gen)

    # -- cut ------------------------------------------------------------------

    def do_cut(self, barrier):
        bs = barrier.serial if barrier is not None else 0
        yc = self.youngest_consumer
        if yc is not None and yc.serial > bs:
            raise TabledPruneError("cut prunes a consumer node")
        if self.gens and self.gens[-1].serial > bs:
            raise TabledPruneError("cut prunes a generator node")
        cp = self.B
        while cp is not barrier:
            assert cp is not None, "cut barrier not on the current branch"
            self.prune_public(cp)
            cp = cp.parent
        self.B = barrier

    def prune_public(self, cp) -> None:
        """Hook: the parallel layer voids shared alternatives here."""

    # -- main loop --------------------------------------------------------------

    def emit(self) -> None:
        frozen, _, _ = freeze_answer(self.query_cells)
        self.answers.append(frozen)

    def backtrack(self):
        trail = self.trail
        while True:
            cp = self.B
            if cp is None:
                return _DONE
            if cp.or_frame is not None:
                return self.public_backtrack(cp)
            kind = cp.kind
            undo_to(trail, cp.trail_mark)
            if kind == INT:
                alts = cp.alts
                n = len(alts)
                i = cp.alt_ix
                goal, rest, barrier = cp.goal, cp.saved_goals, cp.parent
                while i < n:
                    rec = alts[i]
                    i += 1
                    if i == n:
                        self.B = cp.parent  # last alternative: drop the node
                    cp.alt_ix = i
                    goals = self.try_clause(rec, goal, rest, barrier)
                    if goals is not _NOMATCH:
                        return goals
                    undo_to(trail, cp.trail_mark)
                self.B = cp.parent
                continue
            if kind == GEN:
                r = self.next_gen_clause(cp) if not cp.exhausted else self.completion(cp)
                if r is _BACKTRACK:
                    continue
                return r
            if kind == CONS:
                r = self.consume(cp)
                if r is _BACKTRACK:
                    continue
                return r
            # LOAD
            r = self.next_load(cp)
            if r is _BACKTRACK:
                continue
            return r

    def run(self, goal_term) -> None:
        """Evaluate the query to exhaustion, collecting every answer."""
        _, self.query_cells = variant_key(goal_term)
        goals = self.goal_ops(goal_term)
        trail = self.trail
        while True:
            self.steps += 1
            if not (self.steps & self.POLL_MASK):
                self.poll()
            if goals is None:
                self.emit()
                goals = self.backtrack()
                if goals is _DONE:
                    return
                continue
            if goals is _BACKTRACK:
                goals = self.backtrack()
                if goals is _DONE:
                    return
                continue
            kind, payload, term, rest = goals
            if kind == K_CALL:
                goal = deref(term)
                alts = self.candidates(payload, goal) if payload.arity else payload.compiled
                n = len(alts)
                if n == 0:
                    goals = _BACKTRACK
                elif n == 1:
                    goals = self.try_clause(alts[0], goal, rest, self.B)
                    if goals is _NOMATCH:
                        goals = _BACKTRACK
                else:
                    cp = ChoicePoint(INT, self.B, len(trail), rest)
                    cp.goal = goal
                    cp.alts = alts
                    self.B = cp
                    i = 0
                    barrier = cp.parent
                    nxt = _BACKTRACK
                    while i < n:
                        rec = alts[i]
                        i += 1
                        if i == n:
                            self.B = cp.parent
                        cp.alt_ix = i
                        g = self.try_clause(rec, goal, rest, barrier)
                        if g is not _NOMATCH:
                            nxt = g
                            break
                        undo_to(trail, cp.trail_mark)
                    goals = nxt
            elif kind == K_BUILTIN:
                goals = rest if payload(self, deref(term)) else _BACKTRACK
            elif kind == K_TABLED:
                goal = deref(term)
                if self.sld_only:
                    goals = (K_CALL, payload, goal, rest)
                    continue
                goals = self.tabled_call(payload, goal, rest)
            elif kind == K_MARKER:
                gen = payload
                leaf = self.table.insert_answer(gen.frame, gen.varlist, self.ws)
                if leaf is None or not self.batched:
                    goals = _BACKTRACK
                else:
                    goals = rest
            else:  # K_CUT
                self.do_cut(payload)
                goals = rest


def solve(program: Program, query, config: Optional[EngineConfig] = None,
          table: Optional[TableSpace] = None) -> Solution:
    """Evaluate `query` (text or term) against `program`; all answers."""
    cfg = config or EngineConfig()
    names: dict = {}
    if isinstance(query, str):
        goal, names = parse_query(query)
    else:
        goal = query
    if table is None:
        table = TableSpace(program.tabled, scheme=cfg.lock_scheme,
                           hash_threshold=cfg.hash_threshold)
    m = Machine(program, table, cfg)
    m.run(goal)
    var_names = [names.get(id(c), "_%d" % i) for i, c in enumerate(m.query_cells)]
    return Solution(answers=m.answers, var_names=var_names,
                    variant_calls=m.variant_calls, complete_calls=m.complete_calls,
                    scc_suspends=m.scc_suspends, scc_resumes=m.scc_resumes,
                    table=table)
