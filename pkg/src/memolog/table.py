"""Answer/subgoal table space built on tries.

Every tabled predicate owns a table entry whose subgoal trie discriminates
calls by their canonical variant key; each distinct call leads to a subgoal
frame holding an answer trie.  Answer leaves are chained in insertion order
so consumers replay answers exactly as they were produced.

Concurrent access is controlled by one of four locking schemes:

* ``tlel``     - one lock per subgoal trie and one per answer trie
                 (coarse grain, long duration)
* ``tlnl``     - one lock per trie node, held while its sibling chain is
                 searched or extended
* ``tlwl``     - like tlnl but the node is locked only when writing is
                 likely (a lock-free scan missed), using a global array of
                 lock entries instead of per-node lock fields
* ``tlwl-abc`` - tlwl, plus the candidate node is allocated and initialized
                 before locking; on a lost race it goes to a free list

``none`` disables locking entirely for single-threaded runs.

Contention is instrumented the same way it is reported: an unsuccessful
first attempt to acquire a lock counts one contention point against the
structure category (trie node, subgoal frame or dependency frame).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .terms import freeze_answer, thaw_answer

SCHEMES = ("none", "tlel", "tlnl", "tlwl", "tlwl-abc")
N_GLOBAL_LOCKS = 512
DEFAULT_HASH_THRESHOLD = 8


class TableError(Exception):
    pass


class TrieNode:
    __slots__ = ("token", "child", "sibling", "cindex", "nchildren", "lock",
                 "value", "has_vars", "next_leaf", "is_leaf")

    def __init__(self, token) -> None:
        self.token = token
        self.child = None
        self.sibling = None
        self.cindex = None
        self.nchildren = 0
        self.lock = None
        self.value = None      # SubgoalFrame at subgoal leaves, answer tuple at answer leaves
        self.has_vars = False
        self.next_leaf = None
        self.is_leaf = False


class SubgoalFrame:
    """Leaf of the subgoal trie: per-call answer store and completion state."""

    __slots__ = ("entry", "complete", "lock", "trie_lock", "answer_root",
                 "first_leaf", "last_leaf", "unique", "naive_nodes",
                 "generator", "completions", "key")

    def __init__(self, entry: "TableEntry", key: tuple, node_lock: bool,
                 struct_lock: bool) -> None:
        self.entry = entry
        self.key = key
        self.complete = False
        self.lock = threading.Lock()
        self.trie_lock = threading.Lock() if struct_lock else None
        self.answer_root = TrieNode(None)
        if node_lock:
            self.answer_root.lock = threading.Lock()
        self.first_leaf = None
        self.last_leaf = None
        self.unique = 0
        self.naive_nodes = 0      # sum of per-answer path lengths (no root)
        self.generator = None     # owning generator choice point while incomplete
        self.completions = 0

    def answers(self):
        """Iterate stored answers (thawed) in insertion order."""
        leaf = self.first_leaf
        while leaf is not None:
            yield thaw_answer(leaf.value, leaf.has_vars)
            leaf = leaf.next_leaf

    def answer_count(self) -> int:
        return self.unique


class TableEntry:
    __slots__ = ("pred", "root", "trie_lock", "frame_lock", "frames")

    def __init__(self, pred: tuple, node_lock: bool, struct_lock: bool) -> None:
        self.pred = pred
        self.root = TrieNode(None)
        if node_lock:
            self.root.lock = threading.Lock()
        self.trie_lock = threading.Lock() if struct_lock else None
        self.frame_lock = threading.Lock()
        self.frames: list = []


class WorkerTableStats:
    """Per-worker instrumentation cells, merged at report time."""

    __slots__ = ("contention", "repeated", "free_nodes")

    def __init__(self) -> None:
        self.contention: dict = {}   # (predkey, category) -> count
        self.repeated: dict = {}     # frame -> count
        self.free_nodes: list = []   # tlwl-abc discard pile

    def bump(self, predkey: tuple, category: str) -> None:
        k = (predkey, category)
        self.contention[k] = self.contention.get(k, 0) + 1

    def bump_repeated(self, frame: SubgoalFrame) -> None:
        self.repeated[frame] = self.repeated.get(frame, 0) + 1


@dataclass
class PredStats:
    first: int = 0
    subgoal_nodes: int = 0
    answer_nodes: int = 0
    naive_nodes: int = 0
    unique: int = 0
    repeated: int = 0
    contention_subgoal_frame: int = 0
    contention_dependency_frame: int = 0
    contention_trie_node: int = 0

    @property
    def saving(self) -> Fraction:
        if self.naive_nodes == 0:
            return Fraction(0)
        return Fraction(self.naive_nodes - self.answer_nodes, self.naive_nodes)

    @property
    def depth(self) -> float:
        if self.unique == 0:
            return 0.0
        return self.naive_nodes / self.unique


@dataclass
class TableStats:
    per_pred: dict = field(default_factory=dict)
    totals: PredStats = field(default_factory=PredStats)


class TableSpace:
    """All table entries of one evaluation plus the locking discipline."""

    def __init__(self, tabled_preds, scheme: str = "none",
                 hash_threshold: int = DEFAULT_HASH_THRESHOLD) -> None:
        if scheme not in SCHEMES:
            raise ValueError("unknown lock scheme %r" % scheme)
        self.scheme = scheme
        self.hash_threshold = hash_threshold
        self.locking = scheme != "none"
        node_lock = scheme == "tlnl"
        struct_lock = scheme == "tlel"
        self._node_lock = node_lock
        self._struct_lock = struct_lock
        self.global_locks = ([threading.Lock() for _ in range(N_GLOBAL_LOCKS)]
                             if scheme in ("tlwl", "tlwl-abc") else None)
        self.entries: dict = {}
        for pred in tabled_preds:
            self.entries[pred] = TableEntry(pred, node_lock, struct_lock)
        self.worker_stats: list = []
        self._ws_lock = threading.Lock()

    def new_worker_stats(self) -> WorkerTableStats:
        ws = WorkerTableStats()
        with self._ws_lock:
            self.worker_stats.append(ws)
        return ws

    # -- trie walks -------------------------------------------------------

    def _find(self, parent: TrieNode, tok):
        ci = parent.cindex
        if ci is not None:
            return ci.get(tok)
        n = parent.child
        while n is not None:
            if n.token == tok:
                return n
            n = n.sibling
        return None

    def _add(self, parent: TrieNode, tok) -> TrieNode:
        node = TrieNode(tok)
        if self._node_lock:
            node.lock = threading.Lock()
        node.sibling = parent.child
        parent.child = node
        parent.nchildren += 1
        ci = parent.cindex
        if ci is not None:
            ci[tok] = node
        elif parent.nchildren > self.hash_threshold:
            d = {}
            n = parent.child
            while n is not None:
                d[n.token] = n
                n = n.sibling
            parent.cindex = d
        return node

    def _link(self, parent: TrieNode, node: TrieNode) -> None:
        node.sibling = parent.child
        parent.child = node
        parent.nchildren += 1
        ci = parent.cindex
        if ci is not None:
            ci[node.token] = node
        elif parent.nchildren > self.hash_threshold:
            d = {}
            n = parent.child
            while n is not None:
                d[n.token] = n
                n = n.sibling
            parent.cindex = d

    def _acq(self, lock, ws: WorkerTableStats, predkey) -> None:
        if not lock.acquire(False):
            ws.bump(predkey, "trie_node")
            lock.acquire()

    def _walk(self, root: TrieNode, struct_lock, tokens, ws, predkey) -> TrieNode:
        scheme = self.scheme
        cur = root
        if scheme == "none":
            find, add = self._find, self._add
            for tok in tokens:
                nxt = find(cur, tok)
                cur = nxt if nxt is not None else add(cur, tok)
            return cur
        if scheme == "tlel":
            self._acq(struct_lock, ws, predkey)
            try:
                find, add = self._find, self._add
                for tok in tokens:
                    nxt = find(cur, tok)
                    cur = nxt if nxt is not None else add(cur, tok)
                return cur
            finally:
                struct_lock.release()
        if scheme == "tlnl":
            for tok in tokens:
                lk = cur.lock
                self._acq(lk, ws, predkey)
                try:
                    nxt = self._find(cur, tok)
                    if nxt is None:
                        nxt = self._add(cur, tok)
                finally:
                    lk.release()
                cur = nxt
            return cur
        if scheme == "tlwl":
            locks = self.global_locks
            for tok in tokens:
                nxt = self._find(cur, tok)
                if nxt is None:
                    lk = locks[(id(cur) >> 4) & (N_GLOBAL_LOCKS - 1)]
                    self._acq(lk, ws, predkey)
                    try:
                        nxt = self._find(cur, tok)
                        if nxt is None:
                            nxt = self._add(cur, tok)
                    finally:
                        lk.release()
                cur = nxt
            return cur
        # tlwl-abc
        locks = self.global_locks
        for tok in tokens:
            nxt = self._find(cur, tok)
            if nxt is None:
                if ws.free_nodes:
                    cand = ws.free_nodes.pop()
                    cand.token = tok
                else:
                    cand = TrieNode(tok)
                lk = locks[(id(cur) >> 4) & (N_GLOBAL_LOCKS - 1)]
                self._acq(lk, ws, predkey)
                try:
                    nxt = self._find(cur, tok)
                    if nxt is None:
                        self._link(cur, cand)
                        nxt = cand
                    else:
                        ws.free_nodes.append(cand)
                finally:
                    lk.release()
            cur = nxt
        return cur

    # -- table operations ---------------------------------------------------

    def lookup_insert(self, entry: TableEntry, key: tuple, ws: WorkerTableStats):
        """Find or create the subgoal frame for a canonical variant key.

        Returns ``(frame, is_new)``; under concurrency exactly one caller
        observes ``is_new`` for a given key.
        """
        node = self._walk(entry.root, entry.trie_lock, key[1:], ws, entry.pred)
        frame = node.value
        if frame is not None:
            return frame, False
        if not self.locking:
            frame = SubgoalFrame(entry, key, self._node_lock, self._struct_lock)
            node.value = frame
            node.is_leaf = True
            entry.frames.append(frame)
            return frame, True
        lk = entry.frame_lock
        if not lk.acquire(False):
            ws.bump(entry.pred, "subgoal_frame")
            lk.acquire()
        try:
            frame = node.value
            if frame is not None:
                return frame, False
            frame = SubgoalFrame(entry, key, self._node_lock, self._struct_lock)
            node.value = frame
            node.is_leaf = True
            entry.frames.append(frame)
            return frame, True
        finally:
            lk.release()

    def insert_answer(self, frame: SubgoalFrame, cells, ws: WorkerTableStats):
        """Insert the answer currently bound in `cells`.

        Returns the new leaf node, or None when the answer is already
        present (repeated answers fail).  Raises TableError on a completed
        frame: only the engine's completion logic may close tables, and
        nothing may be inserted afterwards.
        """
        if frame.complete:
            raise TableError("insert into completed table %s" % (frame.entry.pred,))
        frozen, tokens, has_vars = freeze_answer(cells)
        node = self._walk(frame.answer_root, frame.trie_lock, tokens, ws,
                          frame.entry.pred)
        if node.is_leaf:
            ws.bump_repeated(frame)
            return None
        if not self.locking:
            node.value = frozen
            node.has_vars = has_vars
            node.is_leaf = True
            if frame.last_leaf is None:
                frame.first_leaf = node
            else:
                frame.last_leaf.next_leaf = node
            frame.last_leaf = node
            frame.unique += 1
            frame.naive_nodes += len(tokens)
            return node
        lk = frame.lock
        if not lk.acquire(False):
            ws.bump(frame.entry.pred, "subgoal_frame")
            lk.acquire()
        try:
            if node.is_leaf:
                ws.bump_repeated(frame)
                return None
            node.value = frozen
            node.has_vars = has_vars
            node.is_leaf = True
            if frame.last_leaf is None:
                frame.first_leaf = node
            else:
                frame.last_leaf.next_leaf = node
            frame.last_leaf = node
            frame.unique += 1
            frame.naive_nodes += len(tokens)
            return node
        finally:
            lk.release()

    def next_answer(self, frame: SubgoalFrame, after):
        """Successor of `after` in insertion order (None = start marker)."""
        if after is None:
            return frame.first_leaf
        return after.next_leaf

    def mark_complete(self, frame: SubgoalFrame) -> None:
        lk = frame.lock
        lk.acquire()
        try:
            if frame.complete:
                raise TableError("double completion of %s" % (frame.entry.pred,))
            frame.complete = True
            frame.completions += 1
            frame.generator = None
        finally:
            lk.release()

    def load_completed_answers(self, frame: SubgoalFrame):
        """Iterate a completed table's answers, insertion order, lock-free."""
        if not frame.complete:
            raise TableError("table %s is not complete" % (frame.entry.pred,))
        return frame.answers()

    # -- statistics ---------------------------------------------------------

    @staticmethod
    def _count_nodes(root: TrieNode) -> int:
        count = 0
        stack = [root]
        while stack:
            n = stack.pop()
            count += 1
            c = n.child
            while c is not None:
                stack.append(c)
                c = c.sibling
        return count

    def collect_stats(self) -> TableStats:
        stats = TableStats()
        repeated: dict = {}
        contention: dict = {}
        for ws in self.worker_stats:
            for f, n in ws.repeated.items():
                repeated[f] = repeated.get(f, 0) + n
            for k, n in ws.contention.items():
                contention[k] = contention.get(k, 0) + n
        tot = stats.totals
        for pred, entry in sorted(self.entries.items()):
            ps = PredStats()
            ps.first = len(entry.frames)
            ps.subgoal_nodes = self._count_nodes(entry.root)
            for frame in entry.frames:
                ps.answer_nodes += self._count_nodes(frame.answer_root)
                ps.unique += frame.unique
                ps.naive_nodes += frame.naive_nodes
                ps.repeated += repeated.get(frame, 0)
            ps.contention_subgoal_frame = contention.get((pred, "subgoal_frame"), 0)
            ps.contention_dependency_frame = contention.get((pred, "dependency_frame"), 0)
            ps.contention_trie_node = contention.get((pred, "trie_node"), 0)
            stats.per_pred[pred] = ps
            tot.first += ps.first
            tot.subgoal_nodes += ps.subgoal_nodes
            tot.answer_nodes += ps.answer_nodes
            tot.naive_nodes += ps.naive_nodes
            tot.unique += ps.unique
            tot.repeated += ps.repeated
            tot.contention_subgoal_frame += ps.contention_subgoal_frame
            tot.contention_dependency_frame += ps.contention_dependency_frame
            tot.contention_trie_node += ps.contention_trie_node
        return stats
