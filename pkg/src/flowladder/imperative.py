"""Imperative value-stack store, transfer-function iteration, preallocation.

Every store cell is a stack of timestamped value sets, newest first.  A
write during generation t lands in an entry stamped t+1, invisible to the
time-filtered lookup the current generation uses, so the store can be
updated in place while it is being read: a generation always sees the
snapshot it started with.  The stacks record the whole widening history;
snapshotting them at each timestamp reproduces the store chain of the
persistent stages entry for entry.

Preallocation fixes the address space up front: for a uniform k-CFA policy
every address the policy can ever mint is enumerated and given a dense
ordinal, the store becomes a flat list indexed by ordinal, and the machine
runs on plain ints instead of structured address objects.  Results are
decoded back to structured addresses when the run is packaged.
"""

from __future__ import annotations

from itertools import product

from .domains import (
    AnalysisBugError,
    ApC,
    ArK,
    BindAddr,
    Closure,
    CoC,
    DelayedAddr,
    EMPTY_STORE,
    Env,
    FnK,
    Halt,
    IfK,
    KontAddr,
    Store,
    StuckC,
    ValAddr,
    FN_SLOT,
    ARG_SLOT,
)
from .syntax import App, Expr, If, Lam, Lit, Var
from .compiled import inject_compiled, step_compiled


class UnsupportedPolicyError(ValueError):
    """Raised when preallocation is asked for an unbounded address space."""


# ----------------------------------------------------------- value stacks

def lookup(stack, t):
    """Value set visible at time t: the top entry unless it is stamped in
    the future, then the one below it.  The machine never creates more than
    one future entry, so deeper inspection would indicate a broken engine."""
    if not stack:
        raise AnalysisBugError("lookup on an empty value stack")
    stamp, vs = stack[0]
    if stamp <= t:
        return vs
    if len(stack) < 2:
        raise AnalysisBugError("value stack holds only a future entry")
    stamp2, vs2 = stack[1]
    if stamp2 > t:
        raise AnalysisBugError("two future entries on one value stack")
    return vs2


def join_at_stack(stack, vs, t):
    """Merge vs into a non-empty stack in place at time t.  Returns whether
    anything grew.  New material becomes visible at t+1."""
    stamp, top = stack[0]
    if stamp > t:
        merged = top | vs
        if merged == top:
            return False
        stack[0] = (stamp, merged)
        return True
    merged = top | vs
    if merged == top:
        return False
    stack.insert(0, (t + 1, merged))
    return True


def check_stack(stack, t=None):
    """Invariant probe: stamps strictly decrease downward, value sets grow
    toward the top, and at most one entry sits in the future of t."""
    for (s1, v1), (s2, v2) in zip(stack, stack[1:]):
        if s1 <= s2:
            return False
        if not v2 <= v1:
            return False
    if t is not None:
        if sum(1 for s, _ in stack if s > t) > 1:
            return False
        if stack and stack[0][0] > t + 1:
            return False
    return True


class HashValueStore:
    """Addr -> ValStack as a plain dict."""

    __slots__ = ("cells",)

    def __init__(self):
        self.cells = {}

    def join_at(self, a, vs, t):
        stack = self.cells.get(a)
        if stack is None:
            self.cells[a] = [(t, frozenset(vs))]
            return True
        return join_at_stack(stack, vs, t)

    def get_stack(self, a):
        return self.cells.get(a)

    def addresses(self):
        return self.cells.keys()

    def items(self):
        return self.cells.items()


class DenseValueStore:
    """Ordinal -> ValStack as a flat pre-sized list."""

    __slots__ = ("cells",)

    def __init__(self, size):
        self.cells = [None] * size

    def join_at(self, a, vs, t):
        stack = self.cells[a]
        if stack is None:
            self.cells[a] = [(t, frozenset(vs))]
            return True
        return join_at_stack(stack, vs, t)

    def get_stack(self, a):
        return self.cells[a]

    def addresses(self):
        return (i for i, s in enumerate(self.cells) if s is not None)

    def items(self):
        return ((i, s) for i, s in enumerate(self.cells) if s is not None)


class SnapshotView:
    """Read-only store facade fixing the observation time.  What the
    compiled stepper sees during one generation.  The hot paths repeat
    lookup's two-entry scan inline."""

    __slots__ = ("_fetch", "t")

    def __init__(self, vstore, t):
        cells = vstore.cells
        # dense lists hold None placeholders, so plain indexing matches
        # dict.get's absent-is-None contract
        self._fetch = cells.__getitem__ if isinstance(cells, list) else cells.get
        self.t = t

    def deref(self, a):
        stack = self._fetch(a)
        if stack is None:
            raise AnalysisBugError(f"lookup of absent address {a!r}")
        entry = stack[0]
        if entry[0] <= self.t:
            return entry[1]
        return stack[1][1]

    def get(self, a, default=None):
        stack = self._fetch(a)
        if stack is None:
            return default
        entry = stack[0]
        if entry[0] <= self.t:
            return entry[1]
        return stack[1][1]


# ------------------------------------------------- snapshot/chain algebra

def _effective(stack):
    """(effective stamp, vs) pairs, newest first.  The bottom entry records
    the address's first write, performed during the generation one before
    its visibility, so its effective stamp is stamp + 1; every other entry
    is already stamped with its visibility time."""
    n = len(stack)
    return [(s + 1 if i == n - 1 else s, vs) for i, (s, vs) in enumerate(stack)]


def snapshot(vstore, tau, decode_addr=None, decode_value=None):
    """The plain store visible at timestamp tau."""
    m = {}
    for a, stack in vstore.items():
        for s, vs in _effective(stack):
            if s <= tau:
                if decode_value is not None:
                    vs = frozenset(decode_value(v) for v in vs)
                m[a if decode_addr is None else decode_addr(a)] = vs
                break
    return Store(m)


def stacks_to_chain(vstore, t, decode_addr=None, decode_value=None):
    """Snapshots at t, t-1, ..., 0, the persistent store chain, newest
    first."""
    return tuple(
        snapshot(vstore, tau, decode_addr, decode_value)
        for tau in range(t, -1, -1)
    )


def chain_to_stacks(chain):
    """Rebuild value stacks denoting the given chain (newest first).  The
    result is canonical: snapshotting it at each timestamp reproduces the
    chain entry for entry.  Live stacks can carry one extra shade the chain
    cannot record, a fresh cell written twice within a single generation,
    so the faithful comparison is through snapshots, not raw entries."""
    oldest_first = list(reversed(chain))
    stacks = {}
    for i, store in enumerate(oldest_first):
        for a, vs in store.items():
            stack = stacks.get(a)
            if stack is None:
                stacks[a] = [(i - 1, vs)]
            elif stack[0][1] != vs:
                stack.insert(0, (i, vs))
    return stacks


# ----------------------------------------------------------- preallocation

class AddressLayout:
    """Dense ordinals for every address a uniform k-CFA policy can mint on
    a given program: one bind slot per (variable, time), one continuation
    slot per application or conditional (label, time), operator and operand
    value slots per application (label, time).  Times range over call
    strings of length at most k, a superset of the reachable ones."""

    __slots__ = ("size", "k", "_ordinal", "_addr", "_bind", "_kont", "_fn", "_arg")

    def __init__(self, e: Expr, k: int):
        self.k = k
        variables = set()
        app_labels = []
        if_labels = []
        work = [e]
        while work:
            node = work.pop()
            if isinstance(node, Lam):
                variables.add(node.var)
                work.append(node.body)
            elif isinstance(node, App):
                app_labels.append(node.label)
                work.extend((node.fn, node.arg))
            elif isinstance(node, If):
                if_labels.append(node.label)
                work.extend((node.guard, node.then, node.els))
        app_labels.sort()
        if_labels.sort()
        times = [()]
        for n in range(1, k + 1):
            times.extend(product(app_labels, repeat=n))
        addrs = []
        for t in times:
            addrs.extend(BindAddr(v, t) for v in sorted(variables))
        for t in times:
            addrs.extend(KontAddr(l, t) for l in sorted(app_labels + if_labels))
        for t in times:
            for l in app_labels:
                addrs.append(ValAddr(l, t, FN_SLOT))
                addrs.append(ValAddr(l, t, ARG_SLOT))
        self.size = len(addrs)
        self._addr = addrs
        self._ordinal = {a: i for i, a in enumerate(addrs)}
        if k == 0:
            self._bind = {v: self._ordinal[BindAddr(v, ())] for v in variables}
            self._kont = {l: self._ordinal[KontAddr(l, ())] for l in app_labels + if_labels}
            self._fn = {l: self._ordinal[ValAddr(l, (), FN_SLOT)] for l in app_labels}
            self._arg = {l: self._ordinal[ValAddr(l, (), ARG_SLOT)] for l in app_labels}
        else:
            self._bind = self._kont = self._fn = self._arg = None

    def ordinal_of(self, addr) -> int:
        return self._ordinal[addr]

    def addr_of(self, ordinal: int):
        return self._addr[ordinal]

    def int_policy(self, base):
        if self.k == 0:
            return _MonovariantIntPolicy(self)
        return _GenericIntPolicy(self, base)


class _MonovariantIntPolicy:
    """k=0 allocation straight out of per-label tables."""

    finite = True
    name = "kcfa-prealloc"
    k = 0

    __slots__ = ("_bind", "_kont", "_fn", "_arg")

    def __init__(self, layout: AddressLayout):
        self._bind = layout._bind
        self._kont = layout._kont
        self._fn = layout._fn
        self._arg = layout._arg

    def tick_ap(self, label, time):
        return ()

    def bind_addr(self, var, label, time, store):
        return self._bind[var]

    def fnval_addr(self, label, time, store):
        return self._fn[label]

    def argval_addr(self, label, time, store):
        return self._arg[label]

    def kont_addr(self, label, time, store, kont):
        return self._kont[label]


class _GenericIntPolicy:
    """Any-k allocation: mint the structured address, then look up its
    ordinal."""

    finite = True
    name = "kcfa-prealloc"

    __slots__ = ("_layout", "_base", "k")

    def __init__(self, layout: AddressLayout, base):
        self._layout = layout
        self._base = base
        self.k = base.k

    def tick_ap(self, label, time):
        return self._base.tick_ap(label, time)

    def bind_addr(self, var, label, time, store):
        return self._layout._ordinal[self._base.bind_addr(var, label, time, None)]

    def fnval_addr(self, label, time, store):
        return self._layout._ordinal[self._base.fnval_addr(label, time, None)]

    def argval_addr(self, label, time, store):
        return self._layout._ordinal[self._base.argval_addr(label, time, None)]

    def kont_addr(self, label, time, store, kont):
        return self._layout._ordinal[self._base.kont_addr(label, time, None, kont)]


def preallocate(e: Expr, policy) -> AddressLayout:
    """Enumerate the policy's address space for e.  Only finite uniform
    policies qualify; the concrete freshness policy has no bound."""
    if not getattr(policy, "finite", False):
        raise UnsupportedPolicyError(
            f"cannot preallocate for {policy!r}: unbounded address space")
    return AddressLayout(e, policy.k)


# ------------------------------------------------------- ordinal decoding

def _decode_value(v, layout):
    if isinstance(v, Closure):
        env = Env({x: layout.addr_of(a) for x, a in v.env.items()})
        return Closure(v.var, v.body, env)
    if isinstance(v, DelayedAddr):
        return DelayedAddr(layout.addr_of(v.addr))
    if isinstance(v, (ArK, FnK, IfK, Halt)):
        return _decode_kont(v, layout)
    return v


def _decode_kont(k, layout):
    if isinstance(k, Halt):
        return k
    if isinstance(k, ArK):
        env = Env({x: layout.addr_of(a) for x, a in k.env.items()})
        return ArK(k.expr, env, layout.addr_of(k.kaddr), k.label, k.time)
    if isinstance(k, FnK):
        return FnK(layout.addr_of(k.fv), layout.addr_of(k.kaddr), k.label, k.time)
    if isinstance(k, IfK):
        env = Env({x: layout.addr_of(a) for x, a in k.env.items()})
        return IfK(k.then, k.els, env, layout.addr_of(k.kaddr), k.time)
    raise AnalysisBugError(f"unknown continuation {k!r}")


def _decode_context(c, layout):
    if isinstance(c, CoC):
        return CoC(_decode_kont(c.kont, layout), _decode_value(c.val, layout))
    if isinstance(c, ApC):
        return ApC(_decode_value(c.fn, layout), layout.addr_of(c.arg),
                   _decode_kont(c.kont, layout), c.label, c.time)
    if isinstance(c, StuckC):
        return c
    raise AnalysisBugError(f"unknown context {c!r}")


# ------------------------------------------------------------ the machine

class ImperativeRun:
    """Fixpoint of the transfer function.  Contexts, seen stamps, and edges
    are decoded to structured addresses; the live value-stack store rides
    along for snapshot comparisons."""

    __slots__ = ("contexts", "seen", "edges", "generations", "status",
                 "t", "store", "vstore", "layout", "initial")

    def __init__(self, contexts, seen, edges, generations, status, t,
                 store, vstore, layout, initial):
        self.contexts = contexts
        self.seen = seen
        self.edges = edges
        self.generations = generations
        self.status = status
        self.t = t
        self.store = store        # decoded snapshot at t
        self.vstore = vstore      # raw value stacks
        self.layout = layout      # None for the hash-store variant
        self.initial = initial

    def snapshot_chain(self):
        """All snapshots newest first; index i is the store at time t-i."""
        if self.layout is None:
            return stacks_to_chain(self.vstore, self.t)
        return stacks_to_chain(
            self.vstore, self.t,
            decode_addr=self.layout.addr_of,
            decode_value=lambda v: _decode_value(v, self.layout),
        )

    def final_values(self) -> frozenset:
        out = set()
        for c in self.contexts:
            if isinstance(c, CoC) and isinstance(c.kont, Halt):
                v = c.val
                if isinstance(v, DelayedAddr):
                    out |= self.store.deref(v.addr)
                else:
                    out.add(v)
        return frozenset(out)


def run_imperative(e: Expr, policy, mode: str = "abstract", cap_check=None,
                   prealloc: bool = False, trace=None) -> ImperativeRun:
    """Iterate the transfer function to an empty frontier.

    ``trace``, if a list, receives per generation a tuple (generation, t,
    frontier, snapshot-at-t before the sweep, snapshot-at-t after,
    snapshot-at-t+1 after, changed): in-place writes during a generation
    must never alter the snapshot the generation reads, and the changed
    flag must coincide with growth from the t snapshot to the t+1 one."""
    layout = None
    pol = policy
    if prealloc:
        layout = preallocate(e, policy)
        pol = layout.int_policy(policy)
        vstore = DenseValueStore(layout.size)
        dec_a = layout.addr_of
        dec_v = lambda v: _decode_value(v, layout)
        dec_c = lambda c: _decode_context(c, layout)
    else:
        vstore = HashValueStore()
        dec_a = dec_v = None
        dec_c = lambda c: c

    first, log0 = inject_compiled(e, pol)
    for a, vs in log0:
        vstore.join_at(a, vs, -1)
    c0 = first[0]
    # one canonical instance per context, so the bookkeeping dicts hit the
    # C-level identity fast path instead of deep structural comparison
    canon = {}
    seen = {}
    frontier = []
    for c in first:
        canon[c] = c
        if c not in seen:
            seen[c] = [0]
            frontier.append(c)
    t = 0
    edges = {}
    generation = 0
    status = "fixpoint"
    while frontier:
        if cap_check is not None:
            stop = cap_check(len(seen), generation)
            if stop is not None:
                status = stop
                break
        snap_before = snapshot(vstore, t, dec_a, dec_v) if trace is not None else None
        view = SnapshotView(vstore, t)
        join_at = vstore.join_at
        canon_get = canon.get
        changed = False
        produced = []
        for c in frontier:
            for c2, log in step_compiled(c, view, pol, mode):
                cc = canon_get(c2)
                if cc is None:
                    canon[c2] = cc = c2
                produced.append(cc)
                key = (c, cc)
                if key not in edges:
                    edges[key] = generation
                for a, vs in log:
                    if join_at(a, vs, t):
                        changed = True
        t2 = t + 1 if changed else t
        next_frontier = []
        local = set()
        for dst in produced:
            if dst in local:
                continue
            stamps = seen.get(dst)
            if not changed and stamps is not None and stamps[-1] == t:
                continue
            local.add(dst)
            if stamps is None:
                seen[dst] = [t2]
            else:
                stamps.append(t2)
            next_frontier.append(dst)
        if trace is not None:
            trace.append((
                generation, t, tuple(frontier),
                snap_before, snapshot(vstore, t, dec_a, dec_v),
                snapshot(vstore, t + 1, dec_a, dec_v), changed,
            ))
        frontier = next_frontier
        t = t2
        generation += 1

    final = snapshot(vstore, t, dec_a, dec_v)
    return ImperativeRun(
        contexts=frozenset(dec_c(c) for c in seen),
        seen={dec_c(c): tuple(reversed(stamps)) for c, stamps in seen.items()},
        edges=frozenset((dec_c(s), dec_c(d), g) for (s, d), g in edges.items()),
        generations=generation,
        status=status,
        t=t,
        store=final,
        vstore=vstore,
        layout=layout,
        initial=dec_c(c0),
    )
