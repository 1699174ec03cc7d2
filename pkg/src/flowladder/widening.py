"""Globally store-widened baseline over the value-store-allocating relation.

Two changes relative to the unwidened machine land together here and stay for
every later stage:

* one global store shared by every context, grown by joins only;
* every intermediate value is store-allocated: the fn frame carries the
  address of the operator's value cell and ap contexts carry the operand
  cell's address, so frames and contexts contain no raw value sets.

The transfer is deliberately literal: every iteration re-steps EVERY context
discovered so far against the current store.  That re-stepping is the cost
the frontier stage removes, so it is kept observable here, not optimized.
"""

from __future__ import annotations

from .domains import (
    ApC,
    ArK,
    Closure,
    CoC,
    EMPTY_ENV,
    EMPTY_STORE,
    EvC,
    FnK,
    Halt,
    IfK,
    PrimVal,
    Store,
    StuckC,
    STUCK_APPLY,
    STUCK_IF,
    STUCK_PRIM,
    STUCK_UNBOUND,
    TT,
    FF,
    delta,
    lit_value,
)
from .syntax import App, Expr, If, Lam, Lit, Var


def inject_context(e: Expr):
    from .domains import HALT

    return EvC(e, EMPTY_ENV, HALT, ())


def step_context(c, store: Store, policy, mode: str = "abstract"):
    """Successors of one context against a shared store.

    Returns (contexts, store'); the store only grows.  All dereferences hit
    the incoming store, never the grown one (the logged stepper of the delta
    stage must agree with this one read for read).
    """
    if isinstance(c, EvC):
        e, env, kont, t = c.expr, c.env, c.kont, c.time
        if isinstance(e, Var):
            a = env.lookup(e.name)
            if a is None:
                return [StuckC(STUCK_UNBOUND, e.label)], store
            return [CoC(kont, v) for v in store.deref(a)], store
        if isinstance(e, Lit):
            return [CoC(kont, lit_value(e.value))], store
        if isinstance(e, Lam):
            return [CoC(kont, Closure(e.var, e.body, env))], store
        if isinstance(e, App):
            ka = policy.kont_addr(e.label, t, store, kont)
            store2 = store.join(ka, (kont,))
            return [EvC(e.fn, env, ArK(e.arg, env, ka, e.label, t), t)], store2
        if isinstance(e, If):
            ka = policy.kont_addr(e.label, t, store, kont)
            store2 = store.join(ka, (kont,))
            return [EvC(e.guard, env, IfK(e.then, e.els, env, ka, t), t)], store2
        raise TypeError(f"not an expression: {e!r}")

    if isinstance(c, CoC):
        kont, v = c.kont, c.val
        if isinstance(kont, Halt):
            return [], store
        if isinstance(kont, ArK):
            af = policy.fnval_addr(kont.label, kont.time, store)
            store2 = store.join(af, (v,))
            frame = FnK(af, kont.kaddr, kont.label, kont.time)
            return [EvC(kont.expr, kont.env, frame, kont.time)], store2
        if isinstance(kont, FnK):
            av = policy.argval_addr(kont.label, kont.time, store)
            store2 = store.join(av, (v,))
            out = [
                ApC(f, av, k2, kont.label, kont.time)
                for f in store.deref(kont.fv)
                for k2 in store.deref(kont.kaddr)
            ]
            return out, store2
        if isinstance(kont, IfK):
            if v == TT:
                branch = kont.then
            elif v == FF:
                branch = kont.els
            else:
                return [StuckC(STUCK_IF, kont.then.label)], store
            return [EvC(branch, kont.env, k2, kont.time) for k2 in store.deref(kont.kaddr)], store
        raise TypeError(f"not a continuation: {kont!r}")

    if isinstance(c, ApC):
        f, av, kont, lbl, t = c.fn, c.arg, c.kont, c.label, c.time
        if isinstance(f, Closure):
            t2 = policy.tick_ap(lbl, t)
            ax = policy.bind_addr(f.var, lbl, t, store)
            store2 = store.join(ax, store.deref(av))
            return [EvC(f.body, f.env.extend(f.var, ax), kont, t2)], store2
        if isinstance(f, PrimVal):
            out = []
            for v in store.deref(av):
                res = delta(f.name, v, mode)
                if res is None:
                    out.append(StuckC(STUCK_PRIM, lbl))
                else:
                    out.extend(CoC(kont, u) for u in res)
            return out, store
        return [StuckC(STUCK_APPLY, lbl)], store

    if isinstance(c, StuckC):
        return [], store
    raise TypeError(f"not a context: {c!r}")


class WideState:
    """One global store paired with every context discovered so far."""

    __slots__ = ("contexts", "store")

    def __init__(self, contexts: frozenset, store: Store):
        self.contexts = contexts
        self.store = store

    def __eq__(self, other):
        return (
            type(other) is WideState
            and self.contexts == other.contexts
            and self.store == other.store
        )

    def __hash__(self):
        return hash((self.contexts, self.store))

    def __repr__(self):
        return f"WideState(|C|={len(self.contexts)}, |dom|={len(self.store)})"


def inject_wide(e: Expr) -> WideState:
    return WideState(frozenset((inject_context(e),)), EMPTY_STORE)


def sweep_contexts(order, store, policy, mode):
    """Step every context in order against the store.  Returns the successor
    edge list and the joined store."""
    edges = []
    acc = store
    for c in order:
        succs, s2 = step_context(c, store, policy, mode)
        if s2 is not store:
            acc = acc.join_store(s2)
        for c2 in succs:
            edges.append((c, c2))
    return edges, acc


def widen_step(ws: WideState, policy, mode: str = "abstract") -> WideState:
    """One literal widening iteration: C' = C plus every one-step successor,
    sigma' = join of every produced store."""
    order = sorted(ws.contexts, key=repr)
    edges, store2 = sweep_contexts(order, ws.store, policy, mode)
    contexts2 = ws.contexts.union(c2 for _, c2 in edges)
    if contexts2 == ws.contexts and store2 == ws.store:
        return ws
    return WideState(contexts2, store2)


class BaselineRun:
    """Fixpoint of the widened relation plus the discovery bookkeeping."""

    __slots__ = ("contexts", "store", "edges", "generations", "status", "initial")

    def __init__(self, contexts, store, edges, generations, status, initial):
        self.contexts = contexts      # frozenset of Context
        self.store = store            # final global Store
        self.edges = edges            # frozenset of (src, dst, generation)
        self.generations = generations
        self.status = status          # "fixpoint" | cap status string
        self.initial = initial

    def final_values(self) -> frozenset:
        return frozenset(
            c.val for c in self.contexts if isinstance(c, CoC) and isinstance(c.kont, Halt)
        )


def analyze_baseline(e: Expr, policy, mode: str = "abstract", cap_check=None) -> BaselineRun:
    """Least fixpoint of widen_step from the injected context.

    Edges are labeled with the iteration at which they were first produced.
    ``cap_check(n_contexts, generation)`` may return a status string to stop
    early.
    """
    c0 = inject_context(e)
    contexts = {c0}
    order = [c0]  # insertion order: deterministic iteration
    store = EMPTY_STORE
    edges = {}
    generation = 0
    status = "fixpoint"
    while True:
        if cap_check is not None:
            stop = cap_check(len(contexts), generation)
            if stop is not None:
                status = stop
                break
        step_edges, store2 = sweep_contexts(order, store, policy, mode)
        grew = False
        for src, dst in step_edges:
            if (src, dst) not in edges:
                edges[(src, dst)] = generation
            if dst not in contexts:
                contexts.add(dst)
                order.append(dst)
                grew = True
        if not grew and store2 == store:
            break
        store = store2
        generation += 1
    return BaselineRun(
        contexts=frozenset(contexts),
        store=store,
        edges=frozenset((s, d, g) for (s, d), g in edges.items()),
        generations=generation,
        status=status,
        initial=c0,
    )
