"""Change-log store deltas.

The frontier stage pays for a full store copy on every write and a full
structural store comparison every generation.  Here transitions stop
touching the store: each successor carries a log of (address, value set)
join intents, the system concatenates the logs of a generation and replays
them once, and the replay's change flag replaces the store comparison.

Lookups never consult the log: every rule reads the generation's entry
store only, which is what makes per-successor logs order-independent.

The module also owns the generic logged-system runner; the lazy, compiled,
and imperative stages all iterate their steppers through it (the imperative
stage through its own transfer loop with the same frontier discipline).
"""

from __future__ import annotations

from .domains import (
    ApC,
    ArK,
    Closure,
    CoC,
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
from .syntax import App, If, Lam, Lit, Var
from .widening import inject_context

# A change log is a list of (Addr, frozenset) join intents.  Entry order is
# immaterial: replay's result and change flag are order-independent, which is
# tested, not assumed.


def replay(log, store: Store):
    """Fold a change log into a store.

    Returns (store', changed?).  The change test for every entry runs against
    the PRE-replay store; the disjunction of entry flags coincides exactly
    with store' != store because joins only grow.
    """
    changed = False
    m = None
    for a, vs in log:
        old = store.get(a)
        if old is None or not vs <= old:
            changed = True
        if m is None:
            if old is not None and vs <= old:
                continue
            m = dict(store.items())
        cur = m.get(a)
        m[a] = frozenset(vs) if cur is None else cur | vs
    if not changed:
        return store, False
    return Store(m), True


def appendall(logs):
    """Concatenate the per-successor logs of one generation."""
    out = []
    for log in logs:
        out.extend(log)
    return out


def step_with_deltas(c, store: Store, policy, mode: str):
    """The widened relation with writes logged instead of performed.

    Returns a list of (successor context, change log).  Deliberately a fresh
    transcription of the rules rather than a wrapper over the store-joining
    stepper: the two are checked against each other step for step.
    """
    if isinstance(c, EvC):
        e, env, kont, t = c.expr, c.env, c.kont, c.time
        if isinstance(e, Var):
            a = env.lookup(e.name)
            if a is None:
                return [(StuckC(STUCK_UNBOUND, e.label), [])]
            return [(CoC(kont, v), []) for v in store.deref(a)]
        if isinstance(e, Lit):
            return [(CoC(kont, lit_value(e.value)), [])]
        if isinstance(e, Lam):
            return [(CoC(kont, Closure(e.var, e.body, env)), [])]
        if isinstance(e, App):
            ka = policy.kont_addr(e.label, t, store, kont)
            succ = EvC(e.fn, env, ArK(e.arg, env, ka, e.label, t), t)
            return [(succ, [(ka, frozenset((kont,)))])]
        if isinstance(e, If):
            ka = policy.kont_addr(e.label, t, store, kont)
            succ = EvC(e.guard, env, IfK(e.then, e.els, env, ka, t), t)
            return [(succ, [(ka, frozenset((kont,)))])]
        raise TypeError(f"not an expression: {e!r}")

    if isinstance(c, CoC):
        kont, v = c.kont, c.val
        if isinstance(kont, Halt):
            return []
        if isinstance(kont, ArK):
            af = policy.fnval_addr(kont.label, kont.time, store)
            succ = EvC(kont.expr, kont.env, FnK(af, kont.kaddr, kont.label, kont.time), kont.time)
            return [(succ, [(af, frozenset((v,)))])]
        if isinstance(kont, FnK):
            av = policy.argval_addr(kont.label, kont.time, store)
            log = [(av, frozenset((v,)))]
            return [
                (ApC(f, av, k2, kont.label, kont.time), log)
                for f in store.deref(kont.fv)
                for k2 in store.deref(kont.kaddr)
            ]
        if isinstance(kont, IfK):
            if v == TT:
                branch = kont.then
            elif v == FF:
                branch = kont.els
            else:
                return [(StuckC(STUCK_IF, kont.then.label), [])]
            return [(EvC(branch, kont.env, k2, kont.time), []) for k2 in store.deref(kont.kaddr)]
        raise TypeError(f"not a continuation: {kont!r}")

    if isinstance(c, ApC):
        f, av, kont, lbl, t = c.fn, c.arg, c.kont, c.label, c.time
        if isinstance(f, Closure):
            t2 = policy.tick_ap(lbl, t)
            ax = policy.bind_addr(f.var, lbl, t, store)
            succ = EvC(f.body, f.env.extend(f.var, ax), kont, t2)
            return [(succ, [(ax, store.deref(av))])]
        if isinstance(f, PrimVal):
            out = []
            for v in store.deref(av):
                res = delta(f.name, v, mode)
                if res is None:
                    out.append((StuckC(STUCK_PRIM, lbl), []))
                else:
                    out.extend((CoC(kont, u), []) for u in res)
            return out
        return [(StuckC(STUCK_APPLY, lbl), [])]

    if isinstance(c, StuckC):
        return []
    raise TypeError(f"not a context: {c!r}")


# ------------------------------------------------------ logged-system runner

class LoggedRun:
    """Fixpoint of a logged stepper under frontier iteration."""

    __slots__ = ("contexts", "store", "chain", "seen", "edges", "generations", "status", "initial")

    def __init__(self, contexts, store, chain, seen, edges, generations, status, initial):
        self.contexts = contexts
        self.store = store
        self.chain = chain
        self.seen = seen
        self.edges = edges
        self.generations = generations
        self.status = status
        self.initial = initial

    def final_values(self) -> frozenset:
        """Values reaching halt, with delayed lookups forced against the
        final store."""
        from .lazy import force

        vals = set()
        for c in self.contexts:
            if isinstance(c, CoC) and isinstance(c.kont, Halt):
                vals |= force(self.store, c.val)
        return frozenset(vals)


def inject_plain(e, policy):
    """Injection for steppers whose start state is the root ev context."""
    return [inject_context(e)], []


class StateGraph:
    """Unwidened reachable (context, store) graph of a logged stepper."""

    __slots__ = ("states", "edges", "initial", "status")

    def __init__(self, states, edges, initial, status):
        self.states = states    # frozenset of (Context, Store)
        self.edges = edges      # frozenset of ((Context, Store), (Context, Store))
        self.initial = initial  # tuple of initial states
        self.status = status


def explore_states(e, stepper, policy, mode: str = "abstract", inject=inject_plain,
                   max_states: int = 200_000) -> StateGraph:
    """Breadth-first closure of a logged stepper WITHOUT store widening:
    every state carries its own store, and each transition's log is replayed
    into a per-successor store.  Only feasible on small programs; used for
    the bisimulation checks."""
    first, log0 = inject(e, policy)
    s0, _ = replay(log0, EMPTY_STORE)
    initial = tuple((c, s0) for c in first)
    seen = set(initial)
    work = list(initial)
    edges = set()
    status = "fixpoint"
    while work:
        if len(seen) > max_states:
            status = "state-budget-exceeded"
            break
        st = work.pop()
        c, store = st
        for c2, log in stepper(c, store, policy, mode):
            store2, _ = replay(log, store)
            st2 = (c2, store2)
            edges.add((st, st2))
            if st2 not in seen:
                seen.add(st2)
                work.append(st2)
    return StateGraph(frozenset(seen), frozenset(edges), initial, status)


def run_logged(
    e,
    stepper,
    policy,
    mode: str = "abstract",
    inject=inject_plain,
    cap_check=None,
    order_key=None,
    chain_limit=None,
    trace=None,
) -> LoggedRun:
    """Frontier iteration where transitions emit logs and the store advances
    by one replay per generation."""
    first, log0 = inject(e, policy)
    store, _ = replay(log0, EMPTY_STORE)
    seen = {}
    frontier = []
    for c in first:
        if c not in seen:
            seen[c] = (0,)
            frontier.append(c)
    chain = [store]
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
        order = frontier if order_key is None else sorted(frontier, key=order_key)
        logs = []
        produced = []
        for c in order:
            for c2, log in stepper(c, store, policy, mode):
                produced.append((c, c2))
                if log:
                    logs.append(log)
        store2, changed = replay(appendall(logs), store)
        if changed:
            t += 1
            store = store2
            chain.insert(0, store2)
            if chain_limit is not None and len(chain) > chain_limit:
                del chain[chain_limit:]
        frontier = []
        local = set()
        for src, dst in produced:
            if (src, dst) not in edges:
                edges[(src, dst)] = generation
            if dst in local:
                continue
            stamps = seen.get(dst)
            if stamps is not None and t in stamps:
                continue
            local.add(dst)
            seen[dst] = (t,) + (stamps or ())
            frontier.append(dst)
        generation += 1
        if trace is not None:
            trace.append((dict(seen), tuple(frontier), tuple(chain), t))
    return LoggedRun(
        contexts=frozenset(seen),
        store=store,
        chain=tuple(chain),
        seen=dict(seen),
        edges=frozenset((s, d, g) for (s, d), g in edges.items()),
        generations=generation,
        status=status,
        initial=first[0],
    )
