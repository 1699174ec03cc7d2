"""Timestamped frontier iteration over the widened relation.

The baseline re-steps every discovered context every iteration.  This stage
steps only a frontier: contexts are paired with the timestamp of the store
they were scheduled under, and a context is re-enqueued exactly when it is
reached again at a store version it has not seen.  Because the global store
grows monotonically, comparing store versions reduces to comparing
timestamps, and the store chain (newest first) lets any timestamp be
dereferenced back to the store it names.

The untimestamped reference system at the bottom of the module is the same
algorithm with the timestamps replaced by the stores they denote; the two are
related by an order isomorphism (timestamp i <-> i-th store of the chain),
implemented here in both directions and compared exactly in tests.
"""

from __future__ import annotations

from .domains import EMPTY_STORE, Store
from .syntax import Expr
from .widening import inject_context, sweep_contexts


class System:
    """Frontier-iteration state: seen map, frontier, store chain, clock.

    seen maps a context to the tuple of timestamps (newest first) at which it
    entered a frontier; chain holds every distinct global store, newest
    first.  Invariants: store is chain[0]; t == len(chain) - 1 when the chain
    is complete (untruncated); every recorded stamp is <= t.
    """

    __slots__ = ("seen", "frontier", "chain", "t", "chain_limit")

    def __init__(self, seen, frontier, chain, t, chain_limit=None):
        self.seen = seen          # dict Context -> tuple of stamps, newest first
        self.frontier = frontier  # list of Context, discovery order
        self.chain = chain        # list of Store, newest first
        self.t = t
        self.chain_limit = chain_limit

    @property
    def store(self) -> Store:
        return self.chain[0]

    def contexts(self) -> frozenset:
        return frozenset(self.seen)

    def at_fixpoint(self) -> bool:
        return not self.frontier

    def __repr__(self):
        return (
            f"System(|seen|={len(self.seen)}, |F|={len(self.frontier)}, "
            f"|chain|={len(self.chain)}, t={self.t})"
        )


def inject_frontier(e: Expr, chain_limit=None) -> System:
    c0 = inject_context(e)
    return System(
        seen={c0: (0,)},
        frontier=[c0],
        chain=[EMPTY_STORE],
        t=0,
        chain_limit=chain_limit,
    )


def frontier_step(sys: System, policy, mode: str = "abstract", order_key=None, edge_sink=None):
    """One generation: step the frontier, join the store, rebuild the
    frontier from successors not yet seen at the (possibly advanced) clock.

    order_key optionally reorders frontier iteration (results must not depend
    on it); edge_sink, if given, receives every (src, dst) successor pair.
    """
    if not sys.frontier:
        return sys
    order = sys.frontier if order_key is None else sorted(sys.frontier, key=order_key)
    edges, store2 = sweep_contexts(order, sys.store, policy, mode)
    if edge_sink is not None:
        edge_sink.extend(edges)
    changed = store2 is not sys.store and store2 != sys.store
    if changed:
        t2 = sys.t + 1
        chain2 = [store2] + sys.chain
        if sys.chain_limit is not None and len(chain2) > sys.chain_limit:
            chain2 = chain2[: sys.chain_limit]
    else:
        t2 = sys.t
        chain2 = sys.chain
    seen2 = dict(sys.seen)
    frontier2 = []
    local = set()
    for _, dst in edges:
        if dst in local:
            continue
        stamps = seen2.get(dst)
        if stamps is not None and t2 in stamps:
            continue
        local.add(dst)
        seen2[dst] = (t2,) + (stamps or ())
        frontier2.append(dst)
    return System(seen2, frontier2, chain2, t2, sys.chain_limit)


class FrontierRun:
    """Fixpoint of the frontier system plus discovery bookkeeping."""

    __slots__ = ("contexts", "store", "chain", "seen", "edges", "generations", "status", "initial")

    def __init__(self, contexts, store, chain, seen, edges, generations, status, initial):
        self.contexts = contexts
        self.store = store
        self.chain = chain          # tuple of Stores, newest first
        self.seen = seen            # dict Context -> stamp tuple
        self.edges = edges          # frozenset of (src, dst, generation)
        self.generations = generations
        self.status = status
        self.initial = initial

    def final_values(self) -> frozenset:
        from .domains import CoC, Halt

        return frozenset(
            c.val for c in self.contexts if isinstance(c, CoC) and isinstance(c.kont, Halt)
        )


def run_frontier(
    e: Expr,
    policy,
    mode: str = "abstract",
    cap_check=None,
    order_key=None,
    chain_limit=None,
    trace=None,
) -> FrontierRun:
    """Iterate frontier_step to an empty frontier.

    ``trace``, if a list, receives a snapshot tuple (seen, frontier, chain,
    t) after every generation (for the order-isomorphism comparison).
    """
    sys = inject_frontier(e, chain_limit)
    edges = {}
    generation = 0
    status = "fixpoint"
    while sys.frontier:
        if cap_check is not None:
            stop = cap_check(len(sys.seen), generation)
            if stop is not None:
                status = stop
                break
        sink = []
        sys = frontier_step(sys, policy, mode, order_key=order_key, edge_sink=sink)
        for src, dst in sink:
            if (src, dst) not in edges:
                edges[(src, dst)] = generation
        generation += 1
        if trace is not None:
            trace.append((dict(sys.seen), tuple(sys.frontier), tuple(sys.chain), sys.t))
    return FrontierRun(
        contexts=sys.contexts(),
        store=sys.store,
        chain=tuple(sys.chain),
        seen=dict(sys.seen),
        edges=frozenset((s, d, g) for (s, d), g in edges.items()),
        generations=generation,
        status=status,
        initial=inject_context(e),
    )


# ------------------------------------------------- untimestamped reference

class RefSystem:
    """The same frontier algorithm with stores where the timestamps were.

    seen maps a context to the tuple of global stores (newest first) under
    which it entered a frontier.  This is the ordering-faithful widened
    semantics the timestamped system abstracts; it is kept naive on purpose.
    """

    __slots__ = ("seen", "frontier", "chain")

    def __init__(self, seen, frontier, chain):
        self.seen = seen          # dict Context -> tuple of Stores, newest first
        self.frontier = frontier  # list of Context
        self.chain = chain        # list of Store, newest first

    @property
    def store(self) -> Store:
        return self.chain[0]


def inject_reference(e: Expr) -> RefSystem:
    c0 = inject_context(e)
    return RefSystem(seen={c0: (EMPTY_STORE,)}, frontier=[c0], chain=[EMPTY_STORE])


def reference_step(sys: RefSystem, policy, mode: str = "abstract") -> RefSystem:
    if not sys.frontier:
        return sys
    edges, store2 = sweep_contexts(sys.frontier, sys.store, policy, mode)
    changed = store2 is not sys.store and store2 != sys.store
    chain2 = [store2] + sys.chain if changed else sys.chain
    head = chain2[0]
    seen2 = dict(sys.seen)
    frontier2 = []
    local = set()
    for _, dst in edges:
        if dst in local:
            continue
        stores = seen2.get(dst)
        if stores is not None and head in stores:
            continue
        local.add(dst)
        seen2[dst] = (head,) + (stores or ())
        frontier2.append(dst)
    return RefSystem(seen2, frontier2, chain2)


def run_reference(e: Expr, policy, mode: str = "abstract", trace=None, max_generations=None):
    sys = inject_reference(e)
    generation = 0
    while sys.frontier:
        if max_generations is not None and generation >= max_generations:
            break
        sys = reference_step(sys, policy, mode)
        generation += 1
        if trace is not None:
            trace.append((dict(sys.seen), tuple(sys.frontier), tuple(sys.chain)))
    return sys


# --------------------------------------------------- order isomorphism maps

def stamps_to_stores(seen: dict, chain) -> dict:
    """Translate a timestamped seen map through the chain: stamp i names the
    i-th store counted from the oldest."""
    n = len(chain)
    return {c: tuple(chain[n - 1 - s] for s in stamps) for c, stamps in seen.items()}


def stores_to_stamps(seen: dict, chain) -> dict:
    """Inverse translation; every store in the map must occur in the chain."""
    n = len(chain)
    index = {}
    for i, s in enumerate(chain):
        index[s] = n - 1 - i
    return {c: tuple(index[s] for s in stores) for c, stores in seen.items()}
