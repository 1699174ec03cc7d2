"""Semantic domains shared by every engine stage.

The machine is a CESK-style state space: contexts (a machine state minus its
store), value sets, heap-allocated continuations, and stores mapping
addresses to sets of storeables (values and continuations).  Three address
shapes exist:

* ``BindAddr(x, ctx)``   -- variable bindings, context = truncated call string
* ``KontAddr(l, t)``     -- continuations, keyed by the pushing site's label
                            and the unabridged current time
* ``ValAddr(l, t, slot)``-- operator/operand value cells of an application
                            site (engines past the naive one store-allocate
                            every intermediate value)

Allocation is pluggable: the concrete policy hands out fresh counter
addresses (deterministic machine), the k-CFA policy truncates call strings
to length k.  Times are tuples of application labels, newest first.

All hot classes cache their hash at construction; everything is immutable by
convention (__slots__, no mutators).
"""

from __future__ import annotations

from .syntax import App, Expr, If, Lam

Time = tuple  # tuple of application labels, newest first


def truncate(t: Time, k: int) -> Time:
    """First k entries of the call string; identity when already short."""
    if len(t) <= k:
        return t
    return t[:k]


EPOCH: Time = ()


class AnalysisBugError(RuntimeError):
    """An internal invariant broke (absent address, dangling delayed value)."""


# ----------------------------------------------------------------- addresses

FN_SLOT = 0
ARG_SLOT = 1


class BindAddr:
    __slots__ = ("var", "ctx", "_hash")

    def __init__(self, var: str, ctx: Time):
        self.var = var
        self.ctx = ctx
        self._hash = hash((0x11, var, ctx))

    def __eq__(self, other):
        return self is other or (
            type(other) is BindAddr and self.var == other.var and self.ctx == other.ctx
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"{self.var}@{fmt_time(self.ctx)}"


class KontAddr:
    __slots__ = ("label", "time", "_hash")

    def __init__(self, label: int, time: Time):
        self.label = label
        self.time = time
        self._hash = hash((0x12, label, time))

    def __eq__(self, other):
        return self is other or (
            type(other) is KontAddr and self.label == other.label and self.time == other.time
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"k{self.label}@{fmt_time(self.time)}"


class ValAddr:
    """Value cell of an application site; slot 0 holds the operator value,
    slot 1 the operand value."""

    __slots__ = ("label", "time", "slot", "_hash")

    def __init__(self, label: int, time: Time, slot: int):
        self.label = label
        self.time = time
        self.slot = slot
        self._hash = hash((0x13, label, time, slot))

    def __eq__(self, other):
        return self is other or (
            type(other) is ValAddr
            and self.label == other.label
            and self.slot == other.slot
            and self.time == other.time
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        tag = "f" if self.slot == FN_SLOT else "a"
        return f"{tag}{self.label}@{fmt_time(self.time)}"


class ConcreteAddr:
    __slots__ = ("n", "_hash")

    def __init__(self, n: int):
        self.n = n
        self._hash = hash((0x14, n))

    def __eq__(self, other):
        return self is other or (type(other) is ConcreteAddr and self.n == other.n)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"@{self.n}"


def fmt_time(t: Time) -> str:
    if not t:
        return "."
    return "-".join(str(x) for x in t)


# ------------------------------------------------------------------- values

class IntVal:
    __slots__ = ("z", "_hash")

    def __init__(self, z: int):
        self.z = z
        self._hash = hash((0x21, z))

    def __eq__(self, other):
        return self is other or (type(other) is IntVal and self.z == other.z)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return str(self.z)


class BoolVal:
    __slots__ = ("b", "_hash")

    def __init__(self, b: bool):
        self.b = b
        self._hash = hash((0x22, b))

    def __eq__(self, other):
        return self is other or (type(other) is BoolVal and self.b == other.b)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "#t" if self.b else "#f"


class PrimVal:
    __slots__ = ("name", "_hash")

    def __init__(self, name: str):
        self.name = name
        self._hash = hash((0x23, name))

    def __eq__(self, other):
        return self is other or (type(other) is PrimVal and self.name == other.name)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return self.name


class AbstractInt:
    """The single abstract integer; every arithmetic result collapses to it."""

    __slots__ = ()

    def __eq__(self, other):
        return type(other) is AbstractInt

    def __hash__(self):
        return 0x2F

    def __repr__(self):
        return "Z"


TT = BoolVal(True)
FF = BoolVal(False)
ZINT = AbstractInt()


class Closure:
    """Function value: binder, body (plain or compiled expression), captured
    environment."""

    __slots__ = ("var", "body", "env", "_hash")

    def __init__(self, var: str, body, env: Env):
        self.var = var
        self.body = body
        self.env = env
        self._hash = hash((0x24, var, body, env))

    def __eq__(self, other):
        return self is other or (
            type(other) is Closure
            and self._hash == other._hash
            and self.var == other.var
            and self.body == other.body
            and self.env == other.env
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"clos({self.var},{body_label_of(self.body)},{self.env!r})"


class DelayedAddr:
    """A variable reference whose store lookup has not happened yet; the lazy
    engines pass these through continuations and force them at strict
    positions.  Never stored."""

    __slots__ = ("addr", "_hash")

    def __init__(self, addr):
        self.addr = addr
        self._hash = hash((0x25, addr))

    def __eq__(self, other):
        return self is other or (type(other) is DelayedAddr and self.addr == other.addr)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"~{self.addr!r}"


def lit_value(v):
    """Value denoted by a literal payload (int, bool, or primitive name)."""
    if v is True:
        return TT
    if v is False:
        return FF
    if isinstance(v, int):
        return IntVal(v)
    return PrimVal(v)


def body_label_of(body) -> int:
    """Label of a closure body, plain or compiled."""
    return body.label


# -------------------------------------------------------------- environment

class Env:
    """Immutable variable -> address map with a cached hash."""

    __slots__ = ("_m", "_hash")

    def __init__(self, m: dict | None = None):
        self._m = m or {}
        self._hash = hash(frozenset(self._m.items()))

    def lookup(self, var: str):
        return self._m.get(var)

    def extend(self, var: str, addr) -> Env:
        m = dict(self._m)
        m[var] = addr
        return Env(m)

    def domain(self) -> frozenset[str]:
        return frozenset(self._m)

    def items(self):
        return self._m.items()

    def __len__(self):
        return len(self._m)

    def __eq__(self, other):
        return self is other or (
            type(other) is Env and self._hash == other._hash and self._m == other._m
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        inner = ",".join(f"{k}:{v!r}" for k, v in sorted(self._m.items()))
        return "{" + inner + "}"


EMPTY_ENV = Env()


# -------------------------------------------------------------------- store

class Store:
    """Immutable address -> frozenset-of-storeables map.

    Lookup of an absent address raises: a well-formed machine only ever
    dereferences addresses it has written.  Joins are the only growth
    operation; ``join`` returns ``self`` unchanged when the incoming set adds
    nothing, so object identity doubles as a cheap no-change hint (equality
    stays structural).
    """

    __slots__ = ("_m", "_hash")

    def __init__(self, m: dict | None = None):
        self._m = m if m is not None else {}
        self._hash = None

    def deref(self, addr) -> frozenset:
        try:
            return self._m[addr]
        except KeyError:
            raise AnalysisBugError(f"lookup of absent address {addr!r}") from None

    def get(self, addr, default=None):
        return self._m.get(addr, default)

    def join(self, addr, vals) -> Store:
        vals = frozenset(vals)
        old = self._m.get(addr)
        if old is None:
            m = dict(self._m)
            m[addr] = vals
            return Store(m)
        new = old | vals
        if new == old:
            return self
        m = dict(self._m)
        m[addr] = new
        return Store(m)

    def join_store(self, other: Store) -> Store:
        out = self
        for addr, vals in other._m.items():
            out = out.join(addr, vals)
        return out

    def items(self):
        return self._m.items()

    def domain(self):
        return self._m.keys()

    def __contains__(self, addr):
        return addr in self._m

    def __len__(self):
        return len(self._m)

    def __eq__(self, other):
        if self is other:
            return True
        return type(other) is Store and self._m == other._m

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset((a, vs) for a, vs in self._m.items()))
        return self._hash

    def __repr__(self):
        entries = sorted(
            (repr(a), "{" + ",".join(sorted(map(repr, vs))) + "}") for a, vs in self._m.items()
        )
        return "[" + ";".join(f"{a}->{vs}" for a, vs in entries) + "]"


EMPTY_STORE = Store()


def store_join(a: Store, b: Store) -> Store:
    """Pointwise join of two stores."""
    return a.join_store(b)


class MutStore(Store):
    """Store whose join updates in place.

    Only the concrete evaluator uses this: a deterministic run threads a
    single store down a single path, so nobody can observe the sharing.  The
    transition relation stepped is unchanged; join still returns the store.
    """

    __slots__ = ()

    def __init__(self):
        super().__init__({})

    def join(self, addr, vals):
        vals = frozenset(vals)
        old = self._m.get(addr)
        self._m[addr] = vals if old is None else old | vals
        self._hash = None
        return self


# ------------------------------------------------------------ continuations

class Halt:
    __slots__ = ()

    def __eq__(self, other):
        return type(other) is Halt

    def __hash__(self):
        return 0x31

    def __repr__(self):
        return "halt"


HALT = Halt()


class ArK:
    """Evaluate-the-operand frame: the operand expression, its environment,
    the tail continuation's address, and the application site's label/time."""

    __slots__ = ("expr", "env", "kaddr", "label", "time", "_hash")

    def __init__(self, expr, env: Env, kaddr, label: int, time: Time):
        self.expr = expr
        self.env = env
        self.kaddr = kaddr
        self.label = label
        self.time = time
        self._hash = hash((0x32, expr, env, kaddr, label, time))

    def __eq__(self, other):
        return self is other or (
            type(other) is ArK
            and self._hash == other._hash
            and self.label == other.label
            and self.time == other.time
            and self.kaddr == other.kaddr
            and self.expr == other.expr
            and self.env == other.env
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"ar(e{node_tag(self.expr)},{self.env!r},{self.kaddr!r},l{self.label},{fmt_time(self.time)})"


class FnK:
    """Apply-the-operator frame.  ``fv`` is the operator value itself in the
    naive engine and the operator value cell's address in every later one."""

    __slots__ = ("fv", "kaddr", "label", "time", "_hash")

    def __init__(self, fv, kaddr, label: int, time: Time):
        self.fv = fv
        self.kaddr = kaddr
        self.label = label
        self.time = time
        self._hash = hash((0x33, fv, kaddr, label, time))

    def __eq__(self, other):
        return self is other or (
            type(other) is FnK
            and self._hash == other._hash
            and self.label == other.label
            and self.time == other.time
            and self.kaddr == other.kaddr
            and self.fv == other.fv
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"fn({self.fv!r},{self.kaddr!r},l{self.label},{fmt_time(self.time)})"


class IfK:
    __slots__ = ("then", "els", "env", "kaddr", "time", "_hash")

    def __init__(self, then, els, env: Env, kaddr, time: Time):
        self.then = then
        self.els = els
        self.env = env
        self.kaddr = kaddr
        self.time = time
        self._hash = hash((0x34, then, els, env, kaddr, time))

    def __eq__(self, other):
        return self is other or (
            type(other) is IfK
            and self._hash == other._hash
            and self.time == other.time
            and self.kaddr == other.kaddr
            and self.then == other.then
            and self.els == other.els
            and self.env == other.env
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return (
            f"if(e{node_tag(self.then)},e{node_tag(self.els)},{self.env!r},"
            f"{self.kaddr!r},{fmt_time(self.time)})"
        )


def node_tag(node) -> str:
    """Render an expression position compactly: plain nodes by label, compiled
    nodes by label with a c prefix."""
    lbl = node.label
    return f"c{lbl}" if is_compiled_node(node) else str(lbl)


def is_compiled_node(node) -> bool:
    return type(node).__name__ == "CompiledExpr"


# ----------------------------------------------------------------- contexts

class EvC:
    """About to evaluate an expression."""

    __slots__ = ("expr", "env", "kont", "time", "_hash")

    def __init__(self, expr, env: Env, kont, time: Time):
        self.expr = expr
        self.env = env
        self.kont = kont
        self.time = time
        self._hash = hash((0x41, expr, env, kont, time))

    def __eq__(self, other):
        return self is other or (
            type(other) is EvC
            and self._hash == other._hash
            and self.time == other.time
            and self.expr == other.expr
            and self.kont == other.kont
            and self.env == other.env
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"ev(e{node_tag(self.expr)},{self.env!r},{self.kont!r},{fmt_time(self.time)})"


class CoC:
    """Returning a value to a continuation."""

    __slots__ = ("kont", "val", "_hash")

    def __init__(self, kont, val):
        self.kont = kont
        self.val = val
        self._hash = hash((0x42, kont, val))

    def __eq__(self, other):
        return self is other or (
            type(other) is CoC
            and self._hash == other._hash
            and self.val == other.val
            and self.kont == other.kont
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"co({self.kont!r},{self.val!r})"


class ApC:
    """Applying an operator value.  ``arg`` is the operand value itself in
    the naive engine and the operand cell's address in every later one."""

    __slots__ = ("fn", "arg", "kont", "label", "time", "_hash")

    def __init__(self, fn, arg, kont, label: int, time: Time):
        self.fn = fn
        self.arg = arg
        self.kont = kont
        self.label = label
        self.time = time
        self._hash = hash((0x43, fn, arg, kont, label, time))

    def __eq__(self, other):
        return self is other or (
            type(other) is ApC
            and self._hash == other._hash
            and self.label == other.label
            and self.time == other.time
            and self.fn == other.fn
            and self.arg == other.arg
            and self.kont == other.kont
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"ap({self.fn!r},{self.arg!r},{self.kont!r},l{self.label},{fmt_time(self.time)})"


class StuckC:
    """Terminal error node: a type error or unbound lookup was detected.
    Coarse payload (reason + one label) so every engine builds the same node
    for the same fault."""

    __slots__ = ("reason", "label", "_hash")

    def __init__(self, reason: str, label):
        self.reason = reason
        self.label = label
        self._hash = hash((0x44, reason, label))

    def __eq__(self, other):
        return self is other or (
            type(other) is StuckC and self.reason == other.reason and self.label == other.label
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"stuck({self.reason},l{self.label})"


Context = EvC | CoC | ApC | StuckC

STUCK_APPLY = "apply-non-function"
STUCK_PRIM = "primitive-type-error"
STUCK_IF = "if-non-boolean"
STUCK_UNBOUND = "unbound-variable"


# ----------------------------------------------------------------- policies

class KCfaPolicy:
    """Uniform k-CFA allocation.

    Times are call strings of application labels truncated to length k.
    Binding addresses pair the variable with the truncated extension of the
    current time by the call site; continuation addresses keep the site label
    with the untruncated current time (already at most k long); value cells
    keep the application label, time, and operator/operand slot.
    """

    finite = True
    name = "kcfa"

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("k must be a natural number")
        self.k = k

    def tick_ap(self, label: int, time: Time) -> Time:
        return truncate((label,) + time, self.k)

    def bind_addr(self, var: str, label: int, time: Time, store) -> BindAddr:
        return BindAddr(var, self.tick_ap(label, time))

    def fnval_addr(self, label: int, time: Time, store) -> ValAddr:
        return ValAddr(label, time, FN_SLOT)

    def argval_addr(self, label: int, time: Time, store) -> ValAddr:
        return ValAddr(label, time, ARG_SLOT)

    def kont_addr(self, label: int, time: Time, store, kont) -> KontAddr:
        return KontAddr(label, time)

    def __repr__(self):
        return f"KCfaPolicy(k={self.k})"


class ConcretePolicy:
    """Concrete allocation: every request returns the next unused natural.

    The counter belongs to one engine run; freshness (returned address not in
    the current store) holds because addresses enter stores only through this
    policy.  Time is irrelevant to fresh allocation, so tick is identity.
    """

    finite = False
    name = "concrete"
    k = None

    def __init__(self):
        self._next = 0

    def _fresh(self) -> ConcreteAddr:
        a = ConcreteAddr(self._next)
        self._next += 1
        return a

    def tick_ap(self, label: int, time: Time) -> Time:
        return time

    def bind_addr(self, var: str, label: int, time: Time, store) -> ConcreteAddr:
        return self._fresh()

    def fnval_addr(self, label: int, time: Time, store) -> ConcreteAddr:
        return self._fresh()

    def argval_addr(self, label: int, time: Time, store) -> ConcreteAddr:
        return self._fresh()

    def kont_addr(self, label: int, time: Time, store, kont) -> ConcreteAddr:
        return self._fresh()

    def __repr__(self):
        return "ConcretePolicy()"


def kcfa_policy(k: int) -> KCfaPolicy:
    return KCfaPolicy(k)


def concrete_policy() -> ConcretePolicy:
    return ConcretePolicy()


# ------------------------------------------------------------- primitive ops

def delta(op: str, v, mode: str):
    """Value sets produced by a primitive on one argument value.

    Returns a frozenset of result values, or None to signal a type error
    (the caller records a stuck node).  Abstract arithmetic collapses every
    integer to the abstract integer; zero? stays exact on concrete integers
    and splits on the abstract one.
    """
    if op == "zero?":
        if type(v) is IntVal:
            return _SET_TT if v.z == 0 else _SET_FF
        if type(v) is AbstractInt:
            return _SET_TT_FF
        return None
    if op == "add1":
        if type(v) is IntVal:
            return _SET_Z if mode == "abstract" else frozenset((IntVal(v.z + 1),))
        if type(v) is AbstractInt:
            return _SET_Z
        return None
    if op == "sub1":
        if type(v) is IntVal:
            return _SET_Z if mode == "abstract" else frozenset((IntVal(v.z - 1),))
        if type(v) is AbstractInt:
            return _SET_Z
        return None
    raise ValueError(f"unknown primitive {op!r}")


_SET_TT = frozenset((TT,))
_SET_FF = frozenset((FF,))
_SET_TT_FF = frozenset((TT, FF))
_SET_Z = frozenset((ZINT,))


# ----------------------------------------------------- cross-stage utilities

def skeleton(obj) -> str:
    """Canonical label-skeleton rendering: compiled and plain expressions in
    the same position render identically, so contexts from different engine
    stages can be compared as graph nodes."""
    if isinstance(obj, EvC):
        return f"ev({skeleton(obj.expr)},{skeleton(obj.env)},{skeleton(obj.kont)},{fmt_time(obj.time)})"
    if isinstance(obj, CoC):
        return f"co({skeleton(obj.kont)},{skeleton(obj.val)})"
    if isinstance(obj, ApC):
        return f"ap({skeleton(obj.fn)},{skeleton(obj.arg)},{skeleton(obj.kont)},l{obj.label},{fmt_time(obj.time)})"
    if isinstance(obj, StuckC):
        return repr(obj)
    if isinstance(obj, ArK):
        return f"ar({skeleton(obj.expr)},{skeleton(obj.env)},{skeleton(obj.kaddr)},l{obj.label},{fmt_time(obj.time)})"
    if isinstance(obj, FnK):
        return f"fn({skeleton(obj.fv)},{skeleton(obj.kaddr)},l{obj.label},{fmt_time(obj.time)})"
    if isinstance(obj, IfK):
        return (
            f"if({skeleton(obj.then)},{skeleton(obj.els)},{skeleton(obj.env)},"
            f"{skeleton(obj.kaddr)},{fmt_time(obj.time)})"
        )
    if isinstance(obj, Closure):
        return f"clos({obj.var},{skeleton(obj.body)},{skeleton(obj.env)})"
    if isinstance(obj, DelayedAddr):
        return f"~{skeleton(obj.addr)}"
    if isinstance(obj, Env):
        inner = ",".join(f"{k}:{skeleton(v)}" for k, v in sorted(obj.items()))
        return "{" + inner + "}"
    if is_compiled_node(obj) or type(obj).__name__ in ("Var", "Lit", "Lam", "App", "If"):
        return f"e{obj.label}"
    return repr(obj)
