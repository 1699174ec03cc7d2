"""Unified driver: one entry point over every stage, graph and metrics
export, cross-stage comparison.

A stage is selected by name, the ladder order being naive, widened,
frontier, deltas, lazy, compiled, imperative, imperative-prealloc.  Every
run yields an AnalysisResult carrying the reachable contexts, the
generation-labeled edge set, whatever store artifact the stage produces,
and a metrics record.  Graph exports render contexts through their label
skeleton so nodes from different stages coincide when the theorems say
the states do.
"""

from __future__ import annotations

import json
import time
import tracemalloc

from .domains import (
    CoC,
    DelayedAddr,
    EvC,
    StuckC,
    concrete_policy,
    kcfa_policy,
    skeleton,
)
from .syntax import Expr
from .naive import explore
from .widening import analyze_baseline
from .frontier import run_frontier
from .deltas import run_logged, step_with_deltas
from .lazy import step_lazy
from .compiled import step_compiled, inject_compiled
from .imperative import run_imperative

STAGES = (
    "naive",
    "widened",
    "frontier",
    "deltas",
    "lazy",
    "compiled",
    "imperative",
    "imperative-prealloc",
)

# stages whose contexts are directly comparable as sets
_STRICT_GROUP = frozenset({"widened", "frontier", "deltas"})
_COMPILED_GROUP = frozenset({"compiled", "imperative", "imperative-prealloc"})

DEFAULT_TIME_CAP = 30 * 60.0
DEFAULT_SPACE_CAP = 1 << 30


class ConfigError(ValueError):
    """Invalid analysis configuration."""


class Config:
    """What to run and under which budgets."""

    __slots__ = ("stage", "k", "mode", "time_cap", "space_cap",
                 "chain_limit", "graph_output")

    def __init__(self, stage: str = "imperative-prealloc", k: int = 0,
                 mode: str = "abstract", time_cap: float = DEFAULT_TIME_CAP,
                 space_cap: int = DEFAULT_SPACE_CAP, chain_limit=None,
                 graph_output=None):
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}")
        if mode not in ("abstract", "concrete"):
            raise ConfigError(f"unknown mode {mode!r}")
        if mode == "concrete" and stage != "naive":
            raise ConfigError("concrete mode is only meaningful for the "
                              "naive stage; every other stage widens")
        if not isinstance(k, int) or k < 0:
            raise ConfigError(f"k must be a natural number, got {k!r}")
        if time_cap <= 0 or space_cap <= 0:
            raise ConfigError("caps must be positive")
        if chain_limit is not None and chain_limit < 1:
            raise ConfigError("chain_limit must be at least 1")
        self.stage = stage
        self.k = k
        self.mode = mode
        self.time_cap = time_cap
        self.space_cap = space_cap
        self.chain_limit = chain_limit
        self.graph_output = graph_output

    def policy(self):
        if self.mode == "concrete":
            return concrete_policy()
        return kcfa_policy(self.k)


class AnalysisResult:
    """A stage's fixpoint plus its measurements.

    ``contexts`` holds plain contexts for the widened stages and
    (context, store) pairs for the naive one; ``chain`` is the store chain
    where the stage keeps one, else None."""

    __slots__ = ("stage", "k", "mode", "program", "contexts", "edges", "store",
                 "chain", "status", "generations", "initial", "wall_time_s",
                 "peak_mem_bytes", "values")

    def __init__(self, stage, k, mode, program, contexts, edges, store, chain,
                 status, generations, initial, wall_time_s, peak_mem_bytes,
                 values):
        self.stage = stage
        self.program = program
        self.k = k
        self.mode = mode
        self.contexts = contexts
        self.edges = edges
        self.store = store
        self.chain = chain
        self.status = status
        self.generations = generations
        self.initial = initial
        self.wall_time_s = wall_time_s
        self.peak_mem_bytes = peak_mem_bytes
        self.values = values

    def final_values(self) -> frozenset:
        return self.values

    def metrics(self) -> dict:
        wall = self.wall_time_s
        transitions = len(self.edges)
        return {
            "stage": self.stage,
            "k": self.k,
            "states": len(self.contexts),
            "transitions": transitions,
            "generations": self.generations,
            "wall_time_s": wall,
            "peak_mem_bytes": self.peak_mem_bytes,
            "states_per_sec": (transitions / wall) if wall > 0 else 0.0,
            "status": self.status,
        }


def _cap_check(t0, time_cap, space_cap, peak_box):
    def check(n_states, generation):
        if time.perf_counter() - t0 > time_cap:
            return "time-cap"
        _, peak = tracemalloc.get_traced_memory()
        if peak > peak_box[0]:
            peak_box[0] = peak
        if peak > space_cap:
            return "space-cap"
        return None
    return check


def run(cfg: Config, e: Expr) -> AnalysisResult:
    """Run one stage to its fixpoint (or to a cap) and package the result."""
    policy = cfg.policy()
    peak_box = [0]
    started_tracing = not tracemalloc.is_tracing()
    if started_tracing:
        tracemalloc.start()
    t0 = time.perf_counter()
    cap = _cap_check(t0, cfg.time_cap, cfg.space_cap, peak_box)
    try:
        stage = cfg.stage
        chain = None
        store = None
        if stage == "naive":
            r = explore(e, policy, cfg.mode, cap_check=cap)
            contexts = r.states
        elif stage == "widened":
            r = analyze_baseline(e, policy, cfg.mode, cap_check=cap)
            contexts, store = r.contexts, r.store
        elif stage == "frontier":
            r = run_frontier(e, policy, cfg.mode, cap_check=cap,
                             chain_limit=cfg.chain_limit)
            contexts, store, chain = r.contexts, r.store, r.chain
        elif stage in ("deltas", "lazy", "compiled"):
            stepper = {"deltas": step_with_deltas, "lazy": step_lazy,
                       "compiled": step_compiled}[stage]
            kw = {"inject": inject_compiled} if stage == "compiled" else {}
            r = run_logged(e, stepper, policy, cfg.mode, cap_check=cap,
                           chain_limit=cfg.chain_limit, **kw)
            contexts, store, chain = r.contexts, r.store, r.chain
        else:
            r = run_imperative(e, policy, cfg.mode, cap_check=cap,
                               prealloc=(stage == "imperative-prealloc"))
            contexts, store = r.contexts, r.store
        wall = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
        if peak > peak_box[0]:
            peak_box[0] = peak
    finally:
        if started_tracing:
            tracemalloc.stop()
    return AnalysisResult(
        stage=cfg.stage, k=cfg.k, mode=cfg.mode, program=e,
        contexts=contexts, edges=r.edges, store=store, chain=chain,
        status=r.status, generations=r.generations, initial=r.initial,
        wall_time_s=wall, peak_mem_bytes=peak_box[0],
        values=r.final_values(),
    )


# ------------------------------------------------------------ graph export

def _graph_rows(result):
    """Deterministically ordered nodes and index-resolved edges."""
    naive = result.stage == "naive"

    def ctx_of(n):
        return n[0] if naive else n

    def sort_key(n):
        c = ctx_of(n)
        return (skeleton(c), repr(n))

    nodes = sorted(result.contexts, key=sort_key)
    index = {n: i for i, n in enumerate(nodes)}
    edges = sorted((index[s], index[d], g) for s, d, g in result.edges)
    return nodes, index, edges, ctx_of


def _node_color(c) -> str:
    if isinstance(c, EvC):
        return "black"
    if isinstance(c, CoC) and isinstance(c.val, DelayedAddr):
        return "gray"
    return "white"


def _node_shape(c) -> str:
    if isinstance(c, EvC):
        return "ev"
    if isinstance(c, CoC):
        return "co"
    if isinstance(c, StuckC):
        return "stuck"
    return "ap"


def export_graph(result: AnalysisResult, fmt: str = "dot", path=None) -> str:
    """Render the reachable-state graph.  Nodes carry the label skeleton;
    states that follow a variable reference are gray, ev states black,
    everything else white."""
    if fmt not in ("dot", "json"):
        raise ValueError(f"unknown graph format {fmt!r}")
    nodes, index, edges, ctx_of = _graph_rows(result)
    if fmt == "dot":
        out = ["digraph analysis {", "  rankdir=LR;",
           "  node [style=filled, fontname=\"monospace\"];"]
        for i, n in enumerate(nodes):
            c = ctx_of(n)
            color = _node_color(c)
            font = "white" if color == "black" else "black"
            label = skeleton(c).replace("\\", "\\\\").replace('"', '\\"')
            out.append(f'  n{i} [label="{label}", fillcolor={color}, '
                       f'fontcolor={font}];')
        for s, d, g in edges:
            out.append(f'  n{s} -> n{d} [label="{g}"];')
        out.append("}")
        text = "\n".join(out) + "\n"
    else:
        payload = {
            "nodes": [
                {"id": i, "label": skeleton(ctx_of(n)),
                 "shape": _node_shape(ctx_of(n)),
                 "color": _node_color(ctx_of(n))}
                for i, n in enumerate(nodes)
            ],
            "edges": [{"src": s, "dst": d, "generation": g}
                      for s, d, g in edges],
            "initial": index[result.initial],
        }
        text = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text


# ------------------------------------------------------- stage comparison

class StageComparison:
    """Per-stage metrics rows plus adjacent-pair verdicts."""

    __slots__ = ("rows", "verdicts", "results")

    def __init__(self, rows, verdicts, results):
        self.rows = rows
        self.verdicts = verdicts
        self.results = results


def _value_shapes(values) -> frozenset:
    return frozenset(skeleton(v) for v in values)


def _verdict(ra: AnalysisResult, rb: AnalysisResult) -> str:
    a, b = ra.stage, rb.stage
    same_group = (
        (a in _STRICT_GROUP and b in _STRICT_GROUP)
        or (a in _COMPILED_GROUP and b in _COMPILED_GROUP)
    )
    if same_group:
        if ra.contexts == rb.contexts:
            return "equal"
        if rb.contexts <= ra.contexts or ra.contexts <= rb.contexts:
            return "subset"
    if _value_shapes(ra.values) == _value_shapes(rb.values):
        if len(rb.contexts) <= len(ra.contexts):
            return "sound, <= states"
        return "sound"
    return "diverged"


def compare_stages(e: Expr, stages, k: int = 0, mode: str = "abstract",
                   time_cap: float = DEFAULT_TIME_CAP,
                   space_cap: int = DEFAULT_SPACE_CAP) -> StageComparison:
    """Run each stage on e and report metrics plus the equivalence class of
    every adjacent pair: equal, subset, sound, or diverged."""
    if len(stages) < 2:
        raise ValueError("compare_stages needs at least two stages")
    results = [
        run(Config(stage=s, k=k, mode=mode,
                   time_cap=time_cap, space_cap=space_cap), e)
        for s in stages
    ]
    rows = [r.metrics() for r in results]
    verdicts = [
        (ra.stage, rb.stage, _verdict(ra, rb))
        for ra, rb in zip(results, results[1:])
    ]
    return StageComparison(rows=rows, verdicts=verdicts, results=results)
