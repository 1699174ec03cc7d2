"""Timestamped frontier iteration and its untimestamped reference."""

from flowladder.domains import CoC, EMPTY_STORE, HALT, IntVal, kcfa_policy
from flowladder.syntax import parse
from flowladder.frontier import (
    frontier_step,
    inject_frontier,
    run_frontier,
    run_reference,
    stamps_to_stores,
    stores_to_stamps,
)
from flowladder.widening import analyze_baseline, inject_context


P0 = kcfa_policy(0)


def plain_leq(a, b):
    return all(b.get(addr) is not None and vals <= b.get(addr) for addr, vals in a.items())


def test_inject_shape():
    sys = inject_frontier(parse("5"))
    c0 = inject_context(parse("5"))
    assert sys.seen == {c0: (0,)}
    assert sys.frontier == [c0]
    assert sys.chain == [EMPTY_STORE]
    assert sys.t == 0
    assert sys.store is sys.chain[0]


def test_literal_step_keeps_clock():
    sys = inject_frontier(parse("5"))
    sys2 = frontier_step(sys, P0)
    assert sys2.t == 0
    assert sys2.chain == [EMPTY_STORE]
    assert sys2.seen[CoC(HALT, IntVal(5))] == (0,)


def test_empty_frontier_is_fixpoint():
    sys = inject_frontier(parse("5"))
    sys = frontier_step(sys, P0)
    sys = frontier_step(sys, P0)
    assert sys.at_fixpoint()
    assert frontier_step(sys, P0) is sys


def test_chain_invariants_every_generation(corpus):
    for name, src, e in corpus:
        trace = []
        run = run_frontier(e, P0, trace=trace)
        assert run.status == "fixpoint", name
        for seen, frontier, chain, t in trace:
            assert t == len(chain) - 1, name
            for newer, older in zip(chain, chain[1:]):
                assert plain_leq(older, newer), name
                assert older != newer, name
            for c, stamps in seen.items():
                assert all(s <= t for s in stamps), name
                assert list(stamps) == sorted(stamps, reverse=True), name
                assert len(set(stamps)) == len(stamps), name


def test_subset_of_widened_with_a_strict_case(corpus):
    strict = []
    for name, src, e in corpus:
        fr = run_frontier(e, P0)
        br = analyze_baseline(e, P0)
        assert fr.contexts <= br.contexts, name
        if fr.contexts < br.contexts:
            strict.append(name)
    assert strict


def test_iteration_order_does_not_matter(corpus):
    for name, src, e in corpus[:10]:
        r1 = run_frontier(e, P0, order_key=None)
        r2 = run_frontier(e, P0, order_key=lambda c: repr(c), )
        r3 = run_frontier(e, P0, order_key=lambda c: tuple(reversed(repr(c))))
        for other in (r2, r3):
            assert r1.contexts == other.contexts, name
            assert r1.chain == other.chain, name
            assert r1.seen == other.seen, name
            assert r1.edges == other.edges, name
            assert r1.generations == other.generations, name


def test_reference_lockstep_both_translations(corpus):
    for name, src, e in corpus:
        ft, rt = [], []
        fr = run_frontier(e, P0, trace=ft)
        run_reference(e, P0, trace=rt)
        assert len(ft) == len(rt), name
        for (seen, frontier, chain, t), (rseen, rfrontier, rchain) in zip(ft, rt):
            assert frontier == rfrontier, name
            assert tuple(chain) == tuple(rchain), name
            assert stamps_to_stores(seen, chain) == rseen, name
            assert stores_to_stamps(rseen, list(rchain)) == seen, name
        assert stamps_to_stores(fr.seen, fr.chain) == run_reference(e, P0).seen, name


def test_chain_limit_truncates_but_preserves_result(corpus):
    table = {name: e for name, src, e in corpus}
    e = table["22_church_mult"]
    full = run_frontier(e, P0)
    assert len(full.chain) > 3
    cut = run_frontier(e, P0, chain_limit=2)
    assert len(cut.chain) <= 2
    assert cut.contexts == full.contexts
    assert cut.store == full.store
    assert cut.generations == full.generations


def test_omega_terminates():
    run = run_frontier(parse("((lambda (x) (x x)) (lambda (y) (y y)))"), P0)
    assert run.status == "fixpoint"
    assert run.contexts


def test_final_values_subset_of_widened(corpus):
    for name, src, e in corpus:
        fr = run_frontier(e, P0)
        br = analyze_baseline(e, P0)
        assert fr.final_values() <= br.final_values(), name


def test_cap_check_stops():
    e = parse("((lambda (x) (x x)) (lambda (y) (y y)))")
    run = run_frontier(e, P0, cap_check=lambda n, g: "space-cap" if g >= 1 else None)
    assert run.status == "space-cap"
