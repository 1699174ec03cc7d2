"""Parser, labeling, and syntax utilities."""

import random

import pytest

from flowladder.syntax import (
    App,
    If,
    Lam,
    Lit,
    ParseError,
    Var,
    children,
    descendant_labels,
    free_vars,
    label_table,
    node_count,
    parse,
    same_shape,
    unparse,
)
from tests.support import random_source


def preorder(e):
    yield e
    for c in children(e):
        yield from preorder(c)


def test_labels_identity_application():
    e = parse("((lambda (x) x) 5)")
    assert isinstance(e, App) and e.label == 0
    assert isinstance(e.fn, Lam) and e.fn.label == 1
    assert isinstance(e.fn.body, Var) and e.fn.body.label == 2
    assert e.fn.body.name == "x"
    assert isinstance(e.arg, Lit) and e.arg.label == 3 and e.arg.value == 5


def test_labels_if_with_primitive_guard():
    e = parse("(if (zero? 0) 1 2)")
    assert isinstance(e, If) and e.label == 0
    g = e.guard
    assert isinstance(g, App) and g.label == 1
    assert isinstance(g.fn, Lit) and g.fn.value == "zero?" and g.fn.label == 2
    assert isinstance(g.arg, Lit) and g.arg.value == 0 and g.arg.label == 3
    assert e.then.label == 4 and e.els.label == 5


def test_labels_are_preorder_everywhere(corpus):
    for _, _, e in corpus:
        labels = [n.label for n in preorder(e)]
        assert labels == list(range(node_count(e)))


def test_label_table_is_total(corpus):
    for _, _, e in corpus:
        table = label_table(e)
        assert sorted(table) == list(range(node_count(e)))
        for lbl, node in table.items():
            assert node.label == lbl


def test_descendant_labels_strict():
    e = parse("((lambda (x) x) 5)")
    d = descendant_labels(e)
    assert d[0] == frozenset({1, 2, 3})
    assert d[1] == frozenset({2})
    assert d[2] == frozenset()
    assert d[3] == frozenset()


def test_bool_literals():
    t = parse("#t")
    f = parse("#f")
    assert isinstance(t, Lit) and t.value is True
    assert isinstance(f, Lit) and f.value is False


def test_bool_and_int_literal_not_confused():
    # Python's True == 1; the AST must still keep them apart
    assert not same_shape(parse("#t"), parse("1"))
    assert parse("#t") != parse("1")


def test_negative_integer_literal():
    e = parse("-3")
    assert isinstance(e, Lit) and e.value == -3


def test_primitives_parse_as_literals():
    for name in ("zero?", "add1", "sub1"):
        e = parse(name)
        assert isinstance(e, Lit) and e.value == name


def test_comments_ignored():
    e = parse("; leading comment\n(add1 ; inline\n 1) ; trailing")
    assert isinstance(e, App)
    assert e.fn.value == "add1" and e.arg.value == 1


def test_unparse_round_trip_corpus(corpus):
    for name, _, e in corpus:
        again = parse(unparse(e))
        assert same_shape(e, again), name
        assert again == e  # labels are reassigned identically in preorder


def test_unparse_round_trip_random():
    rng = random.Random(11)
    for _ in range(200):
        e = parse(random_source(rng, budget=rng.randrange(2, 30)))
        assert parse(unparse(e)) == e


def test_free_vars():
    assert free_vars(parse("(lambda (x) (x y))")) == frozenset({"y"})
    assert free_vars(parse("(lambda (x) (lambda (y) (x y)))")) == frozenset()
    assert free_vars(parse("(if a b c)")) == frozenset({"a", "b", "c"})
    assert free_vars(parse("5")) == frozenset()


def test_corpus_is_closed_and_small(corpus):
    assert len(corpus) >= 30
    for name, _, e in corpus:
        assert free_vars(e) == frozenset(), name
        assert node_count(e) <= 60, name


def test_shadowing_free_vars():
    e = parse("((lambda (x) ((lambda (x) x) 1)) 2)")
    assert free_vars(e) == frozenset()


@pytest.mark.parametrize(
    "src",
    [
        "",
        "   ; only a comment",
        "(",
        ")",
        "()",
        "(f 1 2)",
        "(f)",
        "(lambda (x))",
        "(lambda (x) 1 2)",
        "(lambda x 1)",
        "(lambda (x y) x)",
        "(lambda () 1)",
        "(lambda (5) 1)",
        "(lambda (lambda) 1)",
        "(lambda (zero?) 1)",
        "(if 1 2)",
        "(if 1 2 3 4)",
        "lambda",
        "if",
        "#q",
        "(add1 1) extra",
        "((add1 1)",
    ],
)
def test_parse_errors(src):
    with pytest.raises(ParseError):
        parse(src)


def test_parse_error_positions():
    with pytest.raises(ParseError) as ei:
        parse("(add1\n  (f 1 2))")
    assert ei.value.line == 2 and ei.value.col == 3
    assert "exactly one argument" in ei.value.reason

    with pytest.raises(ParseError) as ei:
        parse("(add1 1")
    assert ei.value.reason == "unclosed parenthesis"
    assert ei.value.line == 1 and ei.value.col == 1

    with pytest.raises(ParseError) as ei:
        parse("1 2")
    assert ei.value.reason == "trailing input after program"
    assert ei.value.col == 3


def test_node_count_matches_children():
    e = parse("(if (zero? 0) (lambda (x) x) 2)")
    assert node_count(e) == 7
    assert len(children(e)) == 3
    assert children(parse("5")) == ()


def test_expr_equality_is_label_sensitive():
    a = parse("(add1 1)")
    b = parse("(sub1 1)")
    assert a != b
    # same shape embedded at different labels compares unequal
    outer = parse("(add1 (add1 1))")
    assert outer.arg != a
