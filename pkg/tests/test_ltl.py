import pytest
from hypothesis import given, settings, strategies as st

from attestbench import checker
from attestbench.equivalence import direct_agreement, exhaustive_agreement
from attestbench.ltl import (
    Always,
    And,
    Atom,
    Clean,
    Eventually,
    Implies,
    LtlSyntaxError,
    Next,
    Not,
    Or,
    UnsupportedFormula,
    Until,
    Violated,
    eval_prefix,
    fragment_of,
    kleene,
    parse,
    pretty,
    to_mask,
    to_monitor,
)

NAMES = ("irq", "r_en", "w_en", "reset")
atoms = st.sampled_from(NAMES).map(Atom)


def formulas(leaf=atoms):
    return st.recursive(leaf, lambda sub: st.one_of(
        sub.map(Not), sub.map(Next), sub.map(Eventually), sub.map(Always),
        st.builds(And, sub, sub), st.builds(Or, sub, sub),
        st.builds(Implies, sub, sub), st.builds(Until, sub, sub),
    ), max_leaves=8)


booleans = st.recursive(atoms, lambda sub: st.one_of(
    sub.map(Not), st.builds(And, sub, sub), st.builds(Or, sub, sub), st.builds(Implies, sub, sub),
), max_leaves=4)
one_step = st.recursive(st.one_of(atoms, booleans.map(Next)), lambda sub: st.one_of(
    sub.map(Not), st.builds(And, sub, sub), st.builds(Or, sub, sub), st.builds(Implies, sub, sub),
), max_leaves=5)
global_formulas = one_step.map(Always)


def hold_formula(a, b):
    return Always(Implies(a, Or(Until(a, b), Always(a))))


valuation = st.sets(st.sampled_from(NAMES)).map(to_mask)


@given(formulas())
def test_pretty_parse_round_trip(f):
    assert parse(pretty(f)) == f


def test_precedence():
    assert parse("a & b | c -> d") == Implies(Or(And(Atom("a"), Atom("b")), Atom("c")), Atom("d"))
    assert parse("a -> b -> c") == Implies(Atom("a"), Implies(Atom("b"), Atom("c")))
    assert parse("a U b U c") == Until(Until(Atom("a"), Atom("b")), Atom("c"))
    assert parse("!X a & G b") == And(Not(Next(Atom("a"))), Always(Atom("b")))


@pytest.mark.parametrize("text, pos", [("a &", 3), ("(a", 2), ("a $ b", 2), ("a b", 2)])
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(LtlSyntaxError) as e:
        parse(text)
    assert e.value.pos == pos


@pytest.mark.parametrize("text", ["F(irq)", "G(irq U reset)", "G(X(X(irq)))", "irq"])
def test_outside_fragment(text):
    with pytest.raises(UnsupportedFormula):
        to_monitor(parse(text))


def test_unknown_atom():
    with pytest.raises(ValueError, match="unknown atom"):
        to_monitor(parse("G(bogus)"))


def test_fragment_kinds():
    assert fragment_of(checker.spec_formula(2)).kind == "global"
    assert fragment_of(checker.spec_formula(11)).kind == "hold"


def test_monitor_state_counts():
    assert to_monitor(parse("G(irq)")).n_states == 2
    assert to_monitor(parse("G(irq -> X(reset))")).n_states == 3
    assert to_monitor(checker.spec_formula(11)).labels == ("ok", "armed", "violation")


def test_eval_prefix_examples():
    f = parse("G(irq -> reset)")
    assert eval_prefix(f, [set(), {"irq", "reset"}, {"irq"}]) == Violated(2)
    assert eval_prefix(f, [set(), {"irq", "reset"}]) == Clean()
    g = parse("G(irq -> X(reset))")
    # the obligation is pending, not yet violated
    assert eval_prefix(g, [{"irq"}]) == Clean()
    assert eval_prefix(g, [{"irq"}, set()]) == Violated(1)


def test_eval_prefix_dead_end_detected_early():
    # after irq the next letter must satisfy both reset and !reset
    f = parse("G(irq -> X(reset) & X(!reset))")
    assert eval_prefix(f, [{"irq"}]) == Violated(0)
    assert to_monitor(f).run([{"irq"}]) == Violated(0)


def test_hold_semantics():
    f = checker.spec_formula(11)
    z = "pc_is_zero"
    assert eval_prefix(f, [{"reset"}, {"reset"}, {z}]) == Clean()
    assert eval_prefix(f, [{"reset"}, {"reset"}, set()]) == Violated(2)
    assert eval_prefix(f, [{"reset", z}, set()]) == Clean()


def test_kleene_unknown_past_end():
    assert kleene(parse("X(irq)"), [0]) is None
    assert kleene(parse("F(irq)"), [0, 0]) is None
    assert kleene(parse("G(irq)"), [0]) is False


@settings(max_examples=60)
@given(global_formulas, st.lists(valuation, max_size=6))
def test_monitor_matches_reference_on_random_traces(f, trace):
    assert to_monitor(f).run(trace) == eval_prefix(f, trace)


@settings(max_examples=40)
@given(booleans, booleans, st.lists(valuation, max_size=6))
def test_hold_monitor_matches_reference(a, b, trace):
    f = hold_formula(a, b)
    try:
        fragment_of(f)
    except UnsupportedFormula:
        return
    assert to_monitor(f).run(trace) == eval_prefix(f, trace)


@settings(max_examples=15)
@given(global_formulas)
def test_window_factorisation_matches_whole_trace_evaluation(f):
    # the trie walk relies on windowing; confirm it against direct evaluation
    short = exhaustive_agreement(f, max_len=3, domain="full")
    direct = direct_agreement(f, max_len=3, domain="full")
    assert short.mismatches == direct[1] == 0
    assert short.traces == direct[0]


@pytest.mark.parametrize("spec", [2, 3, 4, 11])
def test_direct_agreement_on_shipped_specs(spec):
    count, bad = direct_agreement(checker.spec_formula(spec), max_len=3)
    assert bad == 0 and count > 0


def test_exhaustive_backends_agree():
    from attestbench import kernels

    f = checker.spec_formula(3)
    py = exhaustive_agreement(f, max_len=3, backend=kernels.python_backend)
    native = exhaustive_agreement(f, max_len=3)
    assert (py.traces, py.mismatches) == (native.traces, native.mismatches)
