"""Tests for the decision procedure."""

from itertools import product

import pytest
from hypothesis import HealthCheck, given, settings as hyp_settings, strategies as st

from core.errors import SpecMineError
from services.formula import And, Atom, Domain, Not, Op, Or, evaluate, free_params
from services.formula_syntax import parse_formula
from services.sat import ComplexityBudgetExceeded, Solver, implies, sat

NAMES = ("x", "y", "z")
BOX = range(-4, 5)

int_atoms = st.builds(
    Atom,
    st.sampled_from(NAMES),
    st.sampled_from(list(Op)),
    st.one_of(st.integers(-2, 2), st.sampled_from(NAMES)),
)
int_formulas = st.recursive(
    int_atoms,
    lambda children: st.one_of(
        st.lists(children, min_size=2, max_size=3).map(lambda items: And(tuple(items))),
        st.lists(children, min_size=2, max_size=3).map(lambda items: Or(tuple(items))),
        children.map(Not),
    ),
    max_leaves=6,
)


def _box_model(formula):
    names = sorted(free_params(formula))
    for values in product(BOX, repeat=len(names)):
        valuation = dict(zip(names, values))
        if evaluate(formula, valuation):
            return valuation
    return None


class TestIntegers:

    @pytest.mark.parametrize("text", [
        "x > 0 && x < 3",
        "x < y && y < z",
        "x != y && x == 0 && y <= 0",
        "(x == 1 || x == 2) && x != 1",
        "!(x <= 5) && x < 7",
    ])
    def test_satisfiable(self, text):
        f = parse_formula(text)
        result = sat(f)
        assert result.satisfiable
        assert evaluate(f, result.witness)

    @pytest.mark.parametrize("text", [
        "x == 1 && x != 1",
        "x < y && y < z && z < x",
        "x > 0 && x < 3 && x != 1 && x != 2",
        "x <= y && y <= x && x != y",
        "(x == 1 || x == 2) && x > 2",
        "!(x == x)",
    ])
    def test_unsatisfiable(self, text):
        assert not sat(parse_formula(text)).satisfiable

    def test_strict_bounds_are_integral(self):
        assert implies(parse_formula("x > 2"), parse_formula("x >= 3"))
        assert not implies(parse_formula("x >= 3"), parse_formula("x > 3"))

    def test_implication_through_variables(self):
        assert implies(parse_formula("x < y && y < z"), parse_formula("x < z"))
        assert implies(parse_formula("x == y && y == 4"), parse_formula("x == 4"))


class TestDomains:

    def test_address_equalities(self):
        domains = {"a": Domain.ADDR, "b": Domain.ADDR}
        assert not sat(parse_formula("a == 0x1 && a == b && b != 0x1"), domains).satisfiable
        result = sat(parse_formula("a != 0x0 && a != b"), domains)
        assert result.satisfiable
        assert result.witness["a"] != "0x0"

    def test_address_ordering_is_an_error(self):
        with pytest.raises(SpecMineError):
            sat(parse_formula("a < b"), {"a": Domain.ADDR, "b": Domain.ADDR})

    def test_booleans_take_two_values(self):
        domains = {"flag": Domain.BOOL}
        assert not sat(parse_formula("flag != 0 && flag != 1"), domains).satisfiable
        assert not sat(parse_formula("flag > 1"), domains).satisfiable
        assert sat(parse_formula("flag != 0"), domains).witness == {"flag": 1}

    def test_undeclared_parameter_compared_to_address(self):
        solver = Solver({})
        assert solver.atom_domain(Atom("owner", Op.EQ, "0x1")) is Domain.ADDR
        assert solver.atom_domain(Atom("count", Op.EQ, 1)) is Domain.INT


class TestSolver:

    def test_equivalence(self, solver):
        left = parse_formula("!(status == 0 && stake == 0)")
        right = parse_formula("status != 0 || stake != 0")
        assert solver.equivalent(left, right)
        assert not solver.equivalent(left, parse_formula("status != 0"))

    def test_results_are_cached(self, solver):
        f = parse_formula("status == 1 && stake > 0")
        assert solver.check(f) is solver.check(f)

    def test_conjunct_budget(self):
        f = parse_formula("x < y && y < x && (a == 1 || a == 2) && (b == 1 || b == 2) && (c == 1 || c == 2)")
        with pytest.raises(ComplexityBudgetExceeded):
            Solver(max_conjuncts=3).check(f)

    def test_atom_budget(self):
        with pytest.raises(ComplexityBudgetExceeded):
            Solver(max_atoms=2).check(parse_formula("x > 0 && y > 0 && z > 0"))

    def test_disequalities_do_not_count_against_the_atom_budget(self):
        assert Solver(max_atoms=1).is_sat(parse_formula("x > 0 && x != 1 && x != 2 && x != 3"))


def _check_witness(f):
    result = sat(f)
    if result.satisfiable:
        assert evaluate(f, result.witness)


def _check_unsat(f):
    if not sat(f).satisfiable:
        assert _box_model(f) is None


class TestAgainstEnumeration:
    """The solver agrees with brute force over a small box."""

    @hyp_settings(max_examples=300, deadline=None)
    @given(int_formulas)
    def test_sat_witness_is_a_model(self, f):
        _check_witness(f)

    @hyp_settings(max_examples=300, deadline=None)
    @given(int_formulas)
    def test_unsat_has_no_box_model(self, f):
        _check_unsat(f)


@pytest.mark.slow
class TestAgainstEnumerationExtended:

    @hyp_settings(max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(int_formulas)
    def test_sat_witness_is_a_model(self, f):
        _check_witness(f)

    @hyp_settings(max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(int_formulas)
    def test_unsat_has_no_box_model(self, f):
        _check_unsat(f)
