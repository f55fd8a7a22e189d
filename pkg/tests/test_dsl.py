import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from diffiety.diffiety import contact_diffiety, independent, jet
from diffiety.dsl import DslError, ProblemSpec, parse, parse_expression, render_expr, render_spec
from diffiety.symkernel import opaque

from conftest import FIXTURES

EX4 = (FIXTURES / "example4.dfy").read_text()


def test_example4_file():
    spec = parse(EX4)
    assert spec.name == "example4" and spec.indep == ["x"] and spec.dep == ["u", "v"]
    assert len(spec.equations) == 1 and len(spec.funcs) == 1
    eq = spec.equations[0]
    assert eq.dep == "u" and eq.rhs == opaque("F", 1)(jet(2, 1))
    assert spec.assumptions == [opaque("F", (2,))(jet(2, 1))]
    assert spec.queries == [("analyze", {"order": 3})]


def test_empty_equations_give_contact():
    spec = parse("system c\ndep u\n")
    om = spec.diffiety()
    C = contact_diffiety(1)
    for l in range(3):
        assert om.window(l).same_span(C.window(l))


def test_missing_rhs_position():
    with pytest.raises(DslError) as err:
        parse("system s\ndep u, v\neq D(u) =\n")
    assert err.value.line == 3 and "right-hand side" in str(err.value)
    assert err.value.column == 10


@pytest.mark.parametrize("text,fragment,line", [
    ("system s\ndep u\neq D(u) = G(x)\n", "G", 3),
    ("system s\ndep u\nfunc F(1)\neq D(u) = F(x, u)\n", "argument", 4),
    ("system s\ndep u\neq D(u) = x $ 2\n", "unexpected character", 3),
    ("system s\ndep u\neq D(u) = (x + 1\n", "expected", 3),
    ("system s\nsystem t\ndep u\n", "one system", 2),
    ("system s\ndep D\n", "reserved", 2),
    ("system s\ndep u\nfrobnicate u\n", "unknown statement", 3),
    ("system s\ndep u\neq D(q) = x\n", "unknown dependent", 3),
    ("system s\ndep u\neq D(u) = x / 0\n", "zero", 3),
])
def test_errors_carry_positions(text, fragment, line):
    with pytest.raises(DslError) as err:
        parse(text)
    assert fragment in str(err.value) and err.value.line == line and err.value.column >= 1


def test_no_dependents():
    with pytest.raises(DslError):
        parse("system s\nindep x\n")


def test_precedence():
    spec = parse("system s\ndep u\n")
    x = independent()
    assert parse_expression("-x^2", spec) == -x ** 2
    assert parse_expression("2*x^3^1 + 1", spec) == 2 * x ** 3 + 1
    assert parse_expression("x - 1 - 1", spec) == x - 2
    assert parse_expression("w[1, 2]", spec) == jet(1, 2)
    assert parse_expression("D(D(u))", spec) == jet(1, 2)


def test_derivative_notations_agree():
    spec = parse("system s\ndep u, v\nfunc F(1)\n")
    a = parse_expression("F''(D(v))", spec)
    b = parse_expression("diff(F, 1, 1)(D(v))", spec)
    assert a == b == opaque("F", (2,))(jet(2, 1))


def test_several_independents():
    spec = parse((FIXTURES / "cartan_single.dfy").read_text())
    assert spec.n == 2
    assert spec.equations[0].direction == 2


@pytest.mark.parametrize("path", sorted(FIXTURES.glob("*.dfy")), ids=lambda p: p.stem)
def test_fixture_round_trip(path):
    spec = parse(path.read_text())
    again = parse(render_spec(spec))
    assert again == spec
    assert render_spec(again) == render_spec(spec)


names = st.sampled_from(["x", "u", "v", "D(u)", "D(D(v))", "F(D(v))", "F'(x)", "A"])


@st.composite
def expressions(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(st.one_of(names, st.integers(1, 9).map(str)))
    op = draw(st.sampled_from(["+", "-", "*", "^"]))
    a = draw(expressions(depth=depth - 1))
    if op == "^":
        return f"({a})^{draw(st.integers(1, 3))}"
    return f"({a}) {op} ({draw(expressions(depth=depth - 1))})"


@settings(max_examples=150, deadline=None)
@given(expressions())
def test_expression_round_trip(text):
    spec = parse("system s\ndep u, v\nfunc F(1)\nparam A\n")
    e = parse_expression(text, spec)
    assert sp.expand(parse_expression(render_expr(e, spec), spec) - e) == 0
