import random

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from diffiety.diffiety import (Diffiety, contact_diffiety, contact_form, from_resolved_ode,
                               good_filtration_check, independent, jet, lift, member_test)
from diffiety.geometry import OneForm, contract, d_fun, lie_derivative
from diffiety.linalg import FormSpan, PivotUndecided
from diffiety.symkernel import opaque

from conftest import F, F1, example4, example5, random_poly

x = independent()


def test_contact_examples():
    C = contact_diffiety(1, 3)
    assert lie_derivative(C.D, contact_form(1, 2)) == contact_form(1, 3)
    for s in range(4):
        assert contract(C.D, contact_form(1, s)) == 0
    for m in (1, 2, 3):
        C = contact_diffiety(m)
        assert [C.window(l).dim for l in range(4)] == [m * (l + 1) for l in range(4)]


def test_contact_rejects_bad_sizes():
    with pytest.raises(ValueError):
        contact_diffiety(0)


def test_contact_several_independents():
    C = contact_diffiety(1, n=2)
    assert len(C.total_derivatives) == 2
    assert [C.window(l).dim for l in range(3)] == [1, 3, 6]
    x1, x2 = C.independents
    for i, Dv in enumerate(C.total_derivatives):
        assert contract(Dv, OneForm.d(x1)) == (1 if i == 0 else 0)
        assert contract(Dv, OneForm.d(x2)) == (1 if i == 1 else 0)
    assert C.check_annihilation(2)
    with pytest.raises(ValueError):
        C.D


def test_example4_construction():
    om = example4()
    w10, w21 = jet(1, 0), jet(2, 1)
    assert om.generators == [OneForm({w10: 1, x: -F(w21)}), contact_form(2, 0)]
    D = om.D
    assert D[x] == 1 and D[w10] == F(w21)
    assert all(D[jet(2, s)] == jet(2, s + 1) for s in range(5))
    with pytest.raises(ValueError):
        D[jet(1, 1)]


def test_example5_construction():
    om = example5(3)
    assert om.m == 3 and len(om.generators) == 3
    assert om.check_annihilation(2)


def test_empty_system_is_contact():
    om = from_resolved_ode(1, {})
    C = contact_diffiety(1)
    for l in range(3):
        assert om.window(l).same_span(C.window(l))


def test_resolved_ode_errors():
    with pytest.raises(ValueError):
        from_resolved_ode(2, {1: jet(1, 1)})
    with pytest.raises(ValueError):
        from_resolved_ode(2, {3: jet(2, 1)})


def test_member_examples(rng):
    om = example4()
    coords = [x, jet(1, 0), jet(2, 0), jet(2, 1)]
    for _ in range(5):
        f, g = random_poly(rng, coords), random_poly(rng, coords)
        assert member_test(d_fun(f) - OneForm.d(x) * om.D(f), om) == "member"
        assert member_test(d_fun(g) * om.D(f) - d_fun(f) * om.D(g), om) == "member"
    assert member_test(OneForm.d(x), om) == "nonmember"


def test_member_several_independents():
    C = contact_diffiety(1, n=2)
    w = jet(1, (0, 0))
    phi = d_fun(w * w) - OneForm.d(C.independents[0]) * C.total_derivatives[0](w * w) \
        - OneForm.d(C.independents[1]) * C.total_derivatives[1](w * w)
    assert member_test(phi, C) == "member"
    assert member_test(OneForm.d(C.independents[0]), C) == "nonmember"


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_member_agrees_with_window(seed):
    rng = random.Random(seed)
    C = contact_diffiety(2)
    coords = [x, jet(1, 0), jet(2, 0), jet(1, 1)]
    gens = C.level(2)
    phi = OneForm({})
    for g in rng.sample(gens, 3):
        phi = phi + g * random_poly(rng, coords, 2, 2)
    if rng.random() < 0.5:
        phi = phi + OneForm.d(x) * random_poly(rng, coords, 2, 1)
    verdict = member_test(phi, C)
    assert verdict == ("member" if C.window(3).contains(phi) else "nonmember")


def test_lift_examples():
    C = contact_diffiety(2)
    assert [len(lift(C.level, 0)(l)) for l in range(3)] == [len(C.level(l)) for l in range(3)]
    lifted = lift(C.level, 1)
    assert FormSpan(lifted(0)).dim == 4
    twice = lift(lift(C.level, 1), 1)
    assert [FormSpan(twice(l)).dim for l in range(3)] == [FormSpan(lift(C.level, 2)(l)).dim for l in range(3)]
    with pytest.raises(ValueError):
        lift(C.level, -1)


def test_good_filtration_examples():
    rep = good_filtration_check(contact_diffiety(1), 3)
    assert rep.inclusion_ok and rep.equality_from == 0 and rep.good
    rep = good_filtration_check(example4(), 3)
    assert rep.inclusion_ok and rep.equality_from == 0
    with pytest.raises(ValueError):
        good_filtration_check(contact_diffiety(1), 1)


def test_truncated_level_reports_inclusion_failure():
    C = contact_diffiety(1)

    def levels(l):
        if l == 1:
            return [contact_form(1, 0)]
        return C.level(l)

    rep = good_filtration_check(C.with_levels(levels), 3)
    assert not rep.inclusion_ok and rep.first_failure == 0


def test_levels_increase_with_eventually_constant_increment():
    for om in (example4(), contact_diffiety(3), example5(3)):
        dims = [om.window(l).dim for l in range(5)]
        inc = [b - a for a, b in zip(dims, dims[1:])]
        assert all(i >= 0 for i in inc)
        assert inc[-1] == inc[-2]


def test_generators_annihilated_exactly():
    for om in (example4(), contact_diffiety(2), example5(3), contact_diffiety(2, n=2)):
        assert om.check_annihilation(0)


def test_undecided_pivot_is_reported():
    # Without the F'' assumption the second-level pivot cannot be certified.
    om = from_resolved_ode(2, {1: F(jet(2, 1))})
    forms = [om.generators[0] - contact_form(2, 0) * F1(jet(2, 1)), contact_form(2, 1)]
    forms.append(lie_derivative(om.D, forms[0]))
    with pytest.raises(PivotUndecided):
        FormSpan(forms + [contact_form(2, 2)]).reduce(contact_form(2, 0))
