import random

import pytest
import sympy as sp

from diffiety.diffiety import contact_diffiety, contact_form, independent, jet
from diffiety.geometry import OneForm, VectorField, contract
from diffiety.linalg import FormSpan
from diffiety.standard import standard_basis
from diffiety.symkernel import AssumptionSet, normalize, opaque
from diffiety.symmetry import (Morphism, VariationData, WaveError, candidate_check,
                               decompose_variation, group_finiteness_check,
                               infinitesimal_conditions, lie_contact_display, prolong_morphism,
                               prolongation_rule_morphism, prolongation_rule_variation,
                               variation_from_data, verify_symmetry, verify_variation,
                               wave_symmetry, wave_symmetry_single)

from conftest import F, F1, example4, example5, random_poly

x, bx = independent(), independent(1, 1, True)
w10, w11, w12, w20, w21 = jet(1, 0), jet(1, 1), jet(1, 2), jet(2, 0), jet(2, 1)
bw10, bw20 = jet(1, 0, True), jet(2, 0, True)
lam = sp.Integer(2)


@pytest.fixture(scope="module")
def basis4():
    return standard_basis(example4(), L=2, certify=False)


def test_example4_variation_coordinates(basis4):
    om = basis4.omega
    p = opaque("p", 4)(x, w10, w20, w21)
    z = opaque("z", 4)(x, w10, w20, w21)
    Z = variation_from_data(VariationData(z, [p]), basis4)
    DF1 = om.D(F1(w21))
    Dp = om.D(p)
    assert normalize(Z[w20] - (-Dp / DF1 + w21 * z)) == 0
    assert normalize(Z[w10] - (p - F1(w21) / DF1 * Dp + F(w21) * z)) == 0
    assert Z[x] == z


def test_total_derivative_is_variation(basis4):
    om = basis4.omega
    Z = variation_from_data(VariationData(1, [0]), basis4)
    for c in [x, w10, w20, w21, jet(2, 3)]:
        assert Z[c] == om.D[c]
    assert verify_variation(Z, om, 1)


def test_random_variations_verify_and_round_trip(basis4, rng):
    om = basis4.omega
    coords = [x, w10, w20, w21]
    for _ in range(3):
        v = VariationData(random_poly(rng, coords, 2, 2), [random_poly(rng, coords, 3, 2)])
        Z = variation_from_data(v, basis4)
        rep = verify_variation(Z, om, 1)
        assert rep.ok and rep.rule_ok and rep.witness is None
        back = decompose_variation(Z, basis4)
        assert normalize(back.z - v.z) == 0
        assert normalize(back.p[0] - v.p[0]) == 0


def test_non_variation_has_witness():
    om = example4()
    rep = verify_variation(VectorField.partial(w21), om, 1)
    assert not rep and rep.witness is not None
    # Shifting u is a genuine symmetry of du/dx = F(dv/dx).
    assert verify_variation(VectorField.partial(w10), om, 1)
    assert verify_variation(VectorField.from_dict({}), om, 1)


def test_variation_data_validation(basis4):
    with pytest.raises(ValueError):
        variation_from_data(VariationData(0, [0, 0]), basis4)


def test_prolongation_rule_variation(basis4):
    om = basis4.omega
    Z = variation_from_data(VariationData(x, [w20 * w21]), basis4)
    for g in om.level(2):
        assert prolongation_rule_variation(Z, om.D, g)


def test_morphism_recurrence_hand_value():
    C = contact_diffiety(2)
    m = Morphism(C, w11, {1: x * w11 - w10, 2: lam * w20})
    assert m.image(w11) == x
    for s in range(3):
        assert normalize(m.image(jet(1, s + 1)) * m.DF - C.D(m.image(jet(1, s)))) == 0


def test_identity_and_translation():
    C = contact_diffiety(2)
    ident = prolong_morphism(x, {1: w10, 2: w20}, C)
    trans = prolong_morphism(x, {1: w10 + 3}, C)
    for j in (1, 2):
        for s in range(3):
            assert ident.pull_form(contact_form(j, s)) == contact_form(j, s)
            assert trans.pull_form(contact_form(j, s)) == contact_form(j, s)
    assert verify_symmetry(ident) == "symmetry"


def test_constant_F_rejected():
    with pytest.raises(ValueError):
        Morphism(contact_diffiety(1), sp.Integer(3), {1: w10})


def test_symmetry_verdicts():
    C = contact_diffiety(2)
    legendre = prolong_morphism(w11, {1: w10 - x * w11, 2: lam * w20}, C)
    assert verify_symmetry(legendre) == "symmetry"
    projection = prolong_morphism(x, {1: w10, 2: sp.Integer(0)}, C)
    assert verify_symmetry(projection) == "morphism-only"


def test_morphism_prolongation_identity():
    C = contact_diffiety(2)
    m = prolong_morphism(w11, {1: w10 - x * w11, 2: lam * w20}, C)
    for g in C.level(2):
        assert prolongation_rule_morphism(m, g)


def test_composition_with_inverse():
    C = contact_diffiety(1)
    m = prolong_morphism(x + w10, {1: w10}, C)
    inv = prolong_morphism(x - w10, {1: w10}, C)
    for c in [x, w10, w11, w12]:
        assert m.pull(inv.image(c)) == c


def test_wave_scaling_symmetry():
    W = [x * bx - w10 + bw10, lam * w20 - bw20]
    res = wave_symmetry(W, order=3)
    assert res.certified and res.backward_implied
    assert res.forward.image(x) == w11
    assert res.forward.image(w10) == normalize(w10 - x * w11)
    assert res.forward.image(w20) == 2 * w20
    # The other sign candidate fails the defining equations.
    with pytest.raises(WaveError):
        wave_symmetry(W, seeds_fwd=(w11, x * w11 - w10, 2 * w20))
    assert verify_symmetry(res.forward) == "symmetry"


def test_wave_lie_case():
    W = x * bx - w10 + bw10
    res = wave_symmetry([W], order=3)
    assert res.certified and lie_contact_display(W, res)


def test_wave_supplied_seeds():
    W = [x * bx - w10 + bw10, lam * w20 - bw20]
    res = wave_symmetry(W, seeds_fwd=(w11, w10 - x * w11, 2 * w20))
    assert res.certified


def test_wave_single_diagnostics():
    W = x * bx - w10 * bw10 - w20 * bw20
    with pytest.raises(WaveError):
        wave_symmetry_single(W, 2)
    degenerate = x - bx + (w10 - bw10) + (w20 - bw20)
    with pytest.raises(WaveError):
        wave_symmetry_single(degenerate, 2)


def test_wave_single_lie_reduction():
    W = x * bx - w10 + bw10
    a = wave_symmetry_single(W, 1)
    b = wave_symmetry([W])
    for c in [x, w10, w11, w12]:
        assert a.forward.image(c) == b.forward.image(c)


def test_example4_conditions(basis4):
    P = opaque("P", 2)
    p = P(F(w21) * x - w10, w21 * x - w20)
    assert infinitesimal_conditions(basis4, [p]).satisfied
    assert candidate_check(basis4, [0], z=0) == []
    generic = infinitesimal_conditions(basis4, [opaque("p", 4)(x, w10, w20, w21)])
    assert len(generic.reduced) == 1 and generic.z_solution is not None


@pytest.mark.parametrize("m", [3])
def test_example5_conditions(m):
    om = example5(m)
    sb = standard_basis(om, L=2, certify=False)
    lower = [x] + [jet(j, 0) for j in range(1, m)]
    full = lower + [jet(m, 0)]
    z = opaque("z", m)(*lower)
    q = [opaque(f"q{i}", m)(*lower) for i in range(1, m)]
    Fm = opaque("F", m + 1)(*full)
    ps = [-z * Fm + q[0]] + [-z * jet(i, 1) + q[i - 1] for i in range(2, m)]
    assert candidate_check(sb, ps, z=z) == []
    # Generic data reproduces the reduced condition dp1/dw^m = F^m dp2/dw2_1.
    args = full + [jet(2, 1)]
    p1, p2 = opaque("p1", m + 2)(*args), opaque("p2", m + 2)(*args)
    red = dict(infinitesimal_conditions(sb, [p1, p2]).reduced)
    Fmm = opaque("F", tuple(1 if k == m else 0 for k in range(m + 1)))(*full)
    expected = sp.diff(p1, jet(m, 0)) - Fmm * sp.diff(p2, jet(2, 1))
    assert normalize(red[f"pi1:d{jet(m, 0)}"] - expected) == 0


def test_group_finiteness():
    C = contact_diffiety(1)
    seeds = [contact_form(1, 0)]
    label, dims = group_finiteness_check(C.D, seeds, 4)
    assert label == "growing" and dims == [1, 2, 3, 4, 5]
    assert group_finiteness_check(VectorField.partial(x), seeds, 4) == ("finite-dim", [1, 1])
    scaling = VectorField(lambda c: c if c.coord_kind == "jet" else 0, name="scaling")
    assert group_finiteness_check(scaling, seeds, 4)[0] == "finite-dim"
