"""Variations, morphisms, symmetries, the wave construction and infinitesimal conditions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import sympy as sp

from .diffiety import Diffiety, contact_total_derivative, independent, jet, member_test
from .geometry import OneForm, VectorField, contract, d_fun, lie_derivative
from .linalg import FormSpan, PivotUndecided
from .standard import R0, StandardBasis, descending_chain
from .symkernel import (AssumptionSet, Coordinate, coordinates_of, is_zero, nonzero_status,
                        normalize, substitute)

__all__ = [
    "Morphism",
    "prolong_morphism",
    "verify_morphism",
    "verify_symmetry",
    "VariationData",
    "variation_from_data",
    "decompose_variation",
    "verify_variation",
    "VariationReport",
    "prolongation_rule_morphism",
    "prolongation_rule_variation",
    "WaveError",
    "WaveResult",
    "wave_symmetry",
    "wave_symmetry_single",
    "InfinitesimalConditions",
    "infinitesimal_conditions",
    "candidate_check",
    "group_finiteness_check",
]


class Morphism:
    """Pullback ``x -> F``, ``w^j_0 -> F^j_0`` extended by ``F^j_{s+1} = D F^j_s / DF``.

    Coordinates without a seed (plain ones, or dependents missing from ``seeds``)
    are mapped identically unless listed in ``extra``.
    """

    def __init__(self, omega: Diffiety, F, seeds: Mapping[int, sp.Expr],
                 extra: Mapping[Coordinate, sp.Expr] | None = None):
        if omega.n != 1:
            raise ValueError("morphisms are prolonged for one independent variable")
        self.omega = omega
        self.F = normalize(F)
        self.seeds = {j: normalize(e) for j, e in seeds.items()}
        self.DF = omega.D(self.F)
        status, factor = nonzero_status(self.DF, omega.assumptions)
        if status == "zero":
            raise ValueError("DF vanishes identically; no morphism")
        self.DF_status = status
        self._table: dict = {omega.x: self.F}
        for c, e in (extra or {}).items():
            self._table[c] = normalize(e)

    def image(self, c: Coordinate) -> sp.Expr:
        v = self._table.get(c)
        if v is not None:
            return v
        if c.coord_kind == "jet" and not c.barred:
            j, s = c.index, c.jet_order
            if s == 0:
                v = self.seeds.get(j, c)
            else:
                v = normalize(self.omega.D(self.image(jet(j, s - 1))) / self.DF)
        else:
            v = c
        self._table[c] = v
        return v

    def pull(self, e) -> sp.Expr:
        return substitute(e, {c: self.image(c) for c in coordinates_of(e)})

    def pull_form(self, phi: OneForm) -> OneForm:
        out = OneForm()
        for c, f in phi.coeffs.items():
            out = out + d_fun(self.image(c)) * self.pull(f)
        return out

    def pull_field_value(self, c: Coordinate) -> sp.Expr:
        return self.image(c)


def prolong_morphism(F, seeds: Mapping[int, sp.Expr], omega: Diffiety, L: int = 3,
                     extra: Mapping | None = None) -> Morphism:
    """Build the morphism and certify ``m* w`` in the diffiety for window forms of level ``L``."""
    m = Morphism(omega, F, seeds, extra)
    bad = verify_morphism(m, L)
    if bad is not None:
        raise ValueError(f"pullback of {bad} leaves the diffiety")
    return m


def verify_morphism(m: Morphism, L: int) -> OneForm | None:
    """First window form whose pullback is not in the diffiety, or None."""
    for g in m.omega.level(L):
        if member_test(m.pull_form(g), m.omega) != "member":
            return g
    return None


def verify_symmetry(m: Morphism, L: int = 2) -> str:
    """``symmetry``, ``morphism-only`` or ``fail`` on the window of level ``L``."""
    omega = m.omega
    if verify_morphism(m, L) is not None:
        return "fail"
    pulled = FormSpan([m.pull_form(g) for g in omega.level(L + 1)], omega.assumptions)
    if not all(pulled.contains(g) for g in omega.level(0)):
        return "morphism-only"
    r0 = descending_chain(omega, check=False).stationary
    if r0.dim:
        images = FormSpan([m.pull_form(t) for t in r0.basis], omega.assumptions)
        if not images.same_span(r0):
            return "morphism-only"
    return "symmetry"


def prolongation_rule_morphism(m: Morphism, omega_form: OneForm) -> bool:
    """``L_D(m* w) = D(m* x) . m*(L_D w)``."""
    D = m.omega.D
    lhs = lie_derivative(D, m.pull_form(omega_form))
    rhs = m.pull_form(lie_derivative(D, omega_form)) * m.DF
    return lhs == rhs


def prolongation_rule_variation(Z: VectorField, D: VectorField, omega_form: OneForm) -> bool:
    """``(L_D w)(Z) = D(w(Z))``."""
    return is_zero(contract(Z, lie_derivative(D, omega_form)) - D(contract(Z, omega_form)))


@dataclass
class VariationData:
    """Free data of a variation: ``z = Zx``, ``p^j = pi^j(Z)``, ``z^k = tau^k(Z)``."""

    z: sp.Expr
    p: list
    zk: list = field(default_factory=list)


def _check_zk(v: VariationData, B: StandardBasis):
    if len(v.zk) not in (0, B.K):
        raise ValueError(f"need {B.K} values z^k")
    if len(v.p) != B.mu:
        raise ValueError(f"need {B.mu} values p^j")
    if B.K and v.zk:
        r0 = FormSpan(B.tau, B.omega.assumptions)
        for e in v.zk:
            if not r0.contains(d_fun(e)):
                raise ValueError(f"z^k = {e} is not a function of the first integrals")


class _Variation(VectorField):
    def __init__(self, v: VariationData, B: StandardBasis):
        self.data = v
        self.basis = B
        self._dp: dict = {}
        super().__init__(self._coefficient, name="Z")

    def Dp(self, j: int, s: int) -> sp.Expr:
        seq = self._dp.setdefault(j, [normalize(self.data.p[j - 1])])
        while len(seq) <= s:
            seq.append(self.basis.omega.D(seq[-1]))
        return seq[s]

    def _coefficient(self, c: Coordinate) -> sp.Expr:
        omega = self.basis.omega
        z = sp.sympify(self.data.z)
        if c == omega.x:
            return z
        Dc = omega.D[c]
        cache = self.basis.__dict__.setdefault("_coordinate_expansions", {})
        if c not in cache:
            cache[c] = self.basis.expand(OneForm({c: 1, omega.x: -Dc}))
        coeffs = cache[c]
        if coeffs is None:
            raise ValueError(f"cannot expand d{c} - D({c})dx in the standard basis")
        total = Dc * z
        for label, a in coeffs.items():
            if label[0] == "tau":
                zk = self.data.zk[label[1] - 1] if self.data.zk else 0
                total += a * zk
            else:
                total += a * self.Dp(label[1], label[2])
        return total


def variation_from_data(v: VariationData, B: StandardBasis) -> VectorField:
    """``Z = z d/dx + sum z^k d/dt^k + sum D^s p^j d/dpi^j_s`` in coordinates."""
    _check_zk(v, B)
    return _Variation(v, B)


def decompose_variation(Z: VectorField, B: StandardBasis) -> VariationData:
    omega = B.omega
    return VariationData(Z[omega.x], [contract(Z, s) for s in B.seeds],
                         [contract(Z, t) for t in B.tau])


@dataclass
class VariationReport:
    ok: bool
    witness: OneForm | None
    rule_ok: bool

    def __bool__(self):
        return self.ok


def verify_variation(Z: VectorField, omega: Diffiety, L: int = 2) -> VariationReport:
    """``L_Z w`` in the diffiety for window forms; also checks the prolongation rule."""
    witness = None
    for g in omega.level(L):
        if member_test(lie_derivative(Z, g), omega, L + 1) != "member":
            witness = g
            break
    rule_ok = True
    if omega.n == 1 and witness is None:
        rule_ok = all(prolongation_rule_variation(Z, omega.D, g) for g in omega.level(L))
    return VariationReport(witness is None and rule_ok, witness, rule_ok)


class WaveError(ValueError):
    pass


def _affine_solve(eqs: Sequence, unknowns: Sequence, assumptions: AssumptionSet) -> dict:
    try:
        A, b = sp.linear_eq_to_matrix([sp.expand(sp.numer(sp.together(e))) for e in eqs],
                                      list(unknowns))
    except (sp.PolynomialError, ValueError) as exc:
        raise WaveError(f"equations are not affine in the unknowns: {exc}") from None
    if A.shape[0] != A.shape[1]:
        raise WaveError("need as many equations as unknowns")
    det = normalize(A.det())
    status, factor = nonzero_status(det, assumptions)
    if status == "zero":
        raise WaveError("singular system: the solution is not unique")
    if status == "unknown":
        raise PivotUndecided(factor, det)
    sol = A.LUsolve(b)
    return {u: normalize(s) for u, s in zip(unknowns, sol)}


@dataclass
class WaveResult:
    forward: Morphism
    inverse: Morphism
    forward_seeds: dict
    backward_seeds: dict
    certified: bool
    backward_implied: bool
    order: int
    diagnostics: list = field(default_factory=list)


def _unbar(e):
    e = sp.sympify(e)
    mapping = {}
    for c in coordinates_of(e):
        if c.barred:
            mapping[c] = (independent(1, 1) if c.coord_kind == "independent"
                          else jet(c.index, c.multi))
    return e.xreplace(mapping)


def _bar(e):
    e = sp.sympify(e)
    mapping = {}
    for c in coordinates_of(e):
        if not c.barred:
            mapping[c] = (independent(1, 1, True) if c.coord_kind == "independent"
                          else jet(c.index, c.multi, True))
    return e.xreplace(mapping)


def _solve_side(equations, m: int, barred_unknowns: bool, assumptions, seeds):
    x_u = independent(1, 1, barred_unknowns)
    ws = [jet(j, 0, barred_unknowns) for j in range(1, m + 1)]
    if seeds is not None:
        sol = {x_u: normalize(seeds[0]), **{w: normalize(s) for w, s in zip(ws, seeds[1:])}}
        resid = [substitute(e, sol) for e in equations]
        if any(r != 0 for r in resid):
            raise WaveError(f"supplied seeds leave residuals {resid}")
        return sol
    return _affine_solve(equations, [x_u] + ws, assumptions)


def _wave(forward_eqs, backward_eqs, m: int, omega: Diffiety, seeds_fwd, seeds_bwd,
          order: int) -> WaveResult:
    assumptions = omega.assumptions
    fwd = _solve_side(forward_eqs, m, True, assumptions, seeds_fwd)
    bwd = _solve_side(backward_eqs, m, False, assumptions, seeds_bwd)
    bx = independent(1, 1, True)
    m_fwd = Morphism(omega, fwd[bx], {j: fwd[jet(j, 0, True)] for j in range(1, m + 1)})
    inv_F = _unbar(bwd[omega.x])
    inv_seeds = {j: _unbar(bwd[jet(j, 0)]) for j in range(1, m + 1)}
    m_inv = Morphism(omega, inv_F, inv_seeds)
    diagnostics = []
    coords = [omega.x] + [jet(j, s) for j in range(1, m + 1) for s in range(order + 1)]
    certified = True
    for c in coords:
        if m_fwd.pull(m_inv.image(c)) != c or m_inv.pull(m_fwd.image(c)) != c:
            certified = False
            diagnostics.append(f"composition differs from identity at {c}")
    # The forward solution must also solve the backward system.
    bar_map = {bx: m_fwd.image(omega.x)}
    for j in range(1, m + 1):
        for s in range(order + 2):
            bar_map[jet(j, s, True)] = m_fwd.image(jet(j, s))
    implied = all(is_zero(substitute(e, bar_map)) for e in backward_eqs)
    return WaveResult(m_fwd, m_inv, fwd, bwd, certified, implied, order, diagnostics)


def _contact_for(m: int, assumptions) -> Diffiety:
    from .diffiety import contact_diffiety
    om = contact_diffiety(m)
    return om.with_assumptions(assumptions) if assumptions is not None else om


def wave_symmetry(W: Sequence, m: int | None = None, seeds_fwd=None, seeds_bwd=None,
                  order: int = 3, assumptions: AssumptionSet | None = None) -> WaveResult:
    """Symmetry of the contact diffiety from ``W^1 = ... = W^m = D W^1 = 0``.

    The inverse comes from the barred system ``W = bar D W^1 = 0``.  Seeds are
    solved when the equations are affine in the unknowns, otherwise supplied as
    ``(F, F^1_0, ..., F^m_0)`` tuples.
    """
    m = m or len(W)
    if len(W) != m:
        raise WaveError("need one W per dependent variable")
    omega = _contact_for(m, assumptions)
    D = contact_total_derivative(1, 1)
    bD = contact_total_derivative(1, 1, barred=True)
    W = [sp.sympify(w) for w in W]
    fwd_eqs = W + [D(W[0])]
    bwd_eqs = W + [bD(W[0])]
    return _wave(fwd_eqs, bwd_eqs, m, omega, seeds_fwd, seeds_bwd, order)


def wave_symmetry_single(W, m: int, seeds_fwd=None, seeds_bwd=None, order: int = 3,
                         assumptions: AssumptionSet | None = None) -> WaveResult:
    """Symmetry from one function ``W`` via ``W = D W = ... = D^m W = 0``."""
    omega = _contact_for(m, assumptions)
    D = contact_total_derivative(1, 1)
    bD = contact_total_derivative(1, 1, barred=True)
    W = sp.sympify(W)
    fwd, bwd = [W], [W]
    for _ in range(m):
        fwd.append(D(fwd[-1]))
        bwd.append(bD(bwd[-1]))
    try:
        return _wave(fwd, bwd, m, omega, seeds_fwd, seeds_bwd, order)
    except ValueError as exc:
        if isinstance(exc, WaveError):
            raise
        raise WaveError(str(exc)) from None


def lie_contact_display(W, result: WaveResult) -> bool:
    """For ``m = 1``: ``bar w^1_1 = -(dW/d bar x)/(dW/d bar w^1_0)`` after the forward map."""
    bx, bw = independent(1, 1, True), jet(1, 0, True)
    W = sp.sympify(W)
    ratio = -sp.diff(W, bx) / sp.diff(W, bw)
    mapping = {bx: result.forward.image(independent()), bw: result.forward.image(jet(1, 0))}
    return is_zero(substitute(ratio, mapping) - result.forward.image(jet(1, 1)))


@dataclass
class InfinitesimalConditions:
    raw: list
    z_symbol: sp.Symbol | None
    z_solution: sp.Expr | None
    reduced: list

    @property
    def satisfied(self) -> bool:
        return all(e == 0 for _, e in self.reduced)


def _raw_conditions(B: StandardBasis, Z: VectorField) -> list:
    omega = B.omega
    seeds = FormSpan(B.seeds, omega.assumptions)
    out = []
    for j, pi in enumerate(B.seeds, start=1):
        rem = seeds.reduce(lie_derivative(Z, pi))
        for c in rem.support():
            if c.is_independent:
                continue
            out.append((f"pi{j}:d{c}", rem[c]))
    return out


def infinitesimal_conditions(B: StandardBasis, p: Sequence, z=None, zk=None) -> InfinitesimalConditions:
    """Conditions for ``L_Z pi^j`` to lie in the span of the seeds.

    The multipliers are removed by reducing modulo the seeds; the remaining
    coefficients at non-independent differentials are the conditions.  With
    ``z`` omitted, a placeholder symbol is eliminated using a condition linear
    in it with certified coefficient.
    """
    zsym = None
    if z is None:
        zsym = sp.Symbol("z_")
        z = zsym
    Z = variation_from_data(VariationData(z, list(p), list(zk or [])), B)
    raw = [(lab, normalize(e)) for lab, e in _raw_conditions(B, Z)]
    solution = None
    if zsym is not None:
        best = None
        for lab, e in raw:
            coef = normalize(sp.diff(e, zsym))
            if coef == 0 or coef.has(zsym):
                continue
            status, _ = nonzero_status(coef, B.omega.assumptions)
            if status != "nonzero":
                continue
            rank = 0 if coef.is_number else 1
            if best is None or rank < best[0]:
                best = (rank, lab, e, coef)
        if best is not None:
            _, lab0, e0, coef = best
            solution = normalize(-(e0 - coef * zsym) / coef)
    reduced = []
    for lab, e in raw:
        if solution is not None:
            e = substitute(e, {zsym: solution})
        if e != 0:
            reduced.append((lab, e))
    return InfinitesimalConditions(raw, zsym, solution, reduced)


def candidate_check(B: StandardBasis, p: Sequence, z=None, zk=None) -> list:
    """Nonzero residuals of the infinitesimal conditions for concrete data."""
    return [e for _, e in infinitesimal_conditions(B, p, z, zk).reduced]


def group_finiteness_check(Z: VectorField, seeds: Sequence[OneForm], bound: int = 4,
                           assumptions: AssumptionSet | None = None) -> tuple[str, list[int]]:
    """Dims of ``span{L_Z^s pi^j : s <= S}``; ``finite-dim`` once a step adds nothing."""
    layer = list(seeds)
    collected = list(seeds)
    dims = [FormSpan(collected, assumptions).dim]
    for _ in range(bound):
        layer = [lie_derivative(Z, f) for f in layer]
        collected += layer
        dims.append(FormSpan(collected, assumptions).dim)
        if dims[-1] == dims[-2]:
            return "finite-dim", dims
    return "growing", dims
