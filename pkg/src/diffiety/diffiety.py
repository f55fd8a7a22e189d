"""Diffieties given by generator forms and total derivatives, on finite order windows."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import sympy as sp

from .geometry import OneForm, VectorField, contract, lie_derivative
from .linalg import FormSpan
from .symkernel import EMPTY, AssumptionSet, Coordinate, coordinates_of, is_zero

__all__ = [
    "independent",
    "jet",
    "plain",
    "Diffiety",
    "contact_diffiety",
    "from_resolved_ode",
    "member_test",
    "lift",
    "good_filtration_check",
    "FiltrationReport",
]


def _tag(barred: bool) -> str:
    return "b" if barred else ""


def independent(i: int = 1, n: int = 1, barred: bool = False) -> Coordinate:
    name = "x" if n == 1 else f"x{i}"
    return Coordinate(_tag(barred) + name, "independent", i, (), barred)


def jet(j: int, order, barred: bool = False) -> Coordinate:
    """Jet coordinate ``w^j`` with derivative order ``s`` (int) or a multi-index tuple."""
    if isinstance(order, int):
        order = (order,)
    order = tuple(order)
    if len(order) == 1:
        name = f"w{j}_{order[0]}"
    else:
        name = f"w{j}_" + ".".join(map(str, order))
    return Coordinate(_tag(barred) + name, "jet", j, order, barred)


def plain(name: str) -> Coordinate:
    return Coordinate(name, "plain")


def _shift(order: tuple, i: int) -> tuple:
    o = list(order)
    o[i - 1] += 1
    return tuple(o)


def contact_total_derivative(i: int, n: int, barred: bool = False,
                             overrides: Mapping | None = None) -> VectorField:
    """Total derivative ``D_i`` of the jet space; ``overrides`` fixes selected coefficients."""
    overrides = dict(overrides or {})

    def rule(c: Coordinate):
        if c in overrides:
            return overrides[c]
        if c.barred != barred:
            return 0
        if c.coord_kind == "independent":
            return 1 if c.index == i else 0
        if c.coord_kind == "jet":
            return jet(c.index, _shift(c.multi, i), barred)
        return 0

    name = ("bD" if barred else "D") + ("" if n == 1 else str(i))
    return VectorField(rule, name=name, in_H=True)


@dataclass
class Diffiety:
    """Generator presentation of a diffiety.

    ``level(l)`` lists forms spanning the ``l``-th filtration term.  By default it is
    the generators together with all iterated Lie derivatives of order at most ``l``
    along the total derivatives, taken in non-decreasing index order (the total
    derivatives are assumed to commute).
    """

    name: str
    n: int
    independents: list
    generators: list
    total_derivatives: list
    assumptions: AssumptionSet = EMPTY
    level_fn: Callable[[int], list] | None = None
    m: int = 0
    rhs: dict = field(default_factory=dict)
    parameters: tuple = ()
    _levels: dict = field(default_factory=dict, repr=False)
    _frontier: list = field(default_factory=list, repr=False)

    @property
    def D(self) -> VectorField:
        if self.n != 1:
            raise ValueError("D is defined for one independent variable only")
        return self.total_derivatives[0]

    @property
    def x(self) -> Coordinate:
        return self.independents[0]

    def level(self, l: int) -> list[OneForm]:
        if l < 0:
            return []
        if self.level_fn is not None:
            return self.level_fn(l)
        if l not in self._levels:
            if not self._levels:
                self._levels[0] = list(self.generators)
                self._frontier = [(g, 1) for g in self.generators]
            top = max(self._levels)
            while top < l:
                new = []
                for g, first in self._frontier:
                    for i in range(first, self.n + 1):
                        new.append((lie_derivative(self.total_derivatives[i - 1], g), i))
                self._frontier = new
                self._levels[top + 1] = self._levels[top] + [f for f, _ in new]
                top += 1
        return self._levels[l]

    def window(self, l: int, key=None) -> FormSpan:
        if key is None:
            return FormSpan(self.level(l), self.assumptions)
        return FormSpan(self.level(l), self.assumptions, key)

    def with_assumptions(self, assumptions: AssumptionSet) -> "Diffiety":
        return Diffiety(self.name, self.n, self.independents, self.generators,
                        self.total_derivatives, assumptions, self.level_fn, self.m,
                        self.rhs, self.parameters)

    def with_levels(self, level_fn: Callable[[int], list], name: str | None = None) -> "Diffiety":
        return Diffiety(name or self.name, self.n, self.independents, self.generators,
                        self.total_derivatives, self.assumptions, level_fn, self.m,
                        self.rhs, self.parameters)

    def substitute(self, bindings: Mapping, name: str | None = None,
                   assumptions: AssumptionSet | None = None) -> "Diffiety":
        """Specialize opaque functions or parameters (``bindings`` act by xreplace)."""
        from .symkernel import substitute as _sub

        def sub_replace(e):
            e = sp.sympify(e)
            for k, v in bindings.items():
                if isinstance(k, type):
                    e = e.replace(k, v)
                else:
                    e = e.xreplace({k: v})
            return _sub(e, {})

        gens = [OneForm({c: sub_replace(v) for c, v in g.coeffs.items()}) for g in self.generators]
        tds = []
        for Dv in self.total_derivatives:
            tds.append(VectorField((lambda Dv: lambda c: sub_replace(Dv[c]))(Dv),
                                   name=Dv.name, in_H=True))
        rhs = {j: sub_replace(e) for j, e in self.rhs.items()}
        return Diffiety(name or self.name, self.n, self.independents, gens, tds,
                        assumptions if assumptions is not None else self.assumptions,
                        None, self.m, rhs, self.parameters)

    def check_annihilation(self, l: int = 0) -> bool:
        """``contract(D_i, form) = 0`` for every form of ``level(l)`` and every ``i``."""
        return all(is_zero(contract(Dv, g)) for Dv in self.total_derivatives for g in self.level(l))


def lift(level_fn: Callable[[int], list], c: int) -> Callable[[int], list]:
    """The ``c``-lift: new ``level(l)`` is old ``level(l + c)``."""
    if c < 0:
        raise ValueError("lift count must be non-negative")
    return lambda l: level_fn(l + c) if l >= 0 else []


def contact_diffiety(m: int, L: int | None = None, n: int = 1, barred: bool = False) -> Diffiety:
    """Empty system: contact forms ``dw - sum w_{+i} dx_i`` on the jet space of ``m`` functions.

    ``L`` is accepted for interface symmetry; levels are generated lazily.
    """
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    xs = [independent(i, n, barred) for i in range(1, n + 1)]
    zero = (0,) * n
    gens = []
    for j in range(1, m + 1):
        w = jet(j, zero, barred)
        coeffs = {w: sp.Integer(1)}
        for i in range(1, n + 1):
            coeffs[xs[i - 1]] = -jet(j, _shift(zero, i), barred)
        gens.append(OneForm(coeffs))
    tds = [contact_total_derivative(i, n, barred) for i in range(1, n + 1)]
    return Diffiety(f"contact(m={m},n={n})", n, xs, gens, tds, m=m)


def contact_form(j: int, s: int, barred: bool = False) -> OneForm:
    """``dw^j_s - w^j_{s+1} dx`` for one independent variable."""
    return OneForm({jet(j, s, barred): 1, independent(1, 1, barred): -jet(j, s + 1, barred)})


def from_resolved_ode(m: int, rhs: Mapping[int, sp.Expr], assumptions: AssumptionSet | None = None,
                      name: str = "system", parameters: Sequence = ()) -> Diffiety:
    """Underdetermined ODE system with ``dw^j/dx = rhs[j]`` for the resolved ``j``.

    Resolved dependents keep only the coordinate ``w^j_0``; right-hand sides may use
    ``x``, the order-zero coordinates of all dependents and arbitrary jets of the
    unresolved ones.
    """
    x = independent()
    resolved = {j: sp.sympify(e) for j, e in rhs.items()}
    for j in resolved:
        if not 1 <= j <= m:
            raise ValueError(f"resolved index {j} outside 1..{m}")
    for j, e in resolved.items():
        for c in coordinates_of(e):
            if c.coord_kind == "jet" and c.index in resolved and c.jet_order > 0:
                raise ValueError(f"right-hand side for w{j} references eliminated coordinate {c}")
            if c.barred:
                raise ValueError("right-hand sides may not use barred coordinates")
    overrides = {jet(j, 0): e for j, e in resolved.items()}
    base = contact_total_derivative(1, 1)

    def rule(c: Coordinate):
        if c.coord_kind == "jet" and c.index in resolved and c.jet_order > 0:
            raise ValueError(f"coordinate {c} is eliminated by the equation for w{c.index}")
        if c in overrides:
            return overrides[c]
        return base[c]

    D = VectorField(rule, name="D", in_H=True)
    gens = []
    for j in range(1, m + 1):
        w = jet(j, 0)
        top = overrides[w] if w in overrides else jet(j, 1)
        gens.append(OneForm({w: 1, x: -top}))
    return Diffiety(name, 1, [x], gens, [D], assumptions or EMPTY, m=m, rhs=resolved,
                    parameters=tuple(parameters))


def member_test(phi: OneForm, omega: Diffiety, L: int | None = None) -> str:
    """``member``, ``nonmember`` or ``unknown-at-window``."""
    if omega.n == 1:
        return "member" if is_zero(contract(omega.D, phi)) else "nonmember"
    if L is None:
        L = max(phi.max_order(), 0)
    if omega.window(L).contains(phi):
        return "member"
    if omega.window(L + 1).contains(phi):
        return "unknown-at-window"
    if any(not is_zero(contract(Dv, phi)) for Dv in omega.total_derivatives):
        return "nonmember"
    return "unknown-at-window"


@dataclass
class FiltrationReport:
    inclusion_ok: bool
    first_failure: int | None
    equality_from: int | None
    dims: list

    @property
    def good(self) -> bool:
        return self.inclusion_ok and self.equality_from is not None


def good_filtration_check(omega: Diffiety, L: int) -> FiltrationReport:
    """Check ``L_H level(l) in level(l+1)`` for ``l < L`` and find where equality starts."""
    if L < 2:
        raise ValueError("window must be at least 2")
    spans = [omega.window(l) for l in range(L + 1)]
    dims = [s.dim for s in spans]
    inclusion_ok, first_failure = True, None
    equal = []
    for l in range(L):
        images = [lie_derivative(Dv, g) for Dv in omega.total_derivatives for g in spans[l].basis]
        ok = spans[l + 1].includes(spans[l]) and all(spans[l + 1].contains(f) for f in images)
        if not ok and inclusion_ok:
            inclusion_ok, first_failure = False, l
        equal.append(spans[l].extended(images).dim == dims[l + 1])
    equality_from = None
    for l in range(L):
        if all(equal[l:]):
            equality_from = l
            break
    return FiltrationReport(inclusion_ok, first_failure, equality_from, dims)
