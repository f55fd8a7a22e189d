"""Exact symbolic expressions over a coordinate chart.

Expressions are plain sympy expressions whose leaves are :class:`Coordinate`
symbols, parameter symbols, rational constants and applications of opaque
functions.  Opaque functions carry a tuple of formal-derivative orders, so
``F``, ``F'`` and ``F''`` are distinct leaves tied together by the chain rule.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping

import sympy as sp
from sympy.polys.domains import ZZ
from sympy.polys.rings import PolyRing

Expr = sp.Expr

__all__ = [
    "Coordinate",
    "Opaque",
    "opaque",
    "AssumptionSet",
    "normalize",
    "diff_partial",
    "pdiff",
    "substitute",
    "is_zero",
    "nonzero_status",
    "eval_numeric",
    "coordinates_of",
    "sort_key",
]

_KIND_RANK = {"jet": 0, "plain": 1, "independent": 2}


class Coordinate(sp.Symbol):
    """A chart coordinate.

    ``coord_kind`` is one of ``independent`` (``index`` = i), ``jet`` (``index`` = j,
    ``multi`` = multi-index tuple) or ``plain``.  Names are unique per chart,
    which is what sympy uses for identity.
    """

    def __new__(cls, name: str, kind: str = "plain", index: int = 0,
                order: tuple[int, ...] = (), barred: bool = False):
        if kind not in _KIND_RANK:
            raise ValueError(f"unknown coordinate kind {kind!r}")
        if any(o < 0 for o in order):
            raise ValueError("jet multi-index entries must be non-negative")
        obj = super().__new__(cls, name)
        obj.coord_kind = kind
        obj.index = index
        obj.multi = tuple(order)
        obj.barred = barred
        return obj

    def __getnewargs__(self):
        return (self.name, self.coord_kind, self.index, self.multi, self.barred)

    @property
    def jet_order(self) -> int:
        return sum(self.multi)

    @property
    def is_independent(self) -> bool:
        return self.coord_kind == "independent"


def sort_key(c: Coordinate):
    """Display and pivot order: jets by (dependent index, order), then plain, then x."""
    return (int(c.barred), _KIND_RANK[c.coord_kind], c.index, c.jet_order, c.multi, c.name)


class Opaque(sp.Function):
    """Application of an opaque function; subclasses are made by :func:`opaque`."""

    base = ""
    orders: tuple[int, ...] = ()

    def fdiff(self, argindex=1):
        o = list(self.orders)
        o[argindex - 1] += 1
        return opaque(self.base, tuple(o))(*self.args)


def _display_name(base: str, orders: tuple[int, ...]) -> str:
    if len(orders) == 1:
        k = orders[0]
        return base + ("'" * k if k <= 3 else f"^({k})")
    if not any(orders):
        return base
    return f"{base}[{','.join(map(str, orders))}]"


def opaque(base: str, orders: tuple[int, ...] | int) -> type[Opaque]:
    """Return the function class for ``base`` differentiated ``orders`` times.

    An integer means an underived function of that arity.
    """
    if isinstance(orders, int):
        orders = (0,) * orders
    return _opaque_class(base, tuple(int(o) for o in orders))


# One class per (base, orders): equal applications must share their class.
@lru_cache(maxsize=None)
def _opaque_class(base: str, orders: tuple[int, ...]) -> type[Opaque]:
    return type(_display_name(base, orders), (Opaque,),
                {"base": base, "orders": orders, "nargs": len(orders)})


def coordinates_of(e) -> list[Coordinate]:
    """Coordinates occurring in ``e`` (inside opaque arguments too), sorted."""
    return sorted((s for s in sp.sympify(e).free_symbols if isinstance(s, Coordinate)),
                  key=sort_key)


def _has_opaque(e) -> bool:
    return bool(e.atoms(Opaque))


def _has_parameter(e) -> bool:
    return any(not isinstance(s, Coordinate) for s in e.free_symbols)


def _normalize_args(e):
    if not e.atoms(Opaque):
        return e
    return e.replace(lambda a: isinstance(a, Opaque),
                     lambda a: a.func(*[normalize(arg) for arg in a.args]))


def normalize(e) -> Expr:
    """Canonical rational normal form: expanded numerator over denominator, gcd removed."""
    e = sp.sympify(e)
    if e.is_Atom:
        return e
    return _normalize_cached(e)


_LARGE_TERMS = 8


def _large(e) -> bool:
    """Sums (or products containing sums) big enough for differentiation in a polynomial ring."""
    if e.is_Add:
        return len(e.args) > _LARGE_TERMS
    return e.is_Mul and any(a.is_Add and len(a.args) > _LARGE_TERMS for a in e.args)


@lru_cache(maxsize=1 << 16)
def _normalize_cached(e) -> Expr:
    e = _normalize_args(e)
    frac = _as_frac(e)
    if frac is not None:
        # Already reduced; the ring pass below only fixes the canonical form.
        num, den = frac[0].as_expr(), frac[1].as_expr()
    else:
        num, den = e.as_numer_denom()
    if den.is_Number:
        return sp.expand(num) / den if den != 1 else sp.expand(num)
    _, (P, Q) = sp.sring((num, den))
    if len(Q) == 1:
        P, Q = _cancel_monomial(P, Q)
    else:
        P, Q = P.cancel(Q)
    return P.as_expr() / Q.as_expr()


def _as_frac(e):
    """``e`` as a reduced pair (numerator, denominator) of ring polynomials.

    Built bottom up so nested quotients never expand as expressions; gcds are
    taken only where a denominator is involved. Returns None when ``e`` is not
    rational in symbols and opaque applications.
    """
    gens = set()
    stack = [e]
    while stack:
        a = stack.pop()
        if a.is_Symbol or isinstance(a, Opaque):
            gens.add(a)
        elif a.is_Add or a.is_Mul:
            stack.extend(a.args)
        elif a.is_Pow:
            if not a.exp.is_Integer:
                return None
            stack.append(a.base)
        elif not a.is_Rational:
            return None
    ring = PolyRing(tuple(sorted(gens, key=sp.default_sort_key)), ZZ)
    one = ring.one
    lookup = dict(zip(ring.symbols, ring.gens))
    memo: dict = {}

    def add(u, v):
        (a, b), (c, d) = u, v
        if d == one:
            return a + c * b, b
        if b == one:
            return c + a * d, d
        if b == d:
            return (a + c).cancel(b)
        return (a * d + c * b).cancel(b * d)

    def mul(u, v):
        (a, b), (c, d) = u, v
        if b == one and d == one:
            return a * c, one
        return (a * c).cancel(b * d)

    def conv(a):
        if a in memo:
            return memo[a]
        if a.is_Rational:
            out = ring(int(a.p)), ring(int(a.q))
        elif a in lookup:
            out = lookup[a], one
        elif a.is_Add:
            out = ring.zero, one
            for t in a.args:
                out = add(out, conv(t))
        elif a.is_Mul:
            out = one, one
            for t in a.args:
                out = mul(out, conv(t))
        else:
            num, den = conv(a.base)
            n = int(a.exp)
            out = (num ** n, den ** n) if n >= 0 else (den ** -n).cancel(num ** -n)
        memo[a] = out
        return out

    return conv(e)


def _cancel_monomial(P, Q):
    """Cancel against a one-term denominator without a polynomial gcd."""
    (qmon, qc), = Q.terms()
    g = list(qmon)
    content = abs(qc)
    for mon, c in P.terms():
        g = [min(a, b) for a, b in zip(g, mon)]
        content = math.gcd(content, int(c))
    if qc < 0:
        content = -content
    ring = P.ring
    g = tuple(g)
    newP = ring({tuple(a - b for a, b in zip(mon, g)): c // content for mon, c in P.terms()})
    newQ = ring({tuple(a - b for a, b in zip(qmon, g)): qc // content})
    return newP, newQ


@lru_cache(maxsize=1 << 16)
def _diff_cached(e, c) -> Expr:
    if _large(e):
        return _ring_diff(e, c)
    return sp.diff(e, c)


def _ring_diff(e, c) -> Expr:
    """Chain rule over the polynomial generators of ``e``; fast on large sums."""
    num, den = e.as_numer_denom()
    _, (P, Q) = sp.sring((num, den))
    ring = P.ring
    const_den = Q.is_ground
    out = sp.Integer(0)
    for g, sym in zip(ring.gens, ring.symbols):
        dg = _diff_cached(sym, c) if not sym.is_Atom else (sp.Integer(1) if sym == c else sp.Integer(0))
        if dg == 0:
            continue
        dP = P.diff(g)
        top = dP if const_den else dP * Q - P * Q.diff(g)
        out += top.as_expr() * dg
    if const_den:
        return out / Q.as_expr()
    return out / Q.as_expr() ** 2


def pdiff(e, c) -> Expr:
    """Raw partial derivative (not normalized), memoized."""
    return _diff_cached(sp.sympify(e), c)


def diff_partial(e, c: Coordinate) -> Expr:
    return normalize(pdiff(e, c))


def substitute(e, bindings: Mapping) -> Expr:
    """Simultaneous substitution followed by normalize."""
    e = sp.sympify(e)
    if bindings:
        e = e.xreplace({k: sp.sympify(v) for k, v in bindings.items()})
    return normalize(e)


def is_zero(e, assumptions: "AssumptionSet | None" = None) -> bool:
    # Declared factors are nonvanishing, so they never make a nonzero numerator vanish.
    return sp.numer(normalize(e)) == 0


def _factor_key(f) -> Expr:
    f = sp.expand(f)
    return f if f.could_extract_minus_sign() is False else sp.expand(-f)


def _factors(e) -> list[Expr]:
    num = sp.numer(normalize(e))
    if num == 0:
        return []
    _, facs = sp.factor_list(num)
    return [_factor_key(f) for f, _ in facs]


class AssumptionSet:
    """Set of expressions declared nonvanishing, stored as irreducible factors.

    A product is nonvanishing iff all its factors are, so membership of a product
    is decided factor by factor.
    """

    __slots__ = ("factors", "sources")

    def __init__(self, exprs: Iterable = ()):
        factors: set = set()
        sources: list = []
        for e in exprs:
            e = normalize(e)
            if sp.numer(e) == 0:
                raise ValueError("cannot assume the zero expression is nonvanishing")
            sources.append(e)
            factors.update(f for f in _factors(e) if not f.is_number)
        self.factors = frozenset(factors)
        self.sources = tuple(sources)

    def with_(self, *exprs) -> "AssumptionSet":
        return AssumptionSet(self.sources + tuple(exprs))

    def covers(self, f) -> bool:
        return _factor_key(f) in self.factors

    def __contains__(self, e) -> bool:
        return all(f.is_number or f in self.factors for f in _factors(e)) and not is_zero(e)

    def __iter__(self):
        return iter(self.sources)

    def __len__(self):
        return len(self.sources)

    def __repr__(self):
        return f"AssumptionSet({list(self.sources)})"


EMPTY = AssumptionSet()


def nonzero_status(e, assumptions: AssumptionSet | None = None,
                   name_factor: bool = True) -> tuple[str, Expr | None]:
    """Classify ``e`` as ``("zero", None)``, ``("nonzero", None)`` or ``("unknown", factor)``.

    Factors free of opaque functions and parameters count as generically nonzero.
    With ``name_factor=False`` an undecided case returns the residual numerator
    instead of naming one irreducible factor.
    """
    assumptions = assumptions or EMPTY
    e = normalize(e)
    if e == 0:
        return "zero", None
    if e.is_number or not (e.atoms(Opaque) or _has_parameter(e)):
        return "nonzero", None
    num = sp.numer(e)
    if num == 0:
        return "zero", None
    if num.is_number:
        return "nonzero", None
    status, rest = _numerator_status(num, assumptions.factors)
    if status == "unknown" and name_factor:
        return status, _name_factor(rest, assumptions.factors)
    return status, rest


def _undecided(e) -> bool:
    return _has_parameter(e) or _has_opaque(e)


@lru_cache(maxsize=4096)
def _numerator_status(num, covered: frozenset) -> tuple[str, Expr | None]:
    # Cheap pass: divide out covered factors and monomial content, then factor the rest.
    gens_src = [num] + [f for f in covered if f.free_symbols or f.atoms(Opaque)]
    ring_, polys = sp.sring(gens_src)
    P, divisors = polys[0], polys[1:]
    progress = True
    while progress and not P.is_ground:
        progress = False
        for f in divisors:
            if f.is_ground:
                continue
            q, r = P.div(f)
            if not r:
                P, progress = q, True
    if not P.is_ground and len(P) > 0:
        mon = [min(m[i] for m in P.monoms()) for i in range(ring_.ngens)]
        for g, k in zip(ring_.gens, mon):
            if k:
                atom = g.as_expr()
                if _undecided(atom) and atom not in covered:
                    return "unknown", atom
                P = P.exquo(g ** k)
    rest = P.as_expr()
    if rest.is_number or not _undecided(rest):
        return "nonzero", None
    # Covered factors are gone, so some irreducible factor of the rest is undecided.
    return "unknown", rest


def _name_factor(rest, covered: frozenset):
    for f in _factors(rest):
        if not f.is_number and f not in covered and _undecided(f):
            return f
    return rest


def eval_numeric(e, point: Mapping, interp: Mapping[str, Callable] | None = None) -> float:
    """Evaluate ``e`` at a rational point.

    ``interp`` maps an opaque base name to a callable building a sympy expression
    from symbol arguments (polynomials keep derivative values exact).
    """
    interp = interp or {}
    e = sp.sympify(e)

    def _interpret(a):
        if a.base not in interp:
            raise ValueError(f"no interpretation for opaque function {a.base!r}")
        ts = sp.symbols(f"_t0:{len(a.orders)}")
        body = sp.sympify(interp[a.base](*ts))
        for t, k in zip(ts, a.orders):
            if k:
                body = sp.diff(body, t, k)
        return body.xreplace(dict(zip(ts, a.args)))

    if e.atoms(Opaque):
        e = e.replace(lambda a: isinstance(a, Opaque), _interpret)
    vals = {}
    for k, v in point.items():
        k = sp.Symbol(k) if isinstance(k, str) else k
        vals[k] = sp.Rational(v.numerator, v.denominator) if isinstance(v, Fraction) else sp.nsimplify(v)
    e = e.xreplace(vals)
    if e.free_symbols:
        raise ValueError(f"unbound leaves: {sorted(map(str, e.free_symbols))}")
    if e.has(sp.zoo, sp.nan, sp.oo):
        raise ZeroDivisionError("division by numeric zero")
    value = float(e)
    if math.isnan(value):
        raise ZeroDivisionError("division by numeric zero")
    return value
