"""Graded dimensions, Hilbert polynomial fits, injectivity of multiplication maps and the Cartan test."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Callable, Mapping, Sequence

import sympy as sp

from .diffiety import Diffiety, independent, jet
from .geometry import OneForm, VectorField, lie_derivative
from .linalg import FormSpan, _Eliminator, kernel
from .symkernel import EMPTY, AssumptionSet, Coordinate, coordinates_of, normalize, substitute

__all__ = [
    "GradedDims",
    "graded_dims",
    "HilbertFit",
    "hilbert_fit",
    "InjectivityReport",
    "injectivity_window",
    "SolvedSystem",
    "CartanReport",
    "cartan_test",
    "cartan_brute_force",
    "CartanError",
]


@dataclass
class GradedDims:
    dims: list

    def __iter__(self):
        return iter(self.dims)

    def __len__(self):
        return len(self.dims)


def _as_level_fn(levels, assumptions: AssumptionSet | None = None) -> Callable[[int], FormSpan]:
    if isinstance(levels, Diffiety):
        return lambda l: levels.window(l) if l >= 0 else FormSpan()
    cache: dict = {}

    def fn(l):
        if l < 0:
            return FormSpan()
        if l not in cache:
            v = levels(l)
            cache[l] = v if isinstance(v, FormSpan) else FormSpan(v, assumptions)
        return cache[l]
    return fn


def graded_dims(levels, L: int, assumptions: AssumptionSet | None = None) -> GradedDims:
    """``rank level(l) - rank level(l-1)`` for ``l = 0..L``.

    ``assumptions`` certifies pivots when ``levels`` returns bare form lists.
    """
    fn = _as_level_fn(levels, assumptions)
    ranks = [fn(l).dim for l in range(L + 1)]
    return GradedDims([ranks[0]] + [ranks[l] - ranks[l - 1] for l in range(1, L + 1)])


@dataclass
class HilbertFit:
    """``dim M_l = sum_k e[k] * C(l, k)`` for ``l >= onset``; ``e[nu]`` is the leading coefficient."""

    nu: int
    e: list
    onset: int | None
    degenerate: bool = False
    inconclusive: bool = False

    @property
    def mu(self) -> int:
        return self.e[self.nu] if self.nu >= 0 else 0

    def predict(self, l: int) -> int:
        return sum(ek * comb(l, k) for k, ek in enumerate(self.e))


def _gen_binom(n: int, k: int) -> Fraction:
    out = Fraction(1)
    for i in range(k):
        out = out * (n - i) / (i + 1)
    return out


def _fits(values: Sequence[int], degree: int) -> bool:
    diffs = list(values)
    for _ in range(degree + 1):
        diffs = [b - a for a, b in zip(diffs, diffs[1:])]
    return all(d == 0 for d in diffs)


def hilbert_fit(g) -> HilbertFit:
    """Least-degree exact fit of the longest tail, with at least ``degree + 2`` points."""
    dims = list(g.dims if isinstance(g, GradedDims) else g)
    L = len(dims) - 1
    if all(d == 0 for d in dims):
        return HilbertFit(-1, [], 0, degenerate=True)
    for nu in range(0, len(dims) - 1):
        onset = None
        for start in range(0, L - nu):
            if _fits(dims[start:], nu):
                onset = start
                break
        if onset is None:
            continue
        tail = dims[onset:]
        # Newton form around the onset, then values at 0..nu.
        newton = []
        d = list(tail)
        for _ in range(nu + 1):
            newton.append(d[0])
            d = [b - a for a, b in zip(d, d[1:])]
        vals = [sum(Fraction(c) * _gen_binom(l - onset, k) for k, c in enumerate(newton))
                for l in range(nu + 1)]
        e = []
        d = vals
        for _ in range(nu + 1):
            e.append(d[0])
            d = [b - a for a, b in zip(d, d[1:])]
        if any(ek.denominator != 1 for ek in e):
            return HilbertFit(nu, [], onset, inconclusive=True)
        e = [int(ek) for ek in e]
        while e and e[-1] == 0:
            e.pop()
        if not e:
            return HilbertFit(-1, [], onset, degenerate=True)
        return HilbertFit(len(e) - 1, e, onset)
    return HilbertFit(-1, [], None, inconclusive=True)


@dataclass
class InjectivityReport:
    injective: dict
    classification: str
    window: int

    def first_injective(self, i: int) -> int | None:
        flags = self.injective[i]
        for l0 in range(len(flags)):
            if all(flags[l0:]):
                return l0
        return None


def _N(fn, fields, i: int, l: int) -> FormSpan:
    """``level(l-1) + sum_{k<=i} L_{Z_k} level(l-1)``."""
    prev = fn(l - 1)
    forms = list(prev.basis)
    for Z in fields[:i]:
        forms += [lie_derivative(Z, b) for b in prev.basis]
    return FormSpan(forms, prev.assumptions)


def injectivity_window(levels, fields: Sequence[VectorField], L: int,
                       assumptions: AssumptionSet | None = None) -> InjectivityReport:
    """Injectivity of ``Z_{i+1}: M(i)_l -> M(i)_{l+1}`` for ``l < L``.

    The map is injective at ``l`` iff the forms of ``level(l)`` carried by
    ``L_{Z_{i+1}}`` into ``N_{l+1}`` span no more than ``N_l``.
    """
    fn = _as_level_fn(levels, assumptions)
    injective: dict = {}
    for i in range(len(fields)):
        Z = fields[i]
        flags = []
        for l in range(L):
            cur = fn(l)
            n_here = _N(fn, fields, i, l)
            n_next = _N(fn, fields, i, l + 1)
            basis = cur.basis
            images = [n_next.reduce(lie_derivative(Z, b)) for b in basis]
            combos = kernel(images, cur.assumptions)
            kept = [sum((basis[k] * c for k, c in combo.items()), OneForm()) for combo in combos]
            kept_span = FormSpan(kept + n_here.basis, cur.assumptions)
            flags.append(kept_span.dim == FormSpan(n_here.basis, cur.assumptions).dim)
        injective[i] = flags
    return InjectivityReport(injective, _classify(injective, L), L)


def _classify(injective: dict, L: int) -> str:
    if not injective or L == 0:
        return "none-in-window"
    if all(all(f) for f in injective.values()):
        return "regular"
    if all(all(f[1:]) for f in injective.values()):
        return "quasiregular"
    if all(f and f[-1] for f in injective.values()):
        return "ordinary"
    return "none-in-window"


class CartanError(ValueError):
    pass


@dataclass
class SolvedSystem:
    """First-order system ``w^j_i = f[(i, j)]`` resolved class by class.

    ``J_i`` holds the dependents resolved in direction ``i``; the rest form ``K_i``.
    """

    n: int
    m: int
    rhs: dict

    def J(self, i: int) -> set:
        return {j for (ii, j) in self.rhs if ii == i}

    def K(self, i: int) -> set:
        return set(range(1, self.m + 1)) - self.J(i)

    @property
    def sigma(self) -> tuple:
        return tuple(len(self.K(i)) for i in range(1, self.n + 1))

    def first(self, j: int, i: int) -> Coordinate:
        e = [0] * self.n
        e[i - 1] = 1
        return jet(j, tuple(e))

    def second(self, j: int, a: int, b: int) -> Coordinate:
        e = [0] * self.n
        e[a - 1] += 1
        e[b - 1] += 1
        return jet(j, tuple(e))

    def x(self, i: int) -> Coordinate:
        return independent(i, self.n)

    def w(self, j: int) -> Coordinate:
        return jet(j, (0,) * self.n)

    def validate(self):
        for (i, j) in self.rhs:
            if not (1 <= i <= self.n and 1 <= j <= self.m):
                raise CartanError(f"equation index ({i},{j}) out of range")
        for i in range(1, self.n):
            if not self.J(i) <= self.J(i + 1):
                raise CartanError(f"J_{i} is not contained in J_{i + 1}: the resolution order is violated")
        for (i, j), f in self.rhs.items():
            for c in coordinates_of(f):
                if c.coord_kind != "jet" or c.jet_order == 0:
                    continue
                if c.jet_order > 1:
                    raise CartanError(f"f^{j}_{i} depends on the second-order jet {c}")
                direction = c.multi.index(1) + 1
                if direction > i or (direction == i and c.index in self.J(i)):
                    raise CartanError(f"f^{j}_{i} depends on {c}, not allowed at class {i}")
                if direction < i and c.index in self.J(direction):
                    raise CartanError(f"f^{j}_{i} depends on the resolved derivative {c}")


@dataclass
class CartanReport:
    sigma: tuple
    sigma_bar: tuple
    expected: tuple
    passed: bool
    free: dict = field(default_factory=dict)

    def line(self) -> str:
        s = ",".join(map(str, self.sigma))
        sb = ",".join(map(str, self.sigma_bar))
        return f"{'PASS' if self.passed else 'FAIL'} σ=({s}) σ̄=({sb})"


def _class(c: Coordinate) -> int:
    for i, a in enumerate(c.multi, start=1):
        if a:
            return i
    return 0


def _prolonged_rows(S: SolvedSystem) -> tuple[list, list]:
    """Linear equations in the second-order jets from ``D_i(w^j_k - f^j_k) = 0``."""
    first_subs = {S.first(j, i): f for (i, j), f in S.rhs.items()}

    def total(i: int, f):
        f = sp.sympify(f)
        out = sp.diff(f, S.x(i))
        for c in coordinates_of(f):
            if c.coord_kind != "jet":
                continue
            if c.jet_order == 0:
                out += sp.diff(f, c) * S.first(c.index, i)
            else:
                d = c.multi.index(1) + 1
                out += sp.diff(f, c) * S.second(c.index, i, d)
        return out

    rows = []
    for (k, j), f in sorted(S.rhs.items()):
        for i in range(1, S.n + 1):
            e = S.second(j, k, i) - total(i, f)
            e = substitute(e, first_subs)
            rows.append(e)
    unknowns = sorted({S.second(j, a, b) for j in range(1, S.m + 1)
                       for a in range(1, S.n + 1) for b in range(a, S.n + 1)},
                      key=lambda c: (-_class(c), c.index, c.multi))
    return rows, unknowns


def _linear_part(row, unknowns) -> dict:
    out = {}
    for u in unknowns:
        c = normalize(sp.diff(row, u))
        if c != 0:
            out[u] = c
    return out


def cartan_test(S: SolvedSystem, assumptions: AssumptionSet | None = None) -> CartanReport:
    """Count freely choosable second-order jets per class after one prolongation."""
    S.validate()
    rows, unknowns = _prolonged_rows(S)
    key = lambda c: (-_class(c), c.index, c.multi)
    elim = _Eliminator(assumptions or EMPTY, key)
    elim.insert((_linear_part(r, unknowns), {}) for r in rows)
    pivots = set(elim.pivots)
    free: dict = {}
    for u in unknowns:
        if u not in pivots:
            free.setdefault(_class(u), []).append(u)
    sigma = S.sigma
    sigma_bar = tuple(len(free.get(k, [])) for k in range(1, S.n + 1))
    expected = tuple(sum(sigma[k - 1:]) for k in range(1, S.n + 1))
    return CartanReport(sigma, sigma_bar, expected, sigma_bar == expected,
                        {k: [str(u) for u in v] for k, v in free.items()})


def cartan_brute_force(S: SolvedSystem, seed: int = 0, trials: int = 3) -> tuple:
    """``sigma_bar`` from ranks of column blocks at random rational specializations."""
    rows, unknowns = _prolonged_rows(S)
    rng = random.Random(seed)
    # Generic rank of each column block: the maximum over random points.
    ranks = [0] * S.n
    sizes = [len([u for u in unknowns if _class(u) >= k]) for k in range(1, S.n + 1)]
    coeff = [[sp.diff(r, u) for u in unknowns] for r in rows]
    leaves = set()
    for row in coeff:
        for e in row:
            leaves |= sp.sympify(e).atoms(sp.Function, sp.Symbol)
    funcs = sorted((a for a in leaves if isinstance(a, sp.Function)), key=str, reverse=True)
    for _ in range(trials):
        point = {a: sp.Rational(rng.randint(-50, 50), rng.randint(1, 9)) for a in leaves}
        mat = []
        for row in coeff:
            vals = []
            for e in row:
                e = sp.sympify(e)
                for fa in funcs:
                    e = e.xreplace({fa: point[fa]})
                vals.append(e.xreplace(point))
            mat.append(vals)
        if not mat:
            break
        M = sp.Matrix(mat)
        for k in range(1, S.n + 1):
            cols = [idx for idx, u in enumerate(unknowns) if _class(u) >= k]
            ranks[k - 1] = max(ranks[k - 1], M[:, cols].rank())
    free_ge = [size - r for size, r in zip(sizes, ranks)]
    return tuple(free_ge[k] - (free_ge[k + 1] if k + 1 < S.n else 0) for k in range(S.n))
