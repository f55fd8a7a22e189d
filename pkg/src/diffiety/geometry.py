"""Differential 1-forms, 2-forms and vector fields with symbolic coefficients."""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import sympy as sp

from .symkernel import Coordinate, coordinates_of, normalize, pdiff, sort_key, substitute

__all__ = [
    "OneForm",
    "TwoForm",
    "VectorField",
    "d_fun",
    "exterior_d",
    "contract",
    "contract2",
    "lie_derivative",
    "lie_bracket",
]

_ZERO = sp.Integer(0)


def _clean(coeffs: Mapping, already_normal: bool = False) -> dict:
    out = {}
    for c, v in coeffs.items():
        v = v if already_normal else normalize(v)
        if v != 0:
            out[c] = v
    return out


class OneForm:
    """Finite combination ``sum f_c dc`` keyed by coordinate."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Mapping | None = None, _normal: bool = False):
        self.coeffs = _clean(coeffs or {}, _normal)

    @classmethod
    def d(cls, c: Coordinate) -> "OneForm":
        return cls({c: sp.Integer(1)}, _normal=True)

    def __getitem__(self, c) -> sp.Expr:
        return self.coeffs.get(c, _ZERO)

    def support(self) -> list[Coordinate]:
        return sorted(self.coeffs, key=sort_key)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __bool__(self):
        return bool(self.coeffs)

    def __add__(self, other: "OneForm") -> "OneForm":
        if not isinstance(other, OneForm):
            return NotImplemented
        out = dict(self.coeffs)
        for c, v in other.coeffs.items():
            out[c] = out.get(c, _ZERO) + v
        return OneForm(out)

    def __neg__(self) -> "OneForm":
        return OneForm({c: -v for c, v in self.coeffs.items()}, _normal=True)

    def __sub__(self, other: "OneForm") -> "OneForm":
        return self + (-other)

    def __mul__(self, f) -> "OneForm":
        f = sp.sympify(f)
        if f == 0:
            return OneForm()
        if f == 1:
            return self
        return OneForm({c: f * v for c, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __truediv__(self, f) -> "OneForm":
        return self * (1 / sp.sympify(f))

    def __eq__(self, other) -> bool:
        if not isinstance(other, OneForm):
            return NotImplemented
        return (self - other).is_zero()

    def __hash__(self):
        return hash(frozenset(self.coeffs))

    def wedge(self, other: "OneForm") -> "TwoForm":
        out: dict = {}
        for a, f in self.coeffs.items():
            for b, g in other.coeffs.items():
                if a == b:
                    continue
                TwoForm._accumulate(out, a, b, f * g)
        return TwoForm(out)

    def subs(self, bindings: Mapping) -> "OneForm":
        return OneForm({c: substitute(v, bindings) for c, v in self.coeffs.items()}, _normal=True)

    def coordinates(self) -> set:
        """Coordinates in the support or inside coefficients."""
        out = set(self.coeffs)
        for v in self.coeffs.values():
            out.update(coordinates_of(v))
        return out

    def max_order(self) -> int:
        cs = [c for c in self.coordinates() if c.coord_kind == "jet"]
        return max((c.jet_order for c in cs), default=-1)

    def __repr__(self):
        if not self.coeffs:
            return "0"
        return " + ".join(f"({self.coeffs[c]})*d{c}" for c in self.support())


class TwoForm:
    """Finite combination ``sum f_ab da^db`` over pairs ordered by :func:`sort_key`."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Mapping | None = None):
        self.coeffs = _clean(coeffs or {})

    @staticmethod
    def _accumulate(out: dict, a, b, f):
        if a == b:
            return
        if sort_key(a) > sort_key(b):
            a, b, f = b, a, -f
        out[(a, b)] = out.get((a, b), _ZERO) + f

    def __getitem__(self, pair) -> sp.Expr:
        a, b = pair
        if sort_key(a) > sort_key(b):
            return -self.coeffs.get((b, a), _ZERO)
        return self.coeffs.get((a, b), _ZERO)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "TwoForm") -> "TwoForm":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, _ZERO) + v
        return TwoForm(out)

    def __neg__(self):
        return TwoForm({k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, f):
        return TwoForm({k: f * v for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, TwoForm):
            return NotImplemented
        return (self - other).is_zero()

    def __hash__(self):
        return hash(frozenset(self.coeffs))

    def evaluate(self, u: Mapping, v: Mapping) -> sp.Expr:
        """Value on two vectors given by coordinate components."""
        total = _ZERO
        for (a, b), f in self.coeffs.items():
            total += f * (u.get(a, 0) * v.get(b, 0) - u.get(b, 0) * v.get(a, 0))
        return normalize(total)

    def __repr__(self):
        if not self.coeffs:
            return "0"
        items = sorted(self.coeffs.items(), key=lambda kv: (sort_key(kv[0][0]), sort_key(kv[0][1])))
        return " + ".join(f"({v})*d{a}^d{b}" for (a, b), v in items)


class VectorField:
    """A derivation given by a rule ``coordinate -> coefficient``.

    The rule may be intensional (total derivatives have infinite support); values
    are normalized and cached on first request.
    """

    def __init__(self, rule: Callable[[Coordinate], sp.Expr], name: str = "Z",
                 in_H: bool = False, support: Iterable[Coordinate] | None = None):
        self._rule = rule
        self._cache: dict = {}
        self.name = name
        self.in_H = in_H
        self.support = None if support is None else tuple(support)

    @classmethod
    def from_dict(cls, coeffs: Mapping, name: str = "Z", in_H: bool = False) -> "VectorField":
        table = {c: normalize(v) for c, v in coeffs.items()}
        return cls(lambda c: table.get(c, _ZERO), name=name, in_H=in_H,
                   support=[c for c, v in table.items() if v != 0])

    @classmethod
    def partial(cls, c: Coordinate) -> "VectorField":
        return cls.from_dict({c: 1}, name=f"d/d{c}")

    def __getitem__(self, c: Coordinate) -> sp.Expr:
        v = self._cache.get(c)
        if v is None:
            v = normalize(self._rule(c))
            self._cache[c] = v
        return v

    def __call__(self, f) -> sp.Expr:
        """Apply the derivation to a function."""
        f = sp.sympify(f)
        total = _ZERO
        for c in coordinates_of(f):
            z = self[c]
            if z != 0:
                total += pdiff(f, c) * z
        return normalize(total)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(lambda c: self[c] + other[c], name=f"({self.name}+{other.name})",
                           in_H=self.in_H and other.in_H)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(lambda c: self[c] - other[c], name=f"({self.name}-{other.name})",
                           in_H=self.in_H and other.in_H)

    def __mul__(self, f) -> "VectorField":
        f = sp.sympify(f)
        return VectorField(lambda c: f * self[c], name=f"{f}*{self.name}", in_H=self.in_H)

    __rmul__ = __mul__

    def subs(self, bindings: Mapping) -> "VectorField":
        return VectorField(lambda c: substitute(self[c], bindings), name=self.name, in_H=self.in_H)

    def __repr__(self):
        return f"VectorField({self.name})"


def d_fun(f) -> OneForm:
    f = sp.sympify(f)
    return OneForm({c: pdiff(f, c) for c in coordinates_of(f)})


def exterior_d(phi: OneForm) -> TwoForm:
    out: dict = {}
    for c, f in phi.coeffs.items():
        for b in coordinates_of(f):
            TwoForm._accumulate(out, b, c, pdiff(f, b))
    return TwoForm(out)


def contract(Z: VectorField, phi: OneForm) -> sp.Expr:
    return normalize(sum((f * Z[c] for c, f in phi.coeffs.items()), _ZERO))


def contract2(Z: VectorField, omega: TwoForm) -> OneForm:
    out: dict = {}
    for (a, b), f in omega.coeffs.items():
        za, zb = Z[a], Z[b]
        if za != 0:
            out[b] = out.get(b, _ZERO) + f * za
        if zb != 0:
            out[a] = out.get(a, _ZERO) - f * zb
    return OneForm(out)


def lie_derivative(Z: VectorField, phi: OneForm) -> OneForm:
    """``L_Z phi`` computed as ``sum Z(f_c) dc + f_c d(Z c)``."""
    out: dict = {}
    for c, f in phi.coeffs.items():
        zf = Z(f)
        if zf != 0:
            out[c] = out.get(c, _ZERO) + zf
        zc = Z[c]
        for b in coordinates_of(zc):
            out[b] = out.get(b, _ZERO) + f * pdiff(zc, b)
    return OneForm(out)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """Lazy bracket; each coefficient is computed on request."""
    return VectorField(lambda c: X(Y[c]) - Y(X[c]), name=f"[{X.name},{Y.name}]",
                       in_H=X.in_H and Y.in_H)
