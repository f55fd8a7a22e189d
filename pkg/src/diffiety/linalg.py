"""Row reduction of 1-forms over the field of symbolic expressions.

Pivots are accepted only when :func:`nonzero_status` certifies them.  When every
remaining candidate pivot is undecided, :class:`PivotUndecided` is raised so the
caller can split into the "factor nonzero" and "factor zero" cases.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import sympy as sp

from .geometry import OneForm
from .symkernel import EMPTY, AssumptionSet, normalize, nonzero_status, sort_key

__all__ = [
    "PivotUndecided",
    "FormSpan",
    "kernel",
    "express",
    "annihilator",
    "descending_order_key",
]

_ZERO = sp.Integer(0)


class PivotUndecided(Exception):
    """No certified pivot is available; ``factor`` decides the case split."""

    def __init__(self, factor, entry=None):
        super().__init__(f"cannot decide whether {factor} vanishes")
        self.factor = factor
        self.entry = entry


def descending_order_key(c):
    """Column order preferring high-order jets first, so low orders stay in late pivots."""
    k = sort_key(c)
    return (k[0], k[1], -c.jet_order, k[2], k[3], k[4], k[5])


class _Row:
    __slots__ = ("vec", "tag")

    def __init__(self, vec: dict, tag: dict):
        self.vec = vec
        self.tag = tag


def _axpy(target: dict, f, source: Mapping) -> dict:
    """``target - f * source`` with normalized, nonzero entries."""
    out = dict(target)
    for k, v in source.items():
        out[k] = out.get(k, _ZERO) - f * v
    return {k: w for k, w in ((k, normalize(w)) for k, w in out.items()) if w != 0}


def _scale(d: Mapping, f) -> dict:
    return {k: normalize(v * f) for k, v in d.items()}


class _Eliminator:
    """Fully reduced echelon basis with tags tracking the combination of inputs."""

    def __init__(self, assumptions: AssumptionSet, key: Callable):
        self.assumptions = assumptions
        self.key = key
        self.rows: list[_Row] = []
        self.pivots: list = []

    def reduce(self, vec: dict, tag: dict) -> tuple[dict, dict]:
        for p, row in zip(self.pivots, self.rows):
            f = vec.get(p)
            if f is not None and f != 0:
                vec = _axpy(vec, f, row.vec)
                if row.tag or tag:
                    tag = _axpy(tag, f, row.tag)
        return vec, tag

    def _choose(self, pending: list[_Row]):
        best = None
        undecided = None
        for i, row in enumerate(pending):
            for c in sorted(row.vec, key=self.key):
                status, factor = nonzero_status(row.vec[c], self.assumptions, name_factor=False)
                if status == "nonzero":
                    k = self.key(c)
                    if best is None or k < best[0]:
                        best = (k, i, c)
                    break
                if status == "unknown" and undecided is None:
                    undecided = (factor, row.vec[c])
        if best is None:
            _, factor = nonzero_status(undecided[1], self.assumptions)
            raise PivotUndecided(factor, undecided[1])
        return best[1], best[2]

    def insert(self, items: Iterable[tuple[dict, dict]]) -> list[dict]:
        """Add vectors; returns the tags of combinations that reduce to zero."""
        null: list[dict] = []
        pending: list[_Row] = []
        for vec, tag in items:
            vec, tag = self.reduce(vec, tag)
            if vec:
                pending.append(_Row(vec, tag))
            else:
                null.append(tag)
        while pending:
            i, p = self._choose(pending)
            row = pending.pop(i)
            inv = 1 / row.vec[p]
            row = _Row(_scale(row.vec, inv), _scale(row.tag, inv))
            for other in self.rows:
                f = other.vec.get(p)
                if f is not None:
                    other.vec = _axpy(other.vec, f, row.vec)
                    other.tag = _axpy(other.tag, f, row.tag)
            still = []
            for other in pending:
                f = other.vec.get(p)
                if f is not None:
                    other.vec = _axpy(other.vec, f, row.vec)
                    other.tag = _axpy(other.tag, f, row.tag)
                if other.vec:
                    still.append(other)
                else:
                    null.append(other.tag)
            pending = still
            self.rows.append(row)
            self.pivots.append(p)
        return null


class FormSpan:
    """Span of finitely many 1-forms, stored as a reduced echelon basis with unit pivots.

    Rows are sorted by pivot column so the basis is a deterministic function of
    the span, the assumptions and the column order.
    """

    def __init__(self, forms: Iterable[OneForm] = (), assumptions: AssumptionSet | None = None,
                 key: Callable = sort_key):
        self.assumptions = assumptions or EMPTY
        self.key = key
        self._elim = _Eliminator(self.assumptions, key)
        self._elim.insert((dict(f.coeffs), {}) for f in forms)

    @property
    def pivots(self) -> list:
        return sorted(self._elim.pivots, key=self.key)

    @property
    def basis(self) -> list[OneForm]:
        order = sorted(range(len(self._elim.pivots)), key=lambda i: self.key(self._elim.pivots[i]))
        return [OneForm(self._elim.rows[i].vec, _normal=True) for i in order]

    @property
    def dim(self) -> int:
        return len(self._elim.rows)

    def __len__(self):
        return self.dim

    def reduce(self, phi: OneForm) -> OneForm:
        vec, _ = self._elim.reduce(dict(phi.coeffs), {})
        return OneForm(vec, _normal=True)

    def contains(self, phi: OneForm) -> bool:
        return self.reduce(phi).is_zero()

    __contains__ = contains

    def extended(self, forms: Iterable[OneForm]) -> "FormSpan":
        return FormSpan(list(self.basis) + list(forms), self.assumptions, self.key)

    def includes(self, other: "FormSpan") -> bool:
        return all(self.contains(b) for b in other.basis)

    def same_span(self, other: "FormSpan") -> bool:
        return self.dim == other.dim and self.includes(other)

    def __repr__(self):
        return f"FormSpan(dim={self.dim}, pivots={[str(p) for p in self.pivots]})"


def kernel(vectors: Sequence[OneForm], assumptions: AssumptionSet | None = None,
           key: Callable = sort_key) -> list[dict[int, sp.Expr]]:
    """Coefficient vectors ``c`` (index -> Expr) with ``sum c_i vectors[i] = 0``."""
    elim = _Eliminator(assumptions or EMPTY, key)
    null = elim.insert((dict(v.coeffs), {i: sp.Integer(1)}) for i, v in enumerate(vectors))
    return [t for t in null if t]


def express(phi: OneForm, forms: Sequence[OneForm], assumptions: AssumptionSet | None = None,
            key: Callable = sort_key) -> list[sp.Expr] | None:
    """Coefficients of ``phi`` in terms of independent ``forms``; None if outside the span."""
    elim = _Eliminator(assumptions or EMPTY, key)
    null = elim.insert((dict(f.coeffs), {i: sp.Integer(1)}) for i, f in enumerate(forms))
    if null:
        raise ValueError("forms are linearly dependent")
    vec, tag = elim.reduce(dict(phi.coeffs), {})
    if vec:
        return None
    return [normalize(-tag.get(i, _ZERO)) for i in range(len(forms))]


def annihilator(forms: Sequence[OneForm], coords: Sequence, assumptions: AssumptionSet | None = None,
                key: Callable = sort_key) -> list[dict]:
    """Vectors (coordinate -> component) on ``coords`` killed by every form."""
    coords = sorted(coords, key=key)
    span = FormSpan(forms, assumptions, key)
    pivots = set(span.pivots)
    if not pivots.issubset(coords):
        raise ValueError("forms are supported outside the given coordinates")
    basis = span.basis
    by_pivot = {p: b for p, b in zip(span.pivots, basis)}
    out = []
    for free in coords:
        if free in pivots:
            continue
        v = {free: sp.Integer(1)}
        for p, b in by_pivot.items():
            f = b[free]
            if f != 0:
                v[p] = normalize(-f)
        out.append(v)
    return out
