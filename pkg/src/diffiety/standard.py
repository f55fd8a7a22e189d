"""Ker-chain refinement, standard filtrations, standard bases and growth classes."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import sympy as sp

from .diffiety import Diffiety
from .geometry import OneForm, VectorField, contract2, exterior_d, lie_derivative
from .linalg import FormSpan, _Eliminator, annihilator, descending_order_key, express, kernel
from .symkernel import is_zero, normalize, sort_key

__all__ = [
    "ker_field",
    "KerChainResult",
    "descending_chain",
    "generic_field",
    "R0Result",
    "R0",
    "frobenius_check",
    "StandardBasis",
    "standard_basis",
    "growth_dims",
    "growth_classifier",
    "SecondTaskResult",
    "second_task",
    "NotTooSpecialError",
]


class NotTooSpecialError(RuntimeError):
    """Two admissible choices of the field gave different Ker dimensions."""


def ker_field(X: VectorField, theta: FormSpan) -> FormSpan:
    """Forms ``t`` of ``theta`` with ``L_X t`` in ``theta``."""
    basis = theta.basis
    images = [theta.reduce(lie_derivative(X, b)) for b in basis]
    combos = kernel(images, theta.assumptions, theta.key)
    forms = []
    for c in combos:
        f = OneForm()
        for i, coef in c.items():
            f = f + basis[i] * coef
        forms.append(f)
    return FormSpan(forms, theta.assumptions, theta.key)


def generic_field(omega: Diffiety, rng: random.Random) -> VectorField:
    """A random admissible field in H: ``(c0 + c1 x) D`` for n = 1, ``sum c_i D_i`` otherwise."""
    if omega.n == 1:
        c0, c1 = rng.randint(1, 9), rng.randint(1, 9)
        f = c0 + c1 * omega.x
        return VectorField(lambda c: f * omega.D[c], name=f"({f})D", in_H=True)
    cs = [rng.randint(1, 9) for _ in range(omega.n)]
    cs[0] = 1
    fields = [Dv * c for Dv, c in zip(omega.total_derivatives, cs)]
    X = fields[0]
    for Y in fields[1:]:
        X = X + Y
    X.name = "+".join(f"{c}{Dv.name}" for c, Dv in zip(cs, omega.total_derivatives))
    return X


@dataclass
class KerChainResult:
    """Descending chain ``C_0 = Omega_0 > Ker_X C_0 > ... > C_K = C_{K+1}``."""

    omega: Diffiety
    chain: list
    K: int
    X: VectorField
    start_level: int = 0
    key: Callable = sort_key
    x_independent: bool | None = None

    @property
    def dims(self) -> list[int]:
        return [c.dim for c in self.chain]

    @property
    def stationary(self) -> FormSpan:
        return self.chain[self.K]

    @property
    def strictly_descending(self) -> bool:
        d = self.dims
        return all(d[k + 1] < d[k] for k in range(self.K)) and d[self.K + 1] == d[self.K]

    def level(self, l: int) -> FormSpan:
        """Term ``l`` of the standard filtration obtained by renumbering the chain."""
        if l < 0:
            return FormSpan([], self.omega.assumptions, self.key)
        if self.K == 0:
            return self.omega.window(self.start_level + l, self.key)
        if l < self.K:
            return self.chain[self.K - 1 - l]
        return self.omega.window(self.start_level + l - self.K + 1, self.key)

    def level_dims(self, top: int) -> list[int]:
        return [self.level(l).dim for l in range(top + 1)]


def _chain(omega: Diffiety, X: VectorField, start_level: int, key) -> tuple[list, int]:
    c0 = omega.window(start_level, key)
    chain = [c0]
    cap = c0.dim + 2
    for _ in range(cap):
        nxt = ker_field(X, chain[-1])
        chain.append(nxt)
        if nxt.dim == chain[-2].dim:
            return chain, len(chain) - 2
    raise RuntimeError("no stationarity within the iteration cap; escalate the window")


def descending_chain(omega: Diffiety, X: VectorField | None = None, seed: int = 0,
                     start_level: int = 0, check: bool = True, key=sort_key) -> KerChainResult:
    """Iterate ``Ker_X`` from ``level(start_level)`` to stationarity.

    Without an explicit ``X`` a generic field is drawn from ``seed``; with ``check``
    a second draw must reproduce the chain dimensions and the stationary module.
    """
    rng = random.Random(seed)
    if X is None:
        X = omega.D if omega.n == 1 else generic_field(omega, rng)
    chain, K = _chain(omega, X, start_level, key)
    result = KerChainResult(omega, chain, K, X, start_level, key)
    if check:
        X2 = generic_field(omega, rng)
        chain2, K2 = _chain(omega, X2, start_level, key)
        same = [c.dim for c in chain2] == result.dims and chain2[K2].same_span(chain[K])
        if not same:
            raise NotTooSpecialError(
                f"Ker dimensions differ between {X.name} and {X2.name}: "
                f"{result.dims} vs {[c.dim for c in chain2]}")
        result.x_independent = all(a.same_span(b) for a, b in zip(chain, chain2))
    return result


def _support_coordinates(forms) -> list:
    coords = set()
    for f in forms:
        coords |= f.coordinates()
    return sorted(coords, key=sort_key)


def frobenius_check(module: FormSpan) -> bool:
    """``d tau = 0 mod tau`` for all basis forms: each ``d tau`` vanishes on the annihilator."""
    basis = module.basis
    if not basis:
        return True
    coords = _support_coordinates(basis)
    vecs = annihilator(basis, coords, module.assumptions)
    for tau in basis:
        dt = exterior_d(tau)
        if dt.is_zero():
            continue
        for u, v in combinations(vecs, 2):
            if dt.evaluate(u, v) != 0:
                return False
    return True


@dataclass
class R0Result:
    module: FormSpan
    frobenius: bool

    @property
    def K(self) -> int:
        return self.module.dim


def R0(chain: KerChainResult) -> R0Result:
    """Stationary module of the first Ker chain with its Frobenius certificate."""
    module = chain.stationary
    ok = frobenius_check(module)
    if not ok:
        raise RuntimeError("Frobenius condition fails on the stationary module; window unstable")
    return R0Result(module, ok)


@dataclass
class StandardBasis:
    """``tau^k`` and seeds ``pi^j`` whose Lie-derivative families form a basis."""

    omega: Diffiety
    tau: list
    seeds: list
    seed_levels: list
    chain: KerChainResult
    window: int
    certificates: dict = field(default_factory=dict)
    _family: dict = field(default_factory=dict, repr=False)

    @property
    def K(self) -> int:
        return len(self.tau)

    @property
    def mu(self) -> int:
        return len(self.seeds)

    def family(self, j: int, s: int) -> OneForm:
        """``pi^j_s = L_D^s pi^j`` (``j`` counted from 1)."""
        fam = self._family.setdefault(j, [self.seeds[j - 1]])
        while len(fam) <= s:
            fam.append(lie_derivative(self.omega.D, fam[-1]))
        return fam[s]

    def layer_forms(self, S: int) -> list[tuple[tuple, OneForm]]:
        """Labelled basis forms with shifts up to ``S``: ``("tau", k)`` and ``("pi", j, s)``."""
        out = [(("tau", k + 1), t) for k, t in enumerate(self.tau)]
        for j in range(1, self.mu + 1):
            out += [(("pi", j, s), self.family(j, s)) for s in range(S + 1)]
        return out

    def _expander(self, S: int):
        cache = self.__dict__.setdefault("_expanders", {})
        if S not in cache:
            labelled = self.layer_forms(S)
            elim = _Eliminator(self.omega.assumptions, sort_key)
            if elim.insert((dict(f.coeffs), {i: sp.Integer(1)}) for i, (_, f) in enumerate(labelled)):
                raise ValueError("standard basis forms are linearly dependent")
            cache[S] = (elim, [lab for lab, _ in labelled])
        return cache[S]

    def expand(self, phi: OneForm, max_shift: int = 12) -> dict | None:
        """Coefficients of ``phi`` in the standard basis, escalating the shift bound."""
        S = max(phi.max_order(), 0) + 1
        while S <= max_shift:
            elim, labels = self._expander(S)
            vec, tag = elim.reduce(dict(phi.coeffs), {})
            if not vec:
                out = {}
                for i, lab in enumerate(labels):
                    c = normalize(-tag.get(i, 0))
                    if c != 0:
                        out[lab] = c
                return out
            S += 1
        return None


def _certify(basis: StandardBasis, L: int) -> dict:
    omega = basis.omega
    D = omega.D
    x = omega.x
    tau_span = FormSpan(basis.tau, omega.assumptions)
    lie_tau = all(tau_span.contains(lie_derivative(D, t)) for t in basis.tau)
    frob = frobenius_check(tau_span)
    dpi = True
    for j in range(1, basis.mu + 1):
        for s in range(L + 1):
            resid = exterior_d(basis.family(j, s)) - OneForm.d(x).wedge(basis.family(j, s + 1))
            if not contract2(D, resid).is_zero():
                dpi = False
    # Triangular layers: the family up to the level of each filtration term spans it.
    spans_ok, independent = True, True
    top = basis.chain.K + L
    for l in range(top + 1):
        forms = list(basis.tau)
        for j, lj in zip(range(1, basis.mu + 1), basis.seed_levels):
            forms += [basis.family(j, s) for s in range(l - lj + 1)]
        span = FormSpan(forms, omega.assumptions)
        if span.dim != len(forms):
            independent = False
        if not span.same_span(basis.chain.level(l)):
            spans_ok = False
    return {"lie_tau": lie_tau, "d_tau": frob, "d_pi": dpi,
            "spans_levels": spans_ok, "independent": independent}


def standard_basis(omega: Diffiety, L: int = 3, seed: int = 0, certify: bool = True,
                   chain: KerChainResult | None = None) -> StandardBasis:
    """Standard basis from the standard filtration, certified on shifts ``s <= L``."""
    if omega.n != 1:
        raise ValueError("standard bases are constructed for one independent variable")
    if chain is None:
        chain = descending_chain(omega, seed=seed)
    tau = chain.stationary.basis
    seeds: list = []
    seed_levels: list = []
    D = omega.D
    families: list = []
    top = chain.K + L
    for l in range(top + 1):
        current = list(tau)
        for fam, lj in zip(families, seed_levels):
            while len(fam) <= l - lj:
                fam.append(lie_derivative(D, fam[-1]))
            current += fam[: l - lj + 1]
        span = FormSpan(current, omega.assumptions)
        for b in chain.level(l).basis:
            if not span.contains(b):
                seeds.append(b)
                seed_levels.append(l)
                families.append([b])
                span = span.extended([b])
    basis = StandardBasis(omega, tau, seeds, seed_levels, chain, L)
    for j, fam in enumerate(families, start=1):
        basis._family[j] = fam
    if certify:
        basis.certificates = _certify(basis, L)
    return basis


def growth_dims(omega_form: OneForm, omega: Diffiety, depth: int) -> list[int]:
    """``dim span{(L_H)^i w : i <= k}`` for ``k = 0..depth``."""
    layer = [omega_form]
    collected = [omega_form]
    dims = [FormSpan(collected, omega.assumptions).dim]
    for _ in range(depth):
        layer = [lie_derivative(Dv, f) for f in layer for Dv in omega.total_derivatives]
        span = FormSpan(layer, omega.assumptions)
        layer = span.basis
        collected += layer
        dims.append(FormSpan(collected, omega.assumptions).dim)
    return dims


def growth_classifier(omega_form: OneForm, omega: Diffiety, depth: int = 6) -> tuple[str, list[int]]:
    """``bounded``, ``linear-bounded`` (n >= 2 only) or ``superlinear``."""
    dims = growth_dims(omega_form, omega, depth)
    if any(dims[k + 1] == dims[k] for k in range(depth)):
        return "bounded", dims
    if omega.n >= 2:
        inc = [dims[k + 1] - dims[k] for k in range(depth)]
        if len(inc) >= 3 and inc[-1] == inc[-2] == inc[-3]:
            return "linear-bounded", dims
    return "superlinear", dims


@dataclass
class SecondTaskResult:
    chain: list
    K: int
    R1: FormSpan
    profiles: list
    stable: bool
    frobenius: bool
    window: int

    @property
    def dims(self) -> list[int]:
        return [c.dim for c in self.chain]


def _order_profile(span: FormSpan, top: int) -> list[int]:
    """Dimension of the part of ``span`` with jet order at most ``q``, for ``q = 0..top``."""
    orders = []
    for p in span.pivots:
        orders.append(p.jet_order if p.coord_kind == "jet" else -1)
    return [sum(1 for o in orders if o <= q) for q in range(top + 1)]


def _second_chain(omega: Diffiety, X: VectorField, Y: VectorField, L: int):
    key = descending_order_key
    forms = list(omega.level(0))
    layer = list(forms)
    for _ in range(L):
        layer = [lie_derivative(X, f) for f in layer]
        forms += layer
    theta = FormSpan(forms, omega.assumptions, key)
    chain = [theta]
    for _ in range(theta.dim + 2):
        nxt = ker_field(Y, chain[-1])
        chain.append(nxt)
        if nxt.dim == chain[-2].dim:
            return chain, len(chain) - 2
    raise RuntimeError("no stationarity within the iteration cap")


def second_task(omega: Diffiety, X: VectorField | None = None, Y: VectorField | None = None,
                L: int = 3, seed: int = 0, margin: int = 2) -> SecondTaskResult:
    """Ker_Y chain on the window truncation of ``sum_k (L_X)^k level(0)``.

    Stability compares the order profile of the stationary module at ``L`` and
    ``L + 1`` on orders up to ``L - margin``.
    """
    if omega.n < 2:
        raise ValueError("the second task needs at least two independent variables")
    rng = random.Random(seed)
    X = X or generic_field(omega, rng)
    Y = Y or generic_field(omega, rng)
    chain, K = _second_chain(omega, X, Y, L)
    chain_up, K_up = _second_chain(omega, X, Y, L + 1)
    top = max(L - margin, 0)
    prof = _order_profile(chain[K], top)
    prof_up = _order_profile(chain_up[K_up], top)
    R1 = chain[K]
    low = FormSpan([b for b, p in zip(R1.basis, R1.pivots)
                    if (p.jet_order if p.coord_kind == "jet" else -1) <= top],
                   omega.assumptions)
    return SecondTaskResult(chain, K, R1, [_order_profile(c, L) for c in chain],
                            prof == prof_up, frobenius_check(low), L)
