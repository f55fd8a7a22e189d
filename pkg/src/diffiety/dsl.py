"""Line-oriented problem language (``.dfy`` files) and its renderer.

Example::

    system example4
    indep x
    dep u, v
    func F(1)
    eq D(u) = F(D(v))
    assume nonzero F''(D(v))
    query analyze order=3
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import sympy as sp
from sympy.printing.str import StrPrinter

from .diffiety import Diffiety, contact_diffiety, contact_total_derivative, from_resolved_ode, independent, jet
from .symkernel import AssumptionSet, Coordinate, Opaque, opaque, substitute

__all__ = [
    "DslError",
    "ProblemSpec",
    "Equation",
    "parse",
    "parse_expression",
    "render_spec",
    "render_expr",
    "display_expr",
    "display_form",
]


class DslError(ValueError):
    """Problem-file error located at ``line``/``column`` (1-based)."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass
class Equation:
    dep: str
    direction: int
    rhs: sp.Expr

    def __eq__(self, other):
        return (isinstance(other, Equation) and self.dep == other.dep
                and self.direction == other.direction and sp.expand(self.rhs - other.rhs) == 0)


@dataclass
class ProblemSpec:
    name: str = "system"
    indep: list = field(default_factory=list)
    dep: list = field(default_factory=list)
    funcs: dict = field(default_factory=dict)
    params: list = field(default_factory=list)
    equations: list = field(default_factory=list)
    assumptions: list = field(default_factory=list)
    queries: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return max(len(self.indep), 1)

    @property
    def m(self) -> int:
        return len(self.dep)

    def dep_index(self, name: str) -> int:
        return self.dep.index(name) + 1

    def __eq__(self, other):
        if not isinstance(other, ProblemSpec):
            return NotImplemented
        same_assume = len(self.assumptions) == len(other.assumptions) and all(
            sp.expand(a - b) == 0 for a, b in zip(self.assumptions, other.assumptions))
        return (self.name == other.name and self.indep == other.indep and self.dep == other.dep
                and self.funcs == other.funcs and self.params == other.params
                and self.equations == other.equations and same_assume
                and self.queries == other.queries)

    # Building mathematical objects

    def coordinate(self, name: str) -> Coordinate:
        if name in self.indep:
            return independent(self.indep.index(name) + 1, self.n)
        return jet(self.dep_index(name), (0,) * self.n)

    def diffiety(self, extra_assumptions=(), bindings=None) -> Diffiety:
        """The system as a diffiety (one independent variable)."""
        if self.n != 1:
            raise DslError("diffiety analyses need exactly one independent variable")
        bindings = bindings or {}
        assumptions = [_bind(a, bindings) for a in list(self.assumptions) + list(extra_assumptions)]
        assumptions = [a for a in assumptions if not a.is_number]
        aset = AssumptionSet(assumptions)
        if not self.equations:
            return contact_diffiety(self.m).with_assumptions(aset)
        rhs = {self.dep_index(e.dep): _bind(e.rhs, bindings) for e in self.equations}
        params = tuple(self.params) + tuple(str(s) for s in _fresh_parameters(bindings))
        return from_resolved_ode(self.m, rhs, aset, name=self.name, parameters=params)


def _fresh_parameters(bindings) -> list:
    out = []
    for v in bindings.values():
        out += sorted((s for s in sp.sympify(v).free_symbols if not isinstance(s, Coordinate)), key=str)
    return out


def _bind(e, bindings):
    e = sp.sympify(e)
    for k, v in bindings.items():
        e = e.replace(k, v) if isinstance(k, type) else e.xreplace({k: v})
    return substitute(e, {})


# Lexer

_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*'*)
  | (?P<op>[-+*/^(),=\[\].])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _lex(text: str, line: int, offset: int = 0) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None:
            raise DslError(f"unexpected character {text[pos]!r}", line, offset + pos + 1)
        if mt.lastgroup != "ws":
            toks.append(_Tok(mt.lastgroup, mt.group(), offset + pos + 1))
        pos = mt.end()
    toks.append(_Tok("end", "", offset + len(text) + 1))
    return toks


# Expression parser: sum > product > unary minus > power > application

class _ExprParser:
    def __init__(self, spec: ProblemSpec, toks: list[_Tok], line: int):
        self.spec = spec
        self.toks = toks
        self.i = 0
        self.line = line

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self, text: str | None = None, kind: str | None = None) -> _Tok:
        t = self.peek()
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = repr(text) if text else kind
            got = repr(t.text) if t.text else "end of line"
            raise DslError(f"expected {want}, found {got}", self.line, t.col)
        self.i += 1
        return t

    def error(self, msg: str, tok: _Tok | None = None):
        raise DslError(msg, self.line, (tok or self.peek()).col)

    def parse(self) -> sp.Expr:
        if self.peek().kind == "end":
            self.error("missing expression")
        e = self.sum()
        if self.peek().kind != "end":
            self.error(f"unexpected {self.peek().text!r}")
        return e

    def sum(self):
        e = self.product()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            rhs = self.product()
            e = e + rhs if op == "+" else e - rhs
        return e

    def product(self):
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            rhs = self.unary()
            if op == "/":
                if rhs == 0:
                    self.error("division by zero")
                e = e / rhs
            else:
                e = e * rhs
        return e

    def unary(self):
        if self.peek().text == "-":
            self.take()
            return -self.unary()
        if self.peek().text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().text == "^":
            self.take()
            if self.peek().text == "-":
                self.take()
                return base ** (-self.power())
            return base ** self.power()
        return base

    def args(self) -> list:
        self.take("(")
        out = [self.sum()]
        while self.peek().text == ",":
            self.take()
            out.append(self.sum())
        self.take(")")
        return out

    def atom(self):
        t = self.peek()
        if t.kind == "num":
            self.take()
            return sp.Integer(int(t.text))
        if t.text == "(":
            self.take()
            e = self.sum()
            self.take(")")
            return e
        if t.kind != "name":
            self.error("expected an expression" if t.kind != "end" else "missing expression")
        self.take()
        return self.named(t)

    def _direction(self, name: str) -> int | None:
        if name == "D":
            return 1 if self.spec.n == 1 else None
        mt = re.fullmatch(r"D(\d+)", name)
        if mt and self.spec.n > 1 and 1 <= int(mt.group(1)) <= self.spec.n:
            return int(mt.group(1))
        return None

    def named(self, t: _Tok):
        spec, name = self.spec, t.text
        base, primes = name.rstrip("'"), len(name) - len(name.rstrip("'"))
        direction = self._direction(name)
        if direction is not None:
            (arg,) = self.args_exact(1, t)
            return contact_total_derivative(direction, spec.n)(arg)
        if name == "bar":
            (arg,) = self.args_exact(1, t)
            return _barred(arg)
        if name == "w":
            return self.explicit_jet(t)
        if name == "diff":
            return self.diff_call(t)
        if base in spec.funcs:
            arity = spec.funcs[base]
            if primes and arity != 1:
                self.error(f"primes need a unary function; use diff({base}, k)", t)
            args = self.args_exact(arity, t)
            orders = (primes,) if arity == 1 else (0,) * arity
            return opaque(base, orders)(*args)
        if primes:
            self.error(f"unknown function {base!r}", t)
        if name in spec.indep or name in spec.dep:
            return spec.coordinate(name)
        if name in spec.params:
            return sp.Symbol(name)
        self.error(f"unknown identifier {name!r}", t)

    def args_exact(self, k: int, t: _Tok) -> list:
        if self.peek().text != "(":
            self.error(f"{t.text} needs arguments", self.peek())
        args = self.args()
        if len(args) != k:
            self.error(f"{t.text.rstrip(chr(39))} takes {k} argument(s), got {len(args)}", t)
        return args

    def explicit_jet(self, t: _Tok):
        self.take("[")
        jt = self.peek()
        if jt.kind == "num":
            j = int(self.take().text)
        elif jt.text in self.spec.dep:
            j = self.spec.dep_index(self.take().text)
        else:
            self.error("expected a dependent variable or its number", jt)
        if not 1 <= j <= self.spec.m:
            self.error(f"dependent index {j} out of range", jt)
        orders = []
        while self.peek().text == ",":
            self.take()
            orders.append(int(self.take(kind="num").text))
        self.take("]")
        if len(orders) != self.spec.n:
            self.error(f"w[...] needs {self.spec.n} derivative order(s)", t)
        return jet(j, tuple(orders))

    def diff_call(self, t: _Tok):
        self.take("(")
        ft = self.take(kind="name")
        if ft.text not in self.spec.funcs:
            self.error(f"unknown function {ft.text!r}", ft)
        arity = self.spec.funcs[ft.text]
        orders = [0] * arity
        while self.peek().text == ",":
            self.take()
            kt = self.take(kind="num")
            k = int(kt.text)
            if not 1 <= k <= arity:
                self.error(f"argument number {k} out of range for {ft.text}", kt)
            orders[k - 1] += 1
        self.take(")")
        args = self.args_exact(arity, ft)
        return opaque(ft.text, tuple(orders))(*args)


def _barred(e):
    e = sp.sympify(e)
    mapping = {}
    for c in e.free_symbols:
        if isinstance(c, Coordinate) and not c.barred:
            if c.coord_kind == "independent":
                mapping[c] = independent(c.index, 1, True)
            elif c.coord_kind == "jet":
                mapping[c] = jet(c.index, c.multi, True)
    return e.xreplace(mapping)


def parse_expression(text: str, spec: ProblemSpec, line: int = 0, offset: int = 0) -> sp.Expr:
    return _ExprParser(spec, _lex(text, line, offset), line).parse()


# Line grammar

_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*$")
_RESERVED = {"D", "w", "diff", "bar"}


def _names(rest: str, line: int, col: int) -> list[str]:
    out = [s.strip() for s in rest.split(",")]
    for s in out:
        if not _NAME.match(s):
            raise DslError(f"bad name {s!r}", line, col)
        if s in _RESERVED or re.fullmatch(r"D\d+", s):
            raise DslError(f"{s!r} is reserved", line, col)
    return out


def parse(text: str) -> ProblemSpec:
    """Parse a problem file; errors carry line and column."""
    spec = ProblemSpec()
    seen_system = False
    pending_eqs, pending_assume = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        stripped = line.strip()
        keyword, _, rest = stripped.partition(" ")
        rest_col = indent + len(keyword) + 2
        rest = rest.strip()
        if keyword == "system":
            if seen_system:
                raise DslError("only one system per file", lineno, indent + 1)
            if not _NAME.match(rest):
                raise DslError("system needs a name", lineno, rest_col)
            spec.name, seen_system = rest, True
        elif keyword == "indep":
            spec.indep += _names(rest, lineno, rest_col)
        elif keyword == "dep":
            spec.dep += _names(rest, lineno, rest_col)
        elif keyword == "param":
            spec.params += _names(rest, lineno, rest_col)
        elif keyword == "func":
            mt = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)\s*\(\s*(\d+)\s*\)", rest)
            if not mt:
                raise DslError("expected func NAME(ARITY)", lineno, rest_col)
            if int(mt.group(2)) < 1:
                raise DslError("arity must be positive", lineno, rest_col)
            spec.funcs[mt.group(1)] = int(mt.group(2))
        elif keyword == "eq":
            pending_eqs.append((lineno, raw, rest))
        elif keyword == "assume":
            kw, _, expr = rest.partition(" ")
            if kw != "nonzero":
                raise DslError("expected 'assume nonzero <expr>'", lineno, rest_col)
            pending_assume.append((lineno, raw, expr))
        elif keyword == "query":
            spec.queries.append(_query(rest, lineno, rest_col))
        else:
            raise DslError(f"unknown statement {keyword!r}", lineno, indent + 1)
    if not spec.indep:
        spec.indep = ["x"]
    if not spec.dep:
        raise DslError("no dependent variables declared", 1, 1)
    for names in (spec.indep, spec.dep, spec.params, list(spec.funcs)):
        for nm in names:
            clashes = sum(nm in other for other in (spec.indep, spec.dep, spec.params, list(spec.funcs)))
            if clashes > 1 or names.count(nm) > 1:
                raise DslError(f"name {nm!r} declared twice", 1, 1)
    for lineno, raw, rest in pending_eqs:
        spec.equations.append(_equation(spec, raw, rest, lineno))
    for lineno, raw, expr in pending_assume:
        col = raw.index(expr) + 1 if expr else len(raw) + 1
        spec.assumptions.append(parse_expression(expr, spec, lineno, col - 1))
    seen = set()
    for e in spec.equations:
        if (e.dep, e.direction) in seen:
            raise DslError(f"two equations for D({e.dep})", 1, 1)
        seen.add((e.dep, e.direction))
    return spec


def _query(rest: str, line: int, col: int) -> tuple:
    parts = rest.split()
    if not parts:
        raise DslError("query needs an analysis name", line, col)
    opts = {}
    for p in parts[1:]:
        k, eq, v = p.partition("=")
        if not eq or not k:
            raise DslError(f"expected key=value, got {p!r}", line, col)
        opts[k] = int(v) if v.isdigit() else v
    return parts[0], opts


def _equation(spec: ProblemSpec, raw: str, rest: str, lineno: int) -> Equation:
    lhs, eq, rhs = rest.partition("=")
    base = raw.index(rest)
    if not eq:
        raise DslError("expected '='", lineno, base + len(rest) + 1)
    mt = re.fullmatch(r"\s*(D\d*)\s*\(\s*([A-Za-z_][A-Za-z_0-9]*)\s*\)\s*", lhs)
    if not mt:
        raise DslError("left-hand side must be D(<dependent>)", lineno, base + 1)
    dname, dep = mt.groups()
    if dep not in spec.dep:
        raise DslError(f"unknown dependent variable {dep!r}", lineno, base + lhs.index(dep) + 1)
    if spec.n == 1:
        if dname != "D":
            raise DslError("use D(...) with one independent variable", lineno, base + 1)
        direction = 1
    else:
        if dname == "D" or not 1 <= int(dname[1:]) <= spec.n:
            raise DslError(f"use D1..D{spec.n}", lineno, base + 1)
        direction = int(dname[1:])
    offset = base + len(lhs) + 1
    if not rhs.strip():
        raise DslError("missing right-hand side", lineno, offset + len(rhs) + 1)
    return Equation(dep, direction, parse_expression(rhs, spec, lineno, offset))


# Printing

class _Printer(StrPrinter):
    def __init__(self, names):
        super().__init__({"order": "lex"})
        self.names = names

    def _print_Symbol(self, s):
        if isinstance(s, Coordinate):
            return self.names(s)
        return s.name

    def _print_Function(self, e):
        if isinstance(e, Opaque):
            args = ", ".join(self._print(a) for a in e.args)
            orders = e.orders
            if len(orders) == 1:
                return f"{e.base}{chr(39) * orders[0]}({args})"
            if not any(orders):
                return f"{e.base}({args})"
            idx = ", ".join(str(k + 1) for k, o in enumerate(orders) for _ in range(o))
            return f"diff({e.base}, {idx})({args})"
        return super()._print_Function(e)

    def _print_Pow(self, e, rational=False):
        return super()._print_Pow(e, rational).replace("**", "^")

    def _print_Mul(self, e):
        return super()._print_Mul(e).replace("**", "^")


def _source_name(spec: ProblemSpec):
    def names(c: Coordinate) -> str:
        if c.coord_kind == "independent":
            nm = spec.indep[c.index - 1] if c.index - 1 < len(spec.indep) else c.name
        elif c.coord_kind == "jet":
            dep = spec.dep[c.index - 1]
            if not any(c.multi):
                nm = dep
            elif spec.n == 1 and c.multi[0] <= 2:
                nm = dep
                for _ in range(c.multi[0]):
                    nm = f"D({nm})"
            else:
                nm = f"w[{dep}, {', '.join(map(str, c.multi))}]"
        else:
            nm = c.name
        return f"bar({nm})" if c.barred else nm
    return names


def render_expr(e, spec: ProblemSpec) -> str:
    """Problem-language text for ``e`` (parses back to ``e``)."""
    return _Printer(_source_name(spec)).doprint(sp.sympify(e)).replace("**", "^")


def display_expr(e) -> str:
    """Compact text with chart coordinate names."""
    return _Printer(lambda c: c.name).doprint(sp.sympify(e)).replace("**", "^")


def display_form(phi, D=None) -> str:
    """``a·c' + ...`` where ``c'`` is the contact form ``dc - D(c)dx``; a ``dx`` term remains if present."""
    from .symkernel import normalize, sort_key
    coeffs = dict(phi.coeffs)
    x = None
    terms = []
    for c in sorted(coeffs, key=sort_key):
        if c.coord_kind == "independent":
            x = c
            continue
        terms.append((coeffs[c], f"{c.name}'"))
    if D is not None and x is not None:
        rest = normalize(coeffs[x] + sum(a * D[c] for c, a in coeffs.items() if c != x))
        if rest != 0:
            terms.append((rest, "dx"))
    elif x is not None:
        terms.append((coeffs[x], "dx"))
    if not terms:
        return "0"
    out = []
    for coef, sym in terms:
        coef = sp.sympify(coef)
        neg = coef.could_extract_minus_sign()
        mag = -coef if neg else coef
        body = sym if mag == 1 else (f"({display_expr(mag)})·{sym}" if mag.is_Add
                                     else f"{display_expr(mag)}·{sym}")
        if not out:
            out.append(("−" if neg else "") + body)
        else:
            out.append(("− " if neg else "+ ") + body)
    return " ".join(out)


def render_spec(spec: ProblemSpec) -> str:
    """Normalized problem text; ``parse(render_spec(s)) == s``."""
    lines = [f"system {spec.name}", f"indep {', '.join(spec.indep)}", f"dep {', '.join(spec.dep)}"]
    for f, a in spec.funcs.items():
        lines.append(f"func {f}({a})")
    if spec.params:
        lines.append(f"param {', '.join(spec.params)}")
    for e in spec.equations:
        d = "D" if spec.n == 1 else f"D{e.direction}"
        lines.append(f"eq {d}({e.dep}) = {render_expr(e.rhs, spec)}")
    for a in spec.assumptions:
        lines.append(f"assume nonzero {render_expr(a, spec)}")
    for name, opts in spec.queries:
        lines.append(" ".join(["query", name] + [f"{k}={v}" for k, v in opts.items()]))
    return "\n".join(lines) + "\n"
