"""Command line front end: parse a ``.dfy`` problem, run analyses, emit text or JSON."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import sympy as sp

from .diffiety import contact_diffiety, independent, jet
from .dsl import DslError, ProblemSpec, display_expr, display_form, parse, parse_expression
from .involution import (CartanError, SolvedSystem, cartan_brute_force, cartan_test, graded_dims,
                         hilbert_fit, injectivity_window)
from .linalg import FormSpan, PivotUndecided
from .standard import NotTooSpecialError, R0, descending_chain, standard_basis
from .symkernel import Coordinate, Opaque, opaque
from .symmetry import (Morphism, VariationData, WaveError, decompose_variation,
                       infinitesimal_conditions, variation_from_data, verify_symmetry,
                       verify_variation, wave_symmetry, wave_symmetry_single)

__all__ = ["main", "run", "render", "Report", "Case", "EXIT_OK", "EXIT_FAIL", "EXIT_INCONCLUSIVE"]

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3
MAX_FORK_DEPTH = 3
DEFAULT_ORDER = 3


def _max_order() -> int:
    try:
        return int(os.environ.get("DIFFIETY_MAX_ORDER", "8"))
    except ValueError:
        return 8


@dataclass
class Case:
    """One branch of the case tree: extra nonvanishing factors and specializations."""

    path: str = ""
    assumptions: list = field(default_factory=list)
    bindings: dict = field(default_factory=dict)

    def child(self, branch: str) -> str:
        return f"{self.path}/{branch}" if self.path else branch

    @property
    def depth(self) -> int:
        return len(self.path.split("/")) if self.path else 0


@dataclass
class Report:
    system: str
    window: int
    assumptions: list
    results: list
    forks: list
    stable: bool

    def as_dict(self) -> dict:
        return {"system": self.system, "window": self.window, "assumptions": self.assumptions,
                "results": self.results, "forks": self.forks, "stable": self.stable}

    @property
    def exit_code(self) -> int:
        verdicts = {r["verdict"] for r in self.results}
        if "fail" in verdicts:
            return EXIT_FAIL
        if "inconclusive" in verdicts:
            return EXIT_INCONCLUSIVE
        return EXIT_OK


# Zero branches

def _fresh(name: str, taken: set) -> sp.Symbol:
    k = 0
    while f"{name}{k}" in taken:
        k += 1
    taken.add(f"{name}{k}")
    return sp.Symbol(f"{name}{k}")


def _zero_binding(factor, spec: ProblemSpec, case: Case) -> dict | None:
    """Specialization realizing ``factor = 0``, or None when it has no simple form."""
    factor = sp.sympify(factor)
    if isinstance(factor, sp.Symbol) and not isinstance(factor, Coordinate):
        return {factor: sp.Integer(0)}
    if isinstance(factor, Opaque) and len(factor.orders) == 1:
        k = factor.orders[0]
        taken = set(spec.params) | set(spec.funcs) | {str(s) for v in case.bindings.values()
                                                     for s in sp.sympify(v).free_symbols}
        t = sp.Dummy("t")
        poly = sum((_fresh(f"{factor.base}_", taken) * t ** i for i in range(k)), sp.Integer(0))
        out = {}
        for order in range(k + 4):
            out[opaque(factor.base, (order,))] = sp.Lambda(t, sp.diff(poly, t, order))
        return out
    return None


def _display_binding(k, v) -> str:
    if isinstance(k, type):
        return f"{k.__name__}(t) = {display_expr(v(sp.Symbol('t')))}"
    return f"{display_expr(k)} = {display_expr(v)}"


def _run_cases(spec: ProblemSpec, analysis, opts: dict, case_path: str | None):
    results, forks = [], []
    queue = [Case()]
    while queue:
        case = queue.pop(0)
        try:
            res = analysis(spec, case, opts)
        except PivotUndecided as exc:
            factor = exc.factor
            if case.depth >= MAX_FORK_DEPTH:
                results.append(_result(opts.get("query", "?"), opts, case, "inconclusive",
                                       diagnostic=f"fork depth exceeded at {display_expr(factor)}"))
                continue
            nz = Case(case.child("nonzero"), case.assumptions + [factor], dict(case.bindings))
            zb = _zero_binding(factor, spec, case)
            branches = [nz.path]
            entry = {"path": case.path or "root", "factor": display_expr(factor), "branches": branches}
            if zb is not None:
                z = Case(case.child("zero"), list(case.assumptions), {**case.bindings, **zb})
                branches.append(z.path)
                entry["zero_specialization"] = sorted(_display_binding(k, v) for k, v in zb.items()
                                                      if not isinstance(k, type) or k.orders[0] == 0)
            else:
                entry["zero_branch"] = "unexplored: no explicit specialization"
                results.append(_result(opts.get("query", "?"), opts, Case(case.child("zero")),
                                       "inconclusive", diagnostic="zero branch not specialized"))
            forks.append(entry)
            for child in [nz] + ([z] if zb is not None else []):
                if case_path is None or case_path.startswith(child.path) or child.path.startswith(case_path):
                    queue.append(child)
            continue
        except ValueError as exc:
            if "cannot assume the zero expression" in str(exc):
                results.append(_result(opts.get("query", "?"), opts, case, "skipped",
                                       diagnostic="contradictory case"))
                continue
            raise
        if case_path is None or case.path.startswith(case_path):
            results.append(res)
    return results, forks


def _result(query: str, opts: dict, case: Case, verdict: str, **data) -> dict:
    out = {"query": query, "window": opts.get("order"), "case": case.path or "root",
           "assumptions": [display_expr(a) for a in case.assumptions],
           "specializations": sorted(_display_binding(k, v) for k, v in case.bindings.items()
                                     if not isinstance(k, type) or k.orders[0] == 0),
           "verdict": verdict}
    out.update(data)
    return out


# Analyses

def _omega(spec: ProblemSpec, case: Case):
    return spec.diffiety(case.assumptions, case.bindings)


def _analysis_standard(spec, case, opts, full: bool):
    omega = _omega(spec, case)
    L = opts["order"]
    try:
        chain = descending_chain(omega, seed=opts["seed"])
    except NotTooSpecialError as exc:
        return _result(opts["query"], opts, case, "inconclusive", diagnostic=str(exc), stable=False)
    r0 = R0(chain)
    B = standard_basis(omega, L=L, seed=opts["seed"], chain=chain)
    D = omega.D
    data = {
        "chain_dims": chain.dims,
        "K": B.K,
        "mu": B.mu,
        "tau": [display_form(t, D) for t in B.tau],
        "pi": [display_form(s, D) for s in B.seeds],
        "pi_levels": list(B.seed_levels),
        "pi_shifts": {f"pi{j}_{s}": display_form(B.family(j, s), D)
                      for j in range(1, B.mu + 1) for s in (1, 2)},
        "certificates": dict(sorted(B.certificates.items())),
        "x_independent": chain.x_independent,
        "R0_frobenius": r0.frobenius,
    }
    ok = all(B.certificates.values()) and chain.x_independent is not False
    # Truncation protocol: the basis must not change when the window grows.
    B_up = standard_basis(omega, L=L + 1, seed=opts["seed"], chain=chain)
    stable = ((B_up.K, B_up.mu, B_up.seed_levels) == (B.K, B.mu, B.seed_levels)
              and FormSpan(B_up.seeds, omega.assumptions).same_span(FormSpan(B.seeds, omega.assumptions))
              and all(B_up.certificates.values()) == all(B.certificates.values()))
    if full:
        g_nat = graded_dims(omega, L + 1)
        g_std = graded_dims(chain.level, L + 1)
        fit = hilbert_fit(g_std)
        data["graded_dims"] = g_nat.dims
        data["graded_dims_standard"] = g_std.dims
        data["nu"] = fit.nu
        data["hilbert_e"] = fit.e
        data["hilbert_onset"] = fit.onset
        data["mu_consistent"] = (fit.mu == B.mu)
        data["injectivity"] = injectivity_window(omega, [D], L).classification
        data["injectivity_standard"] = injectivity_window(chain.level, [D], L).classification
        ok = ok and data["mu_consistent"]
        if fit.inconclusive:
            return _result(opts["query"], opts, case, "inconclusive", stable=False, **data)
        stable = stable and fit.onset is not None and (L + 2) - fit.onset >= fit.nu + 2
    return _result(opts["query"], opts, case, "pass" if ok else "fail", stable=stable, **data)


def analysis_analyze(spec, case, opts):
    return _analysis_standard(spec, case, opts, full=True)


def analysis_standard_basis(spec, case, opts):
    return _analysis_standard(spec, case, opts, full=False)


def analysis_hilbert(spec, case, opts):
    if spec.n == 1:
        levels = _omega(spec, case)
    elif not spec.equations:
        levels = contact_diffiety(spec.m, n=spec.n)
    else:
        return _result(opts["query"], opts, case, "inconclusive",
                       diagnostic="generator presentation needs one independent variable or no equations")
    L = opts["order"]
    cap = max(_max_order(), L)
    while True:
        g = graded_dims(levels, L)
        fit = hilbert_fit(g)
        if not fit.inconclusive or L >= cap:
            break
        L += 1
    lifts = []
    for c in (0, 1, 2):
        f = hilbert_fit(graded_dims(lambda l, c=c: levels.level(l + c) if l >= 0 else [], L,
                                    levels.assumptions))
        lifts.append([f.nu, f.mu])
    invariant = all(v == lifts[0] for v in lifts)
    verdict = "inconclusive" if fit.inconclusive else ("pass" if invariant else "fail")
    opts = {**opts, "order": L}
    return _result(opts["query"], opts, case, verdict, graded_dims=g.dims, nu=fit.nu, hilbert_e=fit.e,
                   mu=fit.mu, hilbert_onset=fit.onset, degenerate=fit.degenerate,
                   lift_invariants=lifts, stable=not fit.inconclusive)


def _solved_system(spec: ProblemSpec) -> SolvedSystem:
    rhs = {(e.direction, spec.dep_index(e.dep)): e.rhs for e in spec.equations}
    return SolvedSystem(spec.n, spec.m, rhs)


def analysis_cartan(spec, case, opts):
    S = _solved_system(spec)
    try:
        rep = cartan_test(S, None)
    except CartanError as exc:
        return _result(opts["query"], opts, case, "fail", diagnostic=f"rejected: {exc}", line="REJECTED",
                       stable=True)
    brute = cartan_brute_force(S, seed=opts["seed"])
    verdict = "pass" if rep.passed and brute == rep.sigma_bar else "fail"
    return _result(opts["query"], opts, case, verdict, line=rep.line(), sigma=list(rep.sigma),
                   sigma_bar=list(rep.sigma_bar), expected=list(rep.expected),
                   brute_force=list(brute), free=rep.free, stable=True)


def _generic_data(spec: ProblemSpec, omega, mu: int) -> list:
    resolved = {spec.dep_index(e.dep) for e in spec.equations}
    args = [independent()] + [jet(j, 0) for j in range(1, spec.m + 1)]
    args += [jet(j, 1) for j in range(1, spec.m + 1) if j not in resolved]
    return [opaque(f"p{j}", len(args))(*args) for j in range(1, mu + 1)]


def analysis_variations(spec, case, opts):
    omega = _omega(spec, case)
    B = standard_basis(omega, L=max(opts["order"], 1), seed=opts["seed"])
    data = {"K": B.K, "mu": B.mu}
    z = opts.get("z")
    ps = opts.get("p") or []
    if not ps:
        cond = infinitesimal_conditions(B, _generic_data(spec, omega, B.mu))
        data["z_elimination"] = display_expr(cond.z_solution) if cond.z_solution is not None else None
        data["conditions"] = [f"{lab}: {display_expr(e)} = 0" for lab, e in cond.reduced]
        return _result(opts["query"], opts, case, "pass", stable=True, **data)
    zx = parse_expression(z, spec) if z else sp.Integer(0)
    pv = [parse_expression(p, spec) for p in ps]
    if len(pv) != B.mu:
        return _result(opts["query"], opts, case, "fail",
                       diagnostic=f"need {B.mu} functions p, got {len(pv)}", stable=True, **data)
    Z = variation_from_data(VariationData(zx, pv), B)
    rep = verify_variation(Z, omega, L=1)
    back = decompose_variation(Z, B)
    round_trip = (sp.expand(back.z - zx) == 0 and all(sp.expand(a - b) == 0 for a, b in zip(back.p, pv)))
    cond = infinitesimal_conditions(B, pv, zx)
    data.update({
        "coefficients": {str(c): display_expr(Z[c]) for c in
                         [omega.x] + [jet(j, 0) for j in range(1, spec.m + 1)]},
        "variation_ok": rep.ok,
        "prolongation_rule_ok": rep.rule_ok,
        "witness": display_form(rep.witness) if rep.witness is not None else None,
        "round_trip": round_trip,
        "residuals": [f"{lab}: {display_expr(e)}" for lab, e in cond.reduced],
        "conditions_satisfied": cond.satisfied,
    })
    verdict = "pass" if rep.ok and round_trip else "fail"
    return _result(opts["query"], opts, case, verdict, stable=True, **data)


def _read_seeds(path: str, spec: ProblemSpec) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            lhs, arrow, rhs = line.partition("->")
            lhs = lhs.strip()
            if not arrow or lhs not in spec.indep + spec.dep:
                raise DslError("expected '<variable> -> <expr>'", lineno, 1)
            out[lhs] = parse_expression(rhs, spec, lineno, raw.index("->") + 2)
    return out


def analysis_check_symmetry(spec, case, opts):
    omega = _omega(spec, case)
    seeds = _read_seeds(opts["seeds"], spec) if opts.get("seeds") else {}
    F = seeds.get(spec.indep[0], independent())
    m = Morphism(omega, F, {spec.dep_index(d): seeds[d] for d in spec.dep if d in seeds})
    verdict = verify_symmetry(m, L=opts["order"])
    return _result(opts["query"], opts, case, "pass" if verdict == "symmetry" else "fail",
                   classification=verdict, DF=display_expr(m.DF), stable=True)


def _seed_tuple(text: str | None, spec: ProblemSpec):
    if not text:
        return None
    return [parse_expression(t, spec) for t in text.split(";")]


def analysis_wave(spec, case, opts):
    Ws = [parse_expression(w, spec) for w in opts.get("W") or []]
    if not Ws:
        return _result(opts["query"], opts, case, "fail", diagnostic="no W expressions given",
                       stable=True)
    fwd = _seed_tuple(opts.get("forward"), spec)
    bwd = _seed_tuple(opts.get("backward"), spec)
    try:
        if opts.get("single"):
            res = wave_symmetry_single(Ws[0], spec.m, fwd, bwd, order=opts["order"])
        else:
            res = wave_symmetry(Ws, spec.m, fwd, bwd, order=opts["order"])
    except WaveError as exc:
        return _result(opts["query"], opts, case, "fail", diagnostic=str(exc), stable=True)
    x = independent()
    names = [x] + [jet(j, s) for j in range(1, spec.m + 1) for s in range(2)]
    data = {
        "forward": {str(c): display_expr(res.forward.image(c)) for c in names},
        "inverse": {str(c): display_expr(res.inverse.image(c)) for c in names},
        "inverse_certified": res.certified,
        "backward_implied": res.backward_implied,
        "diagnostics": res.diagnostics,
    }
    ok = res.certified and res.backward_implied
    return _result(opts["query"], opts, case, "pass" if ok else "fail", stable=True, **data)


ANALYSES = {
    "analyze": analysis_analyze,
    "standard-basis": analysis_standard_basis,
    "variations": analysis_variations,
    "check-symmetry": analysis_check_symmetry,
    "wave": analysis_wave,
    "hilbert": analysis_hilbert,
    "cartan": analysis_cartan,
}


def run(spec: ProblemSpec, command: str, order: int | None = None, seed: int = 0,
        case: str | None = None, **extra) -> Report:
    """Run ``command`` (plus matching ``query`` lines of the file) over the case tree."""
    if command not in ANALYSES:
        raise ValueError(f"unknown analysis {command!r}")
    file_opts = {}
    for name, qopts in spec.queries:
        if name == command:
            file_opts.update(qopts)
    if order is None:
        order = int(file_opts.get("order", DEFAULT_ORDER))
    order = min(order, _max_order())
    opts = {**file_opts, **{k: v for k, v in extra.items() if v is not None},
            "order": order, "seed": seed, "query": command}
    results, forks = _run_cases(spec, ANALYSES[command], opts, case)
    stable = all(r.get("stable", False) for r in results if r["verdict"] != "skipped")
    return Report(spec.name, order, [display_expr(a) for a in spec.assumptions], results, forks, stable)


# Rendering

def _text_value(v) -> str:
    if isinstance(v, dict):
        return "; ".join(f"{k} = {_text_value(x)}" for k, x in v.items())
    if isinstance(v, list):
        return "[" + ", ".join(_text_value(x) for x in v) + "]"
    return str(v)


def render(report: Report, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.as_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n"
    lines = [f"system: {report.system}", f"window: {report.window}",
             f"assumptions: {', '.join(report.assumptions) or 'none'}"]
    for fk in report.forks:
        lines.append(f"fork at {fk['path']}: {fk['factor']} -> {', '.join(fk['branches'])}")
    skip = {"query", "window", "case", "verdict", "line"}
    for r in report.results:
        head = f"[{r['query']} case={r['case']}] {r['verdict'].upper()}"
        lines.append(head)
        if "line" in r:
            lines.append(f"  {r['line']}")
        for k in sorted(r):
            if k in skip or r[k] in (None, [], {}):
                continue
            lines.append(f"  {k}: {_text_value(r[k])}")
    lines.append(f"stable: {report.stable}")
    return "\n".join(lines) + "\n"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diffiety", description="Standard bases, symmetries and involutivity of diffieties.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ANALYSES:
        sp_ = sub.add_parser(name)
        sp_.add_argument("file")
        sp_.add_argument("--order", type=int, default=None)
        sp_.add_argument("--seed", type=int, default=0)
        sp_.add_argument("--format", choices=("text", "json"), default="text")
        sp_.add_argument("--case", default=None, help="fork path such as nonzero/zero")
        if name == "variations":
            sp_.add_argument("--z", default=None)
            sp_.add_argument("--p", action="append", default=None)
        if name == "check-symmetry":
            sp_.add_argument("--seeds", required=True)
        if name == "wave":
            sp_.add_argument("--W", action="append", required=True)
            sp_.add_argument("--single", action="store_true")
            sp_.add_argument("--forward", default=None, help="x; w1; ...; wm images separated by ';'")
            sp_.add_argument("--backward", default=None)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.file, encoding="utf-8") as fh:
            spec = parse(fh.read())
        extra = {k: getattr(args, k, None) for k in ("z", "p", "seeds", "W", "single", "forward", "backward")}
        report = run(spec, args.command, args.order, args.seed, args.case, **extra)
    except (DslError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError) as exc:
        print(f"error ({type(exc).__module__}): {exc}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(render(report, args.format))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
