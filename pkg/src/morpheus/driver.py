"""Verification driver: load sources, desugar, check bindings in order,
discharge VCs, assemble per-binding results.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Optional

from . import core_ast as C
from .core_ast import (
    BaseRef,
    Comp,
    FTrue,
    Named,
    TypeScheme,
    TypingContext,
    monotype,
    qual,
    reset_fresh_names,
)
from .logic import build_theory
from .logic.client import DischargeOptions, discharge
from .logic.theory import Theory
from .surface import CoreProgram, SurfaceError, desugar, parse_source
from .surface.ast import Diagnostic, DInclude
from .typecheck import VC, Checker, Derivation, TypeError_

_STDLIB_DIR = os.path.join(os.path.dirname(__file__), "stdlib")


@dataclass
class BindingResult:
    name: str
    verdict: str  # "verifies" | "rejected" | "unchecked" | "error"
    vcs: list[VC] = field(default_factory=list)
    verdicts: dict[str, object] = field(default_factory=dict)  # vc id -> SolverVerdict
    rule_counts: dict[str, int] = field(default_factory=dict)
    derivation: Optional[Derivation] = None
    diagnostics: list[Diagnostic] = field(default_factory=list)
    time: float = 0.0


@dataclass
class VerifyResult:
    program: CoreProgram
    bindings: list[BindingResult]
    theory: Theory
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(b.verdict in ("verifies", "unchecked") for b in self.bindings) and not any(
            d.severity == "error" for d in self.diagnostics
        )

    def all_vcs(self) -> list[VC]:
        out = []
        for b in self.bindings:
            out.extend(b.vcs)
        return out


def load_program(path: str, no_prelude: bool = False, text: Optional[str] = None) -> CoreProgram:
    """Parse a .mor file plus the prelude and includes, then desugar."""
    sources = []
    seen: set[str] = set()

    def load(p: str, base: str):
        full = p if os.path.isabs(p) else os.path.join(base, p)
        full = os.path.normpath(full)
        if full in seen:
            return
        seen.add(full)
        with open(full, "r", encoding="utf-8") as fh:
            src = parse_source(fh.read())
        _expand(src, os.path.dirname(full))

    def _expand(src, base: str):
        from .surface.ast import SourceProgram

        decls = []
        for d in src.decls:
            if isinstance(d, DInclude):
                load(d.path, base)
            else:
                decls.append(d)
        sources.append(SourceProgram(tuple(decls)))

    if not no_prelude:
        load("prelude.mor", _STDLIB_DIR)
    if text is not None:
        _expand(parse_source(text), os.getcwd())
    else:
        load(path, os.getcwd())
    return desugar(sources)


def base_context(prog: CoreProgram) -> TypingContext:
    ctx = TypingContext()
    for sig in prog.ctors:
        ctx = ctx.with_ctor(sig)
    # option type for lookahead results
    if not any(s.name == "Some" for s in prog.ctors):
        a = C.TyVar("a")
        ctx = ctx.with_ctor(C.CtorSig("Some", ("a",), (BaseRef("nu", a, FTrue()),), Named("option", (a,))))
        ctx = ctx.with_ctor(C.CtorSig("None", ("a",), (), Named("option", (a,))))
    for q in prog.qualifiers:
        ctx = ctx.with_qualifier(q)
    ctx = ctx.bind_ref(C.INP, BaseRef("nu", C.STREAM_TYPE, FTrue()))
    for name, ty, _init in prog.refs:
        ctx = ctx.bind_ref(name, BaseRef("nu", ty, FTrue()))
    # every top-level reference exists before any parser runs
    for loc in ctx.locations():
        ctx = ctx.assume(qual("dom", C.tvar("h"), C.TLoc(loc)))
    return ctx


def program_theory(prog: CoreProgram) -> Theory:
    locations = [C.INP] + [name for name, _, _ in prog.refs]
    extra = [(f"user-axiom-{i}", ax) for i, ax in enumerate(prog.axioms)]
    th = build_theory(
        locations,
        qualifiers=list(prog.qualifiers),
        ctor_sigs=[c for c in prog.ctors if c.name not in ("Inl", "Inr", "cons", "nil", "pair")],
        extra_axioms=extra,
    )
    for name, params, result in prog.qualifier_sigs:
        th.signatures[name] = (
            tuple("int" if isinstance(p, C.TInt) else "bool" if isinstance(p, C.TBool) else "v" for p in params),
            "int" if isinstance(result, C.TInt) else "bool" if isinstance(result, C.TBool) else "v",
        )
    return th


def compute_footprints(prog: CoreProgram) -> dict[str, frozenset[str]]:
    """Write footprints per binding, transitively over the call graph."""
    direct: dict[str, set[str]] = {}
    calls: dict[str, set[str]] = {}
    names = {b.name for b in prog.bindings}

    def walk(e, fp: set[str], cs: set[str]):
        if isinstance(e, C.Assign):
            fp.add(e.loc)
            walk(e.value, fp, cs)
        elif isinstance(e, C.CharP):
            fp.add(C.INP)
            walk(e.arg, fp, cs)
        elif isinstance(e, C.Var):
            if e.name in names:
                cs.add(e.name)
        elif isinstance(e, (C.Expr, C.ParserExpr)):
            import dataclasses

            for f in dataclasses.fields(e):
                if f.name == "span":
                    continue
                v = getattr(e, f.name)
                if isinstance(v, (C.Expr, C.ParserExpr)):
                    walk(v, fp, cs)
                elif isinstance(v, tuple):
                    for x in v:
                        if isinstance(x, (C.Expr, C.ParserExpr)):
                            walk(x, fp, cs)
                        elif isinstance(x, C.Branch):
                            walk(x.body, fp, cs)

    for b in prog.bindings:
        fp: set[str] = set()
        cs: set[str] = set()
        if b.primitive:
            fp.add(C.INP)
        else:
            walk(b.expr, fp, cs)
        direct[b.name] = fp
        calls[b.name] = cs

    changed = True
    while changed:
        changed = False
        for name in direct:
            for callee in calls.get(name, ()):
                extra = direct.get(callee, set()) - direct[name]
                if extra:
                    direct[name] |= extra
                    changed = True
    return {k: frozenset(v) for k, v in direct.items()}


def verify_program(
    prog: CoreProgram,
    options: Optional[DischargeOptions] = None,
    check_only: bool = False,
) -> VerifyResult:
    """Check every specified binding and discharge its VCs."""
    reset_fresh_names()
    options = options or DischargeOptions()
    theory = program_theory(prog)
    footprints = compute_footprints(prog)
    ctx = base_context(prog)
    results: list[BindingResult] = []
    diagnostics: list[Diagnostic] = []

    for b in prog.bindings:
        t0 = time.monotonic()
        if b.primitive:
            ctx = ctx.bind(b.name, b.spec)
            results.append(BindingResult(b.name, "unchecked"))
            continue
        checker = Checker(ctx, b.name, footprints)
        if b.spec is None:
            # unannotated: synthesize and record the inferred type
            try:
                expr = b.expr
                inner = expr.parser if isinstance(expr, C.Parser) else expr
                if isinstance(inner, C.ParserExpr):
                    ty, _ = checker.synth_parser(ctx, inner)
                else:
                    ty, _ = checker.synth(ctx, inner)
                scheme = ty if isinstance(ty, TypeScheme) else monotype(ty)
                ctx = ctx.bind(b.name, scheme)
                res = BindingResult(b.name, "unchecked", vcs=checker.vcs, rule_counts=checker.rule_counts)
                res.time = time.monotonic() - t0
                results.append(res)
            except TypeError_ as ex:
                diagnostics.append(Diagnostic("error", ex.span, f"{b.name}: {ex.message}"))
                results.append(BindingResult(b.name, "error"))
            continue
        try:
            derivation = checker.check(ctx, b.expr, b.spec, b.span)
        except TypeError_ as ex:
            diagnostics.append(Diagnostic("error", ex.span, f"{b.name}: {ex.message}"))
            results.append(BindingResult(b.name, "error"))
            ctx = ctx.bind(b.name, b.spec)
            continue
        res = BindingResult(b.name, "verifies", vcs=checker.vcs, rule_counts=checker.rule_counts)
        res.derivation = derivation
        if not check_only:
            verdicts = discharge(checker.vcs, theory, options)
            res.verdicts = verdicts
            bad = [vid for vid, v in verdicts.items() if v.status != "valid"]
            if bad:
                res.verdict = "rejected"
                for vid in bad:
                    vc = next(v for v in checker.vcs if v.id == vid)
                    verdict = verdicts[vid]
                    res.diagnostics.append(
                        Diagnostic(
                            "error",
                            vc.provenance.span,
                            f"{b.name}: VC {vid} ({vc.provenance.rule}, {vc.provenance.path} path, "
                            f"{vc.provenance.note}) is {verdict.status}"
                            + (f": {verdict.model_sketch}" if getattr(verdict, 'model_sketch', '') else ""),
                            vc_id=vid,
                        )
                    )
        res.time = time.monotonic() - t0
        results.append(res)
        ctx = ctx.bind(b.name, b.spec)

    return VerifyResult(prog, results, theory, diagnostics)


def verify_file(path: str, options: Optional[DischargeOptions] = None, no_prelude: bool = False) -> VerifyResult:
    prog = load_program(path, no_prelude=no_prelude)
    return verify_program(prog, options)
