"""Surface-to-core lowering.

Responsibilities: do-notation into right-nested binds, `if` into boolean
match, A-normalization (effectful subterms hoisted onto binds, compound pure
arguments let-bound), the derived-combinator macros (map, >>, <<, option,
star/many, plus, count, any), and resolution of specification formulas
(`sel (h, ids)` picks the select family of the reference's sort, known
reference names become location symbols).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .. import core_ast as C
from ..core_ast import (
    Span,
    NO_SPAN,
    BaseRef,
    Comp,
    FTrue,
    Named,
    TypeScheme,
    monotype,
)
from ..effects import PARSER, STEXC
from .ast import (
    Diagnostic,
    DInclude,
    DLet,
    DQualifierDef,
    DQualifierSig,
    DAxiom,
    DRef,
    DSpec,
    DType,
    SApp,
    SArm,
    SAscribe,
    SAssign,
    SBind,
    SBinOp,
    SBool,
    SBot,
    SChar,
    SCharLit,
    SChoice,
    SDeref,
    SDo,
    SDoBind,
    SDoExpr,
    SDoLet,
    SEps,
    SExpr,
    SFail,
    SFix,
    SIf,
    SInt,
    SLambda,
    SLet,
    SList,
    SMatch,
    SourceProgram,
    SReturn,
    SString,
    SUnit,
    SVar,
    SurfaceError,
)

PRIM_NAMES = {
    "mem", "len", "hd", "tail", "chr", "pos", "sourceColumn", "not",
}

MACRO_NAMES = {"map", "option", "star", "many", "plus", "count", "any", "seq", "seql"}

NATIVE_PARSERS = {
    "identifier", "number", "digit", "keyword", "reserved", "string",
    "operator", "symbol", "lookAhead", "lookAheadMatches", "optional",
    "consume", "spaces",
}


class DesugarError(SurfaceError):
    pass


def _err(message: str, span: Span) -> DesugarError:
    return DesugarError(Diagnostic("error", span, message))


@dataclass
class CoreBinding:
    name: str
    expr: Union[C.Expr, C.ParserExpr]
    spec: Optional[TypeScheme]
    span: Span
    primitive: bool = False


@dataclass
class CoreProgram:
    """Desugared program: everything the checker, logic and interpreter need."""

    ctors: list[C.CtorSig] = field(default_factory=list)
    qualifiers: list[C.QualifierDef] = field(default_factory=list)
    qualifier_sigs: list[tuple[str, tuple, object]] = field(default_factory=list)
    axioms: list[C.Formula] = field(default_factory=list)
    refs: list[tuple[str, C.BaseType, C.Expr]] = field(default_factory=list)
    bindings: list[CoreBinding] = field(default_factory=list)
    alias_preds: dict[str, tuple[str, int]] = field(default_factory=dict)  # alias -> (ctor, arity)

    def ref_sorts(self) -> dict[str, C.BaseType]:
        out = {C.INP: C.STREAM_TYPE}
        for name, ty, _ in self.refs:
            out[name] = ty
        return out


BUILTIN_CTORS = [
    C.CtorSig("Inl", ("a",), (BaseRef("nu", C.TyVar("a"), FTrue()),), C.TResult(C.TyVar("a"))),
    C.CtorSig("Inr", ("a",), (BaseRef("nu", C.EXC, FTrue()),), C.TResult(C.TyVar("a"))),
    C.CtorSig(
        "cons",
        ("a",),
        (BaseRef("nu", C.TyVar("a"), FTrue()), BaseRef("nu", C.list_of(C.TyVar("a")), FTrue())),
        C.list_of(C.TyVar("a")),
    ),
    C.CtorSig("nil", ("a",), (), C.list_of(C.TyVar("a"))),
    C.CtorSig(
        "pair",
        ("a", "b"),
        (BaseRef("nu", C.TyVar("a"), FTrue()), BaseRef("nu", C.TyVar("b"), FTrue())),
        Named("pair", (C.TyVar("a"), C.TyVar("b"))),
    ),
]


class Desugarer:
    def __init__(self):
        self._fresh = 0
        self.prog = CoreProgram()
        self.ctor_names: set[str] = {c.name for c in BUILTIN_CTORS}
        self.known_bindings: set[str] = set(NATIVE_PARSERS)

    def fresh(self, stem: str) -> str:
        self._fresh += 1
        return f"{stem}${self._fresh}"

    # -- program ------------------------------------------------------------

    def run(self, sources: list[SourceProgram]) -> CoreProgram:
        self.prog.ctors.extend(BUILTIN_CTORS)
        for src in sources:
            for d in src.decls:
                self.decl(d)
        self._resolve_everything()
        return self.prog

    def decl(self, d) -> None:
        if isinstance(d, DInclude):
            raise _err("includes must be resolved by the loader before desugaring", d.span)
        if isinstance(d, DType):
            self._type_decl(d)
            return
        if isinstance(d, DQualifierDef):
            params, result = _infer_clause_sorts(d.clauses)
            self.prog.qualifiers.append(C.QualifierDef(d.name, params, result, tuple(d.clauses)))
            return
        if isinstance(d, DQualifierSig):
            self.prog.qualifier_sigs.append((d.name, tuple(d.params), d.result))
            return
        if isinstance(d, DAxiom):
            self.prog.axioms.append(d.formula)
            return
        if isinstance(d, DRef):
            init = self.expr(d.init, pure=True)
            ty = _init_type(init, d.span)
            self.prog.refs.append((d.name, ty, init))
            return
        if isinstance(d, DSpec):
            if d.primitive:
                self.prog.bindings.append(CoreBinding(d.name, C.Var(d.name), d.scheme, d.span, primitive=True))
                self.known_bindings.add(d.name)
                return
            self._pending_spec = (d.name, d.scheme, d.span)
            return
        if isinstance(d, DLet):
            spec = None
            pending = getattr(self, "_pending_spec", None)
            if pending is not None and pending[0] == d.name:
                spec = pending[1]
                self._pending_spec = None
            body: SExpr = d.body
            for name, ty in reversed(d.params):
                body = SLambda(((name, ty),), body, span=d.span)
            core = self.expr(body, pure=False)
            self.prog.bindings.append(CoreBinding(d.name, core, spec, d.span))
            self.known_bindings.add(d.name)
            return
        raise _err(f"unsupported declaration {type(d).__name__}", getattr(d, "span", NO_SPAN))

    def _type_decl(self, d: DType) -> None:
        result = Named(d.name, tuple(C.TyVar(p) for p in d.params))
        if d.refines:
            # refined alias of an existing constructor's datatype
            self.prog.alias_preds[d.name] = (d.refines, len(d.params))
            self._alias_axioms(d)
            return
        for ctor in d.ctors:
            fields = tuple(f if isinstance(f, BaseRef) else BaseRef("nu", f, FTrue()) for f in ctor.fields)
            self.prog.ctors.append(C.CtorSig(ctor.name, tuple(d.params), fields, result, ctor.field_names))
            self.ctor_names.add(ctor.name)

    def _alias_axioms(self, d: DType) -> None:
        """A refined record alias `type offside i = Tree {... refined ...}`
        defines a predicate offside(value, i...) with an introduction axiom
        from the field refinements (recursive occurrences become predicate
        calls, element-wise over list fields)."""
        ctor = d.ctors[0]
        base = next((c for c in self.prog.ctors if c.name == ctor.name), None)
        if base is None:
            raise _err(f"refined alias over unknown constructor '{ctor.name}'", d.span)
        args = [C.tvar(f"x{i}") for i in range(len(ctor.fields))]
        params = [C.tvar(p) for p in d.params]
        conds: list[C.Formula] = []
        for i, fld in enumerate(ctor.fields):
            if not isinstance(fld, BaseRef):
                continue
            refn = fld.refinement
            if not isinstance(refn, FTrue):
                conds.append(C.subst_formula(refn, fld.binder, args[i]))
            fb = fld.base
            if isinstance(fb, Named) and fb.name == d.name:
                conds.append(C.QualApp(d.name, (args[i], *params)))
            if isinstance(fb, Named) and fb.name == "list" and isinstance(fb.args[0], Named) and fb.args[0].name == d.name:
                conds.append(C.QualApp(d.name + "_all", (args[i], *params)))
        value = C.TApp(ctor.name, tuple(args))
        binders = [(f"x{i}", _field_base(ctor.fields[i])) for i in range(len(args))]
        binders += [(p, C.INT) for p in d.params]
        self.prog.qualifier_sigs.append(
            (d.name, (Named("data", ()),) + tuple(C.INT for _ in d.params), C.TBool())
        )
        self.prog.qualifier_sigs.append(
            (d.name + "_all", (Named("data", ()),) + tuple(C.INT for _ in d.params), C.TBool())
        )
        intro = C.forall(binders, C.implies(C.conj(*conds), C.QualApp(d.name, (value, *params))))
        self.prog.axioms.append(intro)
        # element-wise list predicate
        x, xs = C.tvar("x"), C.tvar("xs")
        pvars = [(p, C.INT) for p in d.params]
        self.prog.axioms.append(
            C.forall(pvars, C.QualApp(d.name + "_all", (C.nil(), *params)))
        )
        self.prog.axioms.append(
            C.forall(
                [("x", Named("data", ())), ("xs", Named("data", ()))] + pvars,
                C.implies(
                    C.conj(C.QualApp(d.name, (x, *params)), C.QualApp(d.name + "_all", (xs, *params))),
                    C.QualApp(d.name + "_all", (C.cons(x, xs), *params)),
                ),
            )
        )

    # -- expressions -----------------------------------------------------------

    def expr(self, e: SExpr, pure: bool):
        """Lower an expression. `pure=True` contexts reject parser forms."""
        core = self._expr(e)
        return core

    def _expr(self, e: SExpr):
        if isinstance(e, SInt):
            return C.Const(e.value, span=e.span)
        if isinstance(e, SBool):
            return C.Const(e.value, span=e.span)
        if isinstance(e, SChar):
            return C.Const(C.CharVal(e.value), span=e.span)
        if isinstance(e, SUnit):
            return C.Const(C.UNIT_VAL, span=e.span)
        if isinstance(e, SString):
            return _string_value(e.value, e.span)
        if isinstance(e, SList):
            out = C.CApp("nil", (), (), span=e.span)
            for item in reversed(e.items):
                out = C.CApp("cons", (), (self._atomize_now(item), out), span=e.span)
            return out
        if isinstance(e, SVar):
            if e.name.startswith("@ctor:"):
                return C.CApp(e.name[6:], (), (), span=e.span)
            if e.name.startswith("@record:"):
                return C.CApp(e.name[8:], (), (), span=e.span)
            return C.Var(e.name, span=e.span)
        if isinstance(e, SDeref):
            return C.Deref(e.name, span=e.span)
        if isinstance(e, SAssign):
            value, prefix = self._hoist(e.value)
            core = C.Assign(e.name, value, span=e.span)
            return _wrap_binds(prefix, core, e.span)
        if isinstance(e, SReturn):
            value, prefix = self._hoist(e.value)
            core = C.Return(value, span=e.span)
            return _wrap_binds(prefix, core, e.span)
        if isinstance(e, SFail):
            return C.Parser(C.Bot(e.message, span=e.span), span=e.span)
        if isinstance(e, SEps):
            return C.Parser(C.Eps(span=e.span), span=e.span)
        if isinstance(e, SBot):
            return C.Parser(C.Bot(None, span=e.span), span=e.span)
        if isinstance(e, SCharLit):
            arg, prefix = self._hoist(e.arg)
            core = C.Parser(C.CharP(arg, span=e.span), span=e.span)
            return _wrap_binds(prefix, core, e.span)
        if isinstance(e, SBind):
            left = self._as_parser(self._expr(e.left), e.span)
            right = self._expr(e.right)
            return C.Parser(C.Bind(left, right, span=e.span), span=e.span)
        if isinstance(e, SChoice):
            l = self._as_parser(self._expr(e.left), e.span)
            r = self._as_parser(self._expr(e.right), e.span)
            return C.Parser(C.Choice(l, r, span=e.span), span=e.span)
        if isinstance(e, SDo):
            return self._do(e.stmts, e.span)
        if isinstance(e, SIf):
            cond, prefix = self._hoist(e.cond)
            if not isinstance(cond, (C.Var, C.Const)):
                g = self.fresh("g")
                then = self._expr(e.then)
                orelse = self._expr(e.orelse)
                m = C.LetVal(
                    g,
                    cond,
                    C.Match(
                        C.Var(g),
                        (C.Branch("True", (), (), then), C.Branch("False", (), (), orelse)),
                        span=e.span,
                    ),
                    span=e.span,
                )
            else:
                m = C.Match(
                    cond,
                    (C.Branch("True", (), (), self._expr(e.then)), C.Branch("False", (), (), self._expr(e.orelse))),
                    span=e.span,
                )
            return _wrap_binds(prefix, m, e.span)
        if isinstance(e, SMatch):
            scrut, prefix = self._hoist(e.scrutinee)
            if not isinstance(scrut, (C.Var, C.Const)):
                g = self.fresh("m")
                branches = tuple(C.Branch(a.ctor, (), a.binders, self._expr(a.body)) for a in e.arms)
                core = C.LetVal(g, scrut, C.Match(C.Var(g), branches, span=e.span), span=e.span)
            else:
                branches = tuple(C.Branch(a.ctor, (), a.binders, self._expr(a.body)) for a in e.arms)
                core = C.Match(scrut, branches, span=e.span)
            return _wrap_binds(prefix, core, e.span)
        if isinstance(e, SLambda):
            body = self._expr(e.body)
            for name, ty in reversed(e.params):
                body = C.Lambda(name, ty, body, span=e.span)
            return body
        if isinstance(e, SLet):
            value, prefix = self._hoist(e.value)
            body = self._expr(e.body)
            return _wrap_binds(prefix, C.LetVal(e.var, value, body, span=e.span), e.span)
        if isinstance(e, SFix):
            body = self._expr(e.body)
            return C.Parser(C.Fix(e.var, e.annot, _to_parser(body, e.span), span=e.span), span=e.span)
        if isinstance(e, SAscribe):
            return self._ascribe(e)
        if isinstance(e, SBinOp):
            return self._binop(e)
        if isinstance(e, SApp):
            return self._app(e)
        raise _err(f"cannot desugar {type(e).__name__}", getattr(e, "span", NO_SPAN))

    # -- do-notation -------------------------------------------------------------

    def _do(self, stmts, span: Span):
        if not stmts:
            return C.Parser(C.Eps(span=span), span=span)
        head, rest = stmts[0], stmts[1:]
        if isinstance(head, SDoExpr) and not rest:
            return self._expr(head.expr)
        if isinstance(head, SDoLet):
            value, prefix = self._hoist(head.expr)
            body = self._do(rest, span)
            return _wrap_binds(prefix, C.LetVal(head.var, value, body, span=head.span), head.span)
        if isinstance(head, (SDoBind, SDoExpr)):
            var = head.var if isinstance(head, SDoBind) else "_"
            left = self._as_parser(self._expr(head.expr), head.span)
            if not rest:
                if isinstance(head, SDoExpr):
                    return C.Parser(left, span=span) if isinstance(left, C.ParserExpr) else left
                # trailing bind: return its value
                body = C.Return(C.Var(var), span=head.span)
                lam = C.Lambda(var, None, body, span=head.span)
                return C.Parser(C.Bind(left, lam, span=head.span), span=span)
            body = self._do(rest, span)
            lam = C.Lambda(var, None, body, span=head.span)
            return C.Parser(C.Bind(left, lam, span=head.span), span=span)
        raise _err("bad do statement", span)

    # -- applications and macros ---------------------------------------------------

    def _app(self, e: SApp):
        fn = e.fn
        if isinstance(fn, SVar) and fn.name.startswith("@record:"):
            name = fn.name[8:]
            args, prefix = self._hoist_many(e.args)
            sig = next((c for c in self.prog.ctors if c.name == name), None)
            core = C.CApp(name, (), tuple(args), span=e.span)
            return _wrap_binds(prefix, core, e.span)
        if isinstance(fn, SVar) and fn.name.startswith("@ctor:"):
            name = fn.name[6:]
            args, prefix = self._hoist_many(e.args)
            return _wrap_binds(prefix, C.CApp(name, (), tuple(args), span=e.span), e.span)
        if isinstance(fn, SVar) and fn.name in MACRO_NAMES:
            return self._macro(fn.name, e, None)
        if isinstance(fn, SVar) and fn.name in PRIM_NAMES:
            args, prefix = self._hoist_many(e.args)
            return _wrap_binds(prefix, C.Prim(fn.name, tuple(args), span=e.span), e.span)
        # general application: curried, atomic arguments
        args, prefix = self._hoist_many(e.args)
        core = self._expr(fn)
        lets: list[tuple[str, C.Expr]] = []
        for a in args:
            if isinstance(a, (C.Var, C.Const)):
                core = C.App(core, a, span=e.span)
            else:
                tmp = self.fresh("a")
                lets.append((tmp, a))
                core = C.App(core, C.Var(tmp), span=e.span)
        for tmp, value in reversed(lets):
            core = C.LetVal(tmp, value, core, span=e.span)
        return _wrap_binds(prefix, core, e.span)

    def _macro(self, name: str, e: SApp, annot: Optional[TypeScheme]):
        span = e.span
        args = e.args
        if name == "map":
            if len(args) != 2:
                raise _err("map expects a function and a parser", span)
            f = self._expr(args[0])
            p = self._as_parser(self._expr(args[1]), span)
            # map f p = p >>= \x. return (f x)
            x = self.fresh("x")
            body = C.Return(C.App(f, C.Var(x), span=span), span=span)
            return C.Parser(C.Bind(p, C.Lambda(x, None, body, span=span), span=span), span=span)
        if name in ("seq", "seql"):  # p >> q ; p << q
            p = self._as_parser(self._expr(args[0]), span)
            q = self._as_parser(self._expr(args[1]), span)
            if name == "seq":
                return C.Parser(C.Bind(p, C.Lambda("_", None, C.Parser(q, span=span), span=span), span=span), span=span)
            x = self.fresh("x")
            inner = C.Bind(q, C.Lambda("_", None, C.Return(C.Var(x), span=span), span=span), span=span)
            return C.Parser(
                C.Bind(p, C.Lambda(x, None, C.Parser(inner, span=span), span=span), span=span), span=span
            )
        if name == "option":
            p = self._as_parser(self._expr(args[0]), span)
            x = self.fresh("r")
            left = C.Bind(p, C.Lambda(x, None, C.Return(C.CApp("Some", (), (C.Var(x),)), span=span), span=span), span=span)
            right = C.Bind(C.Eps(span=span), C.Lambda("_", None, C.Return(C.CApp("None", (), ()), span=span), span=span), span=span)
            return C.Parser(C.Choice(left, right, span=span), span=span)
        if name in ("star", "many"):
            p = self._as_parser(self._expr(args[0]), span)
            return C.Parser(self._star(p, annot, span), span=span)
        if name == "plus":
            p = self._as_parser(self._expr(args[0]), span)
            x, xs = self.fresh("x"), self.fresh("xs")
            star = self._star(p, annot, span)
            inner = C.Bind(
                star,
                C.Lambda(xs, None, C.Return(C.CApp("cons", (), (C.Var(x), C.Var(xs))), span=span), span=span),
                span=span,
            )
            return C.Parser(
                C.Bind(p, C.Lambda(x, None, C.Parser(inner, span=span), span=span), span=span), span=span
            )
        if name == "count":
            if len(args) != 2:
                raise _err("count expects a count and a parser", span)
            n, prefix = self._hoist(args[0])
            p = self._as_parser(self._expr(args[1]), span)
            core = self._count(p, annot, span)
            if not isinstance(n, (C.Var, C.Const)):
                tmp = self.fresh("n")
                out = C.LetVal(tmp, n, C.App(core, C.Var(tmp), span=span), span=span)
            else:
                out = C.App(core, n, span=span)
            return _wrap_binds(prefix, out, span)
        if name == "any":
            if len(args) == 1 and isinstance(args[0], SList):
                items = [self._as_parser(self._expr(i), span) for i in args[0].items]
            else:
                items = [self._as_parser(self._expr(i), span) for i in args]
            if not items:
                raise _err("any of zero parsers", span)
            out = items[0]
            for p in items[1:]:
                out = C.Choice(out, p, span=span)
            return C.Parser(out, span=span)
        raise _err(f"unknown derived combinator '{name}'", span)

    def _star(self, p: C.ParserExpr, annot: Optional[TypeScheme], span: Span) -> C.Fix:
        s = self.fresh("p_star")
        x, xs = self.fresh("x"), self.fresh("xs")
        scheme = annot or _default_star_scheme()
        nil_branch = C.Bind(
            C.Eps(span=span), C.Lambda("_", None, C.Return(C.CApp("nil", (), ()), span=span), span=span), span=span
        )
        rec = C.Bind(
            C.Embed(C.Var(s, span=span), span=span),
            C.Lambda(xs, None, C.Return(C.CApp("cons", (), (C.Var(x), C.Var(xs))), span=span), span=span),
            span=span,
        )
        cons_branch = C.Bind(p, C.Lambda(x, None, C.Parser(rec, span=span), span=span), span=span)
        return C.Fix(s, scheme, C.Choice(nil_branch, cons_branch, span=span), span=span)

    def _count(self, p: C.ParserExpr, annot: Optional[TypeScheme], span: Span) -> C.Expr:
        cvar = self.fresh("count_p")
        k, x, xs = self.fresh("k"), self.fresh("x"), self.fresh("xs")
        scheme = annot or _default_count_scheme()
        nil_branch = C.Parser(
            C.Bind(C.Eps(span=span), C.Lambda("_", None, C.Return(C.CApp("nil", (), ()), span=span), span=span), span=span),
            span=span,
        )
        k1 = self.fresh("k1")
        rec_inner = C.Bind(
            C.Embed(C.App(C.Var(cvar), C.Var(k1), span=span), span=span),
            C.Lambda(xs, None, C.Return(C.CApp("cons", (), (C.Var(x), C.Var(xs))), span=span), span=span),
            span=span,
        )
        rec = C.LetVal(
            k1,
            C.Prim("-", (C.Var(k), C.Const(1)), span=span),
            C.Parser(rec_inner, span=span),
            span=span,
        )
        cons_branch = C.Parser(C.Bind(p, C.Lambda(x, None, rec, span=span), span=span), span=span)
        g = self.fresh("g")
        body = C.LetVal(
            g,
            C.Prim("<=", (C.Var(k), C.Const(0)), span=span),
            C.Match(C.Var(g), (C.Branch("True", (), (), nil_branch), C.Branch("False", (), (), cons_branch)), span=span),
            span=span,
        )
        lam = C.Lambda(k, BaseRef("nu", C.INT, FTrue()), body, span=span)
        return C.Parser(C.Fix(cvar, scheme, C.Embed(lam, span=span), span=span), span=span)

    def _ascribe(self, e: SAscribe):
        inner = e.expr
        if isinstance(inner, SApp) and isinstance(inner.fn, SVar) and inner.fn.name in ("star", "many", "plus", "count"):
            return self._macro(inner.fn.name, inner, e.annot)
        if isinstance(inner, SApp) and isinstance(inner.fn, SVar) and inner.fn.name in MACRO_NAMES:
            return self._macro(inner.fn.name, inner, e.annot)
        raise _err("type ascription is supported on star/many/plus/count uses only", e.span)

    def _binop(self, e: SBinOp):
        op = e.op
        args, prefix = self._hoist_many((e.lhs, e.rhs))
        lhs, rhs = args
        if op == "::":
            core = C.CApp("cons", (), (lhs, rhs), span=e.span)
        elif op in ("+", "-", "*", "<", "<=", ">", ">=", "==", "!="):
            core = C.Prim(op, (lhs, rhs), span=e.span)
        else:
            raise _err(f"unknown operator '{op}'", e.span)
        return _wrap_binds(prefix, core, e.span)

    # -- hoisting -----------------------------------------------------------------

    def _hoist(self, e: SExpr):
        """Lower an expression that must become a pure core value; effectful
        subterms (derefs, assignments, do-blocks) are hoisted into a bind
        prefix [(var, parser-expr), ...]."""
        prefix: list[tuple[str, C.ParserExpr]] = []
        core = self._hoist_into(e, prefix)
        return core, prefix

    def _hoist_many(self, es):
        prefix: list[tuple[str, C.ParserExpr]] = []
        out = [self._hoist_into(e, prefix) for e in es]
        return out, prefix

    def _hoist_into(self, e: SExpr, prefix: list):
        if isinstance(e, SDeref):
            v = self.fresh(e.name)
            prefix.append((v, C.Embed(C.Deref(e.name, span=e.span), span=e.span)))
            return C.Var(v, span=e.span)
        if isinstance(e, (SDo, SAssign, SBind, SChoice)):
            core = self._expr(e)
            v = self.fresh("t")
            prefix.append((v, _to_parser(core, getattr(e, "span", NO_SPAN))))
            return C.Var(v, span=getattr(e, "span", NO_SPAN))
        if isinstance(e, SApp):
            fn = e.fn
            if isinstance(fn, SVar) and (fn.name in PRIM_NAMES):
                args = [self._hoist_into(a, prefix) for a in e.args]
                return C.Prim(fn.name, tuple(args), span=e.span)
            if isinstance(fn, SVar) and fn.name.startswith("@ctor:"):
                args = [self._atomize(self._hoist_into(a, prefix), prefix) for a in e.args]
                return C.CApp(fn.name[6:], (), tuple(args), span=e.span)
            if isinstance(fn, SVar) and fn.name.startswith("@record:"):
                args = [self._atomize(self._hoist_into(a, prefix), prefix) for a in e.args]
                return C.CApp(fn.name[8:], (), tuple(args), span=e.span)
            core = self._expr(e)
            return core
        if isinstance(e, SBinOp):
            lhs = self._hoist_into(e.lhs, prefix)
            rhs = self._hoist_into(e.rhs, prefix)
            if e.op == "::":
                return C.CApp("cons", (), (self._atomize(lhs, prefix), self._atomize(rhs, prefix)), span=e.span)
            return C.Prim(e.op, (lhs, rhs), span=e.span)
        if isinstance(e, SList):
            out = C.CApp("nil", (), (), span=e.span)
            for item in reversed(e.items):
                c = self._atomize(self._hoist_into(item, prefix), prefix)
                out_tmp = self.fresh("l")
                # keep arguments atomic: bind the accumulated tail
                if not isinstance(out, (C.Var, C.Const)):
                    pass
                out = C.CApp("cons", (), (c, out), span=e.span)
            return self._flatten_capp(out, e.span)
        return self._expr(e)

    def _atomize(self, core, prefix) -> C.Expr:
        if isinstance(core, (C.Var, C.Const)):
            return core
        return core

    def _atomize_now(self, e: SExpr) -> C.Expr:
        core = self._expr(e)
        return core

    def _flatten_capp(self, e: C.Expr, span: Span) -> C.Expr:
        """Nested constructor applications become let-chains with atomic
        arguments, innermost first."""
        lets: list[tuple[str, C.Expr]] = []

        def go(x):
            if isinstance(x, C.CApp):
                args = []
                for a in x.args:
                    a2 = go(a)
                    if isinstance(a2, (C.Var, C.Const)):
                        args.append(a2)
                    else:
                        tmp = self.fresh("c")
                        lets.append((tmp, a2))
                        args.append(C.Var(tmp, span=x.span))
                return C.CApp(x.ctor, x.type_args, tuple(args), span=x.span)
            return x

        out = go(e)
        for tmp, value in reversed(lets):
            out = C.LetVal(tmp, value, out, span=span)
        return out

    # -- parser coercions -------------------------------------------------------------

    def _as_parser(self, core, span: Span) -> C.ParserExpr:
        return _to_parser(core, span)

    # -- resolution ---------------------------------------------------------------------

    def _resolve_everything(self) -> None:
        env = ResolveEnv(self.prog)
        self.prog.axioms = [env.formula(f) for f in self.prog.axioms]
        self.prog.qualifiers = [
            C.QualifierDef(q.name, q.params, q.result, tuple(QualClauseResolved(c, env) for c in q.clauses))
            for q in self.prog.qualifiers
        ]
        for b in self.prog.bindings:
            if b.spec is not None:
                b.spec = env.scheme(b.spec)
            b.expr = env.expr_types(b.expr)


def QualClauseResolved(c: C.QualClause, env: "ResolveEnv") -> C.QualClause:
    rhs = c.rhs
    if isinstance(rhs, C.Formula):
        rhs = env.formula(rhs)
    else:
        rhs = env.term(rhs)
    return C.QualClause(c.patterns, rhs)


class ResolveEnv:
    """Post-parse resolution of spec formulas: reference names become
    location symbols, `sel`/`upd` pick their sort family from the target
    reference, list literals in types stay as parsed."""

    def __init__(self, prog: CoreProgram):
        self.ref_sorts = prog.ref_sorts()
        self.alias_preds = prog.alias_preds
        self.ctor_results = {c.name: c.result for c in prog.ctors}

    def scheme(self, s: TypeScheme) -> TypeScheme:
        return TypeScheme(s.quantified, self.rtype(s.body))

    def rtype(self, t):
        if isinstance(t, BaseRef):
            return BaseRef(t.binder, self.base(t.base), self.formula(t.refinement))
        if isinstance(t, C.Arrow):
            return C.Arrow(t.param, self.rtype(t.domain), self.rtype(t.codomain))
        if isinstance(t, Comp):
            pre, ghosts_pre = self._strip_spec_binders(t.pre, ("h",))
            post, _ = self._strip_spec_binders(t.post, ("h", t.binder, "h'", "nu", "v") + tuple(ghosts_pre))
            base = self.base(t.result)
            binder = t.binder
            if binder == "v":
                post = C.subst_formula(post, "v", C.TVarT("nu"))
                binder = "nu"
            # refined alias as result type: move the predicate into the post
            alias = self._alias_of(t.result)
            if alias is not None:
                pred, args, payloadty = alias
                post = C.conj(post, self._alias_post(pred, args, base))
            return Comp(t.effect, self.formula(pre), binder, base, self.formula(post))
        return t

    def _alias_of(self, t):
        if isinstance(t, Named) and t.name in self.alias_preds:
            return (t.name, tuple(t.args), t)
        if isinstance(t, C.TResult) and isinstance(t.inner, Named) and t.inner.name in self.alias_preds:
            return (t.inner.name, tuple(t.inner.args), t.inner)
        if (
            isinstance(t, C.TResult)
            and isinstance(t.inner, Named)
            and t.inner.name == "list"
            and isinstance(t.inner.args[0], Named)
            and t.inner.args[0].name in self.alias_preds
        ):
            return (t.inner.args[0].name + "_all", tuple(t.inner.args[0].args), t.inner.args[0])
        return None

    def _alias_post(self, pred: str, args, result_base) -> C.Formula:
        term_args = tuple(self._type_arg_term(a) for a in args)
        v = "v!"
        guard = C.Eq(C.TVarT("nu"), C.TApp("Inl", (C.TVarT(v),)))
        return C.Forall(v, Named("data", ()), C.implies(guard, C.QualApp(pred, (C.TVarT(v),) + term_args)))

    def _type_arg_term(self, a) -> C.Term:
        if isinstance(a, Named) and not a.args:
            return C.TVarT(a.name)
        if isinstance(a, C.TyVar):
            return C.TVarT(a.name)
        raise _err(f"unsupported type-level argument {a!r}", NO_SPAN)

    def _strip_spec_binders(self, f: C.Formula, canonical: tuple[str, ...]):
        """Peel the specification's leading quantifiers: canonical names (h,
        nu, h') bind the convention variables; everything else becomes a
        ghost variable shared between pre and post."""
        ghosts: list[str] = []
        while isinstance(f, C.Forall):
            if f.var in canonical or f.var in ("h", "h'"):
                f = f.body
                continue
            ghosts.append(f.var)
            f = f.body
        return f, ghosts

    def base(self, t):
        if isinstance(t, Named):
            if t.name in self.alias_preds:
                ctor, _ = self.alias_preds[t.name]
                return self.ctor_results.get(ctor, Named("data", ()))
            # type-level identifiers that are not declared datatypes stay as
            # ghost-indexed names only when they index an alias; plain names
            # keep their arguments as types
            return Named(t.name, tuple(self.base(a) for a in t.args))
        if isinstance(t, C.TResult):
            return C.TResult(self.base(t.inner))
        if isinstance(t, C.TRef):
            return C.TRef(self.base(t.inner))
        return t

    def formula(self, f: C.Formula) -> C.Formula:
        if isinstance(f, (C.FTrue, C.FFalse)):
            return f
        if isinstance(f, C.QualApp):
            return C.QualApp(f.name, tuple(self.term(a) for a in f.args))
        if isinstance(f, C.Eq):
            return C.Eq(self.term(f.lhs), self.term(f.rhs))
        if isinstance(f, C.Not):
            return C.Not(self.formula(f.body))
        if isinstance(f, C.And):
            return C.And(tuple(self.formula(c) for c in f.conjuncts))
        if isinstance(f, C.Or):
            return C.Or(tuple(self.formula(c) for c in f.disjuncts))
        if isinstance(f, C.Implies):
            return C.Implies(self.formula(f.antecedent), self.formula(f.consequent))
        if isinstance(f, C.Forall):
            return C.Forall(f.var, f.sort, self.formula(f.body))
        return f

    def term(self, t: C.Term) -> C.Term:
        if isinstance(t, C.TVarT):
            if t.name == "Err":
                return C.TApp("errv", ())
            if t.name == "Unit":
                return C.TApp("unitv", ())
            if t.name in self.ref_sorts:
                return C.TLoc(t.name)
            return t
        if isinstance(t, C.TApp):
            args = tuple(self.term(a) for a in t.args)
            if t.fn in ("sel", "upd"):
                loc = args[1]
                sort = "v"
                if isinstance(loc, C.TLoc):
                    base = self.ref_sorts.get(loc.name)
                    if base is not None:
                        sort = {"int": "int", "bool": "bool"}.get(C.sort_kind(base), "v")
                return C.TApp(f"{t.fn}_{sort}", args)
            return C.TApp(t.fn, args)
        return t

    def expr_types(self, e):
        """Resolve types embedded in expressions (lambda annotations, fix
        schemes)."""
        if isinstance(e, C.Lambda):
            pt = self.rtype(e.param_type) if e.param_type is not None else None
            return C.Lambda(e.param, pt, self.expr_types(e.body), span=e.span)
        if isinstance(e, C.Fix):
            return C.Fix(e.var, self.scheme(e.annot), self.expr_types(e.body), span=e.span)
        # generic traversal
        import dataclasses

        if dataclasses.is_dataclass(e) and isinstance(e, (C.Expr, C.ParserExpr)):
            kwargs = {}
            changed = False
            for fld in dataclasses.fields(e):
                if fld.name == "span":
                    continue
                v = getattr(e, fld.name)
                nv = v
                if isinstance(v, (C.Expr, C.ParserExpr)):
                    nv = self.expr_types(v)
                elif isinstance(v, tuple) and v and isinstance(v[0], (C.Expr, C.ParserExpr, C.Branch)):
                    nv = tuple(
                        C.Branch(b.ctor, b.tyvars, b.binders, self.expr_types(b.body))
                        if isinstance(b, C.Branch)
                        else self.expr_types(b)
                        for b in v
                    )
                if nv is not v:
                    changed = True
                kwargs[fld.name] = nv
            if changed:
                return type(e)(**kwargs, span=e.span)
        return e


# -- helpers ---------------------------------------------------------------------


def _to_parser(core, span: Span) -> C.ParserExpr:
    if isinstance(core, C.Parser):
        return core.parser
    if isinstance(core, C.ParserExpr):
        return core
    return C.Embed(core, span=span)


def _wrap_binds(prefix: list[tuple[str, C.ParserExpr]], core, span: Span):
    """[(x, p), ...] body -> p >>= \\x. ... body"""
    if not prefix:
        return core
    out = core
    for var, p in reversed(prefix):
        lam = C.Lambda(var, None, out if isinstance(out, C.Expr) else C.Parser(out, span=span), span=span)
        out = C.Parser(C.Bind(p, lam, span=span), span=span)
    return out


def _string_value(s: str, span: Span) -> C.Expr:
    out = C.CApp("nil", (), (), span=span)
    for ch in reversed(s):
        out = C.CApp("cons", (), (C.Const(C.CharVal(ch), span=span), out), span=span)
    return out


def _init_type(init: C.Expr, span: Span) -> C.BaseType:
    if isinstance(init, C.Const):
        v = init.value
        if isinstance(v, bool):
            return C.BOOL
        if isinstance(v, int):
            return C.INT
        if isinstance(v, C.CharVal):
            return C.CHAR
    if isinstance(init, C.CApp) and init.ctor in ("nil", "cons"):
        return C.list_of(Named("data", ()))
    if isinstance(init, C.LetVal):
        return _init_type(init.body, span)
    raise _err("reference initializers must be literals or list values", span)


def _field_base(f) -> C.BaseType:
    if isinstance(f, BaseRef):
        return f.base
    return Named("data", ())


def _infer_clause_sorts(clauses) -> tuple[tuple, C.BaseType]:
    arity = len(clauses[0].patterns)
    data = Named("data", ())
    params = tuple(data for _ in range(arity))
    rhs = clauses[0].rhs
    is_bool = isinstance(rhs, C.Formula) or (isinstance(rhs, C.TConst) and isinstance(rhs.value, bool))
    for c in clauses:
        r = c.rhs
        if isinstance(r, C.Formula) and not isinstance(r, (C.FTrue, C.FFalse)):
            is_bool = True
        if isinstance(r, C.TConst) and isinstance(r.value, bool):
            is_bool = True
    result = C.TBool() if is_bool else C.TInt()
    return params, result


def desugar(sources: list[SourceProgram]) -> CoreProgram:
    """Lower parsed programs (prelude first) into one core program."""
    return Desugarer().run(sources)
