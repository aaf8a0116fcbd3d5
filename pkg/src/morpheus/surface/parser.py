"""Recursive-descent parser for .mor programs.

Operator precedence in expressions, loosest to tightest:
    <|>   (right)
    >>=   (right, binds tighter than <|>)
    :=
    comparisons  == != <= < >= >
    ::    (right)
    + -   (left)
    application (juxtaposition)
    atoms
"""

from __future__ import annotations

from typing import Optional, Union

from ..core_ast import (
    BaseType,
    BaseRef,
    Comp,
    Eq,
    FFalse,
    Formula,
    Forall,
    FTrue,
    Named,
    Not,
    QualApp,
    QualClause,
    RefinedType,
    Span,
    TApp,
    TConst,
    TVarT,
    Term,
    TyVar,
    TypeScheme,
    TResult,
    TRef,
    conj,
    disj,
    implies,
    CHAR,
    BOOL,
    INT,
    UNIT,
    HEAP,
    EXC,
    CharVal,
    monotype,
)
from ..effects import EffectLabel
from .ast import (
    CtorDecl,
    DAxiom,
    Diagnostic,
    DInclude,
    DLet,
    DQualifierDef,
    DQualifierSig,
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
from .lexer import Token, lex

BASE_TYPE_NAMES = {
    "int": INT,
    "bool": BOOL,
    "unit": UNIT,
    "char": CHAR,
    "heap": HEAP,
    "exc": EXC,
}

CMP_OPS = ("==", "!=", "<=", "<", ">=", ">")


class Parser:
    def __init__(self, text: str):
        self.toks = lex(text)
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, kind: str, text: Optional[str] = None, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind == kind and (text is None or t.text == text)

    def at_kw(self, word: str, k: int = 0) -> bool:
        return self.at("kw", word, k)

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            raise SurfaceError(Diagnostic("error", t.span, f"expected '{want}', found '{t.text or t.kind}'"))
        return self.next()

    def fail(self, message: str) -> SurfaceError:
        return SurfaceError(Diagnostic("error", self.peek().span, message))

    # -- program -----------------------------------------------------------

    def parse_program(self) -> SourceProgram:
        decls = []
        while not self.at("eof"):
            decls.append(self.parse_decl())
        return SourceProgram(tuple(decls))

    def parse_decl(self):
        t = self.peek()
        if self.at_kw("include"):
            self.next()
            path = self.expect("string").text
            return DInclude(path, span=t.span)
        if self.at_kw("type"):
            return self.parse_type_decl()
        if self.at_kw("qualifier"):
            return self.parse_qualifier_decl()
        if self.at_kw("axiom"):
            self.next()
            f = self.parse_formula()
            return DAxiom(f, span=t.span)
        if self.at_kw("val"):
            self.next()
            name = self.expect("ident").text
            self.expect(":")
            scheme = self.parse_scheme()
            return DSpec(name, scheme, primitive=True, span=t.span)
        if self.at_kw("spec"):
            self.next()
            name = self.expect("ident").text
            self.expect(":")
            scheme = self.parse_scheme()
            return DSpec(name, scheme, span=t.span)
        if self.at_kw("let"):
            self.next()
            name = self.expect("ident").text
            # `let r = ref v` declares a top-level reference
            if self.at("=") and self.at_kw("ref", k=1):
                self.next()
                self.next()
                init = self.parse_atom()
                return DRef(name, init, span=t.span)
            params = []
            while not self.at("="):
                params.append(self.parse_param())
            self.expect("=")
            body = self.parse_expr()
            return DLet(name, tuple(params), body, span=t.span)
        raise self.fail(f"expected a declaration, found '{t.text or t.kind}'")

    def parse_param(self) -> tuple[str, Optional[RefinedType]]:
        if self.at("("):
            self.next()
            name = self.expect("ident").text
            self.expect(":")
            ty = self.parse_rtype()
            self.expect(")")
            return name, ty
        return self.expect("ident").text, None

    # -- type declarations ---------------------------------------------------

    def parse_type_decl(self) -> DType:
        t = self.expect("kw", "type")
        name = self.expect("ident").text
        params = []
        while self.at("ident") or self.at("tyvar"):
            params.append(self.next().text)
        self.expect("=")
        ctors = [self.parse_ctor_decl()]
        while self.at("|"):
            self.next()
            ctors.append(self.parse_ctor_decl())
        refines = None
        if len(ctors) == 1 and ctors[0].field_names and any(
            isinstance(f, BaseRef) and not isinstance(f.refinement, FTrue) for f in ctors[0].fields
        ):
            refines = ctors[0].name
        return DType(name, tuple(params), tuple(ctors), refines, span=t.span)

    def parse_ctor_decl(self) -> CtorDecl:
        t = self.expect("cap")
        name = t.text
        if self.at("{"):
            self.next()
            fields, fnames = [], []
            while not self.at("}"):
                fname = self.expect("ident").text
                self.expect(":")
                fty = self.parse_rtype()
                fields.append(fty)
                fnames.append(fname)
                if self.at(";"):
                    self.next()
            self.expect("}")
            return CtorDecl(name, tuple(fields), tuple(fnames), span=t.span)
        if self.at_kw("of"):
            self.next()
            fields = [monotype_field(self.parse_type())]
            while self.at("*"):
                self.next()
                fields.append(monotype_field(self.parse_type()))
            return CtorDecl(name, tuple(fields), (), span=t.span)
        return CtorDecl(name, (), (), span=t.span)

    # -- qualifier declarations ------------------------------------------------

    def parse_qualifier_decl(self):
        t = self.expect("kw", "qualifier")
        name = self.expect("ident").text
        if self.at(":"):
            self.next()
            self.expect("(")
            params = [self.parse_type()]
            while self.at(","):
                self.next()
                params.append(self.parse_type())
            self.expect(")")
            self.expect("->")
            result = self.parse_type()
            return DQualifierSig(name, tuple(params), result, span=t.span)
        clauses = [self.parse_qual_clause(name)]
        while self.at("|"):
            self.next()
            if self.at("ident", name):
                self.next()
            clauses.append(self.parse_qual_clause(name))
        return DQualifierDef(name, tuple(clauses), span=t.span)

    def parse_qual_clause(self, name: str) -> QualClause:
        patterns = []
        while not self.at("->"):
            patterns.append(self.parse_pattern())
        self.expect("->")
        rhs = self.parse_formula_or_term()
        return QualClause(tuple(patterns), rhs)

    def parse_pattern(self):
        if self.at("["):
            self.next()
            self.expect("]")
            return ("ctor", "nil", ())
        if self.at("ident"):
            return ("var", self.next().text)
        if self.at("("):
            self.next()
            if self.at("cap"):
                ctor = self.next().text
                subs = []
                if self.at("("):
                    self.next()
                    subs.append(self.parse_pattern())
                    while self.at(","):
                        self.next()
                        subs.append(self.parse_pattern())
                    self.expect(")")
                else:
                    while not self.at(")"):
                        subs.append(self.parse_pattern())
                self.expect(")")
                return ("ctor", ctor, tuple(subs))
            first = self.parse_pattern()
            if self.at("::"):
                self.next()
                rest = self.parse_pattern()
                self.expect(")")
                return ("ctor", "cons", (first, rest))
            if self.at(","):
                self.next()
                second = self.parse_pattern()
                self.expect(")")
                return ("ctor", "pair", (first, second))
            self.expect(")")
            return first
        if self.at("cap"):
            return ("ctor", self.next().text, ())
        raise self.fail("expected a pattern")

    # -- types and schemes ---------------------------------------------------

    def parse_scheme(self) -> TypeScheme:
        quant: list[str] = []
        if self.at_kw("forall") and self._scheme_forall_ahead():
            self.next()
            while self.at("tyvar") or self.at("ident"):
                quant.append(self.next().text)
                if self.at(","):
                    self.next()
            self.expect(".")
        body = self.parse_ctype()
        return TypeScheme(tuple(quant), body)

    def _scheme_forall_ahead(self) -> bool:
        # distinguish `forall a. <type>` from a formula's forall: schemes are
        # only parsed where a type is expected, so a '(' after forall means a
        # formula binder, which cannot happen here.
        return not self.at("(", k=1)

    def parse_ctype(self) -> RefinedType:
        if self.at("(") and self.at("ident", k=1) and self.at(":", k=2):
            # dependent arrow (x : T) -> T
            save = self.pos
            self.next()
            name = self.next().text
            self.next()
            dom = self.parse_rtype()
            if self.at(")") and self.at("->", k=1):
                self.next()
                self.next()
                cod = self.parse_ctype()
                from ..core_ast import Arrow

                return Arrow(name, dom, cod)
            self.pos = save
        if self.at_kw("PE"):
            return self.parse_comp()
        t = self.parse_rtype()
        if self.at("->"):
            self.next()
            cod = self.parse_ctype()
            from ..core_ast import Arrow, fresh_name

            param = fresh_name("arg")
            return Arrow(param, t, cod)
        return t

    def parse_comp(self) -> Comp:
        self.expect("kw", "PE")
        self.expect("^")
        eff_tok = self.next()
        try:
            eff = EffectLabel.named(eff_tok.text)
        except ValueError:
            raise SurfaceError(Diagnostic("error", eff_tok.span, f"unknown effect label '{eff_tok.text}'"))
        self.expect("{")
        pre = self.parse_formula()
        self.expect("}")
        binder = self.expect("ident").text
        self.expect(":")
        result = self.parse_type()
        self.expect("{")
        post = self.parse_formula()
        self.expect("}")
        return Comp(eff, pre, binder, result, post)

    def parse_rtype(self) -> RefinedType:
        if self.at("{"):
            self.next()
            binder = self.expect("ident").text
            self.expect(":")
            base = self.parse_type()
            self.expect("|")
            refn = self.parse_formula()
            self.expect("}")
            return BaseRef(binder, base, refn)
        if self.at_kw("PE"):
            return self.parse_comp()
        return BaseRef("nu", self.parse_type(), FTrue())

    def parse_type(self) -> BaseType:
        t = self.parse_type_atom()
        while True:
            if self.at("ident", "list"):
                self.next()
                t = Named("list", (t,))
            elif self.at("ident", "result"):
                self.next()
                t = TResult(t)
            elif self.at("kw", "ref"):
                self.next()
                t = TRef(t)
            elif self.at("*"):
                self.next()
                rhs = self.parse_type_atom()
                t = Named("pair", (t, rhs))
            else:
                break
        return t

    def parse_type_atom(self) -> BaseType:
        if self.at("("):
            self.next()
            t = self.parse_type()
            self.expect(")")
            return t
        if self.at("tyvar"):
            return TyVar(self.next().text)
        if self.at_kw("char"):
            self.next()
            return CHAR
        tok = self.peek()
        if tok.kind == "ident":
            self.next()
            if tok.text in BASE_TYPE_NAMES:
                return BASE_TYPE_NAMES[tok.text]
            args: list[BaseType] = []
            if self.at("("):
                save = self.pos
                self.next()
                try:
                    args.append(self.parse_type())
                    while self.at(","):
                        self.next()
                        args.append(self.parse_type())
                    self.expect(")")
                except SurfaceError:
                    self.pos = save
                    args = []
            return Named(tok.text, tuple(args))
        # a type-level application like `offsideTree I` uses an identifier
        raise self.fail(f"expected a type, found '{tok.text or tok.kind}'")

    # -- formulas ---------------------------------------------------------------

    def parse_formula(self) -> Formula:
        return self.parse_implies()

    def parse_implies(self) -> Formula:
        lhs = self.parse_disj()
        if self.at("=>"):
            self.next()
            rhs = self.parse_implies()
            return implies(lhs, rhs)
        return lhs

    def parse_disj(self) -> Formula:
        out = self.parse_conj()
        while self.at("\\/"):
            self.next()
            out = disj(out, self.parse_conj())
        return out

    def parse_conj(self) -> Formula:
        out = self.parse_formula_atom()
        while self.at("/\\"):
            self.next()
            out = conj(out, self.parse_formula_atom())
        return out

    def parse_formula_atom(self) -> Formula:
        if self.at_kw("true"):
            self.next()
            return FTrue()
        if self.at_kw("false"):
            self.next()
            return FFalse()
        if self.at_kw("not"):
            self.next()
            return Not(self.parse_formula_atom())
        if self.at_kw("forall"):
            self.next()
            binders = []
            while self.at("("):
                self.next()
                names = [self.next().text]
                while self.at(","):
                    self.next()
                    names.append(self.next().text)
                self.expect(":")
                sort = self.parse_type()
                self.expect(")")
                for nm in names:
                    binders.append((nm, sort))
                if self.at(","):
                    self.next()
            self.expect(".")
            body = self.parse_formula()
            from ..core_ast import forall

            return forall(binders, body)
        if self.at("("):
            save = self.pos
            self.next()
            try:
                f = self.parse_formula()
                self.expect(")")
                if self._at_term_continuation():
                    raise SurfaceError(Diagnostic("error", self.peek().span, "term context"))
                return f
            except SurfaceError:
                self.pos = save
        # term-level atom: term [relop term]
        lhs = self.parse_term()
        if self.at("="):
            self.next()
            rhs = self.parse_term()
            return Eq(lhs, rhs)
        for op in CMP_OPS:
            if self.at(op):
                self.next()
                rhs = self.parse_term()
                if op == "==":
                    return Eq(lhs, rhs)
                if op == "!=":
                    return Not(Eq(lhs, rhs))
                return QualApp(op, (lhs, rhs))
        # bare boolean qualifier application
        if isinstance(lhs, TApp):
            return QualApp(lhs.fn, lhs.args)
        if isinstance(lhs, TVarT):
            return Eq(lhs, TConst(True))
        raise self.fail("expected a formula")

    def _at_term_continuation(self) -> bool:
        return self.at("+") or self.at("-") or self.at("*") or self.at("::") or self.at("=")

    def parse_formula_or_term(self):
        """Qualifier clause right sides: terms for measure-style qualifiers,
        formulas for relational ones. Try the term reading first so `0` and
        `len (xs) + 1` stay terms; fall back to a formula."""
        save = self.pos
        try:
            t = self.parse_term()
            if self.at("|") or self.at("eof") or self.at("kw", None) or self.peek().kind in ("kw",):
                return t
            self.pos = save
        except SurfaceError:
            self.pos = save
        return self.parse_formula()

    def parse_term(self) -> Term:
        return self.parse_term_cons()

    def parse_term_cons(self) -> Term:
        lhs = self.parse_term_add()
        if self.at("::"):
            self.next()
            rhs = self.parse_term_cons()
            return TApp("cons", (lhs, rhs))
        return lhs

    def parse_term_add(self) -> Term:
        out = self.parse_term_mul()
        while self.at("+") or self.at("-"):
            op = self.next().text
            rhs = self.parse_term_mul()
            out = TApp(op, (out, rhs))
        return out

    def parse_term_mul(self) -> Term:
        out = self.parse_term_atom()
        while self.at("*"):
            self.next()
            rhs = self.parse_term_atom()
            out = TApp("*", (out, rhs))
        return out

    def parse_term_atom(self) -> Term:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return TConst(int(tok.text))
        if tok.kind == "char":
            self.next()
            return TConst(CharVal(tok.text))
        if tok.kind == "kw" and tok.text in ("true", "false"):
            self.next()
            return TConst(tok.text == "true")
        if self.at("["):
            self.next()
            self.expect("]")
            return TApp("nil", ())
        if self.at("-"):
            self.next()
            inner = self.parse_term_atom()
            return TApp("-", (TConst(0), inner))
        if self.at("("):
            self.next()
            t = self.parse_term()
            if self.at(","):
                self.next()
                t2 = self.parse_term()
                self.expect(")")
                return TApp("pair", (t, t2))
            self.expect(")")
            return t
        if tok.kind in ("ident", "cap"):
            self.next()
            name = tok.text
            if self.at("("):
                self.next()
                args = []
                if not self.at(")"):
                    args.append(self.parse_term())
                    while self.at(","):
                        self.next()
                        args.append(self.parse_term())
                self.expect(")")
                return TApp(name, tuple(args))
            return TVarT(name)
        raise self.fail(f"expected a term, found '{tok.text or tok.kind}'")

    # -- expressions ----------------------------------------------------------

    def parse_expr(self):
        return self.parse_choice()

    def parse_choice(self):
        lhs = self.parse_bind()
        while self.at("<|>"):
            t = self.next()
            rhs = self.parse_bind()
            for side in (lhs, rhs):
                if isinstance(side, SReturn):
                    raise SurfaceError(
                        Diagnostic("error", t.span, "choice operands must be parsers; `return e <|> p` is disallowed")
                    )
            lhs = SChoice(lhs, rhs, span=t.span)
        return lhs

    def parse_bind(self):
        lhs = self.parse_assign()
        if self.at(">>="):
            t = self.next()
            rhs = self.parse_bind()
            return SBind(lhs, rhs, span=t.span)
        return lhs

    def parse_assign(self):
        if self.at("ident") and self.at(":=", k=1):
            t = self.peek()
            name = self.next().text
            self.next()
            value = self.parse_assign()
            return SAssign(name, value, span=t.span)
        return self.parse_cmp()

    def parse_cmp(self):
        lhs = self.parse_cons_expr()
        for op in CMP_OPS:
            if self.at(op):
                t = self.next()
                rhs = self.parse_cons_expr()
                return SBinOp(op, lhs, rhs, span=t.span)
        return lhs

    def parse_cons_expr(self):
        lhs = self.parse_add_expr()
        if self.at("::"):
            t = self.next()
            rhs = self.parse_cons_expr()
            return SBinOp("::", lhs, rhs, span=t.span)
        return lhs

    def parse_add_expr(self):
        out = self.parse_app()
        while (self.at("+") or self.at("-")) and not self.at("eof"):
            t = self.next()
            rhs = self.parse_app()
            out = SBinOp(t.text, out, rhs, span=t.span)
        return out

    def parse_app(self):
        fn = self.parse_atom()
        args = []
        while self._at_atom_start():
            args.append(self.parse_atom())
        if not args:
            return fn
        return SApp(fn, tuple(args), span=getattr(fn, "span", None) or self.peek().span)

    def _at_atom_start(self) -> bool:
        t = self.peek()
        if t.kind in ("int", "char", "string", "ident", "cap"):
            return True
        if t.kind in ("(", "[", "!"):
            return True
        if t.kind == "kw" and t.text in ("true", "false", "eps", "bot", "fail", "not"):
            return True
        return False

    def parse_atom(self):
        t = self.peek()
        if t.kind == "int":
            self.next()
            return SInt(int(t.text), span=t.span)
        if t.kind == "char":
            self.next()
            return SChar(t.text, span=t.span)
        if t.kind == "string":
            self.next()
            return SString(t.text, span=t.span)
        if self.at_kw("true") or self.at_kw("false"):
            self.next()
            return SBool(t.text == "true", span=t.span)
        if self.at_kw("eps"):
            self.next()
            return SEps(span=t.span)
        if self.at_kw("bot"):
            self.next()
            return SBot(span=t.span)
        if self.at_kw("not"):
            self.next()
            arg = self.parse_atom()
            return SApp(SVar("not", span=t.span), (arg,), span=t.span)
        if self.at_kw("fail"):
            self.next()
            msg = None
            if self.at("string"):
                msg = self.next().text
            return SFail(msg, span=t.span)
        if self.at_kw("char"):
            self.next()
            arg = self.parse_atom()
            return SCharLit(arg, span=t.span)
        if self.at_kw("return"):
            self.next()
            value = self.parse_cmp()
            return SReturn(value, span=t.span)
        if self.at_kw("fun"):
            self.next()
            params = []
            while not self.at("->"):
                params.append(self.parse_param())
            self.expect("->")
            body = self.parse_expr()
            return SLambda(tuple(params), body, span=t.span)
        if self.at_kw("fix"):
            self.next()
            self.expect("(")
            name = self.expect("ident").text
            self.expect(":")
            annot = self.parse_scheme()
            self.expect(")")
            self.expect("->")
            body = self.parse_expr()
            return SFix(name, annot, body, span=t.span)
        if self.at_kw("do"):
            return self.parse_do()
        if self.at_kw("if"):
            self.next()
            cond = self.parse_expr()
            self.expect("kw", "then")
            then = self.parse_expr()
            self.expect("kw", "else")
            orelse = self.parse_expr()
            return SIf(cond, then, orelse, span=t.span)
        if self.at_kw("match"):
            return self.parse_match()
        if self.at_kw("let"):
            self.next()
            name = self.expect("ident").text
            self.expect("=")
            value = self.parse_expr()
            self.expect("kw", "in")
            body = self.parse_expr()
            return SLet(name, value, body, span=t.span)
        if self.at("!"):
            self.next()
            name = self.expect("ident").text
            return SDeref(name, span=t.span)
        if self.at("["):
            self.next()
            items = []
            if not self.at("]"):
                items.append(self.parse_cmp())
                while self.at(";"):
                    self.next()
                    items.append(self.parse_cmp())
            self.expect("]")
            return SList(tuple(items), span=t.span)
        if self.at("("):
            self.next()
            if self.at(")"):
                self.next()
                return SUnit(span=t.span)
            e = self.parse_expr()
            if self.at(":"):
                self.next()
                annot = self.parse_scheme()
                self.expect(")")
                return SAscribe(e, annot, span=t.span)
            if self.at(","):
                self.next()
                e2 = self.parse_expr()
                self.expect(")")
                return SApp(SVar("pair", span=t.span), (e, e2), span=t.span)
            self.expect(")")
            return e
        if t.kind == "ident":
            self.next()
            return SVar(t.text, span=t.span)
        if t.kind == "cap":
            self.next()
            # constructor application: Ctor {fields} | Ctor (args) | Ctor
            if self.at("{"):
                self.next()
                fields = {}
                order = []
                while not self.at("}"):
                    fname = self.expect("ident").text
                    self.expect("=")
                    fields[fname] = self.parse_cmp()
                    order.append(fname)
                    if self.at(";"):
                        self.next()
                self.expect("}")
                return SApp(SVar("@record:" + t.text, span=t.span), tuple(fields[f] for f in order), span=t.span)
            return SVar("@ctor:" + t.text, span=t.span)
        raise self.fail(f"expected an expression, found '{t.text or t.kind}'")

    def parse_do(self):
        t = self.expect("kw", "do")
        self.expect("{")
        stmts = []
        while not self.at("}"):
            stmts.append(self.parse_do_stmt())
            if self.at(";"):
                self.next()
        self.expect("}")
        return SDo(tuple(stmts), span=t.span)

    def parse_do_stmt(self):
        t = self.peek()
        if self.at_kw("let"):
            self.next()
            name = self.expect("ident").text
            self.expect("=")
            e = self.parse_expr()
            return SDoLet(name, e, span=t.span)
        if (self.at("ident") or self.at("-")) and self.at("<-", k=1):
            name = self.next().text
            self.next()
            e = self.parse_expr()
            return SDoBind(name, e, span=t.span)
        if self.at("ident", "_") and self.at("<-", k=1):
            self.next()
            self.next()
            e = self.parse_expr()
            return SDoBind("_", e, span=t.span)
        e = self.parse_expr()
        return SDoExpr(e, span=t.span)

    def parse_match(self):
        t = self.expect("kw", "match")
        scrut = self.parse_expr()
        self.expect("kw", "with")
        if self.at("|"):
            self.next()
        arms = [self.parse_arm()]
        while self.at("|"):
            self.next()
            arms.append(self.parse_arm())
        self.expect("kw", "end")
        return SMatch(scrut, tuple(arms), span=t.span)

    def parse_arm(self) -> SArm:
        t = self.peek()
        if self.at("["):
            self.next()
            self.expect("]")
            self.expect("->")
            return SArm("nil", (), self.parse_expr(), span=t.span)
        if self.at("("):
            self.next()
            x = self.expect("ident").text
            self.expect("::")
            xs = self.expect("ident").text
            self.expect(")")
            self.expect("->")
            return SArm("cons", (x, xs), self.parse_expr(), span=t.span)
        if self.at_kw("true") or self.at_kw("false"):
            word = self.next().text
            self.expect("->")
            return SArm(word.capitalize(), (), self.parse_expr(), span=t.span)
        ctor = self.expect("cap").text
        binders: list[str] = []
        if self.at("("):
            self.next()
            while not self.at(")"):
                binders.append(self.next().text)
                if self.at(","):
                    self.next()
            self.expect(")")
        elif self.at("ident"):
            binders.append(self.next().text)
        self.expect("->")
        return SArm(ctor, tuple(binders), self.parse_expr(), span=t.span)


def monotype_field(t: BaseType) -> RefinedType:
    return BaseRef("nu", t, FTrue())


def _canon_binder(b: str, pre: bool) -> str:
    return b


def parse_source(text: str) -> SourceProgram:
    """Parse a .mor program; raises SurfaceError with a located Diagnostic."""
    return Parser(text).parse_program()


def parse_spec(text: str) -> TypeScheme:
    """Parse a specification scheme in isolation."""
    p = Parser(text)
    scheme = p.parse_scheme()
    if not p.at("eof"):
        raise p.fail("trailing input after specification")
    return scheme


def parse_formula(text: str) -> Formula:
    p = Parser(text)
    f = p.parse_formula()
    if not p.at("eof"):
        raise p.fail("trailing input after formula")
    return f
