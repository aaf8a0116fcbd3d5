"""Core language: expressions, parser expressions, types, formulas, contexts.

Everything here is an immutable tree. Source spans ride along on nodes but
never participate in structural equality, so alpha-manipulation and tests can
compare trees directly.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union

# ---------------------------------------------------------------------------
# Source spans


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NO_SPAN = Span(0, 0)


# ---------------------------------------------------------------------------
# Fresh names. The counter is the only mutable global; guarded for concurrent
# checkers.

_fresh_lock = threading.Lock()
_fresh_counter = itertools.count(1)


def fresh_name(stem: str) -> str:
    with _fresh_lock:
        n = next(_fresh_counter)
    return f"{stem}%{n}"


def reset_fresh_names() -> None:
    """Restart the counter. Only for deterministic replay (reports, tests)."""
    global _fresh_counter
    with _fresh_lock:
        _fresh_counter = itertools.count(1)


# ---------------------------------------------------------------------------
# Base types


@dataclass(frozen=True)
class BaseType:
    pass


@dataclass(frozen=True)
class TyVar(BaseType):
    name: str


@dataclass(frozen=True)
class TInt(BaseType):
    pass


@dataclass(frozen=True)
class TBool(BaseType):
    pass


@dataclass(frozen=True)
class TUnit(BaseType):
    pass


@dataclass(frozen=True)
class TChar(BaseType):
    pass


@dataclass(frozen=True)
class THeap(BaseType):
    pass


@dataclass(frozen=True)
class TExc(BaseType):
    pass


@dataclass(frozen=True)
class TLocSort(BaseType):
    """Sort of location constants; used in quantifiers over locations."""


@dataclass(frozen=True)
class Named(BaseType):
    name: str
    args: tuple[BaseType, ...] = ()


@dataclass(frozen=True)
class TResult(BaseType):
    inner: BaseType


@dataclass(frozen=True)
class TRef(BaseType):
    inner: BaseType


INT = TInt()
BOOL = TBool()
UNIT = TUnit()
CHAR = TChar()
HEAP = THeap()
EXC = TExc()
LOC = TLocSort()


def list_of(el: BaseType) -> Named:
    return Named("list", (el,))


# char paired with its source column; the representation of the input stream
STREAM_ELEM = Named("pair", (CHAR, INT))
STREAM_TYPE = list_of(STREAM_ELEM)
INP = "inp"


def base_type_vars(t: BaseType) -> set[str]:
    if isinstance(t, TyVar):
        return {t.name}
    if isinstance(t, Named):
        out: set[str] = set()
        for a in t.args:
            out |= base_type_vars(a)
        return out
    if isinstance(t, (TResult, TRef)):
        return base_type_vars(t.inner)
    return set()


def subst_base_type(t: BaseType, mapping: dict[str, BaseType]) -> BaseType:
    if isinstance(t, TyVar):
        return mapping.get(t.name, t)
    if isinstance(t, Named):
        return Named(t.name, tuple(subst_base_type(a, mapping) for a in t.args))
    if isinstance(t, TResult):
        return TResult(subst_base_type(t.inner, mapping))
    if isinstance(t, TRef):
        return TRef(subst_base_type(t.inner, mapping))
    return t


# ---------------------------------------------------------------------------
# Terms (the first-order term language inside formulas)


@dataclass(frozen=True)
class Term:
    pass


@dataclass(frozen=True)
class TVarT(Term):
    name: str


@dataclass(frozen=True)
class TLoc(Term):
    """Interned location symbol; a separate namespace from variables."""

    name: str


@dataclass(frozen=True)
class TConst(Term):
    # int | bool | Char | Unit | Err (see value wrappers below)
    value: object


@dataclass(frozen=True)
class TApp(Term):
    fn: str
    args: tuple[Term, ...]


class CharVal:
    __slots__ = ("cp",)

    def __init__(self, ch: Union[str, int]):
        self.cp = ord(ch) if isinstance(ch, str) else ch

    def __eq__(self, other):
        return isinstance(other, CharVal) and self.cp == other.cp

    def __hash__(self):
        return hash(("char", self.cp))

    def __repr__(self):
        return f"'{chr(self.cp)}'"


class UnitVal:
    def __eq__(self, other):
        return isinstance(other, UnitVal)

    def __hash__(self):
        return hash("unit")

    def __repr__(self):
        return "()"


class ErrVal:
    def __eq__(self, other):
        return isinstance(other, ErrVal)

    def __hash__(self):
        return hash("Err")

    def __repr__(self):
        return "Err"


UNIT_VAL = UnitVal()
ERR_VAL = ErrVal()


def tvar(name: str) -> TVarT:
    return TVarT(name)


def tint(n: int) -> TConst:
    return TConst(n)


def tbool(b: bool) -> TConst:
    return TConst(b)


def tchar(c: Union[str, int]) -> TConst:
    return TConst(CharVal(c))


def tapp(fn: str, *args: Term) -> TApp:
    return TApp(fn, tuple(args))


def nil() -> TApp:
    return TApp("nil", ())


def cons(x: Term, xs: Term) -> TApp:
    return TApp("cons", (x, xs))


H = tvar("h")
H2 = tvar("h'")
NU = tvar("nu")


# ---------------------------------------------------------------------------
# Formulas


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class FTrue(Formula):
    pass


@dataclass(frozen=True)
class FFalse(Formula):
    pass


@dataclass(frozen=True)
class QualApp(Formula):
    """Boolean-valued qualifier application: dom, mem, lsdisjoint, included,
    the comparison operators < <= > >=, and user Bool qualifiers."""

    name: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class Eq(Formula):
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class Not(Formula):
    body: Formula


@dataclass(frozen=True)
class And(Formula):
    conjuncts: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    disjuncts: tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    antecedent: Formula
    consequent: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    sort: BaseType
    body: Formula


TRUE = FTrue()
FALSE = FFalse()


def conj(*fs: Formula) -> Formula:
    flat: list[Formula] = []
    seen: set[Formula] = set()
    for f in fs:
        if isinstance(f, FTrue):
            continue
        parts = f.conjuncts if isinstance(f, And) else (f,)
        for p in parts:
            if p not in seen and not isinstance(p, FTrue):
                seen.add(p)
                flat.append(p)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*fs: Formula) -> Formula:
    flat: list[Formula] = []
    for f in fs:
        if isinstance(f, FFalse):
            continue
        if isinstance(f, Or):
            flat.extend(f.disjuncts)
        else:
            flat.append(f)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def implies(a: Formula, b: Formula) -> Formula:
    if isinstance(a, FTrue):
        return b
    if isinstance(b, FTrue):
        return TRUE
    return Implies(a, b)


def forall(pairs: list[tuple[str, BaseType]], body: Formula) -> Formula:
    for v, s in reversed(pairs):
        body = Forall(v, s, body)
    return body


def eq(l: Term, r: Term) -> Formula:
    return Eq(l, r)


def qual(name: str, *args: Term) -> QualApp:
    return QualApp(name, tuple(args))


# ---------------------------------------------------------------------------
# Refined types


@dataclass(frozen=True)
class RefinedType:
    pass


@dataclass(frozen=True)
class BaseRef(RefinedType):
    binder: str
    base: BaseType
    refinement: Formula


@dataclass(frozen=True)
class Arrow(RefinedType):
    param: str
    domain: RefinedType
    codomain: RefinedType


@dataclass(frozen=True)
class Comp(RefinedType):
    """PE^effect { pre over h } binder : result { post over h, binder, h' }"""

    effect: "EffectLabel"
    pre: Formula
    binder: str
    result: BaseType
    post: Formula


@dataclass(frozen=True)
class TypeScheme:
    quantified: tuple[str, ...]
    body: RefinedType


def base_ref(t: BaseType, refinement: Formula = TRUE, binder: str = "nu") -> BaseRef:
    return BaseRef(binder, t, refinement)


def monotype(t: RefinedType) -> TypeScheme:
    return TypeScheme((), t)


# EffectLabel lives in effects.py; import late to avoid a cycle.
from .effects import EffectLabel  # noqa: E402


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Expr:
    span: Span = field(default=NO_SPAN, compare=False, kw_only=True)


@dataclass(frozen=True)
class Const(Expr):
    value: object  # int | bool | CharVal | UnitVal | ErrVal


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Parser(Expr):
    parser: "ParserExpr"


@dataclass(frozen=True)
class App(Expr):
    fn: Expr
    arg: Expr  # Var or Const only (atomic-argument discipline)


@dataclass(frozen=True)
class TyApp(Expr):
    fn: Expr
    type_arg: BaseType


@dataclass(frozen=True)
class Deref(Expr):
    loc: str


@dataclass(frozen=True)
class Assign(Expr):
    loc: str
    value: Expr


@dataclass(frozen=True)
class LetVal(Expr):
    var: str
    value: Expr
    body: Expr


@dataclass(frozen=True)
class LetRef(Expr):
    loc: str
    init: Expr
    body: Expr


@dataclass(frozen=True)
class Branch:
    ctor: str
    tyvars: tuple[str, ...]
    binders: tuple[str, ...]
    body: Expr


@dataclass(frozen=True)
class Match(Expr):
    scrutinee: Expr  # a value or variable
    branches: tuple[Branch, ...]


@dataclass(frozen=True)
class Return(Expr):
    value: Expr


@dataclass(frozen=True)
class Lambda(Expr):
    param: str
    param_type: Optional[RefinedType]
    body: Expr


@dataclass(frozen=True)
class TyLambda(Expr):
    tyvar: str
    body: Expr


@dataclass(frozen=True)
class CApp(Expr):
    ctor: str
    type_args: tuple[BaseType, ...]
    args: tuple[Expr, ...]  # atomic


@dataclass(frozen=True)
class Prim(Expr):
    """Built-in pure operator over atomic arguments: + - * <= < > >= == != not
    and or, plus qualifier-tracked helpers (mem, len, chr, sourceColumn...)."""

    op: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class ParserExpr:
    span: Span = field(default=NO_SPAN, compare=False, kw_only=True)


@dataclass(frozen=True)
class Eps(ParserExpr):
    pass


@dataclass(frozen=True)
class Bot(ParserExpr):
    message: Optional[str] = None


@dataclass(frozen=True)
class CharP(ParserExpr):
    arg: Expr


@dataclass(frozen=True)
class Fix(ParserExpr):
    var: str
    annot: TypeScheme
    body: "ParserExpr"


@dataclass(frozen=True)
class Bind(ParserExpr):
    left: "ParserExpr"
    fn: Expr  # expected to be an abstraction


@dataclass(frozen=True)
class Choice(ParserExpr):
    left: "ParserExpr"
    right: "ParserExpr"


@dataclass(frozen=True)
class Embed(ParserExpr):
    """An effectful base expression in parser position (deref, assignment,
    application, match over parsers...). The paper's programs bind these with
    >>= freely; this node is the explicit coercion."""

    expr: Expr


# ---------------------------------------------------------------------------
# Constructor environment and qualifier definitions


@dataclass(frozen=True)
class CtorSig:
    name: str
    tyvars: tuple[str, ...]
    fields: tuple[RefinedType, ...]
    result: BaseType
    field_names: tuple[str, ...] = ()  # record sugar; generates qualifiers


@dataclass(frozen=True)
class QualClause:
    # one pattern per parameter: ("var", name) | ("ctor", ctor, subpatterns)
    patterns: tuple[object, ...]
    rhs: object  # Term or Formula


@dataclass(frozen=True)
class QualifierDef:
    name: str
    params: tuple[BaseType, ...]
    result: BaseType
    clauses: tuple[QualClause, ...]


# ---------------------------------------------------------------------------
# Typing context


class ContextError(Exception):
    pass


@dataclass(frozen=True)
class TypingContext:
    """Ordered bindings, reference typings, path propositions, plus the
    constructor environment and declared qualifiers. Extension returns a new
    context (persistent)."""

    bindings: tuple[tuple[str, TypeScheme], ...] = ()
    refs: tuple[tuple[str, RefinedType], ...] = ()
    path: tuple[Formula, ...] = ()
    ctors: tuple[tuple[str, CtorSig], ...] = ()
    qualifiers: tuple[tuple[str, QualifierDef], ...] = ()
    # value-level sorts for formula variables introduced during checking
    term_vars: tuple[tuple[str, BaseType], ...] = ()

    def bind(self, name: str, scheme: TypeScheme) -> "TypingContext":
        return replace(self, bindings=self.bindings + ((name, scheme),))

    def bind_ref(self, loc: str, ty: RefinedType) -> "TypingContext":
        return replace(self, refs=self.refs + ((loc, ty),))

    def assume(self, f: Formula) -> "TypingContext":
        if isinstance(f, FTrue):
            return self
        return replace(self, path=self.path + (f,))

    def bind_term(self, name: str, sort: BaseType) -> "TypingContext":
        return replace(self, term_vars=self.term_vars + ((name, sort),))

    def with_ctor(self, sig: CtorSig) -> "TypingContext":
        return replace(self, ctors=self.ctors + ((sig.name, sig),))

    def with_qualifier(self, q: QualifierDef) -> "TypingContext":
        return replace(self, qualifiers=self.qualifiers + ((q.name, q),))

    def lookup(self, name: str) -> Optional[TypeScheme]:
        for n, s in reversed(self.bindings):
            if n == name:
                return s
        return None

    def lookup_ref(self, loc: str) -> Optional[RefinedType]:
        for n, t in reversed(self.refs):
            if n == loc:
                return t
        return None

    def lookup_ctor(self, name: str) -> Optional[CtorSig]:
        for n, s in reversed(self.ctors):
            if n == name:
                return s
        return None

    def lookup_qualifier(self, name: str) -> Optional[QualifierDef]:
        for n, q in reversed(self.qualifiers):
            if n == name:
                return q
        return None

    def lookup_term_var(self, name: str) -> Optional[BaseType]:
        for n, s in reversed(self.term_vars):
            if n == name:
                return s
        return None

    def locations(self) -> list[str]:
        seen: list[str] = []
        for n, _ in self.refs:
            if n not in seen:
                seen.append(n)
        return seen


# ---------------------------------------------------------------------------
# Free variables


def term_free_vars(t: Term) -> set[str]:
    if isinstance(t, TVarT):
        return {t.name}
    if isinstance(t, TApp):
        out: set[str] = set()
        for a in t.args:
            out |= term_free_vars(a)
        return out
    return set()


def formula_free_vars(f: Formula) -> set[str]:
    if isinstance(f, (FTrue, FFalse)):
        return set()
    if isinstance(f, QualApp):
        out: set[str] = set()
        for a in f.args:
            out |= term_free_vars(a)
        return out
    if isinstance(f, Eq):
        return term_free_vars(f.lhs) | term_free_vars(f.rhs)
    if isinstance(f, Not):
        return formula_free_vars(f.body)
    if isinstance(f, And):
        out = set()
        for c in f.conjuncts:
            out |= formula_free_vars(c)
        return out
    if isinstance(f, Or):
        out = set()
        for c in f.disjuncts:
            out |= formula_free_vars(c)
        return out
    if isinstance(f, Implies):
        return formula_free_vars(f.antecedent) | formula_free_vars(f.consequent)
    if isinstance(f, Forall):
        return formula_free_vars(f.body) - {f.var}
    raise TypeError(f"unknown formula {f!r}")


def type_free_vars(t: RefinedType) -> set[str]:
    """Free term variables of a refined type (binders of refinements and
    the h/nu/h' convention variables are bound)."""
    if isinstance(t, BaseRef):
        return formula_free_vars(t.refinement) - {t.binder}
    if isinstance(t, Arrow):
        return type_free_vars(t.domain) | (type_free_vars(t.codomain) - {t.param})
    if isinstance(t, Comp):
        pre = formula_free_vars(t.pre) - {"h"}
        post = formula_free_vars(t.post) - {"h", "h'", t.binder}
        return pre | post
    raise TypeError(f"unknown refined type {t!r}")


def scheme_free_vars(s: TypeScheme) -> set[str]:
    return type_free_vars(s.body)


def expr_free_vars(e: Union[Expr, ParserExpr]) -> set[str]:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Parser):
        return expr_free_vars(e.parser)
    if isinstance(e, App):
        return expr_free_vars(e.fn) | expr_free_vars(e.arg)
    if isinstance(e, TyApp):
        return expr_free_vars(e.fn)
    if isinstance(e, Deref):
        return set()
    if isinstance(e, Assign):
        return expr_free_vars(e.value)
    if isinstance(e, LetVal):
        return expr_free_vars(e.value) | (expr_free_vars(e.body) - {e.var})
    if isinstance(e, LetRef):
        return expr_free_vars(e.init) | expr_free_vars(e.body)
    if isinstance(e, Match):
        out = expr_free_vars(e.scrutinee)
        for b in e.branches:
            out |= expr_free_vars(b.body) - set(b.binders)
        return out
    if isinstance(e, Return):
        return expr_free_vars(e.value)
    if isinstance(e, Lambda):
        out = expr_free_vars(e.body) - {e.param}
        if e.param_type is not None:
            out |= type_free_vars(e.param_type)
        return out
    if isinstance(e, TyLambda):
        return expr_free_vars(e.body)
    if isinstance(e, CApp):
        out = set()
        for a in e.args:
            out |= expr_free_vars(a)
        return out
    if isinstance(e, Prim):
        out = set()
        for a in e.args:
            out |= expr_free_vars(a)
        return out
    if isinstance(e, Eps) or isinstance(e, Bot):
        return set()
    if isinstance(e, CharP):
        return expr_free_vars(e.arg)
    if isinstance(e, Fix):
        return (expr_free_vars(e.body) | scheme_free_vars(e.annot)) - {e.var}
    if isinstance(e, Bind):
        return expr_free_vars(e.left) | expr_free_vars(e.fn)
    if isinstance(e, Choice):
        return expr_free_vars(e.left) | expr_free_vars(e.right)
    if isinstance(e, Embed):
        return expr_free_vars(e.expr)
    raise TypeError(f"unknown expression {e!r}")


def free_vars(x) -> set[str]:
    """Free-variable set of an expression, parser expression, formula, refined
    type, or type scheme."""
    if isinstance(x, (Expr, ParserExpr)):
        return expr_free_vars(x)
    if isinstance(x, Formula):
        return formula_free_vars(x)
    if isinstance(x, RefinedType):
        return type_free_vars(x)
    if isinstance(x, TypeScheme):
        return scheme_free_vars(x)
    raise TypeError(f"free_vars: unsupported {type(x)}")


# ---------------------------------------------------------------------------
# Substitution (term-level, capture avoiding)


def subst_term(t: Term, var: str, repl: Term) -> Term:
    if isinstance(t, TVarT):
        return repl if t.name == var else t
    if isinstance(t, TApp):
        return TApp(t.fn, tuple(subst_term(a, var, repl) for a in t.args))
    return t


def subst_formula(f: Formula, var: str, repl: Term) -> Formula:
    if isinstance(f, (FTrue, FFalse)):
        return f
    if isinstance(f, QualApp):
        return QualApp(f.name, tuple(subst_term(a, var, repl) for a in f.args))
    if isinstance(f, Eq):
        return Eq(subst_term(f.lhs, var, repl), subst_term(f.rhs, var, repl))
    if isinstance(f, Not):
        return Not(subst_formula(f.body, var, repl))
    if isinstance(f, And):
        return And(tuple(subst_formula(c, var, repl) for c in f.conjuncts))
    if isinstance(f, Or):
        return Or(tuple(subst_formula(c, var, repl) for c in f.disjuncts))
    if isinstance(f, Implies):
        return Implies(
            subst_formula(f.antecedent, var, repl),
            subst_formula(f.consequent, var, repl),
        )
    if isinstance(f, Forall):
        if f.var == var:
            return f
        if f.var in term_free_vars(repl):
            fresh = fresh_name(f.var.rstrip("'") or "x")
            body = subst_formula(f.body, f.var, TVarT(fresh))
            return Forall(fresh, f.sort, subst_formula(body, var, repl))
        return Forall(f.var, f.sort, subst_formula(f.body, var, repl))
    raise TypeError(f"unknown formula {f!r}")


def subst_formula_many(f: Formula, mapping: dict[str, Term]) -> Formula:
    # simultaneous substitution via staging through fresh names
    staged: dict[str, Term] = {}
    for v in mapping:
        tmp = fresh_name(v.rstrip("'") or "s")
        f = subst_formula(f, v, TVarT(tmp))
        staged[tmp] = mapping[v]
    for tmp, repl in staged.items():
        f = subst_formula(f, tmp, repl)
    return f


def subst_type(t: RefinedType, var: str, repl: Term) -> RefinedType:
    """Substitution into refined types per the three displayed equations:
    it distributes into refinements, skips shadowed arrow binders, and maps
    into both conditions of a computation type."""
    if isinstance(t, BaseRef):
        if t.binder == var:
            return t
        if t.binder in term_free_vars(repl):
            fresh = fresh_name(t.binder)
            ref = subst_formula(t.refinement, t.binder, TVarT(fresh))
            return BaseRef(fresh, t.base, subst_formula(ref, var, repl))
        return BaseRef(t.binder, t.base, subst_formula(t.refinement, var, repl))
    if isinstance(t, Arrow):
        dom = subst_type(t.domain, var, repl)
        if t.param == var:
            return Arrow(t.param, dom, t.codomain)
        if t.param in term_free_vars(repl):
            fresh = fresh_name(t.param)
            cod = subst_type_var_rename(t.codomain, t.param, fresh)
            return Arrow(fresh, dom, subst_type(cod, var, repl))
        return Arrow(t.param, dom, subst_type(t.codomain, var, repl))
    if isinstance(t, Comp):
        if var in ("h", "h'"):
            return t
        pre = subst_formula(t.pre, var, repl)
        if t.binder == var:
            return Comp(t.effect, pre, t.binder, t.result, t.post)
        if t.binder in term_free_vars(repl):
            fresh = fresh_name(t.binder)
            post = subst_formula(t.post, t.binder, TVarT(fresh))
            return Comp(t.effect, pre, fresh, t.result, subst_formula(post, var, repl))
        return Comp(t.effect, pre, t.binder, t.result, subst_formula(t.post, var, repl))
    raise TypeError(f"unknown refined type {t!r}")


def subst_type_var_rename(t: RefinedType, old: str, new: str) -> RefinedType:
    return subst_type(t, old, TVarT(new))


def subst_scheme(s: TypeScheme, var: str, repl: Term) -> TypeScheme:
    return TypeScheme(s.quantified, subst_type(s.body, var, repl))


def subst_type_base(t: RefinedType, mapping: dict[str, BaseType]) -> RefinedType:
    """Instantiate type variables inside a refined type."""
    if isinstance(t, BaseRef):
        return BaseRef(t.binder, subst_base_type(t.base, mapping), t.refinement)
    if isinstance(t, Arrow):
        return Arrow(t.param, subst_type_base(t.domain, mapping), subst_type_base(t.codomain, mapping))
    if isinstance(t, Comp):
        return Comp(t.effect, t.pre, t.binder, subst_base_type(t.result, mapping), t.post)
    raise TypeError(f"unknown refined type {t!r}")


# Expression-level substitution (used by the interpreter's P-fix/P-App/P-let).


def subst_expr(e, var: str, repl):
    """Substitute an expression (value or parser term) for a variable. The
    interpreter only substitutes closed values / closed mu-terms, so no
    capture can occur; bound occurrences still shadow."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return repl if e.name == var else e
    if isinstance(e, Parser):
        return Parser(subst_expr(e.parser, var, repl), span=e.span)
    if isinstance(e, App):
        return App(subst_expr(e.fn, var, repl), subst_expr(e.arg, var, repl), span=e.span)
    if isinstance(e, TyApp):
        return TyApp(subst_expr(e.fn, var, repl), e.type_arg, span=e.span)
    if isinstance(e, Deref):
        return e
    if isinstance(e, Assign):
        return Assign(e.loc, subst_expr(e.value, var, repl), span=e.span)
    if isinstance(e, LetVal):
        value = subst_expr(e.value, var, repl)
        body = e.body if e.var == var else subst_expr(e.body, var, repl)
        return LetVal(e.var, value, body, span=e.span)
    if isinstance(e, LetRef):
        return LetRef(e.loc, subst_expr(e.init, var, repl), subst_expr(e.body, var, repl), span=e.span)
    if isinstance(e, Match):
        scrut = subst_expr(e.scrutinee, var, repl)
        branches = []
        for b in e.branches:
            if var in b.binders:
                branches.append(b)
            else:
                branches.append(Branch(b.ctor, b.tyvars, b.binders, subst_expr(b.body, var, repl)))
        return Match(scrut, tuple(branches), span=e.span)
    if isinstance(e, Return):
        return Return(subst_expr(e.value, var, repl), span=e.span)
    if isinstance(e, Lambda):
        if e.param == var:
            return e
        return Lambda(e.param, e.param_type, subst_expr(e.body, var, repl), span=e.span)
    if isinstance(e, TyLambda):
        return TyLambda(e.tyvar, subst_expr(e.body, var, repl), span=e.span)
    if isinstance(e, CApp):
        return CApp(e.ctor, e.type_args, tuple(subst_expr(a, var, repl) for a in e.args), span=e.span)
    if isinstance(e, Prim):
        return Prim(e.op, tuple(subst_expr(a, var, repl) for a in e.args), span=e.span)
    if isinstance(e, Eps) or isinstance(e, Bot):
        return e
    if isinstance(e, CharP):
        return CharP(subst_expr(e.arg, var, repl), span=e.span)
    if isinstance(e, Fix):
        if e.var == var:
            return e
        return Fix(e.var, e.annot, subst_expr(e.body, var, repl), span=e.span)
    if isinstance(e, Bind):
        return Bind(subst_expr(e.left, var, repl), subst_expr(e.fn, var, repl), span=e.span)
    if isinstance(e, Choice):
        return Choice(subst_expr(e.left, var, repl), subst_expr(e.right, var, repl), span=e.span)
    if isinstance(e, Embed):
        return Embed(subst_expr(e.expr, var, repl), span=e.span)
    raise TypeError(f"unknown expression {e!r}")


def substitute(target, var: str, repl):
    """Uniform entry point: types/formulas take a Term replacement,
    expressions take an Expr replacement."""
    if isinstance(target, Formula):
        assert isinstance(repl, Term)
        return subst_formula(target, var, repl)
    if isinstance(target, RefinedType):
        assert isinstance(repl, Term)
        return subst_type(target, var, repl)
    if isinstance(target, TypeScheme):
        assert isinstance(repl, Term)
        return subst_scheme(target, var, repl)
    if isinstance(target, (Expr, ParserExpr)):
        return subst_expr(target, var, repl)
    raise TypeError(f"substitute: unsupported {type(target)}")


# ---------------------------------------------------------------------------
# Well-formedness / sort checking of refinements

BUILTIN_QUALIFIER_SORTS: dict[str, tuple[tuple[str, ...], str]] = {
    # name -> (argument sort kinds, result kind); kinds: int, bool, heap,
    # loc, data (lists/trees/results/pairs), any
    "sel": (("heap", "loc"), "any"),
    "sel_int": (("heap", "loc"), "int"),
    "sel_bool": (("heap", "loc"), "bool"),
    "sel_v": (("heap", "loc"), "data"),
    "dom": (("heap", "loc"), "bool"),
    "upd": (("heap", "loc", "any"), "heap"),
    "upd_int": (("heap", "loc", "int"), "heap"),
    "upd_bool": (("heap", "loc", "bool"), "heap"),
    "upd_v": (("heap", "loc", "data"), "heap"),
    "errv": ((), "data"),
    "unitv": ((), "data"),
    "box": (("int",), "data"),
    "boxb": (("bool",), "data"),
    "len": (("data",), "int"),
    "mem": (("data", "any"), "bool"),
    "lsdisjoint": (("data", "data"), "bool"),
    "included": (("loc", "heap", "heap"), "bool"),
    "pos": (("data",), "int"),
    "chr": (("data",), "int"),
    "hd": (("data",), "data"),
    "tail": (("data",), "data"),
    "fst": (("data",), "any"),
    "snd": (("data",), "any"),
    "Inl": (("any",), "data"),
    "Inr": (("any",), "data"),
    "cons": (("any", "data"), "data"),
    "nil": ((), "data"),
    "pair": (("any", "any"), "data"),
    "+": (("int", "int"), "int"),
    "-": (("int", "int"), "int"),
    "*": (("int", "int"), "int"),
    "<": (("int", "int"), "bool"),
    "<=": (("int", "int"), "bool"),
    ">": (("int", "int"), "bool"),
    ">=": (("int", "int"), "bool"),
}


def sort_kind(t: BaseType) -> str:
    if isinstance(t, (TInt, TChar)):
        return "int"
    if isinstance(t, TBool):
        return "bool"
    if isinstance(t, THeap):
        return "heap"
    if isinstance(t, TLocSort):
        return "loc"
    return "data"


class WellFormedError(Exception):
    def __init__(self, message: str, path: str = ""):
        super().__init__(message if not path else f"{path}: {message}")
        self.message = message
        self.path = path


def _term_kind(ctx: TypingContext, t: Term, env: dict[str, str], path: str) -> str:
    if isinstance(t, TVarT):
        if t.name in env:
            return env[t.name]
        sort = ctx.lookup_term_var(t.name)
        if sort is not None:
            return sort_kind(sort)
        scheme = ctx.lookup(t.name)
        if scheme is not None and isinstance(scheme.body, BaseRef):
            return sort_kind(scheme.body.base)
        raise WellFormedError(f"unbound variable '{t.name}' in refinement", path)
    if isinstance(t, TLoc):
        return "loc"
    if isinstance(t, TConst):
        v = t.value
        if isinstance(v, bool):
            return "bool"
        if isinstance(v, int):
            return "int"
        if isinstance(v, CharVal):
            return "int"
        return "data"
    if isinstance(t, TApp):
        sig = BUILTIN_QUALIFIER_SORTS.get(t.fn)
        if sig is None:
            q = ctx.lookup_qualifier(t.fn)
            if q is not None:
                sig = (tuple(sort_kind(p) for p in q.params), sort_kind(q.result))
            else:
                c = ctx.lookup_ctor(t.fn)
                if c is not None:
                    sig = (tuple("any" for _ in c.fields), "data")
                else:
                    raise WellFormedError(f"unknown qualifier '{t.fn}'", path)
        expected, result = sig
        if len(expected) != len(t.args):
            raise WellFormedError(
                f"qualifier '{t.fn}' expects {len(expected)} argument(s), got {len(t.args)}", path
            )
        for i, (want, arg) in enumerate(zip(expected, t.args)):
            got = _term_kind(ctx, arg, env, f"{path}/{t.fn}[{i}]")
            if want != "any" and got != "any" and got != want:
                raise WellFormedError(
                    f"qualifier '{t.fn}' argument {i} is {got}, expected {want}",
                    path,
                )
        return result
    raise WellFormedError(f"unknown term {t!r}", path)


def _check_formula(ctx: TypingContext, f: Formula, env: dict[str, str], path: str) -> None:
    if isinstance(f, (FTrue, FFalse)):
        return
    if isinstance(f, QualApp):
        kind = _term_kind(ctx, TApp(f.name, f.args), env, path)
        if kind not in ("bool", "any"):
            raise WellFormedError(f"'{f.name}' is not Bool-valued", path)
        return
    if isinstance(f, Eq):
        k1 = _term_kind(ctx, f.lhs, env, path + "/lhs")
        k2 = _term_kind(ctx, f.rhs, env, path + "/rhs")
        if "any" not in (k1, k2) and k1 != k2:
            raise WellFormedError(f"equality between {k1} and {k2}", path)
        return
    if isinstance(f, Not):
        _check_formula(ctx, f.body, env, path)
        return
    if isinstance(f, And):
        for i, c in enumerate(f.conjuncts):
            _check_formula(ctx, c, env, f"{path}/and[{i}]")
        return
    if isinstance(f, Or):
        for i, c in enumerate(f.disjuncts):
            _check_formula(ctx, c, env, f"{path}/or[{i}]")
        return
    if isinstance(f, Implies):
        _check_formula(ctx, f.antecedent, env, path + "/lhs")
        _check_formula(ctx, f.consequent, env, path + "/rhs")
        return
    if isinstance(f, Forall):
        _check_formula(ctx, f.body, {**env, f.var: sort_kind(f.sort)}, path)
        return
    raise WellFormedError(f"unknown formula {f!r}", path)


def well_formed(ctx: TypingContext, t: Union[RefinedType, TypeScheme]) -> Optional[str]:
    """Sort-check a refined type. Returns None when OK, else a diagnostic
    naming the first ill-sorted subterm."""
    if isinstance(t, TypeScheme):
        return well_formed(ctx, t.body)
    try:
        _well_formed(ctx, t, {})
    except WellFormedError as e:
        return str(e)
    return None


def _well_formed(ctx: TypingContext, t: RefinedType, env: dict[str, str]) -> None:
    if isinstance(t, BaseRef):
        _check_formula(ctx, t.refinement, {**env, t.binder: sort_kind(t.base)}, "refinement")
        return
    if isinstance(t, Arrow):
        _well_formed(ctx, t.domain, env)
        inner = dict(env)
        if isinstance(t.domain, BaseRef):
            inner[t.param] = sort_kind(t.domain.base)
        _well_formed(ctx, t.codomain, inner)
        return
    if isinstance(t, Comp):
        pre_env = {**env, "h": "heap"}
        _check_formula(ctx, t.pre, pre_env, "pre")
        post_env = {**env, "h": "heap", "h'": "heap", t.binder: sort_kind(t.result)}
        _check_formula(ctx, t.post, post_env, "post")
        return
    raise WellFormedError(f"unknown refined type {t!r}")


# ---------------------------------------------------------------------------
# Pretty printing (diagnostics, reports)


def show_term(t: Term) -> str:
    if isinstance(t, TVarT):
        return t.name
    if isinstance(t, TLoc):
        return t.name
    if isinstance(t, TConst):
        v = t.value
        if isinstance(v, bool):
            return "true" if v else "false"
        return repr(v) if not isinstance(v, int) else str(v)
    if isinstance(t, TApp):
        if t.fn in ("+", "-", "*") and len(t.args) == 2:
            return f"({show_term(t.args[0])} {t.fn} {show_term(t.args[1])})"
        if t.fn == "nil":
            return "[]"
        if t.fn == "cons" and len(t.args) == 2:
            return f"({show_term(t.args[0])} :: {show_term(t.args[1])})"
        args = ", ".join(show_term(a) for a in t.args)
        return f"{t.fn} ({args})" if args else t.fn
    return repr(t)


def show_formula(f: Formula) -> str:
    if isinstance(f, FTrue):
        return "true"
    if isinstance(f, FFalse):
        return "false"
    if isinstance(f, QualApp):
        if f.name in ("<", "<=", ">", ">=") and len(f.args) == 2:
            return f"{show_term(f.args[0])} {f.name} {show_term(f.args[1])}"
        return show_term(TApp(f.name, f.args))
    if isinstance(f, Eq):
        return f"{show_term(f.lhs)} = {show_term(f.rhs)}"
    if isinstance(f, Not):
        return f"not ({show_formula(f.body)})"
    if isinstance(f, And):
        return " /\\ ".join(_paren(c) for c in f.conjuncts)
    if isinstance(f, Or):
        return " \\/ ".join(_paren(c) for c in f.disjuncts)
    if isinstance(f, Implies):
        return f"{_paren(f.antecedent)} => {_paren(f.consequent)}"
    if isinstance(f, Forall):
        return f"forall ({f.var} : {show_base_type(f.sort)}). {show_formula(f.body)}"
    return repr(f)


def _paren(f: Formula) -> str:
    s = show_formula(f)
    if isinstance(f, (And, Or, Implies, Forall)):
        return f"({s})"
    return s


def show_base_type(t: BaseType) -> str:
    if isinstance(t, TyVar):
        return f"'{t.name}"
    if isinstance(t, TInt):
        return "int"
    if isinstance(t, TBool):
        return "bool"
    if isinstance(t, TUnit):
        return "unit"
    if isinstance(t, TChar):
        return "char"
    if isinstance(t, THeap):
        return "heap"
    if isinstance(t, TExc):
        return "exc"
    if isinstance(t, TLocSort):
        return "loc"
    if isinstance(t, Named):
        if t.name == "list" and len(t.args) == 1:
            return f"{show_base_type(t.args[0])} list"
        if t.args:
            return f"{t.name} ({', '.join(show_base_type(a) for a in t.args)})"
        return t.name
    if isinstance(t, TResult):
        return f"{show_base_type(t.inner)} result"
    if isinstance(t, TRef):
        return f"{show_base_type(t.inner)} ref"
    return repr(t)


def show_type(t: Union[RefinedType, TypeScheme]) -> str:
    if isinstance(t, TypeScheme):
        body = show_type(t.body)
        if t.quantified:
            return f"forall {', '.join(t.quantified)}. {body}"
        return body
    if isinstance(t, BaseRef):
        if isinstance(t.refinement, FTrue):
            return show_base_type(t.base)
        return f"{{{t.binder} : {show_base_type(t.base)} | {show_formula(t.refinement)}}}"
    if isinstance(t, Arrow):
        return f"({t.param} : {show_type(t.domain)}) -> {show_type(t.codomain)}"
    if isinstance(t, Comp):
        return (
            f"PE^{t.effect} {{{show_formula(t.pre)}}} {t.binder} : "
            f"{show_base_type(t.result)} {{{show_formula(t.post)}}}"
        )
    return repr(t)
