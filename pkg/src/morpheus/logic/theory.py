"""Logical theory backing VC discharge: sorts, symbol signatures, axioms.

The logic is multi-sorted EUFLIA with sorts Int, Bool, Heap, Loc and a single
data sort V covering lists, trees, pairs, results, unit and exc. Heaps are an
uninterpreted sort with per-value-sort select/update families (sel_int,
sel_bool, sel_v / upd_int, upd_bool, upd_v) so everything stays quantifier-
friendly; datatypes are uninterpreted with injectivity/distinctness axioms
rather than native ADTs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from ..core_ast import (
    And,
    BaseType,
    CtorSig,
    Eq,
    FFalse,
    Formula,
    FTrue,
    Forall,
    Implies,
    Named,
    Not,
    Or,
    QualApp,
    QualClause,
    QualifierDef,
    TApp,
    TBool,
    TChar,
    TConst,
    THeap,
    TInt,
    TLoc,
    TLocSort,
    TResult,
    TRef,
    TUnit,
    TVarT,
    Term,
    TyVar,
    conj,
    disj,
    forall,
    implies,
    qual,
    tvar,
)

# sort names used throughout the logic layer
INT, BOOL, HEAP, LOC, V = "int", "bool", "heap", "loc", "v"


def sort_of_base(t: BaseType) -> str:
    if isinstance(t, (TInt, TChar)):
        return INT
    if isinstance(t, TBool):
        return BOOL
    if isinstance(t, THeap):
        return HEAP
    if isinstance(t, TLocSort):
        return LOC
    if isinstance(t, (TUnit, Named, TResult, TRef, TyVar)):
        return V
    return V


# signature: name -> (argument sorts, result sort)
BASE_SIGNATURES: dict[str, tuple[tuple[str, ...], str]] = {
    "sel_int": ((HEAP, LOC), INT),
    "sel_bool": ((HEAP, LOC), BOOL),
    "sel_v": ((HEAP, LOC), V),
    "upd_int": ((HEAP, LOC, INT), HEAP),
    "upd_bool": ((HEAP, LOC, BOOL), HEAP),
    "upd_v": ((HEAP, LOC, V), HEAP),
    "dom": ((HEAP, LOC), BOOL),
    "included": ((LOC, HEAP, HEAP), BOOL),
    "len": ((V,), INT),
    "mem": ((V, V), BOOL),
    "pos": ((V,), INT),
    "chr": ((V,), INT),
    "hd": ((V,), V),
    "tail": ((V,), V),
    "nil": ((), V),
    "cons": ((V, V), V),
    "pair": ((INT, INT), V),
    "Inl": ((V,), V),
    "Inr": ((V,), V),
    "unitv": ((), V),
    "errv": ((), V),
    "box": ((INT,), V),
    "boxb": ((BOOL,), V),
    "+": ((INT, INT), INT),
    "-": ((INT, INT), INT),
    "*": ((INT, INT), INT),
    "<": ((INT, INT), BOOL),
    "<=": ((INT, INT), BOOL),
    ">": ((INT, INT), BOOL),
    ">=": ((INT, INT), BOOL),
}

ARITH_FNS = {"+", "-", "*"}
CMP_FNS = {"<", "<=", ">", ">="}
CONSTRUCTORS = {"nil", "cons", "pair", "Inl", "Inr", "unitv", "errv", "box", "boxb"}


class TheoryError(Exception):
    pass


@dataclass
class Theory:
    """Declared sorts/symbols plus the closed axiom set shipped with every
    VC. Immutable once elaborated."""

    signatures: dict[str, tuple[tuple[str, ...], str]] = field(default_factory=dict)
    constructors: dict[str, tuple[tuple[str, ...], str]] = field(default_factory=dict)
    locations: tuple[str, ...] = ()
    axioms: tuple[tuple[str, Formula], ...] = ()  # (label, closed formula)

    def signature(self, name: str):
        sig = self.signatures.get(name)
        if sig is None:
            raise TheoryError(f"undeclared symbol '{name}'")
        return sig

    def is_constructor(self, name: str) -> bool:
        return name in self.constructors

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.signatures):
            h.update(f"{name}:{self.signatures[name]};".encode())
        for loc in self.locations:
            h.update(f"loc:{loc};".encode())
        for label, ax in self.axioms:
            h.update(f"{label}={ax!r};".encode())
        return h.hexdigest()[:16]


def _mccarthy_axioms() -> list[tuple[str, Formula]]:
    out: list[tuple[str, Formula]] = []
    sorts = {"int": TInt(), "bool": TBool(), "v": Named("data", ())}
    h, l, l2 = tvar("h"), tvar("l"), tvar("l'")
    v = tvar("v")
    for s, s_ty in sorts.items():
        upd = f"upd_{s}"
        sel = f"sel_{s}"
        out.append(
            (
                f"mccarthy-sel-{s}",
                forall(
                    [("h", THeap()), ("l", TLocSort()), ("v", s_ty)],
                    Eq(TApp(sel, (TApp(upd, (h, l, v)), l)), v),
                ),
            )
        )
        for t in sorts:
            sel_t = f"sel_{t}"
            out.append(
                (
                    f"mccarthy-frame-{s}-{t}",
                    forall(
                        [("h", THeap()), ("l", TLocSort()), ("l'", TLocSort()), ("v", s_ty)],
                        implies(
                            Not(Eq(l, l2)),
                            Eq(
                                TApp(sel_t, (TApp(upd, (h, l2, v)), l)),
                                TApp(sel_t, (h, l)),
                            ),
                        ),
                    ),
                )
            )
        out.append(
            (
                f"mccarthy-dom-{s}",
                forall(
                    [("h", THeap()), ("l", TLocSort()), ("l'", TLocSort()), ("v", s_ty)],
                    conj(
                        implies(qual("dom", h, l), qual("dom", TApp(upd, (h, l2, v)), l)),
                        implies(Eq(l, l2), qual("dom", TApp(upd, (h, l2, v)), l)),
                        implies(
                            conj(qual("dom", TApp(upd, (h, l2, v)), l), Not(Eq(l, l2))),
                            qual("dom", h, l),
                        ),
                    ),
                ),
            )
        )
    return out


def _list_axioms() -> list[tuple[str, Formula]]:
    data = Named("data", ())
    x, xs, y, ys = tvar("x"), tvar("xs"), tvar("y"), tvar("ys")
    axs: list[tuple[str, Formula]] = [
        (
            "len-def",
            forall(
                [("x", data), ("xs", data)],
                conj(
                    Eq(TApp("len", (TApp("cons", (x, xs)),)), TApp("+", (TApp("len", (xs,)), TConst(1)))),
                    Eq(TApp("len", (TApp("nil", ()),)), TConst(0)),
                ),
            ),
        ),
        ("len-nonneg", forall([("xs", data)], qual(">=", TApp("len", (xs,)), TConst(0)))),
        (
            "mem-def",
            forall(
                [("x", data), ("y", data), ("ys", data)],
                conj(
                    Not(qual("mem", TApp("nil", ()), x)),
                    implies(Eq(x, y), qual("mem", TApp("cons", (y, ys)), x)),
                    implies(qual("mem", ys, x), qual("mem", TApp("cons", (y, ys)), x)),
                    implies(
                        conj(qual("mem", TApp("cons", (y, ys)), x), Not(Eq(x, y))),
                        qual("mem", ys, x),
                    ),
                ),
            ),
        ),
        (
            "hd-tail-def",
            forall(
                [("x", data), ("xs", data)],
                conj(
                    Eq(TApp("hd", (TApp("cons", (x, xs)),)), x),
                    Eq(TApp("tail", (TApp("cons", (x, xs)),)), xs),
                ),
            ),
        ),
        (
            "pos-def",
            forall(
                [("c", TInt()), ("i", TInt()), ("xs", data)],
                Eq(TApp("pos", (TApp("cons", (TApp("pair", (tvar("c"), tvar("i"))), xs)),)), tvar("i")),
            ),
        ),
        (
            "chr-def",
            forall(
                [("c", TInt()), ("i", TInt())],
                Eq(TApp("chr", (TApp("pair", (tvar("c"), tvar("i"))),)), tvar("c")),
            ),
        ),
    ]
    return axs


def _included_axioms() -> list[tuple[str, Formula]]:
    """Monotonic-consumption qualifier: the remaining input in h' is a suffix
    of the one in h. Reflexive via equality, transitive, preserved by tail,
    and length-decreasing."""
    heap, locs = THeap(), TLocSort()
    l, h, hi, h2 = tvar("l"), tvar("h"), tvar("hi"), tvar("h'")
    selv = lambda hh: TApp("sel_v", (hh, l))  # noqa: E731
    return [
        (
            "included-refl",
            forall(
                [("l", locs), ("h", heap), ("h'", heap)],
                implies(Eq(selv(h2), selv(h)), qual("included", l, h, h2)),
            ),
        ),
        (
            "included-tail",
            forall(
                [("l", locs), ("h", heap), ("h'", heap)],
                implies(Eq(selv(h2), TApp("tail", (selv(h),))), qual("included", l, h, h2)),
            ),
        ),
        (
            "included-trans",
            forall(
                [("l", locs), ("h", heap), ("hi", heap), ("h'", heap)],
                implies(
                    conj(qual("included", l, h, hi), qual("included", l, hi, h2)),
                    qual("included", l, h, h2),
                ),
            ),
        ),
        (
            "included-len",
            forall(
                [("l", locs), ("h", heap), ("h'", heap)],
                implies(
                    qual("included", l, h, h2),
                    qual("<=", TApp("len", (selv(h2),)), TApp("len", (selv(h),))),
                ),
            ),
        ),
    ]


def _constructor_axioms(ctors: dict[str, tuple[tuple[str, ...], str]]) -> list[tuple[str, Formula]]:
    data = Named("data", ())
    sort_ty = {INT: TInt(), BOOL: TBool(), V: data, HEAP: THeap(), LOC: TLocSort()}
    out: list[tuple[str, Formula]] = []
    names = sorted(ctors)
    for name in names:
        args, _res = ctors[name]
        if not args:
            continue
        xs = [tvar(f"x{i}") for i in range(len(args))]
        ys = [tvar(f"y{i}") for i in range(len(args))]
        binders = [(f"x{i}", sort_ty[s]) for i, s in enumerate(args)] + [
            (f"y{i}", sort_ty[s]) for i, s in enumerate(args)
        ]
        out.append(
            (
                f"inj-{name}",
                forall(
                    binders,
                    implies(
                        Eq(TApp(name, tuple(xs)), TApp(name, tuple(ys))),
                        conj(*[Eq(x, y) for x, y in zip(xs, ys)]),
                    ),
                ),
            )
        )
    # pairwise distinctness among data constructors of the same outer sort
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            a_args, a_res = ctors[a]
            b_args, b_res = ctors[b]
            if a_res != V or b_res != V:
                continue
            if a in ("box", "boxb") or b in ("box", "boxb"):
                # boxed scalars are distinct from structured data
                pass
            xs = [tvar(f"x{i}") for i in range(len(a_args))]
            ys = [tvar(f"y{i}") for i in range(len(b_args))]
            binders = [(f"x{i}", sort_ty[s]) for i, s in enumerate(a_args)] + [
                (f"y{i}", sort_ty[s]) for i, s in enumerate(b_args)
            ]
            out.append(
                (
                    f"dist-{a}-{b}",
                    forall(binders, Not(Eq(TApp(a, tuple(xs)), TApp(b, tuple(ys))))),
                )
            )
    return out


def _location_axioms(locations: tuple[str, ...]) -> list[tuple[str, Formula]]:
    out = []
    for i, a in enumerate(locations):
        for b in locations[i + 1 :]:
            out.append((f"loc-distinct-{a}-{b}", Not(Eq(TLoc(a), TLoc(b)))))
    return out


# ---------------------------------------------------------------------------
# Qualifier translation


class QualifierError(Exception):
    pass


def _pattern_term(pat, binders: list[tuple[str, BaseType]], sort_hint: BaseType) -> Term:
    kind = pat[0]
    if kind == "var":
        name = pat[1]
        if name != "_" and all(name != b for b, _ in binders):
            binders.append((name, sort_hint))
        return tvar(name) if name != "_" else tvar(f"_w{len(binders)}")
    if kind == "ctor":
        _, ctor, subs = pat
        args = []
        for sp in subs:
            args.append(_pattern_term(sp, binders, Named("data", ())))
        return TApp(ctor, tuple(args))
    raise QualifierError(f"unknown pattern {pat!r}")


def _strict_subterms(t: Term) -> set[Term]:
    out: set[Term] = set()
    if isinstance(t, TApp):
        for a in t.args:
            out.add(a)
            out |= _strict_subterms(a)
    return out


def _check_structural_recursion(q: QualifierDef, pattern_terms: list[Term], rhs) -> None:
    """Every recursive call must take a strict subterm of some pattern in the
    recursive argument positions; otherwise axiom instantiation would loop."""
    subs: set[Term] = set()
    for p in pattern_terms:
        subs |= _strict_subterms(p)

    def walk_term(t: Term):
        if isinstance(t, TApp):
            if t.fn == q.name:
                if not any(a in subs for a in t.args):
                    raise QualifierError(
                        f"qualifier '{q.name}': recursion is not structural (no argument "
                        "is a strict subterm of the clause pattern)"
                    )
            for a in t.args:
                walk_term(a)

    def walk(f):
        if isinstance(f, Formula):
            if isinstance(f, QualApp):
                walk_term(TApp(f.name, f.args))
            elif isinstance(f, Eq):
                walk_term(f.lhs)
                walk_term(f.rhs)
            elif isinstance(f, Not):
                walk(f.body)
            elif isinstance(f, And):
                for c in f.conjuncts:
                    walk(c)
            elif isinstance(f, Or):
                for c in f.disjuncts:
                    walk(c)
            elif isinstance(f, Implies):
                walk(f.antecedent)
                walk(f.consequent)
            elif isinstance(f, Forall):
                walk(f.body)
        else:
            walk_term(f)

    walk(rhs)


def _formula_of_rhs(rhs) -> Formula:
    if isinstance(rhs, Formula):
        return rhs
    if isinstance(rhs, Term):
        if isinstance(rhs, TConst) and isinstance(rhs.value, bool):
            return FTrue() if rhs.value else FFalse()
        raise QualifierError("boolean qualifier clause has a non-boolean right side")
    raise QualifierError(f"bad clause right side {rhs!r}")


def _swap_clause(c: QualClause) -> QualClause:
    assert len(c.patterns) == 2
    return QualClause((c.patterns[1], c.patterns[0]), c.rhs)


def _clause_shape(c: QualClause) -> tuple:
    def pshape(p):
        if p[0] == "var":
            return ("var",)
        return ("ctor", p[1], tuple(pshape(s) for s in p[2]))

    return tuple(pshape(p) for p in c.patterns)


def qualifier_to_axioms(q: QualifierDef) -> list[Formula]:
    """Translate a pattern-equation qualifier into solver axioms.

    Term-valued qualifiers yield one universally quantified equation merged
    over the clauses. Bool-valued (relational) qualifiers yield one
    implication per clause (conditions => qualifier holds of the pattern),
    plus a symmetry axiom when the clause set is closed under argument swap.
    """
    data = Named("data", ())
    is_bool = isinstance(q.result, TBool)
    axioms: list[Formula] = []
    equations: list[Formula] = []
    all_binders: list[tuple[str, BaseType]] = []

    for clause in q.clauses:
        binders: list[tuple[str, BaseType]] = []
        pattern_terms = [
            _pattern_term(p, binders, q.params[i] if i < len(q.params) else data)
            for i, p in enumerate(clause.patterns)
        ]
        _check_structural_recursion(q, pattern_terms, clause.rhs)
        head = TApp(q.name, tuple(pattern_terms))
        if is_bool:
            cond = _formula_of_rhs(clause.rhs)
            axioms.append(forall(binders, implies(cond, QualApp(q.name, tuple(pattern_terms)))))
        else:
            if not isinstance(clause.rhs, Term):
                raise QualifierError(f"qualifier '{q.name}': term-valued clause needs a term right side")
            eq_f = Eq(head, clause.rhs)
            for b in binders:
                if b not in all_binders:
                    all_binders.append(b)
            equations.append(eq_f)

    if equations:
        axioms.insert(0, forall(all_binders, conj(*equations)))

    if is_bool and len(q.params) == 2 and q.params[0] == q.params[1]:
        shapes = {_clause_shape(c) for c in q.clauses}
        swapped = {_clause_shape(_swap_clause(c)) for c in q.clauses}
        if shapes == swapped:
            l1, l2 = tvar("l1"), tvar("l2")
            axioms.append(
                forall(
                    [("l1", q.params[0]), ("l2", q.params[1])],
                    conj(
                        implies(QualApp(q.name, (l1, l2)), QualApp(q.name, (l2, l1))),
                        implies(QualApp(q.name, (l2, l1)), QualApp(q.name, (l1, l2))),
                    ),
                )
            )
    return axioms


# ---------------------------------------------------------------------------
# Theory elaboration


def build_theory(
    locations: list[str],
    qualifiers: list[QualifierDef] = (),
    ctor_sigs: list[CtorSig] = (),
    extra_axioms: list[tuple[str, Formula]] = (),
) -> Theory:
    signatures = dict(BASE_SIGNATURES)
    constructors = {name: BASE_SIGNATURES[name] for name in CONSTRUCTORS}

    for sig in ctor_sigs:
        arg_sorts = tuple(sort_of_base(_field_base(f)) for f in sig.fields)
        signatures[sig.name] = (arg_sorts, V)
        constructors[sig.name] = (arg_sorts, V)
        for i, fname in enumerate(sig.field_names):
            if fname:
                signatures[fname] = ((V,), arg_sorts[i])

    for q in qualifiers:
        signatures[q.name] = (tuple(sort_of_base(p) for p in q.params), sort_of_base(q.result))

    axioms: list[tuple[str, Formula]] = []
    axioms += _mccarthy_axioms()
    axioms += _list_axioms()
    axioms += _included_axioms()
    axioms += _constructor_axioms(constructors)
    axioms += _location_axioms(tuple(locations))

    # field projection axioms for record constructors
    data = Named("data", ())
    sort_ty = {INT: TInt(), BOOL: TBool(), V: data}
    for sig in ctor_sigs:
        if not sig.field_names:
            continue
        arg_sorts, _ = constructors[sig.name]
        xs = [tvar(f"x{i}") for i in range(len(arg_sorts))]
        binders = [(f"x{i}", sort_ty[s]) for i, s in enumerate(arg_sorts)]
        for i, fname in enumerate(sig.field_names):
            if fname:
                axioms.append(
                    (
                        f"field-{sig.name}-{fname}",
                        forall(binders, Eq(TApp(fname, (TApp(sig.name, tuple(xs)),)), xs[i])),
                    )
                )

    for q in qualifiers:
        for i, ax in enumerate(qualifier_to_axioms(q)):
            axioms.append((f"qualifier-{q.name}-{i}", ax))

    axioms += list(extra_axioms)

    return Theory(
        signatures=signatures,
        constructors=constructors,
        locations=tuple(locations),
        axioms=tuple(axioms),
    )


def _field_base(f) -> BaseType:
    from ..core_ast import BaseRef

    if isinstance(f, BaseRef):
        return f.base
    return Named("data", ())
