"""SMT-LIB v2 emission.

Sorts: Int and Bool are native; Heap, Loc and the data sort V are declared
uninterpreted. Scalar values flowing into V positions are wrapped with the
injective embeddings box : Int -> V / boxb : Bool -> V during emission, so
formulas stay unsorted internally while scripts typecheck. Validity of a VC
corresponds to unsat of (axioms /\\ hypothesis /\\ (not goal)).
"""

from __future__ import annotations

import hashlib
from typing import Optional

from ..core_ast import (
    And,
    Eq,
    FFalse,
    Formula,
    FTrue,
    Forall,
    Implies,
    Not,
    Or,
    QualApp,
    TApp,
    TConst,
    TLoc,
    TVarT,
    Term,
)
from .solve import Sorts, normalize_formula
from .theory import ARITH_FNS, CMP_FNS, HEAP, INT, LOC, Theory, V

BOOL = "bool"

_SMT_SORT = {INT: "Int", BOOL: "Bool", HEAP: "Heap", LOC: "Loc", V: "V"}


def _sym(name: str) -> str:
    if all(c.isalnum() or c in "_-+*<>=!$." for c in name) and name not in ("-", "+", "*"):
        if name in ("<", "<=", ">", ">=", "+", "-", "*"):
            return name
        return name
    return "|" + name.replace("|", "_") + "|"


class Emitter:
    def __init__(self, theory: Theory, var_sorts: dict[str, str]):
        self.theory = theory
        self.sorts = Sorts(theory, var_sorts)
        self.decls: dict[str, str] = {}
        self.used_fns: set[str] = set()
        self.used_locs: set[str] = set()

    def term(self, t: Term, expected: Optional[str], bound: dict[str, str]) -> str:
        actual = self._sort(t, bound)
        text = self._term(t, bound)
        if expected == V and actual == INT:
            self.used_fns.add("box")
            return f"(box {text})"
        if expected == V and actual == BOOL:
            self.used_fns.add("boxb")
            return f"(boxb {text})"
        return text

    def _sort(self, t: Term, bound: dict[str, str]) -> str:
        if isinstance(t, TVarT) and t.name in bound:
            return bound[t.name]
        return self.sorts.of(t)

    def _term(self, t: Term, bound: dict[str, str]) -> str:
        if isinstance(t, TVarT):
            if t.name not in bound:
                self.decls.setdefault(t.name, self.sorts.of(t))
            return _sym(t.name)
        if isinstance(t, TLoc):
            self.used_locs.add(t.name)
            return _sym("loc." + t.name)
        if isinstance(t, TConst):
            v = t.value
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, int):
                return str(v) if v >= 0 else f"(- {-v})"
            raise ValueError(f"unnormalized constant {v!r}")
        if isinstance(t, TApp):
            self.used_fns.add(t.fn)
            if not t.args:
                return _sym(t.fn)
            sig = self.theory.signatures.get(t.fn)
            args = []
            for i, a in enumerate(t.args):
                want = sig[0][i] if sig and i < len(sig[0]) else None
                args.append(self.term(a, want, bound))
            op = t.fn if t.fn in ARITH_FNS | CMP_FNS else _sym(t.fn)
            return f"({op} {' '.join(args)})"
        raise ValueError(f"unknown term {t!r}")

    def formula(self, f: Formula, bound: dict[str, str]) -> str:
        if isinstance(f, FTrue):
            return "true"
        if isinstance(f, FFalse):
            return "false"
        if isinstance(f, QualApp):
            if f.name in CMP_FNS:
                a = self.term(f.args[0], INT, bound)
                b = self.term(f.args[1], INT, bound)
                return f"({f.name} {a} {b})"
            self.used_fns.add(f.name)
            if not f.args:
                return _sym(f.name)
            sig = self.theory.signatures.get(f.name)
            args = [
                self.term(a, sig[0][i] if sig and i < len(sig[0]) else None, bound)
                for i, a in enumerate(f.args)
            ]
            return f"({_sym(f.name)} {' '.join(args)})"
        if isinstance(f, Eq):
            sa, sb = self._sort(f.lhs, bound), self._sort(f.rhs, bound)
            want = V if V in (sa, sb) else (sa if sa == sb else V)
            if sa == sb and sa != V:
                want = sa
            a = self.term(f.lhs, want, bound)
            b = self.term(f.rhs, want, bound)
            return f"(= {a} {b})"
        if isinstance(f, Not):
            return f"(not {self.formula(f.body, bound)})"
        if isinstance(f, And):
            return "(and " + " ".join(self.formula(c, bound) for c in f.conjuncts) + ")"
        if isinstance(f, Or):
            return "(or " + " ".join(self.formula(c, bound) for c in f.disjuncts) + ")"
        if isinstance(f, Implies):
            return f"(=> {self.formula(f.antecedent, bound)} {self.formula(f.consequent, bound)})"
        if isinstance(f, Forall):
            from .theory import sort_of_base

            sort = sort_of_base(f.sort)
            inner = self.formula(f.body, {**bound, f.var: sort})
            return f"(forall (({_sym(f.var)} {_SMT_SORT[sort]})) {inner})"
        raise ValueError(f"unknown formula {f!r}")


def emit_smtlib(theory: Theory, hypothesis: Formula, goal: Formula, var_sorts: dict[str, str]) -> str:
    """Deterministic SMT-LIB v2 script whose check-sat is unsat iff the VC is
    valid under the theory."""
    em = Emitter(theory, dict(var_sorts))
    hyp_text = em.formula(normalize_formula(hypothesis), {})
    goal_text = em.formula(normalize_formula(goal), {})
    axiom_texts = [(label, em.formula(normalize_formula(ax), {})) for label, ax in theory.axioms]

    lines = [
        "; generated verification condition",
        "(set-logic UFLIA)",
        "(declare-sort V 0)",
        "(declare-sort Heap 0)",
        "(declare-sort Loc 0)",
    ]
    for fn in sorted(em.used_fns):
        sig = theory.signatures.get(fn)
        if sig is None or fn in ARITH_FNS or fn in CMP_FNS:
            continue
        args, res = sig
        lines.append(
            f"(declare-fun {_sym(fn)} ({' '.join(_SMT_SORT[a] for a in args)}) {_SMT_SORT[res]})"
        )
    for loc in sorted(em.used_locs | set(theory.locations)):
        lines.append(f"(declare-const {_sym('loc.' + loc)} Loc)")
    locs = sorted(em.used_locs | set(theory.locations))
    if len(locs) > 1:
        lines.append("(assert (distinct " + " ".join(_sym("loc." + l) for l in locs) + "))")
    for name in sorted(em.decls):
        lines.append(f"(declare-const {_sym(name)} {_SMT_SORT[em.decls[name]]})")
    for label, text in axiom_texts:
        lines.append(f"; axiom {label}")
        lines.append(f"(assert {text})")
    lines.append("; hypothesis")
    lines.append(f"(assert {hyp_text})")
    lines.append("; negated goal")
    lines.append(f"(assert (not {goal_text}))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def script_name(script: str) -> str:
    return hashlib.sha256(script.encode()).hexdigest()[:16] + ".smt2"
