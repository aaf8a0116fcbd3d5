"""Built-in validity checker for the exists*-forall* EUFLIA fragment.

Pipeline: negate the VC, skolemize the existential block to fresh constants,
turn every universal into an instantiation rule with e-matching triggers,
saturate ground instances (matching modulo the unit-equality e-graph), then
decide the ground formula with DPLL over a congruence-closure plus
Fourier-Motzkin theory core. `unsat` of the negation means the VC is valid.

Soundness discipline: `valid` is only reported from a genuine ground
refutation; `invalid` only when the final instantiation round was saturated
(added nothing), otherwise the answer is `unknown`.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..core_ast import (
    And,
    CharVal,
    Eq,
    ErrVal,
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
    UnitVal,
    show_formula,
    subst_formula,
)
from .theory import ARITH_FNS, CMP_FNS, HEAP, INT, LOC, Theory, V, sort_of_base

BOOL = "bool"


class SolveTimeout(Exception):
    pass


class Budget:
    __slots__ = ("deadline",)

    def __init__(self, seconds: float):
        self.deadline = time.monotonic() + seconds

    def check(self):
        if time.monotonic() > self.deadline:
            raise SolveTimeout()


# ---------------------------------------------------------------------------
# Normalization and sort inference


def normalize_term(t: Term) -> Term:
    if isinstance(t, TConst):
        v = t.value
        if isinstance(v, CharVal):
            return TConst(v.cp)
        if isinstance(v, ErrVal):
            return TApp("errv", ())
        if isinstance(v, UnitVal):
            return TApp("unitv", ())
        return t
    if isinstance(t, TApp):
        return TApp(t.fn, tuple(normalize_term(a) for a in t.args))
    return t


def normalize_formula(f: Formula) -> Formula:
    if isinstance(f, (FTrue, FFalse)):
        return f
    if isinstance(f, QualApp):
        return QualApp(f.name, tuple(normalize_term(a) for a in f.args))
    if isinstance(f, Eq):
        return Eq(normalize_term(f.lhs), normalize_term(f.rhs))
    if isinstance(f, Not):
        return Not(normalize_formula(f.body))
    if isinstance(f, And):
        return And(tuple(normalize_formula(c) for c in f.conjuncts))
    if isinstance(f, Or):
        return Or(tuple(normalize_formula(c) for c in f.disjuncts))
    if isinstance(f, Implies):
        return Implies(normalize_formula(f.antecedent), normalize_formula(f.consequent))
    if isinstance(f, Forall):
        return Forall(f.var, f.sort, normalize_formula(f.body))
    raise TypeError(f"unknown formula {f!r}")


class Sorts:
    """Sort lookup over normalized terms; free constants come from `env`,
    everything else from the theory signature table."""

    def __init__(self, theory: Theory, env: dict[str, str]):
        self.theory = theory
        self.env = dict(env)

    def of(self, t: Term) -> str:
        if isinstance(t, TVarT):
            return self.env.get(t.name, V)
        if isinstance(t, TLoc):
            return LOC
        if isinstance(t, TConst):
            if isinstance(t.value, bool):
                return BOOL
            if isinstance(t.value, int):
                return INT
            return V
        if isinstance(t, TApp):
            sig = self.theory.signatures.get(t.fn)
            if sig is not None:
                return sig[1]
            if t.fn in ARITH_FNS:
                return INT
            if t.fn in CMP_FNS:
                return BOOL
            return V
        return V

    def learn(self, f: Formula, binders: dict[str, str] | None = None) -> None:
        """Assign sorts to unseen free variables from signature positions."""
        bb = dict(binders or {})

        def note(name: str, sort: Optional[str]):
            if sort and name not in bb and name not in self.env:
                self.env[name] = sort

        def walk_term(t: Term, expected: Optional[str]):
            if isinstance(t, TVarT):
                note(t.name, expected)
                return
            if isinstance(t, TApp):
                sig = self.theory.signatures.get(t.fn)
                if sig is None and t.fn in ARITH_FNS | CMP_FNS:
                    sig = ((INT, INT), INT)
                for i, a in enumerate(t.args):
                    walk_term(a, sig[0][i] if sig and i < len(sig[0]) else None)

        def side_sort(t: Term) -> Optional[str]:
            if isinstance(t, TVarT):
                return bb.get(t.name) or self.env.get(t.name)
            return self.of(t)

        def walk(g: Formula, scope: dict[str, str]):
            nonlocal bb
            saved = bb
            bb = {**bb, **scope}
            try:
                if isinstance(g, QualApp):
                    walk_term(TApp(g.name, g.args), None)
                elif isinstance(g, Eq):
                    walk_term(g.lhs, side_sort(g.rhs))
                    walk_term(g.rhs, side_sort(g.lhs))
                elif isinstance(g, Not):
                    walk(g.body, {})
                elif isinstance(g, And):
                    for c in g.conjuncts:
                        walk(c, {})
                elif isinstance(g, Or):
                    for c in g.disjuncts:
                        walk(c, {})
                elif isinstance(g, Implies):
                    walk(g.antecedent, {})
                    walk(g.consequent, {})
                elif isinstance(g, Forall):
                    walk(g.body, {g.var: sort_of_base(g.sort)})
            finally:
                bb = saved

        walk(f, {})


# ---------------------------------------------------------------------------
# Congruence closure


class CC:
    """Union-find over a term DAG with congruence, constructor
    injectivity/distinctness, and distinct-constant conflicts."""

    def __init__(self, theory: Theory, budget: Optional[Budget] = None):
        self.theory = theory
        self.budget = budget
        self.parent: list[int] = []
        self.terms: list[Term] = []
        self.node_of: dict[Term, int] = {}
        self.members: dict[int, list[int]] = {}
        self.use: dict[int, list[int]] = {}
        self.sig: dict[tuple, int] = {}
        self.diseqs: list[tuple[int, int]] = []
        self.conflict: bool = False
        self.pending: list[tuple[int, int]] = []

    def add(self, t: Term) -> int:
        nid = self.node_of.get(t)
        if nid is not None:
            return nid
        arg_ids = [self.add(a) for a in t.args] if isinstance(t, TApp) else []
        nid = len(self.terms)
        self.terms.append(t)
        self.parent.append(nid)
        self.node_of[t] = nid
        self.members[nid] = [nid]
        if isinstance(t, TApp):
            for a in arg_ids:
                self.use.setdefault(self.find(a), []).append(nid)
            key = (t.fn, tuple(self.find(a) for a in arg_ids))
            other = self.sig.get(key)
            if other is not None:
                self.pending.append((nid, other))
                self.propagate()
            else:
                self.sig[key] = nid
        return nid

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def merge(self, a: int, b: int) -> None:
        self.pending.append((a, b))
        self.propagate()

    def propagate(self) -> None:
        while self.pending and not self.conflict:
            if self.budget:
                self.budget.check()
            a, b = self.pending.pop()
            ra, rb = self.find(a), self.find(b)
            if ra == rb:
                continue
            if len(self.members[ra]) < len(self.members[rb]):
                ra, rb = rb, ra
            if self._clash(ra, rb):
                self.conflict = True
                return
            inj: list[tuple[int, int]] = []
            heads_a = self._ctor_terms(ra)
            heads_b = self._ctor_terms(rb)
            for ta in heads_a:
                for tb in heads_b:
                    if ta.fn == tb.fn and len(ta.args) == len(tb.args):
                        for x, y in zip(ta.args, tb.args):
                            inj.append((self.node_of[x], self.node_of[y]))
            self.parent[rb] = ra
            self.members[ra].extend(self.members[rb])
            del self.members[rb]
            self.pending.extend(inj)
            for user in self.use.pop(rb, []):
                tu = self.terms[user]
                key = (tu.fn, tuple(self.find(self.node_of[x]) for x in tu.args))
                other = self.sig.get(key)
                if other is not None and self.find(other) != self.find(user):
                    self.pending.append((user, other))
                else:
                    self.sig[key] = user
                self.use.setdefault(ra, []).append(user)
        if not self.conflict:
            for a, b in self.diseqs:
                if self.find(a) == self.find(b):
                    self.conflict = True
                    return

    def _ctor_terms(self, rep: int) -> list[TApp]:
        out = []
        for n in self.members[rep]:
            t = self.terms[n]
            if isinstance(t, TApp) and self.theory.is_constructor(t.fn) and t.args:
                out.append(t)
        return out

    def _clash(self, ra: int, rb: int) -> bool:
        ca, cb = self._class_tag(ra), self._class_tag(rb)
        return ca is not None and cb is not None and ca != cb

    def _class_tag(self, r: int):
        """A representative rigid shape: constant value, location name, or
        constructor head (nullary constructors count as constants)."""
        for n in self.members[r]:
            t = self.terms[n]
            if isinstance(t, TConst):
                return ("const", type(t.value).__name__, t.value)
            if isinstance(t, TLoc):
                return ("loc", t.name)
            if isinstance(t, TApp) and self.theory.is_constructor(t.fn):
                return ("ctor", t.fn)
        return None

    def assert_diseq(self, a: int, b: int) -> None:
        self.diseqs.append((a, b))
        if self.find(a) == self.find(b):
            self.conflict = True

    def rep_term(self, t: Term) -> Term:
        nid = self.node_of.get(t)
        if nid is None:
            return t
        return self.terms[self.members[self.find(nid)][0]]

    def same(self, a: Term, b: Term) -> bool:
        na, nb = self.node_of.get(a), self.node_of.get(b)
        if na is None or nb is None:
            return a == b
        return self.find(na) == self.find(nb)


# ---------------------------------------------------------------------------
# Linear integer arithmetic (Fourier-Motzkin over Fractions)


class LIA:
    def __init__(self):
        self.rows: list[tuple[dict[int, Fraction], Fraction, str]] = []

    def add(self, coeffs: dict[int, Fraction], const: Fraction, rel: str) -> None:
        self.rows.append(({k: v for k, v in coeffs.items() if v != 0}, const, rel))

    def copy(self) -> "LIA":
        out = LIA()
        out.rows = list(self.rows)
        return out

    def feasible(self, budget: Optional[Budget] = None) -> bool:
        rows = [(dict(c), k, r) for c, k, r in self.rows]
        changed = True
        while changed:
            changed = False
            for i, (c, k, r) in enumerate(rows):
                if budget:
                    budget.check()
                if r != "=" or not c:
                    continue
                var = next(iter(c))
                coef = c[var]
                rest = {v: x for v, x in c.items() if v != var}
                rows.pop(i)
                nrows = []
                for c2, k2, r2 in rows:
                    c2 = dict(c2)
                    if var in c2:
                        f = c2.pop(var)
                        for v, x in rest.items():
                            c2[v] = c2.get(v, Fraction(0)) - f * x / coef
                        k2 = k2 - f * k / coef
                    nrows.append(({v: x for v, x in c2.items() if x != 0}, k2, r2))
                rows = nrows
                changed = True
                break
        ineqs: list[tuple[dict[int, Fraction], Fraction]] = []
        for c, k, r in rows:
            if not c:
                if r == "=" and k != 0:
                    return False
                if r == "<=" and k < 0:
                    return False
                continue
            if r == "=":
                ineqs.append((dict(c), k))
                ineqs.append(({v: -x for v, x in c.items()}, -k))
            else:
                ineqs.append((dict(c), k))
        while True:
            if budget:
                budget.check()
            support = sorted({v for c, _ in ineqs for v in c})
            if not support:
                break
            best_v, best_cost = None, None
            for v in support:
                ups = sum(1 for c, _ in ineqs if c.get(v, Fraction(0)) > 0)
                downs = sum(1 for c, _ in ineqs if c.get(v, Fraction(0)) < 0)
                cost = ups * downs
                if best_cost is None or cost < best_cost:
                    best_v, best_cost = v, cost
            v = best_v
            ups = [(c, k) for c, k in ineqs if c.get(v, Fraction(0)) > 0]
            downs = [(c, k) for c, k in ineqs if c.get(v, Fraction(0)) < 0]
            rest = [(c, k) for c, k in ineqs if c.get(v, Fraction(0)) == 0]
            if len(ups) * len(downs) > 4000:
                return True  # blow-up guard: claim feasible (sound for validity)
            for cu, ku in ups:
                for cd, kd in downs:
                    a, b = cu[v], -cd[v]
                    nc: dict[int, Fraction] = {}
                    for vv, x in cu.items():
                        if vv != v:
                            nc[vv] = nc.get(vv, Fraction(0)) + x * b
                    for vv, x in cd.items():
                        if vv != v:
                            nc[vv] = nc.get(vv, Fraction(0)) + x * a
                    nk = ku * b + kd * a
                    nc = {vv: x for vv, x in nc.items() if x != 0}
                    if not nc:
                        if nk < 0:
                            return False
                    else:
                        rest.append((nc, nk))
            ineqs = rest
        return True


# ---------------------------------------------------------------------------
# Theory consistency of a literal conjunction


def _linearize(t: Term, sorts: Sorts, opaque: dict[Term, int], canon) -> Optional[tuple[dict[int, Fraction], Fraction]]:
    if isinstance(t, TConst):
        if isinstance(t.value, bool):
            return None
        if isinstance(t.value, int):
            return {}, Fraction(t.value)
        return None
    if isinstance(t, TApp) and t.fn in ARITH_FNS:
        l = _linearize(t.args[0], sorts, opaque, canon)
        r = _linearize(t.args[1], sorts, opaque, canon)
        if l is None or r is None:
            return None
        (lc, lk), (rc, rk) = l, r
        if t.fn == "+":
            out = dict(lc)
            for v, x in rc.items():
                out[v] = out.get(v, Fraction(0)) + x
            return out, lk + rk
        if t.fn == "-":
            out = dict(lc)
            for v, x in rc.items():
                out[v] = out.get(v, Fraction(0)) - x
            return out, lk - rk
        if not lc:
            return {v: x * lk for v, x in rc.items()}, rk * lk
        if not rc:
            return {v: x * rk for v, x in lc.items()}, lk * rk
        return None
    if sorts.of(t) == INT:
        key = canon(t)
        if isinstance(key, TConst) and isinstance(key.value, int):
            return {}, Fraction(key.value)
        if key not in opaque:
            opaque[key] = len(opaque)
        return {opaque[key]: Fraction(1)}, Fraction(0)
    return None


def theory_check(
    literals: list[tuple[Formula, bool]],
    theory: Theory,
    sorts: Sorts,
    budget: Optional[Budget] = None,
) -> bool:
    work = list(literals)
    for _round in range(4):
        cc = CC(theory, budget)
        t_true = cc.add(TConst(True))
        t_false = cc.add(TConst(False))
        cc.assert_diseq(t_true, t_false)
        for loc in theory.locations:
            cc.add(TLoc(loc))
        for atom, val in work:
            if budget:
                budget.check()
            if isinstance(atom, Eq):
                a, b = cc.add(atom.lhs), cc.add(atom.rhs)
                if val:
                    cc.merge(a, b)
                else:
                    cc.assert_diseq(a, b)
                    # two-valued sort: x != true forces x = false
                    for side, other in ((atom.lhs, atom.rhs), (atom.rhs, atom.lhs)):
                        if isinstance(side, TConst) and isinstance(side.value, bool):
                            flipped = cc.add(TConst(not side.value))
                            cc.merge(cc.add(other), flipped)
            elif isinstance(atom, QualApp):
                if atom.name in CMP_FNS:
                    continue
                node = cc.add(TApp(atom.name, atom.args))
                cc.merge(node, t_true if val else t_false)
            if cc.conflict:
                return False
        if cc.conflict:
            return False

        lia = LIA()
        opaque: dict[Term, int] = {}
        diseqs: list[tuple[dict[int, Fraction], Fraction]] = []

        def lin(t: Term):
            return _linearize(t, sorts, opaque, cc.rep_term)

        for atom, val in work:
            if budget:
                budget.check()
            if isinstance(atom, QualApp) and atom.name in CMP_FNS:
                l, r = lin(atom.args[0]), lin(atom.args[1])
                if l is None or r is None:
                    continue
                (lc, lk), (rc, rk) = l, r
                name = atom.name if val else {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}[atom.name]
                coeffs = dict(lc)
                for v, x in rc.items():
                    coeffs[v] = coeffs.get(v, Fraction(0)) - x
                const = rk - lk
                if name == "<=":
                    lia.add(coeffs, const, "<=")
                elif name == "<":
                    lia.add(coeffs, const - 1, "<=")
                elif name == ">=":
                    lia.add({v: -x for v, x in coeffs.items()}, -const, "<=")
                elif name == ">":
                    lia.add({v: -x for v, x in coeffs.items()}, -const - 1, "<=")
            elif isinstance(atom, Eq) and (sorts.of(atom.lhs) == INT or sorts.of(atom.rhs) == INT):
                l, r = lin(atom.lhs), lin(atom.rhs)
                if l is None or r is None:
                    continue
                (lc, lk), (rc, rk) = l, r
                coeffs = dict(lc)
                for v, x in rc.items():
                    coeffs[v] = coeffs.get(v, Fraction(0)) - x
                const = rk - lk
                if val:
                    lia.add(coeffs, const, "=")
                else:
                    if coeffs:
                        diseqs.append((coeffs, const))
                    elif const == 0:
                        return False
        if not lia.feasible(budget):
            return False
        if not _diseq_split(lia, diseqs, budget):
            return False

        merged = _propagate_equalities(cc, lia, opaque, budget)
        if not merged:
            return True
        for a, b in merged:
            work = work + [(Eq(a, b), True)]
    return True


def _diseq_split(lia: LIA, diseqs, budget) -> bool:
    """Integer disequalities against the constraint rows. Each diseq is first
    checked for entailed equality (both strict sides infeasible -> conflict);
    when exactly one side is feasible that side is committed (it is entailed
    by the diseq). Only genuinely ambiguous ones get a joint case split."""
    if not diseqs:
        return True
    rows = list(lia.rows)
    ambiguous: list[tuple[dict, object]] = []
    changed = True
    pending = list(diseqs)
    while changed:
        changed = False
        rest = []
        for coeffs, const in pending:
            if budget:
                budget.check()
            lt = LIA()
            lt.rows = rows + [(dict(coeffs), const - 1, "<=")]
            lt_ok = lt.feasible(budget)
            gt = LIA()
            gt.rows = rows + [({v: -x for v, x in coeffs.items()}, -const - 1, "<=")]
            gt_ok = gt.feasible(budget)
            if not lt_ok and not gt_ok:
                return False
            if lt_ok and gt_ok:
                rest.append((coeffs, const))
            elif lt_ok:
                rows.append((dict(coeffs), const - 1, "<="))
                changed = True
            else:
                rows.append(({v: -x for v, x in coeffs.items()}, -const - 1, "<="))
                changed = True
        pending = rest
    ambiguous = pending
    if len(ambiguous) > 6:
        return True

    def rec(i: int, rr) -> bool:
        if budget:
            budget.check()
        if i == len(ambiguous):
            probe = LIA()
            probe.rows = rr
            return probe.feasible(budget)
        coeffs, const = ambiguous[i]
        if rec(i + 1, rr + [(dict(coeffs), const - 1, "<=")]):
            return True
        return rec(i + 1, rr + [({v: -x for v, x in coeffs.items()}, -const - 1, "<=")])

    return rec(0, rows)


def _propagate_equalities(cc: CC, lia: LIA, opaque: dict[Term, int], budget) -> list[tuple[Term, Term]]:
    """Arithmetic-entailed equalities between opaque int atoms that feed
    uninterpreted functions (only those can trigger new congruences)."""
    relevant: list[tuple[int, Term]] = []
    for t, i in opaque.items():
        nid = cc.node_of.get(t)
        if nid is not None and cc.use.get(cc.find(nid)):
            relevant.append((i, t))
        if len(relevant) >= 10:
            break
    out: list[tuple[Term, Term]] = []
    for (ia, ta), (ib, tb) in itertools.combinations(relevant, 2):
        if cc.same(ta, tb):
            continue
        lt = lia.copy()
        lt.add({ia: Fraction(1), ib: Fraction(-1)}, Fraction(-1), "<=")
        if lt.feasible(budget):
            continue
        gt = lia.copy()
        gt.add({ia: Fraction(-1), ib: Fraction(1)}, Fraction(-1), "<=")
        if gt.feasible(budget):
            continue
        out.append((ta, tb))
    return out


# ---------------------------------------------------------------------------
# Grounding: skolemization, rules, e-matching instantiation


_skolem_counter = 0


def _fresh_skolem(stem: str) -> str:
    global _skolem_counter
    _skolem_counter += 1
    return f"{stem}!{_skolem_counter}"


@dataclass
class Rule:
    vars: tuple[str, ...]
    sorts: tuple[str, ...]
    body: Formula
    guard: Formula  # atom conditioning the instances
    label: str
    triggers: list[Term] = field(default_factory=list)
    enumerate_vars: tuple[str, ...] = ()
    seen: set[tuple] = field(default_factory=set)


@dataclass
class Grounding:
    skeleton: list[Formula] = field(default_factory=list)
    rules: list[Rule] = field(default_factory=list)


def _guard_atom(idx: int) -> QualApp:
    return QualApp(f"$rule{idx}", ())


def extract(f: Formula, positive: bool, sorts: Sorts, g: Grounding, label: str, theory: Theory) -> Formula:
    if isinstance(f, (FTrue, FFalse, QualApp, Eq)):
        return f
    if isinstance(f, Not):
        return Not(extract(f.body, not positive, sorts, g, label, theory))
    if isinstance(f, And):
        return And(tuple(extract(c, positive, sorts, g, label, theory) for c in f.conjuncts))
    if isinstance(f, Or):
        return Or(tuple(extract(c, positive, sorts, g, label, theory) for c in f.disjuncts))
    if isinstance(f, Implies):
        return Implies(
            extract(f.antecedent, not positive, sorts, g, label, theory),
            extract(f.consequent, positive, sorts, g, label, theory),
        )
    if isinstance(f, Forall):
        if not positive:
            sk = _fresh_skolem(f.var.replace("'", "p"))
            sorts.env[sk] = sort_of_base(f.sort)
            body = subst_formula(f.body, f.var, TVarT(sk))
            return extract(body, positive, sorts, g, label, theory)
        vars_: list[str] = []
        var_sorts: list[str] = []
        body = f
        while isinstance(body, Forall):
            vars_.append(body.var)
            var_sorts.append(sort_of_base(body.sort))
            body = body.body
        guard = _guard_atom(len(g.rules))
        rule = Rule(tuple(vars_), tuple(var_sorts), body, guard, label)
        _assign_triggers(rule)
        g.rules.append(rule)
        return guard
    raise TypeError(f"unknown formula {f!r}")


def _term_vars(t: Term) -> set[str]:
    if isinstance(t, TVarT):
        return {t.name}
    if isinstance(t, TApp):
        s: set[str] = set()
        for a in t.args:
            s |= _term_vars(a)
        return s
    return set()


def _pattern_candidates(body: Formula, rule_vars: set[str]) -> list[Term]:
    out: list[Term] = []
    seen: set[Term] = set()

    def visit_term(t: Term):
        if isinstance(t, TApp) and t.fn not in ARITH_FNS and t.fn not in CMP_FNS:
            if (_term_vars(t) & rule_vars) and t not in seen:
                seen.add(t)
                out.append(t)
                return
        if isinstance(t, TApp):
            for a in t.args:
                visit_term(a)

    def visit(g: Formula):
        if isinstance(g, QualApp):
            visit_term(TApp(g.name, g.args))
        elif isinstance(g, Eq):
            visit_term(g.lhs)
            visit_term(g.rhs)
        elif isinstance(g, Not):
            visit(g.body)
        elif isinstance(g, And):
            for c in g.conjuncts:
                visit(c)
        elif isinstance(g, Or):
            for c in g.disjuncts:
                visit(c)
        elif isinstance(g, Implies):
            visit(g.antecedent)
            visit(g.consequent)
        elif isinstance(g, Forall):
            visit(g.body)

    visit(body)
    # deeper (more discriminating) patterns first
    def depth(t: Term) -> int:
        if isinstance(t, TApp):
            return 1 + max((depth(a) for a in t.args), default=0)
        return 0

    out.sort(key=lambda t: -depth(t))
    return out


def _assign_triggers(rule: Rule) -> None:
    rule_vars = set(rule.vars)
    cands = _pattern_candidates(rule.body, rule_vars)
    chosen: list[Term] = []
    enum_vars: list[str] = []
    remaining = set(rule_vars)
    while remaining:
        best, best_gain = None, 0
        for c in cands:
            gain = len(_term_vars(c) & remaining)
            if gain > best_gain:
                best, best_gain = c, gain
        if best is None:
            enum_vars.extend(sorted(remaining))
            break
        chosen.append(best)
        remaining -= _term_vars(best)
    rule.triggers = chosen
    rule.enumerate_vars = tuple(dict.fromkeys(enum_vars))


class TermIndex:
    """All ground terms of the current clause set, indexed by head symbol,
    plus a unit-equality e-graph for congruence-aware matching."""

    def __init__(self, theory: Theory, sorts: Sorts, budget: Optional[Budget]):
        self.theory = theory
        self.sorts = sorts
        self.by_head: dict[str, list[Term]] = {}
        self.by_sort: dict[str, list[Term]] = {}
        self.all_terms: set[Term] = set()
        self.cc = CC(theory, budget)
        self.cc.add(TConst(True))
        self.cc.add(TConst(False))
        for loc in theory.locations:
            self.add_term(TLoc(loc))

    def add_term(self, t: Term) -> None:
        if t in self.all_terms:
            return
        self.all_terms.add(t)
        self.cc.add(t)
        if isinstance(t, TApp):
            self.by_head.setdefault(t.fn, []).append(t)
            for a in t.args:
                self.add_term(a)
        sort = self.sorts.of(t)
        self.by_sort.setdefault(sort, []).append(t)

    def add_rule_ground_terms(self, rule: "Rule") -> None:
        """Ground subterms of a rule body participate in matching even
        though the quantified formula itself is not asserted."""
        bound = set(rule.vars)

        def walk_term(t: Term):
            if isinstance(t, TApp):
                if not (_term_vars(t) & bound):
                    self.add_term(t)
                    return
                for a in t.args:
                    walk_term(a)

        def walk(g: Formula):
            if isinstance(g, QualApp):
                for a in g.args:
                    walk_term(a)
            elif isinstance(g, Eq):
                walk_term(g.lhs)
                walk_term(g.rhs)
            elif isinstance(g, Not):
                walk(g.body)
            elif isinstance(g, And):
                for c in g.conjuncts:
                    walk(c)
            elif isinstance(g, Or):
                for c in g.disjuncts:
                    walk(c)
            elif isinstance(g, Implies):
                walk(g.antecedent)
                walk(g.consequent)
            elif isinstance(g, Forall):
                walk(g.body)

        walk(rule.body)

    def add_formula_terms(self, f: Formula) -> None:
        if isinstance(f, QualApp):
            # predicate atoms participate in matching as terms
            if f.args and not f.name.startswith("$"):
                self.add_term(TApp(f.name, f.args))
            for a in f.args:
                self.add_term(a)
        elif isinstance(f, Eq):
            self.add_term(f.lhs)
            self.add_term(f.rhs)
        elif isinstance(f, Not):
            self.add_formula_terms(f.body)
        elif isinstance(f, And):
            for c in f.conjuncts:
                self.add_formula_terms(c)
        elif isinstance(f, Or):
            for c in f.disjuncts:
                self.add_formula_terms(c)
        elif isinstance(f, Implies):
            self.add_formula_terms(f.antecedent)
            self.add_formula_terms(f.consequent)

    def assert_unit_eq(self, a: Term, b: Term) -> None:
        self.add_term(a)
        self.add_term(b)
        if not self.cc.conflict:
            self.cc.merge(self.cc.node_of[a], self.cc.node_of[b])

    def match(self, pattern: Term, ground: Term, binding: dict[str, Term]) -> Optional[dict[str, Term]]:
        """Match pattern against a ground term modulo the unit e-graph."""
        if isinstance(pattern, TVarT):
            if pattern.name in binding:
                prev = binding[pattern.name]
                if prev == ground or self.cc.same(prev, ground):
                    return binding
                return None
            out = dict(binding)
            out[pattern.name] = ground
            return out
        if isinstance(pattern, (TConst, TLoc)):
            if pattern == ground or self.cc.same(pattern, ground):
                return binding
            return None
        if isinstance(pattern, TApp):
            candidates: list[TApp] = []
            if isinstance(ground, TApp) and ground.fn == pattern.fn:
                candidates.append(ground)
            nid = self.cc.node_of.get(ground)
            if nid is not None:
                rep = self.cc.find(nid)
                for n in self.cc.members.get(rep, []):
                    t = self.cc.terms[n]
                    if isinstance(t, TApp) and t.fn == pattern.fn and t is not ground:
                        candidates.append(t)
            for cand in candidates:
                if len(cand.args) != len(pattern.args):
                    continue
                b = binding
                ok = True
                for p, gt in zip(pattern.args, cand.args):
                    b2 = self.match(p, gt, b)
                    if b2 is None:
                        ok = False
                        break
                    b = b2
                if ok:
                    return b
            return None
        return None


# ---------------------------------------------------------------------------
# CNF + DPLL


class Clausifier:
    """Polarity-aware (Plaisted-Greenbaum) structural clausification.

    Rigid ground atoms with a syntactically known truth value (identical
    terms, distinct locations, distinct constants, distinct constructor
    heads) are asserted as units on first sight, pruning the DPLL search."""

    POS, NEG = 1, 2

    def __init__(self):
        self.atom_ids: dict[Formula, int] = {}
        self.atoms: list[Formula] = []
        self.clauses: list[tuple[int, ...]] = []
        self._aux_cache: dict[Formula, int] = {}
        self._emitted: dict[int, int] = {}
        self._aux = 0

    def atom(self, f: Formula) -> int:
        i = self.atom_ids.get(f)
        if i is None:
            i = len(self.atoms)
            self.atoms.append(f)
            self.atom_ids[f] = i
            truth = _rigid_truth(f)
            if truth is True:
                self.add_clause((i + 1,))
            elif truth is False:
                self.add_clause((-(i + 1),))
        return i

    def add_clause(self, lits: tuple[int, ...]) -> None:
        self.clauses.append(tuple(dict.fromkeys(lits)))

    def assert_formula(self, f: Formula) -> None:
        """Assert f, flattening conjunctions so atomic facts become unit
        clauses (the instantiation e-graph feeds on those)."""
        if isinstance(f, FTrue):
            return
        if isinstance(f, And):
            for c in f.conjuncts:
                self.assert_formula(c)
            return
        self.add_clause((self._lit(f, self.POS),))

    def assert_negated(self, f: Formula) -> None:
        """Assert not f with negation pushed through the outer structure."""
        if isinstance(f, FFalse):
            return
        if isinstance(f, Not):
            self.assert_formula(f.body)
            return
        if isinstance(f, Or):
            for d in f.disjuncts:
                self.assert_negated(d)
            return
        if isinstance(f, Implies):
            self.assert_formula(f.antecedent)
            self.assert_negated(f.consequent)
            return
        if isinstance(f, And):
            self.add_clause(tuple(-self._lit(c, self.NEG) for c in f.conjuncts))
            return
        self.add_clause((-self._lit(f, self.NEG),))

    def _lit(self, f: Formula, pol: int = 3) -> int:
        if isinstance(f, FTrue):
            a = self.atom(FTrue())
            self.add_clause((a + 1,))
            return a + 1
        if isinstance(f, FFalse):
            a = self.atom(FTrue())
            self.add_clause((a + 1,))
            return -(a + 1)
        if isinstance(f, (QualApp, Eq)):
            return self.atom(f) + 1
        if isinstance(f, Not):
            return -self._lit(f.body, _swap_pol(pol))
        if isinstance(f, (And, Or, Implies)):
            return self._aux_for(f, pol)
        raise TypeError(f"clausify: residual quantifier or unknown formula {f!r}")

    def _aux_for(self, f: Formula, pol: int) -> int:
        v = self._aux_cache.get(f)
        if v is None:
            self._aux += 1
            a = self.atom(QualApp(f"$aux{self._aux}", ()))
            v = a + 1
            self._aux_cache[f] = v
            self._emitted[v] = 0
        need = pol & ~self._emitted[v]
        if not need:
            return v
        self._emitted[v] |= need

        if isinstance(f, And):
            if need & self.POS:
                for c in f.conjuncts:
                    self.add_clause((-v, self._lit(c, self.POS)))
            if need & self.NEG:
                self.add_clause(tuple([v] + [-self._lit(c, self.NEG) for c in f.conjuncts]))
            return v
        if isinstance(f, Or):
            if need & self.POS:
                self.add_clause(tuple([-v] + [self._lit(c, self.POS) for c in f.disjuncts]))
            if need & self.NEG:
                for c in f.disjuncts:
                    self.add_clause((v, -self._lit(c, self.NEG)))
            return v
        a, b = f.antecedent, f.consequent
        if need & self.POS:
            self.add_clause((-v, -self._lit(a, self.NEG), self._lit(b, self.POS)))
        if need & self.NEG:
            self.add_clause((v, self._lit(a, self.POS)))
            self.add_clause((v, -self._lit(b, self.NEG)))
        return v


def _swap_pol(pol: int) -> int:
    out = 0
    if pol & Clausifier.POS:
        out |= Clausifier.NEG
    if pol & Clausifier.NEG:
        out |= Clausifier.POS
    return out


_RIGID_HEADS = ("nil", "cons", "pair", "Inl", "Inr", "errv", "unitv", "box", "boxb")


def _rigid_truth(f: Formula):
    """Syntactic truth value of a ground atom, when rigidity decides it."""
    if not isinstance(f, Eq):
        return None
    a, b = f.lhs, f.rhs
    if a == b:
        return True
    if isinstance(a, TLoc) and isinstance(b, TLoc):
        return a.name == b.name
    if isinstance(a, TConst) and isinstance(b, TConst):
        va, vb = a.value, b.value
        if isinstance(va, bool) != isinstance(vb, bool):
            return False
        return va == vb
    heads = []
    for t in (a, b):
        if isinstance(t, TApp) and t.fn in _RIGID_HEADS:
            heads.append(t.fn)
        else:
            return None
    if heads[0] != heads[1]:
        return False
    return None


class DPLL:
    def __init__(self, n_atoms: int, clauses: list[tuple[int, ...]], budget: Optional[Budget], atoms=None):
        self.n = n_atoms
        self.clauses = list(clauses)
        self.budget = budget
        self._eq_vars: set[int] = set()
        if atoms:
            for i, a in enumerate(atoms):
                if isinstance(a, Eq) or (isinstance(a, QualApp) and a.name in CMP_FNS):
                    self._eq_vars.add(i + 1)

    def eq_atom(self, var: int) -> bool:
        return var in self._eq_vars

    def root_units(self) -> Optional[set[int]]:
        """Literals forced by unit propagation alone (decision level 0);
        None when propositionally unsat at the root."""
        assign: dict[int, bool] = {}

        def value(lit: int):
            v = assign.get(abs(lit))
            if v is None:
                return None
            return v if lit > 0 else not v

        changed = True
        while changed:
            changed = False
            for cl in self.clauses:
                unassigned = None
                n_un = 0
                sat = False
                for lit in cl:
                    v = value(lit)
                    if v is True:
                        sat = True
                        break
                    if v is None:
                        unassigned = lit
                        n_un += 1
                if sat:
                    continue
                if n_un == 0:
                    return None
                if n_un == 1:
                    assign[abs(unassigned)] = unassigned > 0
                    changed = True
        return {(v if val else -v) for v, val in assign.items()}

    def solve(self, theory_ok) -> Optional[list[int]]:
        """Return a theory-consistent model as a list of signed literals, or
        None (unsat). `theory_ok(model)` may veto and supply a blocking
        clause."""
        checks = 0
        while True:
            model = self._sat()
            if model is None:
                return None
            ok, blocking = theory_ok(model)
            if ok:
                return model
            checks += 1
            if checks > 4000:
                raise SolveTimeout()
            self.clauses.append(blocking)

    def _sat(self) -> Optional[list[int]]:
        """Two-watched-literal DPLL with chronological backtracking."""
        clauses = [list(c) for c in self.clauses]
        assign: dict[int, bool] = {}
        trail: list[tuple[int, int]] = []  # (lit, kind: 0 prop / 1 decision / 2 flipped)
        watch: dict[int, list[int]] = {}

        def value(lit: int) -> Optional[bool]:
            v = assign.get(abs(lit))
            if v is None:
                return None
            return v if lit > 0 else not v

        units: list[int] = []
        for ci, cl in enumerate(clauses):
            if not cl:
                return None
            if len(cl) == 1:
                units.append(cl[0])
                continue
            watch.setdefault(cl[0], []).append(ci)
            watch.setdefault(cl[1], []).append(ci)

        def enqueue(lit: int, kind: int = 0) -> bool:
            v = value(lit)
            if v is True:
                return True
            if v is False:
                return False
            assign[abs(lit)] = lit > 0
            trail.append((lit, kind))
            queue.append(lit)
            return True

        steps = 0

        def propagate() -> bool:
            nonlocal steps
            while queue:
                steps += 1
                if self.budget and steps % 256 == 0:
                    self.budget.check()
                lit = queue.pop()
                falsified = -lit
                watching = watch.get(falsified, [])
                i = 0
                while i < len(watching):
                    ci = watching[i]
                    cl = clauses[ci]
                    # ensure falsified is at position 1
                    if cl[0] == falsified:
                        cl[0], cl[1] = cl[1], cl[0]
                    if value(cl[0]) is True:
                        i += 1
                        continue
                    moved = False
                    for k in range(2, len(cl)):
                        if value(cl[k]) is not False:
                            cl[1], cl[k] = cl[k], cl[1]
                            watch.setdefault(cl[1], []).append(ci)
                            watching[i] = watching[-1]
                            watching.pop()
                            moved = True
                            break
                    if moved:
                        continue
                    # unit or conflict on cl[0]
                    if not enqueue(cl[0]):
                        return False
                    i += 1
            return True

        queue: list[int] = []
        for u in units:
            if not enqueue(u):
                return None
        if not propagate():
            # top-level conflict among units
            return None

        freq: dict[int, int] = {}
        for cl in clauses:
            for lit in cl:
                freq[abs(lit)] = freq.get(abs(lit), 0) + 1
        order = sorted(freq, key=lambda v: -freq[v])

        def backtrack() -> Optional[int]:
            queue.clear()
            while trail:
                lit, kind = trail.pop()
                del assign[abs(lit)]
                if kind == 1:  # decision not yet flipped
                    return lit
            return None

        while True:
            if self.budget:
                self.budget.check()
            pick = None
            for v in order:
                if v not in assign:
                    pick = v
                    break
            if pick is None:
                return [(v if val else -v) for v, val in assign.items()]
            # equalities and comparisons default to false: the intended
            # models keep unrelated terms distinct
            lit = -pick if self.eq_atom(pick) else pick
            enqueue(lit, 1)
            while not propagate():
                flip = backtrack()
                if flip is None:
                    return None
                enqueue(-flip, 2)


# ---------------------------------------------------------------------------
# Main entry


@dataclass
class SolveResult:
    status: str  # "valid" | "invalid" | "unknown" | "timeout"
    model_sketch: str = ""
    reason: str = ""


def solve_validity(
    theory: Theory,
    hypothesis: Formula,
    goal: Formula,
    var_sorts: dict[str, str],
    timeout: float = 10.0,
    max_rounds: int = 5,
    max_instances: int = 12000,
) -> SolveResult:
    """Decide `theory, hypothesis |= goal` by refuting hypothesis /\\ not goal."""
    if isinstance(goal, FTrue):
        return SolveResult("valid")
    budget = Budget(timeout)
    try:
        hypothesis = normalize_formula(hypothesis)
        goal = normalize_formula(goal)
        sorts = Sorts(theory, var_sorts)
        sorts.learn(hypothesis)
        sorts.learn(goal)

        grounding = Grounding()
        parts: list[Formula] = []
        for label, ax in theory.axioms:
            parts.append(extract(normalize_formula(ax), True, sorts, grounding, label, theory))
        parts.append(extract(hypothesis, True, sorts, grounding, "hyp", theory))
        goal_residual = extract(goal, False, sorts, grounding, "goal", theory)

        cl = Clausifier()
        index = TermIndex(theory, sorts, budget)
        for p in parts:
            cl.assert_formula(p)
            index.add_formula_terms(p)
        cl.assert_negated(goal_residual)
        index.add_formula_terms(goal_residual)
        for rule in grounding.rules:
            if rule.label in ("hyp", "goal"):
                index.add_rule_ground_terms(rule)

        saturated = False
        total_instances = 0
        for _round in range(max_rounds):
            budget.check()
            if not _seed_units(cl, index, budget):
                return SolveResult("valid")
            new_instances = _instantiate_all(grounding, index, sorts, cl, theory, budget, max_instances - total_instances)
            total_instances += new_instances
            if new_instances == 0:
                saturated = True
                break
            if total_instances >= max_instances:
                break

        # solve
        theory_atoms = {}
        for i, a in enumerate(cl.atoms):
            if isinstance(a, Eq) or (isinstance(a, QualApp) and not a.name.startswith("$")):
                theory_atoms[i] = a

        dpll = DPLL(len(cl.atoms), cl.clauses, budget, cl.atoms)
        roots = dpll.root_units()
        if roots is None:
            return SolveResult("valid")
        root_set = roots

        def theory_ok(model: list[int]):
            fixed, decided = [], []
            for lit in model:
                var = abs(lit) - 1
                atom = theory_atoms.get(var)
                if atom is None:
                    continue
                if lit in root_set:
                    fixed.append((atom, lit > 0))
                else:
                    decided.append((lit, atom, lit > 0))
            lits = fixed + [(a, v) for _, a, v in decided]
            if theory_check(lits, theory, sorts, budget):
                return True, ()
            core = _minimize_core(fixed, decided, theory, sorts, budget)
            return False, tuple(-l for l in core)

        model = dpll.solve(theory_ok)
        if model is None:
            return SolveResult("valid")
        sketch = _model_sketch(model, cl)
        if saturated:
            return SolveResult("invalid", model_sketch=sketch)
        return SolveResult(
            "unknown",
            model_sketch=sketch,
            reason="instantiation budget exhausted; candidate model may be spurious",
        )
    except SolveTimeout:
        return SolveResult("timeout", reason=f"budget of {timeout}s exceeded")


def _seed_units(cl: Clausifier, index: TermIndex, budget=None) -> bool:
    """Feed every unit-propagation-forced positive equality into the
    matching e-graph. False when the clause set is already unsat."""
    probe = DPLL(len(cl.atoms), cl.clauses, budget)
    roots = probe.root_units()
    if roots is None:
        return False
    for lit in sorted(roots):
        if lit > 0:
            atom = cl.atoms[lit - 1]
            if isinstance(atom, Eq):
                index.assert_unit_eq(atom.lhs, atom.rhs)
    return True


def _instantiate_all(
    grounding: Grounding,
    index: TermIndex,
    sorts: Sorts,
    cl: Clausifier,
    theory: Theory,
    budget: Budget,
    remaining: int,
) -> int:
    added = 0
    for rule in grounding.rules:
        budget.check()
        if added >= remaining:
            break
        for binding in _rule_bindings(rule, index, budget):
            key = tuple(sorted((v, repr(t)) for v, t in binding.items()))
            if key in rule.seen:
                continue
            rule.seen.add(key)
            inst = rule.body
            for v, t in binding.items():
                inst = subst_formula(inst, v, t)
            inst = normalize_formula(inst)
            guard_lit = cl._lit(rule.guard)
            body_lit = cl._lit(inst)
            cl.add_clause((-guard_lit, body_lit))
            index.add_formula_terms(inst)
            added += 1
            if added >= remaining or len(rule.seen) > 2500:
                break
    return added


def _rule_bindings(rule: Rule, index: TermIndex, budget: Budget):
    """Yield complete bindings for the rule's variables: e-matching for
    trigger-covered vars, sort enumeration for the rest."""
    partials: list[dict[str, Term]] = [{}]
    for pattern in rule.triggers:
        budget.check()
        new_partials: list[dict[str, Term]] = []
        candidates = index.by_head.get(pattern.fn, []) if isinstance(pattern, TApp) else []
        for b in partials:
            for ground in candidates:
                b2 = index.match(pattern, ground, b)
                if b2 is not None:
                    new_partials.append(b2)
        partials = new_partials
        if len(partials) > 3000:
            partials = partials[:3000]
        if not partials:
            return
    # enumeration for the remaining vars
    enum_domains: list[list[Term]] = []
    for v in rule.enumerate_vars:
        sort = rule.sorts[rule.vars.index(v)]
        domain = list(dict.fromkeys(index.by_sort.get(sort, [])))
        if sort == LOC:
            domain = [TLoc(l) for l in index.theory.locations] + [t for t in domain if not isinstance(t, TLoc)]
        if not domain:
            return
        enum_domains.append(domain[:24])
    for b in partials:
        if not rule.enumerate_vars:
            if all(v in b for v in rule.vars):
                yield b
            continue
        for combo in itertools.product(*enum_domains):
            b2 = dict(b)
            for v, t in zip(rule.enumerate_vars, combo):
                b2[v] = t
            if all(v in b2 for v in rule.vars):
                yield b2


def _minimize_core(fixed, decided, theory, sorts, budget) -> list[int]:
    """Greedy-minimize the decided part of a theory conflict; the root-level
    fixed literals stay as context and never enter the blocking clause."""
    core = list(decided)
    if len(core) > 250:
        return [lit for lit, _, _ in core]
    i = len(core) - 1
    while i >= 0:
        trial = fixed + [(a, v) for _, a, v in core[:i] + core[i + 1 :]]
        try:
            if not theory_check(trial, theory, sorts, budget):
                core.pop(i)
        except SolveTimeout:
            break
        i -= 1
    return [lit for lit, _, _ in core]


def _model_sketch(model: list[int], cl: Clausifier, limit: int = 12) -> str:
    shown = []
    for lit in model:
        atom = cl.atoms[abs(lit) - 1]
        if isinstance(atom, QualApp) and atom.name.startswith("$"):
            continue
        if isinstance(atom, FTrue):
            continue
        text = show_formula(atom)
        shown.append(text if lit > 0 else f"not ({text})")
        if len(shown) >= limit:
            shown.append("...")
            break
    return "; ".join(shown)
