"""EPR discipline: every discharged sentence must prenex to exists*-forall*
with a quantifier-free EUFLIA body.

The formula language has no existential constructor, so existentials only
arise from universals under negative polarity. The check therefore walks the
negation-normal form and reports any existential-strength quantifier nested
under a universal-strength one.
"""

from __future__ import annotations

from dataclasses import dataclass
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
)


@dataclass(frozen=True)
class EprViolation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.message} at {self.path}"


def _check(f: Formula, positive: bool, under_universal: bool, path: str) -> Optional[EprViolation]:
    if isinstance(f, (FTrue, FFalse, QualApp, Eq)):
        return None
    if isinstance(f, Not):
        return _check(f.body, not positive, under_universal, path + "/not")
    if isinstance(f, And):
        for i, c in enumerate(f.conjuncts):
            v = _check(c, positive, under_universal, f"{path}/and[{i}]")
            if v:
                return v
        return None
    if isinstance(f, Or):
        for i, c in enumerate(f.disjuncts):
            v = _check(c, positive, under_universal, f"{path}/or[{i}]")
            if v:
                return v
        return None
    if isinstance(f, Implies):
        v = _check(f.antecedent, not positive, under_universal, path + "/lhs")
        if v:
            return v
        return _check(f.consequent, positive, under_universal, path + "/rhs")
    if isinstance(f, Forall):
        universal = positive  # a negated forall is an existential
        if not universal and under_universal:
            return EprViolation(
                path,
                f"existential quantifier over '{f.var}' nested under a universal "
                "(prenex form would be forall-exists)",
            )
        return _check(
            f.body,
            positive,
            under_universal or universal,
            f"{path}/forall {f.var}",
        )
    return EprViolation(path, f"unsupported connective {type(f).__name__}")


def epr_check(f: Formula, positive: bool = True) -> Optional[EprViolation]:
    """None when the sentence is in the exists*-forall* fragment; otherwise
    the first offending alternation. `positive=False` checks the formula as
    it would appear negated (goal position)."""
    return _check(f, positive, False, "")


def epr_check_vc(hypothesis: Formula, goal: Formula) -> Optional[EprViolation]:
    """Check validity-checking shape: hypothesis /\\ not goal must be
    exists*-forall* (hypothesis positive, goal negative)."""
    v = epr_check(hypothesis, positive=True)
    if v:
        return EprViolation("hypothesis" + v.path, v.message)
    v = epr_check(goal, positive=False)
    if v:
        return EprViolation("goal" + v.path, v.message)
    return None
