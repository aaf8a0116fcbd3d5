from .theory import Theory, build_theory, qualifier_to_axioms
from .epr import epr_check, epr_check_vc, EprViolation
from .solve import solve_validity, SolveResult

__all__ = [
    "Theory",
    "build_theory",
    "qualifier_to_axioms",
    "epr_check",
    "epr_check_vc",
    "EprViolation",
    "solve_validity",
    "SolveResult",
]
