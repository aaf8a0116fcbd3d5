"""The effect lattice and the specification-monad morphisms.

Effect labels are the powerset lattice over {state, exc, nondet}: pure is the
bottom, parser the top, and the three two-element combinations carry the
names stexc, stnon and excnon.
"""

from __future__ import annotations

from typing import FrozenSet, Union

_ATOMS = ("state", "exc", "nondet")

_NAMES = {
    frozenset(): "pure",
    frozenset({"state"}): "state",
    frozenset({"exc"}): "exc",
    frozenset({"nondet"}): "nondet",
    frozenset({"state", "exc"}): "stexc",
    frozenset({"state", "nondet"}): "stnon",
    frozenset({"exc", "nondet"}): "excnon",
    frozenset({"state", "exc", "nondet"}): "parser",
}
_BY_NAME = {v: k for k, v in _NAMES.items()}


class EffectLabel:
    """An element of the eight-point effect lattice. Instances are interned;
    compare with `is` or `==` freely."""

    __slots__ = ("atoms",)
    _interned: dict[FrozenSet[str], "EffectLabel"] = {}

    def __new__(cls, atoms: FrozenSet[str]):
        atoms = frozenset(atoms)
        if atoms not in _NAMES:
            raise ValueError(f"not an effect label: {set(atoms)}")
        cached = cls._interned.get(atoms)
        if cached is not None:
            return cached
        self = super().__new__(cls)
        object.__setattr__(self, "atoms", atoms)
        cls._interned[atoms] = self
        return self

    @staticmethod
    def named(name: str) -> "EffectLabel":
        if name not in _BY_NAME:
            raise ValueError(f"unknown effect label '{name}'")
        return EffectLabel(_BY_NAME[name])

    @property
    def name(self) -> str:
        return _NAMES[self.atoms]

    def __repr__(self) -> str:
        return self.name

    def __str__(self) -> str:
        return self.name

    def __eq__(self, other) -> bool:
        return isinstance(other, EffectLabel) and self.atoms == other.atoms

    def __hash__(self) -> int:
        return hash(self.atoms)


PURE = EffectLabel.named("pure")
STATE = EffectLabel.named("state")
EXC = EffectLabel.named("exc")
NONDET = EffectLabel.named("nondet")
STEXC = EffectLabel.named("stexc")
STNON = EffectLabel.named("stnon")
EXCNON = EffectLabel.named("excnon")
PARSER = EffectLabel.named("parser")

ALL_EFFECTS = tuple(EffectLabel(a) for a in sorted(_NAMES, key=lambda s: (len(s), sorted(s))))


def join(a: EffectLabel, b: EffectLabel) -> EffectLabel:
    return EffectLabel(a.atoms | b.atoms)


def meet(a: EffectLabel, b: EffectLabel) -> EffectLabel:
    return EffectLabel(a.atoms & b.atoms)


def leq(a: EffectLabel, b: EffectLabel) -> bool:
    return a.atoms <= b.atoms


def effect_of(ty) -> EffectLabel:
    """The effect of a refined type; pure types count as effect pure."""
    from .core_ast import Comp

    if isinstance(ty, Comp):
        return ty.effect
    return PURE


class LiftError(Exception):
    pass


def lift_type(ty, target: EffectLabel):
    """Lift a refined type along the lattice to `target` by composing the
    edge morphisms in the canonical order state, exc, nondet.

    - adding state turns a pure refinement {nu:t | phi} into
      PE^state {true} nu : t {phi(nu) /\\ h' = h};
    - adding exc wraps the result base in `result` (exactly once) and guards
      the previous postcondition under nu = Inl(x) for a fresh payload x;
    - adding nondet changes nothing but the label.
    """
    from . import core_ast as C

    current = effect_of(ty)
    if not leq(current, target):
        raise LiftError(f"cannot lift {current} to {target} (not below in the lattice)")
    if current == target and isinstance(ty, C.Comp):
        return ty

    if isinstance(ty, C.BaseRef):
        # T_pure first: into a state-free, exception-free computation whose
        # post just transports the refinement and fixes the heap.
        post = C.conj(
            C.subst_formula(ty.refinement, ty.binder, C.TVarT("nu")),
            C.Eq(C.TVarT("h'"), C.TVarT("h")),
        )
        comp = C.Comp(PURE, C.TRUE, "nu", ty.base, post)
        return lift_type(comp, target)

    if not isinstance(ty, C.Comp):
        raise LiftError(f"only base refinements and computation types lift, got {type(ty).__name__}")

    effect = ty.effect
    pre, binder, result, post = ty.pre, ty.binder, ty.result, ty.post

    if "state" in target.atoms and "state" not in effect.atoms:
        effect = join(effect, STATE)

    if "exc" in target.atoms and "exc" not in effect.atoms:
        if isinstance(result, C.TResult):
            # already result-shaped (e.g. a previous lift); label only
            effect = join(effect, EXC)
        else:
            # deterministic payload name keeps lifting functorial on the nose
            x = "x!"
            while x in C.formula_free_vars(post):
                x += "!"
            guarded = C.implies(
                C.Eq(C.TVarT(binder), C.TApp("Inl", (C.TVarT(x),))),
                C.subst_formula(post, binder, C.TVarT(x)),
            )
            post = C.Forall(x, result, guarded)
            result = C.TResult(result)
            effect = join(effect, EXC)

    if "nondet" in target.atoms and "nondet" not in effect.atoms:
        effect = join(effect, NONDET)

    return C.Comp(target, pre, binder, result, post)


Liftable = Union["EffectLabel"]
