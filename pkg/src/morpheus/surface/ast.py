"""Surface syntax trees (.mor files) and their pretty printer.

Spans never participate in equality so parse/print round-trips can be
compared structurally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from ..core_ast import Formula, RefinedType, Span, TypeScheme, BaseType, NO_SPAN


@dataclass(frozen=True)
class SNode:
    span: Span = field(default=NO_SPAN, compare=False, kw_only=True)


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class SVar(SNode):
    name: str


@dataclass(frozen=True)
class SInt(SNode):
    value: int


@dataclass(frozen=True)
class SBool(SNode):
    value: bool


@dataclass(frozen=True)
class SChar(SNode):
    value: str


@dataclass(frozen=True)
class SString(SNode):
    value: str


@dataclass(frozen=True)
class SUnit(SNode):
    pass


@dataclass(frozen=True)
class SList(SNode):
    items: tuple["SExpr", ...]


@dataclass(frozen=True)
class SApp(SNode):
    fn: "SExpr"
    args: tuple["SExpr", ...]


@dataclass(frozen=True)
class SBinOp(SNode):
    op: str
    lhs: "SExpr"
    rhs: "SExpr"


@dataclass(frozen=True)
class SLambda(SNode):
    params: tuple[tuple[str, Optional[RefinedType]], ...]
    body: "SExpr"


@dataclass(frozen=True)
class SIf(SNode):
    cond: "SExpr"
    then: "SExpr"
    orelse: "SExpr"


@dataclass(frozen=True)
class SArm(SNode):
    ctor: str
    binders: tuple[str, ...]
    body: "SExpr"


@dataclass(frozen=True)
class SMatch(SNode):
    scrutinee: "SExpr"
    arms: tuple[SArm, ...]


@dataclass(frozen=True)
class SDoBind(SNode):
    var: str  # "_" when discarded
    expr: "SExpr"


@dataclass(frozen=True)
class SDoLet(SNode):
    var: str
    expr: "SExpr"


@dataclass(frozen=True)
class SDoExpr(SNode):
    expr: "SExpr"


@dataclass(frozen=True)
class SDo(SNode):
    stmts: tuple[Union[SDoBind, SDoLet, SDoExpr], ...]


@dataclass(frozen=True)
class SBind(SNode):
    left: "SExpr"
    right: "SExpr"


@dataclass(frozen=True)
class SChoice(SNode):
    left: "SExpr"
    right: "SExpr"


@dataclass(frozen=True)
class SDeref(SNode):
    name: str


@dataclass(frozen=True)
class SAssign(SNode):
    name: str
    value: "SExpr"


@dataclass(frozen=True)
class SReturn(SNode):
    value: "SExpr"


@dataclass(frozen=True)
class SFail(SNode):
    message: Optional[str]


@dataclass(frozen=True)
class SEps(SNode):
    pass


@dataclass(frozen=True)
class SBot(SNode):
    pass


@dataclass(frozen=True)
class SCharLit(SNode):
    arg: "SExpr"


@dataclass(frozen=True)
class SFix(SNode):
    var: str
    annot: TypeScheme
    body: "SExpr"


@dataclass(frozen=True)
class SAscribe(SNode):
    expr: "SExpr"
    annot: TypeScheme


@dataclass(frozen=True)
class SLet(SNode):
    var: str
    value: "SExpr"
    body: "SExpr"


SExpr = Union[
    SVar, SInt, SBool, SChar, SString, SUnit, SList, SApp, SBinOp, SLambda, SIf,
    SMatch, SDo, SBind, SChoice, SDeref, SAssign, SReturn, SFail, SEps, SBot,
    SCharLit, SFix, SAscribe, SLet,
]


# -- declarations ------------------------------------------------------------


@dataclass(frozen=True)
class CtorDecl(SNode):
    name: str
    fields: tuple[RefinedType, ...]
    field_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class DType(SNode):
    name: str
    params: tuple[str, ...]
    ctors: tuple[CtorDecl, ...]
    # refined alias: `type offside i = Tree {...refined fields...}` reuses an
    # existing constructor with refined field types
    refines: Optional[str] = None


@dataclass(frozen=True)
class DQualifierDef(SNode):
    name: str
    clauses: tuple  # tuple[QualClause-like surface]
    params: tuple[BaseType, ...] = ()
    result: Optional[BaseType] = None


@dataclass(frozen=True)
class DQualifierSig(SNode):
    name: str
    params: tuple[BaseType, ...]
    result: BaseType


@dataclass(frozen=True)
class DAxiom(SNode):
    formula: Formula


@dataclass(frozen=True)
class DRef(SNode):
    name: str
    init: SExpr


@dataclass(frozen=True)
class DSpec(SNode):
    name: str
    scheme: TypeScheme
    primitive: bool = False


@dataclass(frozen=True)
class DLet(SNode):
    name: str
    params: tuple[tuple[str, Optional[RefinedType]], ...]
    body: SExpr


@dataclass(frozen=True)
class DInclude(SNode):
    path: str


Decl = Union[DType, DQualifierDef, DQualifierSig, DAxiom, DRef, DSpec, DLet, DInclude]


@dataclass(frozen=True)
class SourceProgram:
    decls: tuple[Decl, ...]


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    span: Span
    message: str
    vc_id: Optional[str] = None

    def __str__(self) -> str:
        return f"{self.span}: {self.severity}: {self.message}"


class SurfaceError(Exception):
    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic
