"""Pretty printer for surface programs; parse . print . parse is a fixpoint."""

from __future__ import annotations

from ..core_ast import (
    Arrow,
    BaseRef,
    BaseType,
    Comp,
    FTrue,
    Named,
    RefinedType,
    TResult,
    TRef,
    TyVar,
    TypeScheme,
    show_formula,
    show_term,
    TInt,
    TBool,
    TUnit,
    TChar,
    THeap,
    TExc,
)
from .ast import (
    CtorDecl,
    DAxiom,
    DInclude,
    DLet,
    DQualifierDef,
    DQualifierSig,
    DRef,
    DSpec,
    DType,
    SApp,
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
)


def print_type(t: BaseType) -> str:
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
    if isinstance(t, TResult):
        return f"{print_type_atom(t.inner)} result"
    if isinstance(t, TRef):
        return f"{print_type_atom(t.inner)} ref"
    if isinstance(t, Named):
        if t.name == "list" and len(t.args) == 1:
            return f"{print_type_atom(t.args[0])} list"
        if t.name == "pair" and len(t.args) == 2:
            return f"({print_type(t.args[0])} * {print_type(t.args[1])})"
        if t.args:
            return f"{t.name} ({', '.join(print_type(a) for a in t.args)})"
        return t.name
    return repr(t)


def print_type_atom(t: BaseType) -> str:
    s = print_type(t)
    if " " in s and not s.startswith("("):
        return f"({s})"
    return s


def print_rtype(t: RefinedType) -> str:
    if isinstance(t, BaseRef):
        if isinstance(t.refinement, FTrue):
            return print_type(t.base)
        return f"{{{t.binder} : {print_type(t.base)} | {show_formula(t.refinement)}}}"
    if isinstance(t, Comp):
        return (
            f"PE^{t.effect} {{{show_formula(t.pre)}}} {t.binder} : {print_type(t.result)} "
            f"{{{show_formula(t.post)}}}"
        )
    if isinstance(t, Arrow):
        return f"({t.param} : {print_rtype(t.domain)}) -> {print_rtype(t.codomain)}"
    return repr(t)


def print_scheme(s: TypeScheme) -> str:
    body = print_rtype(s.body)
    if s.quantified:
        return f"forall {', '.join(s.quantified)}. {body}"
    return body


def _char(c: str) -> str:
    mapping = {"\n": "\\n", "\t": "\\t", "\\": "\\\\", "'": "\\'", " ": "\\s", "\0": "\\0"}
    return f"'{mapping.get(c, c)}'"


def print_expr(e, prec: int = 0) -> str:
    # precedence levels: 0 choice, 1 bind, 2 assign, 3 cmp, 4 cons, 5 add, 6 app, 7 atom
    def paren(level: int, s: str) -> str:
        return f"({s})" if prec > level else s

    if isinstance(e, SChoice):
        return paren(0, f"{print_expr(e.left, 1)} <|> {print_expr(e.right, 0)}")
    if isinstance(e, SBind):
        return paren(1, f"{print_expr(e.left, 2)} >>= {print_expr(e.right, 1)}")
    if isinstance(e, SAssign):
        return paren(2, f"{e.name} := {print_expr(e.value, 2)}")
    if isinstance(e, SBinOp):
        if e.op == "::":
            return paren(4, f"{print_expr(e.lhs, 5)} :: {print_expr(e.rhs, 4)}")
        if e.op in ("+", "-"):
            return paren(5, f"{print_expr(e.lhs, 5)} {e.op} {print_expr(e.rhs, 6)}")
        return paren(3, f"{print_expr(e.lhs, 4)} {e.op} {print_expr(e.rhs, 4)}")
    if isinstance(e, SApp):
        fn = e.fn
        if isinstance(fn, SVar) and fn.name.startswith("@record:"):
            return f"{fn.name[8:]} {{ {'; '.join('f' + str(i) + ' = ' + print_expr(a, 3) for i, a in enumerate(e.args))} }}"
        parts = [print_expr(fn, 7)] + [print_expr(a, 7) for a in e.args]
        return paren(6, " ".join(parts))
    if isinstance(e, SVar):
        if e.name.startswith("@ctor:"):
            return e.name[6:]
        if e.name.startswith("@record:"):
            return e.name[8:]
        return e.name
    if isinstance(e, SInt):
        return str(e.value)
    if isinstance(e, SBool):
        return "true" if e.value else "false"
    if isinstance(e, SChar):
        return _char(e.value)
    if isinstance(e, SString):
        escaped = e.value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    if isinstance(e, SUnit):
        return "()"
    if isinstance(e, SList):
        return "[" + "; ".join(print_expr(i, 3) for i in e.items) + "]"
    if isinstance(e, SDeref):
        return f"!{e.name}"
    if isinstance(e, SReturn):
        return paren(6, f"return {print_expr(e.value, 7)}")
    if isinstance(e, SFail):
        if e.message is not None:
            return paren(6, f'fail "{e.message}"')
        return "fail"
    if isinstance(e, SEps):
        return "eps"
    if isinstance(e, SBot):
        return "bot"
    if isinstance(e, SCharLit):
        return paren(6, f"char {print_expr(e.arg, 7)}")
    if isinstance(e, SLambda):
        params = " ".join(
            f"({n} : {print_rtype(t)})" if t is not None else n for n, t in e.params
        )
        return paren(0, f"fun {params} -> {print_expr(e.body, 0)}")
    if isinstance(e, SFix):
        return paren(0, f"fix ({e.var} : {print_scheme(e.annot)}) -> {print_expr(e.body, 0)}")
    if isinstance(e, SIf):
        return paren(0, f"if {print_expr(e.cond, 0)} then {print_expr(e.then, 0)} else {print_expr(e.orelse, 0)}")
    if isinstance(e, SLet):
        return paren(0, f"let {e.var} = {print_expr(e.value, 0)} in {print_expr(e.body, 0)}")
    if isinstance(e, SAscribe):
        return f"({print_expr(e.expr, 0)} : {print_scheme(e.annot)})"
    if isinstance(e, SDo):
        stmts = []
        for s in e.stmts:
            if isinstance(s, SDoBind):
                stmts.append(f"{s.var} <- {print_expr(s.expr, 0)}")
            elif isinstance(s, SDoLet):
                stmts.append(f"let {s.var} = {print_expr(s.expr, 0)}")
            else:
                stmts.append(print_expr(s.expr, 0))
        return "do { " + ";\n       ".join(stmts) + " }"
    if isinstance(e, SMatch):
        arms = []
        for a in e.arms:
            if a.ctor == "nil":
                pat = "[]"
            elif a.ctor == "cons":
                pat = f"({a.binders[0]} :: {a.binders[1]})"
            elif a.ctor in ("True", "False"):
                pat = a.ctor.lower()
            else:
                pat = a.ctor + (f" ({', '.join(a.binders)})" if a.binders else "")
            arms.append(f"{pat} -> {print_expr(a.body, 0)}")
        return f"match {print_expr(e.scrutinee, 0)} with " + " | ".join(arms) + " end"
    return repr(e)


def _print_pattern(p) -> str:
    kind = p[0]
    if kind == "var":
        return p[1]
    _, ctor, subs = p
    if ctor == "nil" and not subs:
        return "[]"
    if ctor == "cons" and len(subs) == 2:
        return f"({_print_pattern(subs[0])} :: {_print_pattern(subs[1])})"
    if subs:
        return f"({ctor} ({', '.join(_print_pattern(s) for s in subs)}))"
    return ctor


def print_decl(d) -> str:
    if isinstance(d, DInclude):
        return f'include "{d.path}"'
    if isinstance(d, DType):
        params = (" " + " ".join(d.params)) if d.params else ""
        ctors = []
        for c in d.ctors:
            if c.field_names:
                fields = "; ".join(
                    f"{n} : {print_rtype(f)}" for n, f in zip(c.field_names, c.fields)
                )
                ctors.append(f"{c.name} {{ {fields} }}")
            elif c.fields:
                ctors.append(f"{c.name} of " + " * ".join(print_rtype(f) for f in c.fields))
            else:
                ctors.append(c.name)
        return f"type {d.name}{params} = " + " | ".join(ctors)
    if isinstance(d, DQualifierDef):
        parts = []
        for i, c in enumerate(d.clauses):
            pats = " ".join(_print_pattern(p) for p in c.patterns)
            rhs = show_formula(c.rhs) if not hasattr(c.rhs, "fn") and not hasattr(c.rhs, "name") or True else ""
            from ..core_ast import Formula, Term

            rhs = show_formula(c.rhs) if isinstance(c.rhs, Formula) else show_term(c.rhs)
            lead = d.name + " " if i == 0 else d.name + " "
            parts.append(f"{lead}{pats} -> {rhs}")
        return "qualifier " + " | ".join(parts)
    if isinstance(d, DQualifierSig):
        return f"qualifier {d.name} : ({', '.join(print_type(p) for p in d.params)}) -> {print_type(d.result)}"
    if isinstance(d, DAxiom):
        return f"axiom {show_formula(d.formula)}"
    if isinstance(d, DRef):
        return f"let {d.name} = ref {print_expr(d.init, 7)}"
    if isinstance(d, DSpec):
        kw = "val" if d.primitive else "spec"
        return f"{kw} {d.name} : {print_scheme(d.scheme)}"
    if isinstance(d, DLet):
        params = "".join(
            f" ({n} : {print_rtype(t)})" if t is not None else f" {n}" for n, t in d.params
        )
        return f"let {d.name}{params} =\n  {print_expr(d.body, 0)}"
    return repr(d)


def pretty_print(prog: SourceProgram) -> str:
    return "\n\n".join(print_decl(d) for d in prog.decls) + "\n"
