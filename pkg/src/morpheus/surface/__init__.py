from .ast import Diagnostic, SourceProgram, SurfaceError
from .parser import parse_source, parse_spec, parse_formula
from .desugar import CoreProgram, CoreBinding, desugar, DesugarError
from .printer import pretty_print

__all__ = [
    "Diagnostic",
    "SourceProgram",
    "SurfaceError",
    "parse_source",
    "parse_spec",
    "parse_formula",
    "CoreProgram",
    "CoreBinding",
    "desugar",
    "DesugarError",
    "pretty_print",
]
