"""Morpheus: a verifying parser-combinator DSL.

Surface programs (.mor) parse into a small effectful core calculus, typecheck
against refinement/effect specifications by discharging verification
conditions to an EUFLIA solver, and run under a reference big-step
interpreter so verified specifications can also be checked empirically.
"""

__version__ = "0.1.0"
