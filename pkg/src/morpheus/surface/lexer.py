"""Tokenizer for .mor files. (* ... *) comments nest."""

from __future__ import annotations

from dataclasses import dataclass

from ..core_ast import Span
from .ast import Diagnostic, SurfaceError

KEYWORDS = {
    "let", "in", "type", "of", "qualifier", "axiom", "spec", "include", "ref",
    "fun", "fix", "do", "if", "then", "else", "match", "with", "end", "forall",
    "return", "fail", "eps", "bot", "char", "true", "false", "not", "PE", "val",
}

SYMBOLS = [
    "(*", "*)", "->", ">>=", "<|>", ":=", "<-", "::", "<=", ">=", "==", "!=",
    "=>", "/\\", "\\/", "{", "}", "(", ")", "[", "]", ",", ";", ":", "|",
    "=", "<", ">", "+", "-", "*", ".", "!", "^", "'",
]


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "cap" | "int" | "char" | "string" | "tyvar" | sym | kw | "eof"
    text: str
    span: Span


def _err(message: str, line: int, col: int) -> SurfaceError:
    return SurfaceError(Diagnostic("error", Span(line, col), message))


def lex(text: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def span(l, c, l2=None, c2=None):
        return Span(l, c, l2 or l, c2 or c)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("(*", i):
            depth = 1
            l0, c0 = line, col
            i += 2
            col += 2
            while i < n and depth:
                if text.startswith("(*", i):
                    depth += 1
                    i += 2
                    col += 2
                elif text.startswith("*)", i):
                    depth -= 1
                    i += 2
                    col += 2
                elif text[i] == "\n":
                    i += 1
                    line += 1
                    col = 1
                else:
                    i += 1
                    col += 1
            if depth:
                raise _err("unterminated comment", l0, c0)
            continue
        if ch == '"':
            l0, c0 = line, col
            i += 1
            col += 1
            out = []
            while i < n and text[i] != '"':
                c = text[i]
                if c == "\\" and i + 1 < n:
                    nxt = text[i + 1]
                    out.append({"n": "\n", "t": "\t", "\\": "\\", '"': '"'}.get(nxt, nxt))
                    i += 2
                    col += 2
                    continue
                if c == "\n":
                    raise _err("newline in string literal", l0, c0)
                out.append(c)
                i += 1
                col += 1
            if i >= n:
                raise _err("unterminated string literal", l0, c0)
            i += 1
            col += 1
            toks.append(Token("string", "".join(out), span(l0, c0, line, col)))
            continue
        if ch == "'":
            # char literal 'x' or '\n'; a bare quote after an identifier is
            # handled in the identifier rule (h').
            if i + 2 < n and text[i + 1] == "\\" and text[i + 3] == "'":
                mapping = {"n": "\n", "t": "\t", "\\": "\\", "'": "'", "0": "\0", "s": " "}
                c = mapping.get(text[i + 2], text[i + 2])
                toks.append(Token("char", c, span(line, col, line, col + 4)))
                i += 4
                col += 4
                continue
            if i + 2 < n and text[i + 2] == "'":
                toks.append(Token("char", text[i + 1], span(line, col, line, col + 3)))
                i += 3
                col += 3
                continue
            if i + 1 < n and (text[i + 1].isalpha() and (i + 2 >= n or not text[i + 2] == "'")):
                # type variable 'a
                j = i + 1
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                toks.append(Token("tyvar", text[i + 1 : j], span(line, col, line, col + (j - i))))
                col += j - i
                i = j
                continue
            raise _err("stray quote", line, col)
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], span(line, col, line, col + (j - i))))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_"):
                j += 1
            # trailing primes: h', I''
            while j < n and text[j] == "'":
                j += 1
            word = text[i:j]
            # dotted names (List.mem) collapse to the last component
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isalpha() and word[0].isupper():
                k = j + 1
                while k < n and (text[k].isalnum() or text[k] == "_"):
                    k += 1
                word = text[j + 1 : k]
                j = k
            kind = "kw" if word in KEYWORDS else ("cap" if word[0].isupper() else "ident")
            toks.append(Token(kind, word, span(line, col, line, col + (j - i))))
            col += j - i
            i = j
            continue
        matched = False
        for sym in SYMBOLS:
            if text.startswith(sym, i) and sym not in ("(*", "*)", "'"):
                toks.append(Token(sym, sym, span(line, col, line, col + len(sym))))
                i += len(sym)
                col += len(sym)
                matched = True
                break
        if matched:
            continue
        raise _err(f"unexpected character {ch!r}", line, col)
    toks.append(Token("eof", "", Span(line, col)))
    return toks
