"""
Tokenizer shared by the text formats (systems, automata, observers,
formulas, set literals).
"""

import re
from fractions import Fraction
from typing import Iterator, List, NamedTuple, Optional

from .errors import ParseError

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>\d+(?:/\d+)?)
  | (?P<op>->|<=|>=|[;{}()\[\].,:!&|+*@=<>-])
  | (?P<ident>[A-Za-z_~][A-Za-z0-9_'~]*)
    """,
    re.VERBOSE,
)


class Token(NamedTuple):
    kind: str  # "num", "op", "ident" or "end"
    text: str
    line: int
    column: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("num", "op", "ident"):
            tokens.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("end", "", line, pos - line_start + 1))
    return tokens


def parse_rational(text: str) -> Fraction:
    num, _, den = text.partition("/")
    if den and int(den) == 0:
        raise ValueError(f"zero denominator in {text}")
    return Fraction(int(num), int(den) if den else 1)


class TokenStream:
    """Cursor over a token list with the usual peek/expect helpers."""

    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "end":
            self.pos += 1
        return tok

    def at_end(self) -> bool:
        return self.peek().kind == "end"

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind in ("op", "ident") and tok.text == text

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text or tok.kind == "end":
            self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def ident(self, what: str = "identifier") -> Token:
        tok = self.next()
        if tok.kind != "ident":
            self.error(f"expected {what}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def rational(self) -> Fraction:
        tok = self.next()
        if tok.kind != "num":
            self.error(f"expected a rational, found {tok.text or 'end of input'!r}", tok)
        try:
            return parse_rational(tok.text)
        except ValueError as exc:
            self.error(str(exc), tok)

    def until(self, text: str) -> Iterator[Token]:
        """Yields tokens up to (and consumes) the terminator `text`."""
        while not self.accept(text):
            if self.at_end():
                self.error(f"missing {text!r}")
            yield self.next()

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.column)
