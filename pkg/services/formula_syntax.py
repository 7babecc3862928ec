"""Text syntax for formulas: `status == 0 && roundId > 0 || !(stake == msg.value)`."""

import re
from typing import List, Optional, Tuple

from core.errors import SpecMineError
from services.formula import (
    MIRRORED_OP,
    And,
    Atom,
    Bottom,
    Formula,
    Not,
    Op,
    Or,
    Top,
    FALSE,
    TRUE,
    atom,
    is_param_ref,
)


class FormulaSyntaxError(SpecMineError):
    """The formula text cannot be parsed."""

    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at offset {position} in {text!r}", stage="logic")
        self.position = position


_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<addr>0[xX][0-9a-fA-F]+)"
    r"|(?P<int>-?\d+)"
    r"|(?P<op>==|!=|<=|>=|&&|\|\||[<>=!()])"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)"
    r")"
)

_COMPARISONS = {"==", "!=", "<", "<=", ">", ">=", "="}


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = _TOKEN_RE.match(text, pos)
        if not match or match.end() == pos:
            raise FormulaSyntaxError("Unexpected character", text, pos)
        kind = match.lastgroup
        tokens.append((kind, match.group(kind), match.start(kind)))
        pos = match.end()
    return tokens


class _Parser:
    """Recursive descent over the token list; precedence ! > && > ||."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.index = 0

    def peek(self) -> Optional[Tuple[str, str, int]]:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def take(self) -> Tuple[str, str, int]:
        token = self.peek()
        if token is None:
            raise FormulaSyntaxError("Unexpected end of input", self.text, len(self.text))
        self.index += 1
        return token

    def expect(self, value: str) -> None:
        kind, text, pos = self.take()
        if text != value:
            raise FormulaSyntaxError(f"Expected {value!r}, found {text!r}", self.text, pos)

    def parse(self) -> Formula:
        if not self.tokens:
            raise FormulaSyntaxError("Empty formula", self.text, 0)
        result = self.parse_or()
        token = self.peek()
        if token is not None:
            raise FormulaSyntaxError(f"Trailing input {token[1]!r}", self.text, token[2])
        return result

    def parse_or(self) -> Formula:
        parts = [self.parse_and()]
        while self.peek() is not None and self.peek()[1] == "||":
            self.take()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def parse_and(self) -> Formula:
        parts = [self.parse_unary()]
        while self.peek() is not None and self.peek()[1] == "&&":
            self.take()
            parts.append(self.parse_unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def parse_unary(self) -> Formula:
        token = self.peek()
        if token is not None and token[1] == "!":
            self.take()
            return Not(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Formula:
        kind, text, pos = self.take()
        if text == "(":
            inner = self.parse_or()
            self.expect(")")
            return inner
        if kind == "ident" and text == "true":
            return TRUE
        if kind == "ident" and text == "false":
            return FALSE
        if kind not in ("ident", "int", "addr"):
            raise FormulaSyntaxError(f"Unexpected token {text!r}", self.text, pos)
        left = self._operand(kind, text)
        op_kind, op_text, op_pos = self.take()
        if op_text not in _COMPARISONS:
            raise FormulaSyntaxError(f"Expected comparison, found {op_text!r}", self.text, op_pos)
        right_kind, right_text, right_pos = self.take()
        if right_kind not in ("ident", "int", "addr"):
            raise FormulaSyntaxError(f"Expected operand, found {right_text!r}", self.text, right_pos)
        right = self._operand(right_kind, right_text)

        if is_param_ref(left):
            return atom(left, op_text, right)
        if is_param_ref(right):
            op = Op.EQ if op_text == "=" else Op(op_text)
            return atom(right, MIRRORED_OP[op], left)
        raise FormulaSyntaxError("Comparison between two constants", self.text, pos)

    @staticmethod
    def _operand(kind: str, text: str):
        if kind == "int":
            return int(text)
        return text


def parse_formula(text: str) -> Formula:
    """Parse formula text with C-like precedence."""
    return _Parser(text).parse()


def format_formula(formula: Formula) -> str:
    """Print a formula so that parse_formula gives back the same tree."""
    if isinstance(formula, Top):
        return "true"
    if isinstance(formula, Bottom):
        return "false"
    if isinstance(formula, Atom):
        return str(formula)
    if isinstance(formula, Not):
        return f"!({format_formula(formula.child)})"
    if isinstance(formula, And):
        return " && ".join(
            f"({format_formula(child)})" if isinstance(child, (And, Or)) else format_formula(child)
            for child in formula.children
        )
    if isinstance(formula, Or):
        return " || ".join(
            f"({format_formula(child)})" if isinstance(child, Or) else format_formula(child)
            for child in formula.children
        )
    raise TypeError(f"Not a formula: {formula!r}")
