"""Final-answer extraction, math-answer equivalence, and verdict classification.

All functions here are total: arbitrary model text classifies to exactly one
verdict and never raises. Assessment looks only at the final boxed answer,
never at intermediate reasoning.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .records import Solvability, Verdict

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
_BOXED = "\\boxed{"

NUMERIC_TOLERANCE = 1e-9


class AnswerKind(str, Enum):
    VALUE = "value"
    UNSOLVABLE_CLAIM = "unsolvable_claim"
    REFUSAL = "refusal"
    MISSING = "missing"


@dataclass(frozen=True)
class ExtractedAnswer:
    """The last boxed span of a response, classified.

    ``span`` gives (start, end) character offsets of the boxed content
    within the raw output; ``text`` is set only for plain values.
    """

    kind: AnswerKind
    text: str | None = None
    span: tuple[int, int] | None = None


def post_reasoning_text(raw_output: str) -> str:
    """Everything after the last reasoning-trace close delimiter."""
    idx = raw_output.rfind(THINK_CLOSE)
    if idx == -1:
        return raw_output
    return raw_output[idx + len(THINK_CLOSE):]


def find_boxed_spans(text: str) -> list[tuple[int, int]]:
    """Content spans of every balanced \\boxed{...} in ``text``, left to right."""
    spans = []
    pos = 0
    while True:
        start = text.find(_BOXED, pos)
        if start == -1:
            break
        content_start = start + len(_BOXED)
        depth = 1
        i = content_start
        escaped = False
        while i < len(text):
            ch = text[i]
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    break
            i += 1
        if depth == 0:
            spans.append((content_start, i))
        # resume just inside this span so nested boxes are found too; the
        # last span must be the latest-starting balanced one
        pos = content_start
    return spans


def _normalize_quotes(text: str) -> str:
    return text.replace("\u2019", "'").replace("\u2018", "'")


def _classify_box_content(content: str) -> AnswerKind:
    normalized = _normalize_quotes(content).casefold().strip()
    if not normalized:
        return AnswerKind.MISSING
    if "unsolvable" in normalized:
        return AnswerKind.UNSOLVABLE_CLAIM
    if "don't know" in normalized or "dont know" in normalized or normalized.startswith("sorry"):
        return AnswerKind.REFUSAL
    return AnswerKind.VALUE


def extract_final_answer(raw_output: str) -> ExtractedAnswer:
    """Classify the last balanced boxed span of the post-reasoning suffix.

    Falls back to scanning the whole text when the suffix has no box;
    no box anywhere means the answer is missing.
    """
    idx = raw_output.rfind(THINK_CLOSE)
    offset = idx + len(THINK_CLOSE) if idx != -1 else 0
    spans = find_boxed_spans(raw_output[offset:])
    if spans:
        spans = [(s + offset, e + offset) for s, e in spans]
    elif offset:
        spans = find_boxed_spans(raw_output)
    if not spans:
        return ExtractedAnswer(kind=AnswerKind.MISSING)
    start, end = spans[-1]
    content = raw_output[start:end]
    kind = _classify_box_content(content)
    if kind is AnswerKind.MISSING:
        return ExtractedAnswer(kind=AnswerKind.MISSING, span=(start, end))
    if kind is AnswerKind.VALUE:
        return ExtractedAnswer(kind=kind, text=content.strip(), span=(start, end))
    return ExtractedAnswer(kind=kind, span=(start, end))


# --- string normalization (equivalence tier 1) ---

_SIZING_COMMANDS = re.compile(
    r"\\(?:left|right|big[lr]?|Big[lr]?|bigg[lr]?|Bigg[lr]?|[,;!:]|quad|qquad)"
)
_DISPLAY_WRAPPERS = re.compile(r"\\[\(\)\[\]]|\$")


def normalize_answer_text(text: str) -> str:
    """Canonical comparison form: no whitespace, outer braces, or sizing noise."""
    text = _normalize_quotes(text.strip())
    text = text.replace("\u2212", "-").replace("\u03c0", "\\pi")
    text = _DISPLAY_WRAPPERS.sub("", text)
    text = _SIZING_COMMANDS.sub("", text)
    text = re.sub(r"\\[dtc]frac", r"\\frac", text)
    text = re.sub(r"\s+", "", text)
    text = text.rstrip(".,;:!")
    while len(text) >= 2 and text[0] == "{" and text[-1] == "}" and _braces_balanced(text[1:-1]):
        text = text[1:-1]
    return text.casefold()


def _braces_balanced(text: str) -> bool:
    depth = 0
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def _split_top_level_commas(text: str) -> list[str]:
    parts = []
    depth = 0
    current = []
    for ch in text:
        if ch in "{([":
            depth += 1
        elif ch in "})]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return parts


# --- exact numeric parsing (equivalence tier 2) ---
#
# Values are kept exact (Fraction) until an irrational enters, then float.
# Double-precision evaluation error (~1e-16) is far inside the comparison
# tolerance of 1e-9.

class _NumParse(Exception):
    pass


_Value = Fraction | float

_NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)(e[+-]?\d+)?")


def _to_float(value: _Value) -> float:
    return float(value)


def _mul(a: _Value, b: _Value) -> _Value:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a * b
    return _to_float(a) * _to_float(b)


def _div(a: _Value, b: _Value) -> _Value:
    if isinstance(b, Fraction) and b == 0:
        raise _NumParse("division by zero")
    if isinstance(b, float) and b == 0.0:
        raise _NumParse("division by zero")
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a / b
    return _to_float(a) / _to_float(b)


def _sqrt(value: _Value, index: int = 2) -> _Value:
    as_float = _to_float(value)
    if as_float < 0:
        raise _NumParse("negative radicand")
    if index == 2 and isinstance(value, Fraction):
        num = math.isqrt(value.numerator)
        den = math.isqrt(value.denominator)
        if num * num == value.numerator and den * den == value.denominator:
            return Fraction(num, den)
    return as_float ** (1.0 / index)


class _NumericParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def parse(self) -> _Value:
        value = self._value()
        if self.pos != len(self.text):
            raise _NumParse(f"trailing input at {self.pos}")
        return value

    def _value(self) -> _Value:
        sign = 1
        if self.pos < len(self.text) and self.text[self.pos] in "+-":
            sign = -1 if self.text[self.pos] == "-" else 1
            self.pos += 1
        value = self._product()
        if self.pos < len(self.text) and self.text[self.pos] == "/":
            self.pos += 1
            value = _div(value, self._product())
        return _mul(Fraction(sign), value)

    def _product(self) -> _Value:
        value = self._atom()
        while self.pos < len(self.text) and self.text[self.pos] in "\\({":
            value = _mul(value, self._atom())
        return value

    def _atom(self) -> _Value:
        text, pos = self.text, self.pos
        if text.startswith("\\frac", pos):
            self.pos += len("\\frac")
            numerator = self._braced()
            denominator = self._braced()
            return _div(numerator, denominator)
        if text.startswith("\\sqrt", pos):
            self.pos += len("\\sqrt")
            index = 2
            if self.pos < len(text) and text[self.pos] == "[":
                close = text.find("]", self.pos)
                if close == -1:
                    raise _NumParse("unterminated root index")
                index = int(text[self.pos + 1 : close])
                self.pos = close + 1
            if self.pos < len(text) and text[self.pos] == "{":
                radicand = self._braced()
            else:
                match = _NUMBER_RE.match(text, self.pos)
                if not match:
                    raise _NumParse("missing radicand")
                self.pos = match.end()
                radicand = _number_from_match(match)
            return _sqrt(radicand, index)
        if text.startswith("\\pi", pos):
            self.pos += len("\\pi")
            return math.pi
        if pos < len(text) and text[pos] == "(":
            inner, end = _matching(text, pos, "(", ")")
            self.pos = end + 1
            return _parse_numeric_inner(inner)
        if pos < len(text) and text[pos] == "{":
            inner, end = _matching(text, pos, "{", "}")
            self.pos = end + 1
            return _parse_numeric_inner(inner)
        match = _NUMBER_RE.match(text, pos)
        if match:
            self.pos = match.end()
            return _number_from_match(match)
        raise _NumParse(f"unexpected input at {pos}")

    def _braced(self) -> _Value:
        if self.pos >= len(self.text) or self.text[self.pos] != "{":
            raise _NumParse("expected '{'")
        inner, end = _matching(self.text, self.pos, "{", "}")
        self.pos = end + 1
        return _parse_numeric_inner(inner)


def _matching(text: str, start: int, open_ch: str, close_ch: str) -> tuple[str, int]:
    depth = 0
    for i in range(start, len(text)):
        if text[i] == open_ch:
            depth += 1
        elif text[i] == close_ch:
            depth -= 1
            if depth == 0:
                return text[start + 1 : i], i
    raise _NumParse(f"unbalanced {open_ch}")


def _number_from_match(match: re.Match) -> _Value:
    mantissa, exponent = match.group(1), match.group(2)
    value = Fraction(mantissa)
    if exponent:
        value *= Fraction(10) ** int(exponent[1:])
    return value


def _parse_numeric_inner(text: str) -> _Value:
    if not text:
        raise _NumParse("empty")
    return _NumericParser(text).parse()


_SCI_PRODUCT_RE = re.compile(r"\\(?:times|cdot)10\^(\{-?\d+\}|-?\d+)")


def parse_numeric(text: str) -> _Value | None:
    """Parse a normalized answer into an exact or float value; None if not numeric."""
    text = normalize_answer_text(text)
    text = _SCI_PRODUCT_RE.sub(lambda m: "e" + m.group(1).strip("{}"), text)
    text = re.sub(r"^10\^(\{-?\d+\}|-?\d+)$", lambda m: "1e" + m.group(1).strip("{}"), text)
    percent = False
    if text.endswith("\\%"):
        text, percent = text[:-2], True
    elif text.endswith("%"):
        text, percent = text[:-1], True
    try:
        value = _parse_numeric_inner(text)
    except (_NumParse, ValueError, ZeroDivisionError, OverflowError):
        return None
    if percent:
        value = _div(value, Fraction(100))
    return value


def _values_close(a: _Value, b: _Value) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return abs(a - b) <= Fraction(1, 10**9)
    fa, fb = _to_float(a), _to_float(b)
    if math.isinf(fa) or math.isinf(fb) or math.isnan(fa) or math.isnan(fb):
        return False
    return abs(fa - fb) <= NUMERIC_TOLERANCE


def answers_equivalent(a: str, b: str) -> bool:
    """Tiered equality: normalized string, ordered tuples, then numeric within 1e-9."""
    if not a or not b:
        return False
    norm_a, norm_b = normalize_answer_text(a), normalize_answer_text(b)
    if norm_a and norm_a == norm_b:
        return True
    parts_a = _split_top_level_commas(norm_a)
    parts_b = _split_top_level_commas(norm_b)
    if len(parts_a) > 1 or len(parts_b) > 1:
        if len(parts_a) != len(parts_b):
            return False
        return all(
            pa == pb if (not pa or not pb) else answers_equivalent(pa, pb)
            for pa, pb in zip(parts_a, parts_b)
        )
    value_a = parse_numeric(a)
    if value_a is None:
        return False
    value_b = parse_numeric(b)
    if value_b is None:
        return False
    return _values_close(value_a, value_b)


def classify(raw_output: str, solvability: Solvability, ground_truth: str | None) -> Verdict:
    """Map a raw response to successful / refused / failed.

    Solvable: the boxed value must match the ground truth; a boxed
    unsolvability claim counts as failed, not refused. Unsolvable: only an
    explicit unsolvability claim succeeds.
    """
    answer = extract_final_answer(raw_output)
    if solvability is Solvability.SOLVABLE:
        if (
            answer.kind is AnswerKind.VALUE
            and ground_truth
            and answers_equivalent(answer.text or "", ground_truth)
        ):
            return Verdict.SUCCESSFUL
        if answer.kind is AnswerKind.REFUSAL:
            return Verdict.REFUSED
        return Verdict.FAILED
    if answer.kind is AnswerKind.UNSOLVABLE_CLAIM:
        return Verdict.SUCCESSFUL
    if answer.kind is AnswerKind.REFUSAL:
        return Verdict.REFUSED
    return Verdict.FAILED
