"""Query AST and its text wire form.

The grammar is deliberately small and regular so it can be produced by a UI
query builder and read back without ambiguity::

    all
    code:10200004
    patient:p-0042
    date:[2019-01-01,2020-12-31]
    vol:10200004:[1000000,]
    int:10200004:[,80]
    and(code:10200004, not(code:78961009))

Range brackets always contain one comma; either bound may be omitted. Volume
and intensity ranges are scoped to a structure code: the predicate holds when
the document carries that code with a measurement inside the range.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date

from .errors import CtIndexError

MAX_DEPTH = 32

_CODE_RE = re.compile(r"^\d+$")
_VALUE_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


class MalformedQuery(CtIndexError):
    code = "malformed_query"


@dataclass(frozen=True)
class MatchAll:
    pass


@dataclass(frozen=True)
class HasCode:
    code: str


@dataclass(frozen=True)
class PatientIs:
    pseudonym: str


@dataclass(frozen=True)
class DateInRange:
    min: date | None = None
    max: date | None = None


@dataclass(frozen=True)
class VolumeInRange:
    code: str
    min: float | None = None
    max: float | None = None


@dataclass(frozen=True)
class IntensityInRange:
    code: str
    min: float | None = None
    max: float | None = None


@dataclass(frozen=True)
class And:
    children: tuple[Query, ...]


@dataclass(frozen=True)
class Or:
    children: tuple[Query, ...]


@dataclass(frozen=True)
class Not:
    child: Query


Query = (
    MatchAll
    | HasCode
    | PatientIs
    | DateInRange
    | VolumeInRange
    | IntensityInRange
    | And
    | Or
    | Not
)


def validate_query(q: Query, _depth: int = 1) -> None:
    """Check structural invariants: depth cap, ordered ranges, sane values."""
    if _depth > MAX_DEPTH:
        raise MalformedQuery(f"query tree deeper than {MAX_DEPTH}")
    if isinstance(q, (And, Or)):
        if not q.children:
            raise MalformedQuery("and/or requires at least one operand")
        for child in q.children:
            validate_query(child, _depth + 1)
    elif isinstance(q, Not):
        validate_query(q.child, _depth + 1)
    elif isinstance(q, HasCode):
        if not _CODE_RE.match(q.code):
            raise MalformedQuery(f"bad code {q.code!r}")
    elif isinstance(q, PatientIs):
        if not _VALUE_RE.match(q.pseudonym):
            raise MalformedQuery(f"bad patient value {q.pseudonym!r}")
    elif isinstance(q, (VolumeInRange, IntensityInRange)):
        if not _CODE_RE.match(q.code):
            raise MalformedQuery(f"bad code {q.code!r}")
        if q.min is not None and q.max is not None and q.min > q.max:
            raise MalformedQuery("range min must be <= max")
    elif isinstance(q, DateInRange):
        if q.min is not None and q.max is not None and q.min > q.max:
            raise MalformedQuery("date range min must be <= max")
    elif isinstance(q, MatchAll):
        pass
    else:  # pragma: no cover - new node types must be handled explicitly
        raise MalformedQuery(f"unknown query node {type(q).__name__}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _num_text(value: float | None) -> str:
    if value is None:
        return ""
    return repr(float(value)) if not float(value).is_integer() else str(int(value))


def to_text(q: Query) -> str:
    """Render a query to its wire form (inverse of :func:`parse_query`)."""
    if isinstance(q, MatchAll):
        return "all"
    if isinstance(q, HasCode):
        return f"code:{q.code}"
    if isinstance(q, PatientIs):
        return f"patient:{q.pseudonym}"
    if isinstance(q, DateInRange):
        lo = q.min.isoformat() if q.min else ""
        hi = q.max.isoformat() if q.max else ""
        return f"date:[{lo},{hi}]"
    if isinstance(q, VolumeInRange):
        return f"vol:{q.code}:[{_num_text(q.min)},{_num_text(q.max)}]"
    if isinstance(q, IntensityInRange):
        return f"int:{q.code}:[{_num_text(q.min)},{_num_text(q.max)}]"
    if isinstance(q, And):
        return "and(" + ", ".join(to_text(c) for c in q.children) + ")"
    if isinstance(q, Or):
        return "or(" + ", ".join(to_text(c) for c in q.children) + ")"
    if isinstance(q, Not):
        return f"not({to_text(q.child)})"
    raise MalformedQuery(f"unknown query node {type(q).__name__}")


class _Parser:
    """Recursive-descent parser over the query wire form."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> MalformedQuery:
        return MalformedQuery(f"{message} at position {self.pos} in {self.text!r}")

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if not self.eof() else ""

    def skip_ws(self) -> None:
        while not self.eof() and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, literal: str) -> None:
        if not self.text.startswith(literal, self.pos):
            raise self.error(f"expected {literal!r}")
        self.pos += len(literal)

    def take_while(self, pattern: str) -> str:
        match = re.compile(pattern).match(self.text, self.pos)
        if not match:
            raise self.error("expected a value")
        self.pos = match.end()
        return match.group(0)

    def parse(self) -> Query:
        self.skip_ws()
        node = self.parse_node(1)
        self.skip_ws()
        if not self.eof():
            raise self.error("trailing input")
        validate_query(node)
        return node

    def parse_node(self, depth: int) -> Query:
        if depth > MAX_DEPTH:
            raise self.error(f"query tree deeper than {MAX_DEPTH}")
        self.skip_ws()
        for keyword, cls in (("and(", And), ("or(", Or)):
            if self.text.startswith(keyword, self.pos):
                self.pos += len(keyword)
                children = [self.parse_node(depth + 1)]
                self.skip_ws()
                while self.peek() == ",":
                    self.pos += 1
                    children.append(self.parse_node(depth + 1))
                    self.skip_ws()
                self.expect(")")
                return cls(children=tuple(children))
        if self.text.startswith("not(", self.pos):
            self.pos += 4
            child = self.parse_node(depth + 1)
            self.skip_ws()
            self.expect(")")
            return Not(child=child)
        if self.text.startswith("all", self.pos) and not re.match(
            r"[A-Za-z0-9_]", self.text[self.pos + 3 : self.pos + 4] or " "
        ):
            self.pos += 3
            return MatchAll()
        if self.text.startswith("code:", self.pos):
            self.pos += 5
            return HasCode(code=self.take_while(r"\d+"))
        if self.text.startswith("patient:", self.pos):
            self.pos += 8
            return PatientIs(pseudonym=self.take_while(r"[A-Za-z0-9_.\-]+"))
        if self.text.startswith("date:", self.pos):
            self.pos += 5
            lo, hi = self.parse_bracket(self.parse_date)
            return DateInRange(min=lo, max=hi)
        if self.text.startswith("vol:", self.pos):
            self.pos += 4
            code = self.take_while(r"\d+")
            self.expect(":")
            lo, hi = self.parse_bracket(self.parse_number)
            return VolumeInRange(code=code, min=lo, max=hi)
        if self.text.startswith("int:", self.pos):
            self.pos += 4
            code = self.take_while(r"\d+")
            self.expect(":")
            lo, hi = self.parse_bracket(self.parse_number)
            return IntensityInRange(code=code, min=lo, max=hi)
        raise self.error("expected a predicate")

    def parse_bracket(self, bound_parser) -> tuple:
        self.expect("[")
        self.skip_ws()
        lo = None if self.peek() == "," else bound_parser()
        self.skip_ws()
        self.expect(",")
        self.skip_ws()
        hi = None if self.peek() == "]" else bound_parser()
        self.skip_ws()
        self.expect("]")
        return lo, hi

    def parse_number(self) -> float:
        text = self.take_while(r"-?\d+(\.\d+)?([eE][-+]?\d+)?")
        return float(text)

    def parse_date(self) -> date:
        text = self.take_while(r"\d{4}-\d{2}-\d{2}")
        try:
            return date.fromisoformat(text)
        except ValueError as exc:
            raise self.error(f"bad date {text!r}") from exc


def parse_query(text: str) -> Query:
    """Parse the wire form into a validated query tree."""
    if not text or not text.strip():
        raise MalformedQuery("empty query text")
    return _Parser(text).parse()
