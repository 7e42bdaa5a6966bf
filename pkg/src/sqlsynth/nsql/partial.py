"""Structural view of possibly unfinished canonical query text.

Generation builds a query left to right, so at any point the text is a
run of terminated clause lines followed by one line still being typed.
``parse_partial`` recovers that structure without judging clause bodies;
body validation belongs to the clause grammars and the checker.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ClauseOrderViolation
from .lexemes import split_line
from .query import CLAUSE_ORDER, ClauseKind

_CLAUSE_STARTS = {kind.keyword_lexemes[0]: kind for kind in CLAUSE_ORDER}


@dataclass(frozen=True)
class PartialParse:
    """Clause-line structure of a text prefix.

    ``completed`` maps each terminated clause to its body lexemes with
    the clause keyword stripped.  The current line is described by the
    clause it must belong to, the keyword lexemes still owed, the body
    lexemes finished so far and the final unterminated fragment.
    """

    completed: dict[ClauseKind, tuple[str, ...]] = field(default_factory=dict)
    current_clause: ClauseKind | None = None
    keyword_remaining: tuple[str, ...] = ()
    current_body: tuple[str, ...] = ()
    fragment: str | None = None
    eos_seen: bool = False
    syntax_error: str | None = None

    @property
    def all_terminated(self) -> bool:
        return (
            len(self.completed) == len(CLAUSE_ORDER)
            and self.syntax_error is None
            and not self.current_body
            and self.fragment is None
        )

    @property
    def keyword_done(self) -> bool:
        return self.current_clause is not None and not self.keyword_remaining

    @property
    def is_complete(self) -> bool:
        return self.eos_seen and self.all_terminated


def _match_terminated(kind: ClauseKind, lexemes: list[str]) -> list[str] | None:
    keyword = kind.keyword_lexemes
    if not lexemes or lexemes[0] != keyword[0]:
        first = lexemes[0] if lexemes else ""
        other = _CLAUSE_STARTS.get(first)
        if other is not None and other is not kind:
            raise ClauseOrderViolation(
                f"{other.value} line where {kind.value} was expected"
            )
        return None
    if len(keyword) == 2:
        if len(lexemes) < 2 or lexemes[1] != keyword[1]:
            return None
        return lexemes[2:]
    return lexemes[1:]


def parse_partial(text: str, *, eos_seen: bool = False) -> PartialParse:
    """Split generated text into terminated clauses and the current line.

    Raises :class:`ClauseOrderViolation` when a line starts with a known
    clause keyword other than the one due at that position.  Other
    structural damage is reported through ``syntax_error`` so the caller
    can map it to a rejection instead of an exception.
    """
    lines = text.split("\n")
    current = lines[-1]
    completed: dict[ClauseKind, tuple[str, ...]] = {}
    syntax_error: str | None = None

    for index, line in enumerate(lines[:-1]):
        if index >= len(CLAUSE_ORDER):
            syntax_error = "text continues after the LIMIT line"
            break
        kind = CLAUSE_ORDER[index]
        if line == "" or line.endswith(" "):
            syntax_error = f"non-canonical spacing in {kind.value} line"
            break
        lexemes, _ = split_line(line, terminated=True)
        body = _match_terminated(kind, lexemes)
        if body is None:
            syntax_error = f"{kind.value} line does not start with its keyword"
            break
        completed[kind] = tuple(body)

    current_clause: ClauseKind | None = None
    keyword_remaining: tuple[str, ...] = ()
    current_body: tuple[str, ...] = ()
    fragment: str | None = None

    if syntax_error is None:
        if len(completed) >= len(CLAUSE_ORDER):
            if current:
                syntax_error = "text continues after the LIMIT line"
        else:
            kind = CLAUSE_ORDER[len(completed)]
            current_clause = kind
            lexemes, fragment = split_line(current, terminated=False)
            keyword = kind.keyword_lexemes
            matched = 0
            body: list[str] = []
            for lexeme in lexemes:
                if matched < len(keyword):
                    if lexeme == keyword[matched]:
                        matched += 1
                        continue
                    other = _CLAUSE_STARTS.get(lexeme) if matched == 0 else None
                    if other is not None and other is not kind:
                        raise ClauseOrderViolation(
                            f"{other.value} line where {kind.value} was expected"
                        )
                    syntax_error = f"{kind.value} line does not start with its keyword"
                    break
                body.append(lexeme)
            keyword_remaining = tuple(keyword[matched:])
            current_body = tuple(body)

    return PartialParse(
        completed=completed,
        current_clause=current_clause,
        keyword_remaining=keyword_remaining,
        current_body=current_body,
        fragment=fragment,
        eos_seen=eos_seen,
        syntax_error=syntax_error,
    )
