"""Reader for dependency-annotated instructions in CoNLL-U format.

Only the columns the chunker consumes are retained: ID, FORM, UPOS, HEAD
and DEPREL.  Multiword-token ranges (``3-4``) and empty nodes (``5.1``)
are skipped.  Heads are sentence-local in the format; global governor
indices are resolved against the flattened token sequence, with the
sentence root mapping to ``None`` (no governor).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

N_COLUMNS = 10

# comment convention for bundling several instructions in one file
TEXT_ID_PREFIX = "# text_id ="


class ConlluError(ValueError):
    """Malformed CoNLL-U input (bad line syntax or sentence structure)."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Token:
    """One syntactic word with its dependency attributes."""

    index: int            # 1-based position within its sentence
    form: str
    upos: str
    head: int             # sentence-local governor index, 0 = root
    deprel: str

    @property
    def lower(self) -> str:
        return self.form.lower()

    def is_punct(self) -> bool:
        return self.deprel == "punct"


@dataclass(frozen=True)
class FlatToken:
    """Token with its global position across all sentences of an instruction."""

    global_index: int     # 1-based across the whole instruction
    sentence_id: int      # 0-based sentence ordinal
    local_index: int      # the Token.index within its sentence
    token: Token
    governor: int | None  # global index of the governor, None for the root

    @property
    def form(self) -> str:
        return self.token.form

    @property
    def lower(self) -> str:
        return self.token.lower

    @property
    def deprel(self) -> str:
        return self.token.deprel

    def is_punct(self) -> bool:
        return self.token.is_punct()


@dataclass
class ParsedInstruction:
    """A dependency-parsed instruction: sentences plus a flattened view."""

    sentences: list[list[Token]]
    flat_tokens: list[FlatToken] = field(init=False)

    def __post_init__(self):
        flat = []
        offset = 0
        for sid, sent in enumerate(self.sentences):
            for tok in sent:
                governor = None if tok.head == 0 else offset + tok.head
                flat.append(
                    FlatToken(
                        global_index=offset + tok.index,
                        sentence_id=sid,
                        local_index=tok.index,
                        token=tok,
                        governor=governor,
                    )
                )
            offset += len(sent)
        self.flat_tokens = flat

    def __len__(self) -> int:
        return len(self.flat_tokens)

    def words(self) -> list[str]:
        return [ft.form for ft in self.flat_tokens]

    def token_at(self, global_index: int) -> FlatToken:
        return self.flat_tokens[global_index - 1]

    def to_conllu(self) -> str:
        """Serialize back to 10-column text (unknown columns as ``_``)."""
        blocks = []
        for sent in self.sentences:
            lines = []
            for tok in sent:
                cols = [
                    str(tok.index), tok.form, "_", tok.upos, "_", "_",
                    str(tok.head), tok.deprel, "_", "_",
                ]
                lines.append("\t".join(cols))
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"


def _parse_token_line(line: str, line_no: int) -> Token | None:
    cols = line.split("\t")
    if len(cols) != N_COLUMNS:
        raise ConlluError(
            f"expected {N_COLUMNS} tab-separated columns, got {len(cols)}", line_no
        )
    token_id = cols[0]
    if "-" in token_id or "." in token_id:
        # multiword-token range or empty node: not a syntactic word
        return None
    try:
        index = int(token_id)
    except ValueError:
        raise ConlluError(f"non-integer token ID {token_id!r}", line_no) from None
    try:
        head = int(cols[6])
    except ValueError:
        raise ConlluError(f"non-integer HEAD {cols[6]!r}", line_no) from None
    if index < 1:
        raise ConlluError(f"token ID must be >= 1, got {index}", line_no)
    if head < 0:
        raise ConlluError(f"HEAD must be >= 0, got {head}", line_no)
    if head == index:
        raise ConlluError(f"token {index} is its own governor", line_no)
    return Token(index=index, form=cols[1], upos=cols[3], head=head, deprel=cols[7])


def _check_sentence(tokens: list[Token], first_line: int) -> None:
    roots = [t for t in tokens if t.deprel == "root"]
    if len(roots) != 1:
        raise ConlluError(
            f"sentence starting here has {len(roots)} root tokens, expected exactly 1",
            first_line,
        )
    for t in tokens:
        if (t.head == 0) != (t.deprel == "root"):
            # real parser output occasionally disagrees; tolerate it
            warnings.warn(
                f"token {t.index} ({t.form!r}): head==0 and deprel=='root' disagree",
                stacklevel=3,
            )
        if t.head > len(tokens):
            raise ConlluError(
                f"token {t.index} has HEAD {t.head} beyond sentence length {len(tokens)}",
                first_line,
            )


def parse_conllu(text: str) -> ParsedInstruction:
    """Parse one instruction's CoNLL-U annotation (one or more sentences)."""
    sentences: list[list[Token]] = []
    current: list[Token] = []
    current_first_line = 1
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            if current:
                _check_sentence(current, current_first_line)
                sentences.append(current)
                current = []
            continue
        if stripped.startswith("#"):
            continue
        if not current:
            current_first_line = line_no
        token = _parse_token_line(line, line_no)
        if token is not None:
            current.append(token)
    if current:
        _check_sentence(current, current_first_line)
        sentences.append(current)
    if not sentences:
        raise ConlluError("no sentences found in input")
    return ParsedInstruction(sentences=sentences)


def parse_conllu_file(text: str) -> dict[str, ParsedInstruction]:
    """Parse a file holding several instructions separated by ``# text_id =`` comments.

    Without any ``# text_id`` comment the whole file is one instruction
    keyed ``"0"``.  Returns instructions in file order (dicts preserve it).
    """
    segments: list[tuple[str, list[str]]] = []
    current_id: str | None = None
    current_lines: list[str] = []
    for line in text.splitlines():
        if line.strip().startswith(TEXT_ID_PREFIX):
            if current_id is not None or any(l.strip() for l in current_lines):
                segments.append((current_id if current_id is not None else "0",
                                 current_lines))
            current_id = line.strip()[len(TEXT_ID_PREFIX):].strip()
            current_lines = []
        else:
            current_lines.append(line)
    if current_id is not None or any(l.strip() for l in current_lines):
        segments.append((current_id if current_id is not None else "0", current_lines))

    out: dict[str, ParsedInstruction] = {}
    for text_id, lines in segments:
        if text_id in out:
            raise ConlluError(f"duplicate text_id {text_id!r}")
        out[text_id] = parse_conllu("\n".join(lines))
    return out
