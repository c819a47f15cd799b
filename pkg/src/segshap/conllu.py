"""CoNLL-U ingestion: tokens, sentence parses, validation, round-trip serialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import httpx

COLUMNS = 10


class ConlluError(Exception):
    """Base error for a malformed CoNLL-U block."""


class MalformedLine(ConlluError):
    pass


class NonContiguousIds(ConlluError):
    pass


class CycleDetected(ConlluError):
    pass


@dataclass(frozen=True, slots=True)
class Token:
    index: int              # 1-based position in the sentence
    surface: str
    head: int               # 0 = sentence root
    deprel: str
    space_after: bool = True
    lemma: str = "_"
    upos: str = "_"


@dataclass(frozen=True)
class BlockError:
    """A per-sentence ingestion failure; the batch continues past it."""

    block_index: int
    error: ConlluError

    def __str__(self) -> str:
        return f"block {self.block_index}: {type(self.error).__name__}: {self.error}"


@dataclass(frozen=True)
class SentenceParse:
    tokens: tuple[Token, ...]
    original_text: str = field(compare=False, default="")

    @staticmethod
    def from_tokens(tokens: tuple[Token, ...]) -> "SentenceParse":
        return SentenceParse(tokens=tokens, original_text=realize_tokens(tokens))

    def token(self, index: int) -> Token:
        return self.tokens[index - 1]

    def char_spans(self) -> list[tuple[int, int]]:
        """Character span of each token inside original_text, in token order."""
        spans = []
        pos = 0
        for tok in self.tokens:
            spans.append((pos, pos + len(tok.surface)))
            pos += len(tok.surface)
            if tok.space_after and tok is not self.tokens[-1]:
                pos += 1
        return spans


def realize_tokens(tokens: tuple[Token, ...] | list[Token]) -> str:
    parts = []
    for i, tok in enumerate(tokens):
        parts.append(tok.surface)
        if tok.space_after and i < len(tokens) - 1:
            parts.append(" ")
    return "".join(parts)


def _parse_block(lines: list[str]) -> SentenceParse:
    tokens: list[Token] = []
    for line in lines:
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != COLUMNS:
            raise MalformedLine(f"expected {COLUMNS} tab-separated columns, got {len(cols)}: {line!r}")
        tok_id, form, lemma, upos, _xpos, _feats, head, deprel, _deps, misc = cols
        if "-" in tok_id or "." in tok_id:
            # multiword-token range or empty node: not part of the basic tree
            continue
        try:
            index = int(tok_id)
            head_idx = int(head)
        except ValueError as exc:
            raise MalformedLine(f"non-integer ID or HEAD: {line!r}") from exc
        if not form:
            raise MalformedLine(f"empty FORM: {line!r}")
        space_after = "SpaceAfter=No" not in misc
        tokens.append(Token(index=index, surface=form, head=head_idx, deprel=deprel,
                            space_after=space_after, lemma=lemma, upos=upos))
    if not tokens:
        raise MalformedLine("block has no token lines")
    if [t.index for t in tokens] != list(range(1, len(tokens) + 1)):
        raise NonContiguousIds(f"token ids are not 1..{len(tokens)}")
    parse = SentenceParse.from_tokens(tuple(tokens))
    diags = validate_tree(parse)
    for diag in diags:
        if diag.startswith("CycleDetected"):
            raise CycleDetected(diag)
    return parse


def parse_conllu(doc: str) -> tuple[list[SentenceParse], list[BlockError]]:
    """Parse a CoNLL-U document into sentence parses.

    Blank lines separate sentences; failures are returned per block without
    aborting the rest of the batch.
    """
    parses: list[SentenceParse] = []
    errors: list[BlockError] = []
    block: list[str] = []
    block_index = 0

    def flush() -> None:
        nonlocal block_index
        if not any(line.strip() and not line.startswith("#") for line in block):
            block.clear()
            return
        try:
            parses.append(_parse_block(block))
        except ConlluError as exc:
            errors.append(BlockError(block_index=block_index, error=exc))
        block_index += 1
        block.clear()

    for line in doc.split("\n"):
        if line.strip() == "":
            flush()
        else:
            block.append(line)
    flush()
    return parses, errors


def validate_tree(parse: SentenceParse) -> list[str]:
    """Structural diagnostics; empty list means the parse is a well-formed tree."""
    diags: list[str] = []
    n = len(parse.tokens)
    indices = [t.index for t in parse.tokens]
    if indices != list(range(1, n + 1)):
        diags.append(f"NonContiguousIds: ids {indices}")
    roots = [t.index for t in parse.tokens if t.head == 0]
    if len(roots) == 0:
        diags.append("NoRoot: no token has head 0")
    elif len(roots) > 1:
        diags.append(f"MultipleRoots: tokens {roots} all have head 0")
    for t in parse.tokens:
        if t.head < 0 or t.head > n:
            diags.append(f"DanglingHead: token {t.index} points to {t.head}")
    # cycle check by walking head links from every token
    by_index = {t.index: t for t in parse.tokens}
    for t in parse.tokens:
        seen = set()
        cur = t.index
        while cur != 0:
            if cur in seen:
                diags.append(f"CycleDetected: head chain from token {t.index} revisits {cur}")
                break
            seen.add(cur)
            nxt = by_index.get(cur)
            if nxt is None or nxt.head < 0 or nxt.head > n:
                break
            cur = nxt.head
    # connectivity follows from acyclicity + single root + in-range heads
    return sorted(set(diags))


def serialize(parse: SentenceParse) -> str:
    """Render a SentenceParse back to CoNLL-U text (one block, trailing blank line)."""
    lines = []
    for t in parse.tokens:
        misc = "_" if t.space_after else "SpaceAfter=No"
        lines.append("\t".join([
            str(t.index), t.surface, t.lemma, t.upos, "_", "_",
            str(t.head), t.deprel, "_", misc,
        ]))
    return "\n".join(lines) + "\n\n"


class ParseProviderUnavailable(Exception):
    pass


def fetch_parse(provider_url: str, text: str, timeout: float = 30.0) -> str:
    """Ask an HTTP parse provider (POST /parse {"text": ...}) for CoNLL-U output."""
    try:
        resp = httpx.post(provider_url.rstrip("/") + "/parse", json={"text": text}, timeout=timeout)
        resp.raise_for_status()
    except httpx.HTTPError as exc:
        raise ParseProviderUnavailable(str(exc)) from exc
    return resp.text
