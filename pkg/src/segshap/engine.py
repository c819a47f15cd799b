"""Counterfactual vectors: counting, enumeration, uniform sampling, and realization.

Validity rules over a segment forest (root always included):
  R1  a segment may be included only if its parent is included
  R2  an unremovable segment is included whenever its parent is included
  R3  an included dummy has at least one included child

The counting DP assigns every valid configuration a unique rank, so enumeration
and uniform sampling are both exact and deterministic.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass

from .conllu import Token
from .rules import Removability
from .segmenter import SegmentForest, SegmentKind


class EngineError(Exception):
    pass


class CapExceeded(EngineError):
    pass


class InvalidVector(EngineError):
    pass


@dataclass(frozen=True)
class CounterfactualVector:
    """Inclusion bit and replacement-choice index per variable segment (ascending id)."""

    bits: tuple[int, ...]
    choices: tuple[int, ...]

    def bits_string(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class Counterfactual:
    vector: CounterfactualVector
    text: str
    word_count: int


# --- validity ------------------------------------------------------------------

def validate_vector(forest: SegmentForest, vector: CounterfactualVector) -> bool:
    var_ids = forest.variable_ids
    if len(vector.bits) != len(var_ids) or len(vector.choices) != len(var_ids):
        return False
    pos = {sid: i for i, sid in enumerate(var_ids)}

    def included(sid: int) -> int:
        return 1 if sid == forest.root_id else vector.bits[pos[sid]]

    for sid in var_ids:
        seg = forest.segments[sid]
        b = vector.bits[pos[sid]]
        if b not in (0, 1):
            return False
        parent_in = included(seg.parent)
        if b and not parent_in:
            return False  # R1
        if parent_in and seg.removability is Removability.UNREMOVABLE and not b:
            return False  # R2
        if seg.is_dummy and b and not any(included(c) for c in seg.children):
            return False  # R3
        choice = vector.choices[pos[sid]]
        if choice < 0 or choice > len(seg.alternatives) or (not b and choice != 0):
            return False
    root = forest.segments[forest.root_id]
    if root.is_dummy and not any(included(c) for c in root.children):
        return False  # R3 also binds a coordinated root
    return True


# --- counting / ranking ---------------------------------------------------------

class _Space:
    """Per-forest DP tables mapping ranks onto valid configurations."""

    def __init__(self, forest: SegmentForest):
        self.forest = forest
        self.var_ids = forest.variable_ids
        self.pos = {sid: i for i, sid in enumerate(self.var_ids)}
        self.opts: dict[int, int] = {}
        self.total = self._opts(forest.root_id)

    def _choice_count(self, sid: int) -> int:
        return 1 + len(self.forest.segments[sid].alternatives)

    def _branch(self, sid: int) -> int:
        seg = self.forest.segments[sid]
        if seg.removability is Removability.REMOVABLE:
            return 1 + self._opts(sid)
        return self._opts(sid)

    def _opts(self, sid: int) -> int:
        if sid in self.opts:
            return self.opts[sid]
        seg = self.forest.segments[sid]
        if seg.kind is SegmentKind.DUMMY:
            n = 1
            for child in seg.children:
                n *= self._branch(child)
            n -= 1  # all-children-absent is invalid under R3
        else:
            n = self._choice_count(sid)
            for child in seg.children:
                n *= self._branch(child)
        self.opts[sid] = n
        return n

    def unrank(self, rank: int) -> CounterfactualVector:
        assert 0 <= rank < self.total
        bits = [0] * len(self.var_ids)
        choices = [0] * len(self.var_ids)

        def decompose(value: int, radices: list[int]) -> list[int]:
            digits = [0] * len(radices)
            for i in range(len(radices) - 1, -1, -1):
                digits[i] = value % radices[i]
                value //= radices[i]
            return digits

        def fill(sid: int, config: int) -> None:
            seg = self.forest.segments[sid]
            children = list(seg.children)
            if seg.kind is SegmentKind.DUMMY:
                digits = decompose(config + 1, [self._branch(c) for c in children])
            else:
                digits = decompose(config, [self._choice_count(sid)] + [self._branch(c) for c in children])
                if sid != self.forest.root_id:
                    choices[self.pos[sid]] = digits[0]
                digits = digits[1:]
            for child, digit in zip(children, digits):
                if self.forest.segments[child].removability is Removability.REMOVABLE:
                    if digit == 0:
                        continue  # whole subtree absent
                    bits[self.pos[child]] = 1
                    fill(child, digit - 1)
                else:
                    bits[self.pos[child]] = 1
                    fill(child, digit)

        fill(self.forest.root_id, rank)
        return CounterfactualVector(bits=tuple(bits), choices=tuple(choices))


def count_valid(forest: SegmentForest) -> int:
    """Exact number of valid counterfactual vectors (replacement choices included)."""
    return _Space(forest).total


def enumerate_valid(forest: SegmentForest, cap: int = 4096) -> list[CounterfactualVector]:
    space = _Space(forest)
    if space.total > cap:
        raise CapExceeded(f"{space.total} valid vectors exceed cap {cap}")
    vectors = [space.unrank(r) for r in range(space.total)]
    vectors.sort(key=lambda v: (v.bits, v.choices))
    return vectors


def sample_valid(forest: SegmentForest, k: int, seed: int) -> list[CounterfactualVector]:
    """k distinct vectors drawn uniformly without replacement; deterministic per seed."""
    if k < 1:
        raise EngineError("k must be >= 1")
    space = _Space(forest)
    if k >= space.total:
        return enumerate_valid(forest, cap=space.total)
    rng = random.Random(seed)
    if space.total <= 2 ** 62:
        ranks = sorted(rng.sample(range(space.total), k))
    else:
        picked: set[int] = set()
        while len(picked) < k:
            picked.add(rng.randrange(space.total))
        ranks = sorted(picked)
    return [space.unrank(r) for r in ranks]


# --- realization -----------------------------------------------------------------

_NO_SPACE_BEFORE = {",", ".", "!", "?", ";", ":", ")", "]", "}", "%"}


def _no_space_before(text: str) -> bool:
    return text in _NO_SPACE_BEFORE or text.startswith(("'", "’"))


@dataclass(frozen=True)
class _Emit:
    start: int            # token index the item occupies (first token for replacements)
    end: int              # last original token index covered
    text: str
    token: Token | None   # None for replacement strings
    last_space_after: bool


def realize_text(forest: SegmentForest, vector: CounterfactualVector) -> Counterfactual:
    if not validate_vector(forest, vector):
        raise InvalidVector(f"vector {vector} violates the validity rules for this forest")
    sentence = forest.sentence
    pos = {sid: i for i, sid in enumerate(forest.variable_ids)}

    def included(sid: int) -> bool:
        return sid == forest.root_id or vector.bits[pos[sid]] == 1

    def subtree_token_positions(sid: int) -> list[int]:
        """Emitted token positions of an included branch (for cc placement)."""
        out: list[int] = []
        stack = [sid]
        while stack:
            cur = stack.pop()
            if not included(cur):
                continue
            out.extend(forest.segments[cur].token_indices)
            stack.extend(forest.segments[cur].children)
        return out

    items: list[_Emit] = []
    cc_tokens: set[int] = set()
    for sid in sorted(forest.segments):
        seg = forest.segments[sid]
        if not included(sid):
            continue
        choice = 0 if sid == forest.root_id else vector.choices[pos[sid]]
        if choice > 0:
            first, last = seg.token_indices[0], seg.token_indices[-1]
            items.append(_Emit(start=first, end=last, text=seg.alternatives[choice - 1],
                               token=None, last_space_after=sentence.token(last).space_after))
        else:
            for idx in seg.token_indices:
                tok = sentence.token(idx)
                items.append(_Emit(start=idx, end=idx, text=tok.surface, token=tok,
                                   last_space_after=tok.space_after))
        if seg.is_dummy and seg.cc_token is not None:
            cc_pos = seg.cc_token
            branch_positions = [subtree_token_positions(c) for c in seg.children if included(c)]
            before = any(p < cc_pos for ps in branch_positions for p in ps)
            after = any(p > cc_pos for ps in branch_positions for p in ps)
            if before and after:
                tok = sentence.token(cc_pos)
                items.append(_Emit(start=cc_pos, end=cc_pos, text=tok.surface, token=tok,
                                   last_space_after=tok.space_after))
                cc_tokens.add(cc_pos)

    items.sort(key=lambda it: it.start)

    # orphaned-comma repair: a comma left directly before an emitted cc token or the
    # trailing punctuation, where the gap was created by dropping tokens in between
    def orphaned(i: int) -> bool:
        it = items[i]
        if it.token is None or it.token.surface != "," or i + 1 >= len(items):
            return False
        nxt = items[i + 1]
        if nxt.start <= it.end + 1:
            return False  # originally adjacent: the comma belongs there
        is_cc = nxt.start in cc_tokens
        is_final_punct = (nxt.token is not None and nxt.token.deprel == "punct"
                          and i + 1 == len(items) - 1)
        return is_cc or is_final_punct

    items = [it for i, it in enumerate(items) if not orphaned(i)]

    parts: list[str] = []
    prev: _Emit | None = None
    for it in items:
        if prev is not None:
            if it.start == prev.end + 1:
                sep = "" if not prev.last_space_after else " "
            else:
                sep = "" if _no_space_before(it.text) else " "
            parts.append(sep)
        parts.append(it.text)
        prev = it
    text = re.sub(r"  +", " ", "".join(parts)).strip()

    original = sentence.original_text
    if original[:1].isupper():
        for i, ch in enumerate(text):
            if ch.isalpha():
                text = text[:i] + ch.upper() + text[i + 1:]
                break
    return Counterfactual(vector=vector, text=text, word_count=len(text.split()))


# --- wire format ------------------------------------------------------------------

def counterfactual_rows(counterfactuals: list[Counterfactual]) -> list[dict]:
    return [
        {
            "id": i,
            "bits": cf.vector.bits_string(),
            "choices": list(cf.vector.choices),
            "text": cf.text,
            "word_count": cf.word_count,
        }
        for i, cf in enumerate(counterfactuals)
    ]


def write_jsonl(counterfactuals: list[Counterfactual], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in counterfactual_rows(counterfactuals):
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n")
