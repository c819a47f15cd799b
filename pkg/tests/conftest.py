import random
from pathlib import Path

import pytest

from segshap.conllu import SentenceParse, Token, parse_conllu
from segshap.rules import Removability, default_rules
from segshap.segmenter import Segment, SegmentForest, SegmentKind, build_forest

FIXTURES = Path(__file__).parent.parent / "fixtures"
DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def rules():
    return default_rules()


def load_fixture(name: str) -> SentenceParse:
    parses, errors = parse_conllu((FIXTURES / f"{name}.conllu").read_text())
    assert not errors, errors
    assert len(parses) == 1
    return parses[0]


def fixture_forest(name: str) -> SegmentForest:
    return build_forest(load_fixture(name), default_rules())


# --- random forest generator -------------------------------------------------------
#
# Grows structurally valid forests directly, without going through the parser:
# contiguous ids, a normal root, coordination shells that are unremovable with
# removable conjunct children, and optional replacement alternatives on leaves.

def random_forest(rng: random.Random, max_segments: int = 10,
                  with_alternatives: bool = False,
                  p_dummy: float = 0.2, p_dummy_root: float = 0.1) -> SegmentForest:
    root_kind = (SegmentKind.DUMMY if rng.random() < p_dummy_root
                 else SegmentKind.NORMAL)
    specs = [{"id": 0, "kind": root_kind,
              "removability": Removability.UNREMOVABLE, "parent": None,
              "children": []}]
    frontier = [0]
    while frontier and len(specs) < max_segments:
        parent = frontier.pop(rng.randrange(len(frontier)))
        parent_spec = specs[parent]
        if parent_spec["kind"] is SegmentKind.DUMMY:
            n_children = rng.randint(2, 3)
        else:
            limit = max_segments - len(specs)
            n_children = min(rng.choice((0, 1, 1, 2, 2, 3)), limit)
        for _ in range(n_children):
            sid = len(specs)
            if parent_spec["kind"] is SegmentKind.DUMMY:
                kind = SegmentKind.NORMAL
                removability = Removability.REMOVABLE
            elif rng.random() < p_dummy and len(specs) + 2 <= max_segments:
                kind = SegmentKind.DUMMY
                removability = Removability.UNREMOVABLE
            else:
                kind = SegmentKind.NORMAL
                removability = (Removability.REMOVABLE if rng.random() < 0.7
                                else Removability.UNREMOVABLE)
            specs.append({"id": sid, "kind": kind, "removability": removability,
                          "parent": parent, "children": []})
            parent_spec["children"].append(sid)
            frontier.append(sid)
    # dummies must keep at least two conjuncts even when the budget ran out
    for spec in specs:
        if spec["kind"] is SegmentKind.DUMMY:
            while len(spec["children"]) < 2:
                sid = len(specs)
                specs.append({"id": sid, "kind": SegmentKind.NORMAL,
                              "removability": Removability.REMOVABLE,
                              "parent": spec["id"], "children": []})
                spec["children"].append(sid)

    next_token = 1
    tokens: list[Token] = []

    def take_token() -> int:
        nonlocal next_token
        idx = next_token
        next_token += 1
        tokens.append(Token(index=idx, surface=f"w{idx}", head=max(0, idx - 1),
                            deprel="dep", space_after=rng.random() > 0.1))
        return idx

    segments = {}
    for spec in specs:
        cc_token = None
        if spec["kind"] is SegmentKind.DUMMY:
            token_indices: tuple[int, ...] = ()
            if rng.random() < 0.5:
                cc_token = take_token()
        else:
            token_indices = tuple(take_token() for _ in range(rng.randint(1, 2)))
        alternatives = ()
        if (with_alternatives and spec["kind"] is SegmentKind.NORMAL
                and not spec["children"] and spec["id"] != 0 and rng.random() < 0.4):
            alternatives = tuple(f"alt{spec['id']}_{j}" for j in range(rng.randint(1, 3)))
        segments[spec["id"]] = Segment(
            id=spec["id"], kind=spec["kind"], token_indices=token_indices,
            cc_token=cc_token, parent=spec["parent"],
            removability=spec["removability"], children=tuple(spec["children"]),
            alternatives=alternatives)

    sentence = SentenceParse.from_tokens(tuple(tokens))
    return SegmentForest(segments=segments, root_id=0, sentence=sentence,
                         merge_history={})
