"""Segment forests: the interpretable representation built from a dependency parse.

A sentence becomes a rooted tree of segments. Conjunct clusters get a dummy
parent node carrying the coordinating conjunction; unremovable normal nodes are
merged into their parents until only removable edges (and dummy nodes) remain.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace

from .conllu import SentenceParse, Token
from .rules import Removability, RuleTable

log = logging.getLogger(__name__)


class SegmentKind(enum.Enum):
    NORMAL = "normal"
    DUMMY = "dummy"


class SegmentError(Exception):
    pass


class UnknownSegment(SegmentError):
    pass


class CannotMergeDummy(SegmentError):
    pass


class NotALeaf(SegmentError):
    pass


class NotMerged(SegmentError):
    pass


class GatewayUnavailable(SegmentError):
    pass


@dataclass(frozen=True)
class Segment:
    id: int
    kind: SegmentKind
    token_indices: tuple[int, ...]          # sorted; empty iff dummy owning only its cc token
    cc_token: int | None                    # dummy only
    parent: int | None                      # None iff root
    removability: Removability              # class of the edge to the parent; root: UNREMOVABLE
    children: tuple[int, ...]
    alternatives: tuple[str, ...] = ()      # replacement options, leaf normal segments only
    merged: bool = False

    @property
    def is_dummy(self) -> bool:
        return self.kind is SegmentKind.DUMMY


@dataclass(frozen=True)
class SegmentForest:
    segments: dict[int, Segment]
    root_id: int
    sentence: SentenceParse
    merge_history: dict[int, tuple[Segment, ...]] = field(default_factory=dict)

    @property
    def m(self) -> int:
        """Number of binary degrees of freedom (all segments except the root)."""
        return len(self.segments) - 1

    @property
    def variable_ids(self) -> tuple[int, ...]:
        return tuple(sorted(sid for sid in self.segments if sid != self.root_id))

    def segment(self, seg_id: int) -> Segment:
        try:
            return self.segments[seg_id]
        except KeyError:
            raise UnknownSegment(f"no segment {seg_id}") from None

    def descendants(self, seg_id: int) -> list[int]:
        out: list[int] = []
        stack = list(self.segment(seg_id).children)
        while stack:
            cur = stack.pop()
            out.append(cur)
            stack.extend(self.segments[cur].children)
        return sorted(out)

    def label(self, seg_id: int) -> str:
        """Display text of one segment ("[and]" for dummies)."""
        seg = self.segment(seg_id)
        if seg.is_dummy:
            cc = self.sentence.token(seg.cc_token).surface if seg.cc_token else "and"
            return f"[{cc}]"
        toks = self.sentence.tokens
        parts: list[str] = []
        prev = None
        for idx in seg.token_indices:
            tok = toks[idx - 1]
            if prev is not None:
                parts.append("" if (idx == prev.index + 1 and not prev.space_after) else " ")
            parts.append(tok.surface)
            prev = tok
        return "".join(parts)


# --- construction ------------------------------------------------------------

_ROOT = 0  # pseudo-parent marker for the sentence root during construction


@dataclass
class _Node:
    tokens: list[int]
    parent: int | None          # node id; None = forest root
    removability: Removability
    kind: SegmentKind
    cc_token: int | None = None
    children: list[int] = field(default_factory=list)


def build_forest(parse: SentenceParse, rules: RuleTable) -> SegmentForest:
    """Build + simplify: word-level tree, dummy conjunct nodes, unremovable merging."""
    nodes = _build_word_tree(parse, rules)
    _simplify(nodes)
    _reattach_final_punct(nodes, parse)
    return _number_segments(nodes, parse)


def _build_word_tree(parse: SentenceParse, rules: RuleTable) -> dict[int, _Node]:
    toks = parse.tokens
    n = len(toks)
    cls = {t.index: rules.classify(t.deprel) for t in toks}

    # conjunct clusters: each conj token joins the cluster of the top non-conj
    # token on its head chain (handles both chained and flat conj attachments)
    cluster_of: dict[int, int] = {}
    for t in toks:
        if cls[t.index] is not Removability.CONJUNCT or t.head == 0:
            continue
        h = t.index
        while h != 0 and cls[h] is Removability.CONJUNCT and toks[h - 1].head != 0:
            h = toks[h - 1].head
        cluster_of[t.index] = h
        cluster_of.setdefault(h, h)

    clusters: dict[int, list[int]] = {}
    for member, head in sorted(cluster_of.items()):
        clusters.setdefault(head, [])
        if member not in clusters[head]:
            clusters[head].append(member)
    clusters = {h: sorted(ms) for h, ms in clusters.items() if len(ms) >= 2}
    member_to_cluster = {m: h for h, ms in clusters.items() for m in ms}

    # one cc token per cluster rides on the dummy; remaining tokens are nodes
    cc_of_cluster: dict[int, int] = {}
    for t in toks:
        if t.deprel == "cc" and t.head in member_to_cluster:
            cc_of_cluster.setdefault(member_to_cluster[t.head], t.index)

    routed_cc = set(cc_of_cluster.values())
    dummy_ids = {h: n + 1 + i for i, h in enumerate(sorted(clusters))}

    nodes: dict[int, _Node] = {}
    for t in toks:
        if t.index in routed_cc:
            continue
        if t.index in member_to_cluster:
            parent: int | None = dummy_ids[member_to_cluster[t.index]]
            removability = Removability.REMOVABLE
        elif t.head == 0:
            parent, removability = None, Removability.UNREMOVABLE
        else:
            parent = t.head
            removability = cls[t.index]
            if removability is Removability.CONJUNCT:  # stray conj with no cluster
                removability = Removability.UNREMOVABLE
        nodes[t.index] = _Node(tokens=[t.index], parent=parent, removability=removability,
                               kind=SegmentKind.NORMAL)
    for h, dummy_id in dummy_ids.items():
        head_tok = toks[h - 1]
        parent = None if head_tok.head == 0 else head_tok.head
        nodes[dummy_id] = _Node(tokens=[], parent=parent, removability=Removability.UNREMOVABLE,
                                kind=SegmentKind.DUMMY, cc_token=cc_of_cluster.get(h))

    for nid, node in nodes.items():
        if node.parent is not None:
            nodes[node.parent].children.append(nid)
    return nodes


def _simplify(nodes: dict[int, _Node]) -> None:
    """Merge unremovable normal nodes into their parents until fixpoint."""
    changed = True
    while changed:
        changed = False
        for nid in sorted(nodes):
            node = nodes.get(nid)
            if node is None or node.parent is None or node.kind is SegmentKind.DUMMY:
                continue
            if node.removability is not Removability.UNREMOVABLE:
                continue
            parent = nodes[node.parent]
            parent.tokens.extend(node.tokens)
            parent.children.remove(nid)
            for child_id in node.children:
                nodes[child_id].parent = node.parent
                parent.children.append(child_id)
            del nodes[nid]
            changed = True


def _root_node_id(nodes: dict[int, _Node]) -> int:
    roots = [nid for nid, node in nodes.items() if node.parent is None]
    assert len(roots) == 1, f"expected a single forest root, got {roots}"
    return roots[0]


def _reattach_final_punct(nodes: dict[int, _Node], parse: SentenceParse) -> None:
    """Move the sentence-trailing punctuation run into the forest root segment.

    Keeps the final period with the always-included root even when the sentence
    root verb sits inside a removable conjunct clause.
    """
    root_id = _root_node_id(nodes)
    trailing = []
    for tok in reversed(parse.tokens):
        if tok.deprel != "punct":
            break
        trailing.append(tok.index)
    for idx in trailing:
        owner = next(nid for nid, node in nodes.items() if idx in node.tokens)
        if owner != root_id:
            nodes[owner].tokens.remove(idx)
            nodes[root_id].tokens.append(idx)


def _number_segments(nodes: dict[int, _Node], parse: SentenceParse) -> SegmentForest:
    root_id = _root_node_id(nodes)

    depth: dict[int, int] = {}

    def depth_of(nid: int) -> int:
        if nid not in depth:
            node = nodes[nid]
            depth[nid] = 0 if node.parent is None else depth_of(node.parent) + 1
        return depth[nid]

    subtree_min: dict[int, int] = {}

    def min_of(nid: int) -> int:
        if nid not in subtree_min:
            node = nodes[nid]
            candidates = list(node.tokens)
            if node.cc_token is not None:
                candidates.append(node.cc_token)
            candidates.extend(min_of(c) for c in node.children)
            subtree_min[nid] = min(candidates)
        return subtree_min[nid]

    order = sorted(nodes, key=lambda nid: (min_of(nid), depth_of(nid)))
    new_id = {nid: i for i, nid in enumerate(order)}

    segments: dict[int, Segment] = {}
    for nid, node in nodes.items():
        segments[new_id[nid]] = Segment(
            id=new_id[nid],
            kind=node.kind,
            token_indices=tuple(sorted(node.tokens)),
            cc_token=node.cc_token,
            parent=None if node.parent is None else new_id[node.parent],
            removability=node.removability,
            children=tuple(sorted(new_id[c] for c in node.children)),
        )
    return SegmentForest(segments=segments, root_id=new_id[root_id], sentence=parse)


# --- customization ------------------------------------------------------------

def merge_branch(forest: SegmentForest, seg_id: int) -> SegmentForest:
    """Absorb all descendants of seg_id into it; reversible via expand_branch."""
    seg = forest.segment(seg_id)
    if seg.is_dummy:
        raise CannotMergeDummy(f"segment {seg_id} is a dummy; merge its parent branch instead")
    if not seg.children:
        log.warning("merge_branch(%d): segment is already a leaf; no-op", seg_id)
        return forest
    desc_ids = forest.descendants(seg_id)
    snapshot = (seg,) + tuple(forest.segments[d] for d in desc_ids)
    tokens = list(seg.token_indices)
    for d in desc_ids:
        node = forest.segments[d]
        tokens.extend(node.token_indices)
        if node.cc_token is not None:
            tokens.append(node.cc_token)
    merged = replace(seg, token_indices=tuple(sorted(tokens)), children=(), merged=True)
    segments = {sid: s for sid, s in forest.segments.items() if sid not in desc_ids}
    segments[seg_id] = merged
    history = dict(forest.merge_history)
    history[seg_id] = snapshot
    return SegmentForest(segments=segments, root_id=forest.root_id,
                         sentence=forest.sentence, merge_history=history)


def expand_branch(forest: SegmentForest, seg_id: int) -> SegmentForest:
    """Undo merge_branch(seg_id), restoring the exact prior branch."""
    forest.segment(seg_id)
    if seg_id not in forest.merge_history:
        raise NotMerged(f"segment {seg_id} has no recorded merge to expand")
    snapshot = forest.merge_history[seg_id]
    segments = dict(forest.segments)
    for seg in snapshot:
        segments[seg.id] = seg
    history = {k: v for k, v in forest.merge_history.items() if k != seg_id}
    return SegmentForest(segments=segments, root_id=forest.root_id,
                         sentence=forest.sentence, merge_history=history)


def configure_alternatives(forest: SegmentForest, seg_id: int, options: list[str]) -> SegmentForest:
    seg = forest.segment(seg_id)
    # the root backbone has no inclusion bit, so it cannot carry a choice slot either
    if seg.is_dummy or seg.children or seg_id == forest.root_id:
        raise NotALeaf(f"segment {seg_id} is not a leaf normal segment")
    segments = dict(forest.segments)
    segments[seg_id] = replace(seg, alternatives=tuple(options))
    return SegmentForest(segments=segments, root_id=forest.root_id,
                         sentence=forest.sentence, merge_history=dict(forest.merge_history))


_SUGGEST_PROMPT = (
    "The sentence is: {sentence}\n"
    "Propose replacements for the phrase \"{phrase}\".\n"
    "Reply with JSON only, in the form"
    " {{\"preserving\": [...], \"altering\": [...]}} where \"preserving\" holds up to 5"
    " rewordings that keep the meaning and \"altering\" holds up to 5 that change it."
)


def suggest_alternatives(forest: SegmentForest, seg_id: int, gateway) -> dict[str, list[str]]:
    """Ask the LLM for replacement candidates; suggestions are never auto-applied."""
    from .gateway import GatewayError

    seg = forest.segment(seg_id)
    if seg.is_dummy or seg.children:
        raise NotALeaf(f"segment {seg_id} is not a leaf normal segment")
    prompt = _SUGGEST_PROMPT.format(sentence=forest.sentence.original_text,
                                    phrase=forest.label(seg_id))
    try:
        raw = gateway.complete(prompt, sample_index=0)
    except GatewayError as exc:
        raise GatewayUnavailable(str(exc)) from exc
    start, end = raw.find("{"), raw.rfind("}")
    if start < 0 or end <= start:
        return {"preserving": [], "altering": []}
    try:
        obj = json.loads(raw[start:end + 1])
    except json.JSONDecodeError:
        return {"preserving": [], "altering": []}
    out = {}
    for key in ("preserving", "altering"):
        vals = obj.get(key, [])
        out[key] = [str(v) for v in vals if isinstance(v, (str, int, float))][:5]
    return out


# --- rendering and serialization ----------------------------------------------

def render_tree(forest: SegmentForest) -> str:
    """Indented tree printout for the CLI."""
    lines: list[str] = []

    def walk(seg_id: int, indent: int) -> None:
        seg = forest.segments[seg_id]
        marker = "*" if seg_id == forest.root_id else (
            "-" if seg.removability is Removability.REMOVABLE else "+")
        extra = " (merged)" if seg.merged else ""
        lines.append(f"{'  ' * indent}{marker} [{seg_id}] {forest.label(seg_id)}{extra}")
        for child in seg.children:
            walk(child, indent + 1)

    walk(forest.root_id, 0)
    return "\n".join(lines)


def forest_to_obj(forest: SegmentForest) -> dict:
    def seg_obj(seg: Segment) -> dict:
        return {
            "id": seg.id,
            "kind": seg.kind.value,
            "tokens": list(seg.token_indices),
            "cc_token": seg.cc_token,
            "parent": seg.parent,
            "removability": seg.removability.value,
            "children": list(seg.children),
            "alternatives": list(seg.alternatives),
            "merged": seg.merged,
        }

    return {
        "root_id": forest.root_id,
        "segments": [seg_obj(forest.segments[sid]) for sid in sorted(forest.segments)],
        "tokens": [
            {"index": t.index, "surface": t.surface, "head": t.head, "deprel": t.deprel,
             "space_after": t.space_after, "lemma": t.lemma, "upos": t.upos}
            for t in forest.sentence.tokens
        ],
        "merge_history": {
            str(sid): [seg_obj(s) for s in snapshot]
            for sid, snapshot in sorted(forest.merge_history.items())
        },
    }


def forest_from_obj(obj: dict) -> SegmentForest:
    def seg_from(d: dict) -> Segment:
        return Segment(
            id=d["id"],
            kind=SegmentKind(d["kind"]),
            token_indices=tuple(d["tokens"]),
            cc_token=d["cc_token"],
            parent=d["parent"],
            removability=Removability(d["removability"]),
            children=tuple(d["children"]),
            alternatives=tuple(d["alternatives"]),
            merged=d["merged"],
        )

    tokens = tuple(
        Token(index=t["index"], surface=t["surface"], head=t["head"], deprel=t["deprel"],
              space_after=t["space_after"], lemma=t.get("lemma", "_"), upos=t.get("upos", "_"))
        for t in obj["tokens"]
    )
    return SegmentForest(
        segments={d["id"]: seg_from(d) for d in obj["segments"]},
        root_id=obj["root_id"],
        sentence=SentenceParse.from_tokens(tokens),
        merge_history={int(k): tuple(seg_from(d) for d in v)
                       for k, v in obj.get("merge_history", {}).items()},
    )
