import random

import pytest

from segshap.conllu import parse_conllu
from segshap.rules import Removability, default_rules
from segshap.segmenter import (CannotMergeDummy, NotALeaf, NotMerged, SegmentKind,
                               UnknownSegment, build_forest, configure_alternatives,
                               expand_branch, forest_from_obj, forest_to_obj,
                               merge_branch, render_tree)

from conftest import fixture_forest, load_fixture, random_forest


def all_token_positions(forest):
    out = []
    for seg in forest.segments.values():
        if seg.merged:
            continue
        out.extend(seg.token_indices)
        if seg.cc_token is not None:
            out.append(seg.cc_token)
    return sorted(out)


def test_walkthrough_sentence_has_seven_components():
    forest = fixture_forest("patient_report")
    assert len(forest.segments) == 7
    labels = {sid: forest.label(sid) for sid in forest.segments}
    assert labels[forest.root_id] == "The patient reports ."
    assert "[and]" in labels.values()
    dummy = next(s for s in forest.segments.values() if s.is_dummy)
    assert len(dummy.children) == 2
    assert dummy.removability is Removability.UNREMOVABLE
    for child_id in dummy.children:
        assert forest.segments[child_id].removability is Removability.REMOVABLE


def test_segment_ids_start_at_root_zero():
    forest = fixture_forest("patient_report")
    assert forest.root_id == 0
    assert sorted(forest.segments) == list(range(len(forest.segments)))


def test_no_conjunction_yields_no_dummy():
    forest = fixture_forest("medqa_01")
    assert all(not seg.is_dummy for seg in forest.segments.values())


def test_three_way_coordination_single_dummy():
    doc = (
        "1\tAnn\tAnn\tPROPN\t_\t_\t0\troot\t_\t_\n"
        "2\t,\t,\tPUNCT\t_\t_\t3\tpunct\t_\tSpaceAfter=No\n"
        "3\tBen\tBen\tPROPN\t_\t_\t1\tconj\t_\t_\n"
        "4\tand\tand\tCCONJ\t_\t_\t5\tcc\t_\t_\n"
        "5\tCal\tCal\tPROPN\t_\t_\t1\tconj\t_\t_\n"
    )
    parses, errors = parse_conllu(doc)
    assert not errors
    forest = build_forest(parses[0], default_rules())
    dummies = [s for s in forest.segments.values() if s.is_dummy]
    assert len(dummies) == 1
    assert len(dummies[0].children) == 3


def test_chained_conj_style_clusters_like_flat():
    # spaCy-style chains attach each conjunct to the previous one
    doc = (
        "1\tAnn\tAnn\tPROPN\t_\t_\t0\troot\t_\t_\n"
        "2\tBen\tBen\tPROPN\t_\t_\t1\tconj\t_\t_\n"
        "3\tand\tand\tCCONJ\t_\t_\t4\tcc\t_\t_\n"
        "4\tCal\tCal\tPROPN\t_\t_\t2\tconj\t_\t_\n"
    )
    parses, _ = parse_conllu(doc)
    forest = build_forest(parses[0], default_rules())
    dummies = [s for s in forest.segments.values() if s.is_dummy]
    assert len(dummies) == 1
    assert len(dummies[0].children) == 3


def test_tokens_are_conserved(rules):
    for name in ("patient_report", "medqa_01", "billsum_01", "multinews_01", "tinytb_02"):
        forest = fixture_forest(name)
        n = len(forest.sentence.tokens)
        assert all_token_positions(forest) == list(range(1, n + 1))


def test_single_word_sentence_has_only_root():
    doc = "1\tGo\tgo\tVERB\t_\t_\t0\troot\t_\tSpaceAfter=No\n"
    parses, _ = parse_conllu(doc)
    forest = build_forest(parses[0], default_rules())
    assert forest.m == 0
    assert forest.variable_ids == ()


def test_unremovable_chain_collapses_into_root():
    forest = fixture_forest("tinytb_01")
    # "There are things ..." root absorbs existential subject and auxiliaries
    root = forest.segments[forest.root_id]
    assert len(root.token_indices) >= 2


def test_trailing_punctuation_stays_with_root():
    forest = fixture_forest("multinews_01")
    n = len(forest.sentence.tokens)
    assert n in forest.segments[forest.root_id].token_indices


def test_build_is_deterministic():
    a = fixture_forest("billsum_01")
    b = fixture_forest("billsum_01")
    assert forest_to_obj(a) == forest_to_obj(b)


def test_merge_then_expand_restores_forest():
    forest = fixture_forest("billsum_01")
    target = next(sid for sid, seg in forest.segments.items()
                  if seg.children and not seg.is_dummy and sid != forest.root_id)
    before = forest_to_obj(forest)
    merged = merge_branch(forest, target)
    assert merged.segments[target].merged
    assert not merged.segments[target].children
    assert len(merged.segments) < len(forest.segments)
    restored = expand_branch(merged, target)
    assert forest_to_obj(restored) == before


def test_merge_leaf_is_noop():
    forest = fixture_forest("patient_report")
    leaf = next(sid for sid, seg in forest.segments.items()
                if not seg.children and not seg.is_dummy)
    assert merge_branch(forest, leaf) is forest


def test_merge_dummy_rejected():
    forest = fixture_forest("patient_report")
    dummy = next(sid for sid, seg in forest.segments.items() if seg.is_dummy)
    with pytest.raises(CannotMergeDummy):
        merge_branch(forest, dummy)


def test_expand_without_merge_rejected():
    forest = fixture_forest("patient_report")
    with pytest.raises(NotMerged):
        expand_branch(forest, 2)


def test_unknown_segment_rejected():
    forest = fixture_forest("patient_report")
    with pytest.raises(UnknownSegment):
        forest.segment(99)


def test_alternatives_only_on_normal_leaves():
    forest = fixture_forest("patient_report")
    dummy = next(sid for sid, seg in forest.segments.items() if seg.is_dummy)
    leaf = next(sid for sid, seg in forest.segments.items()
                if not seg.children and not seg.is_dummy and sid != forest.root_id)
    configured = configure_alternatives(forest, leaf, ["mild", "severe"])
    assert configured.segments[leaf].alternatives == ("mild", "severe")
    with pytest.raises(NotALeaf):
        configure_alternatives(forest, dummy, ["x"])
    with pytest.raises(NotALeaf):
        configure_alternatives(forest, forest.root_id, ["x"])


def test_render_tree_marks_kinds():
    text = render_tree(fixture_forest("patient_report"))
    assert text.splitlines()[0].startswith("* [0]")
    assert "[and]" in text
    assert "- [" in text  # at least one removable branch


def test_forest_obj_roundtrip():
    forest = fixture_forest("billsum_01")
    merged = merge_branch(forest, next(
        sid for sid, seg in forest.segments.items()
        if seg.children and not seg.is_dummy and sid != forest.root_id))
    obj = forest_to_obj(merged)
    back = forest_from_obj(obj)
    assert forest_to_obj(back) == obj
    assert back.sentence.original_text == merged.sentence.original_text


def test_random_forests_have_consistent_structure():
    rng = random.Random(7)
    for _ in range(50):
        forest = random_forest(rng, max_segments=9, with_alternatives=True)
        for sid, seg in forest.segments.items():
            if seg.parent is not None:
                assert sid in forest.segments[seg.parent].children
            for child in seg.children:
                assert forest.segments[child].parent == sid
            if seg.is_dummy:
                assert len(seg.children) >= 2
                assert seg.removability is Removability.UNREMOVABLE
