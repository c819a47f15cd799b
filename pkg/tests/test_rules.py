import pytest

from segshap.rules import (Removability, RuleTableError, classify_relation,
                           default_rules, parse_rules)


def test_default_table_core_relations(rules):
    assert rules.classify("amod") is Removability.REMOVABLE
    assert rules.classify("advmod") is Removability.REMOVABLE
    assert rules.classify("nsubj") is Removability.UNREMOVABLE
    assert rules.classify("aux") is Removability.UNREMOVABLE
    assert rules.classify("det") is Removability.UNREMOVABLE
    assert rules.classify("punct") is Removability.UNREMOVABLE
    assert rules.classify("conj") is Removability.CONJUNCT


def test_unknown_relation_falls_back_to_default(rules):
    assert rules.classify("dep:odd") is Removability.UNREMOVABLE
    assert rules.classify("") is Removability.UNREMOVABLE


def test_parse_rules_with_comments_and_default():
    table = parse_rules(
        "# comment\n"
        "amod = removable\n"
        "nsubj = unremovable\n"
        "conj = conjunct\n"
        "\n"
        "default = removable\n"
    )
    assert table.classify("amod") is Removability.REMOVABLE
    assert table.classify("whatever") is Removability.REMOVABLE


def test_missing_default_rejected():
    with pytest.raises(RuleTableError):
        parse_rules("amod = removable\n")


def test_bad_class_rejected():
    with pytest.raises(RuleTableError):
        parse_rules("amod = sometimes\ndefault = unremovable\n")


def test_malformed_line_rejected():
    with pytest.raises(RuleTableError):
        parse_rules("amod removable\ndefault = unremovable\n")


def test_conj_must_stay_conjunct():
    with pytest.raises(RuleTableError):
        parse_rules("conj = removable\ndefault = unremovable\n")


def test_classify_relation_helper(rules):
    assert classify_relation("appos", rules) is Removability.REMOVABLE
