"""Frozen counterfactual listings for the fixture sentences.

tests/data/expected_counterfactuals.json pins, per sentence, either the full
set of realized strings or (where only the count is stable) the expected count.
"""

import json

import pytest

from segshap.engine import enumerate_valid, realize_text, validate_vector

from conftest import DATA, fixture_forest

EXPECTED = json.loads((DATA / "expected_counterfactuals.json").read_text())

SET_CASES = sorted(name for name, spec in EXPECTED.items() if "expected" in spec)
COUNT_CASES = sorted(name for name, spec in EXPECTED.items() if "expected_count" in spec)


@pytest.mark.parametrize("name", SET_CASES)
def test_realized_set_matches_listing(name):
    spec = EXPECTED[name]
    forest = fixture_forest(name)
    got = {realize_text(forest, v).text for v in enumerate_valid(forest)}
    assert got == set(spec["expected"])


@pytest.mark.parametrize("name", SET_CASES)
def test_prototype_is_among_counterfactuals(name):
    spec = EXPECTED[name]
    forest = fixture_forest(name)
    assert forest.sentence.original_text == spec["prototype"]
    assert spec["prototype"] in set(spec["expected"])


@pytest.mark.parametrize("name", COUNT_CASES)
def test_counted_listing_is_distinct_and_valid(name):
    spec = EXPECTED[name]
    forest = fixture_forest(name)
    vectors = enumerate_valid(forest)
    assert len(vectors) == spec["expected_count"]
    texts = [realize_text(forest, v).text for v in vectors]
    assert len(set(texts)) == spec["expected_count"]
    assert forest.sentence.original_text == spec["prototype"]
    assert spec["prototype"] in texts
    for vector in vectors:
        assert validate_vector(forest, vector)
