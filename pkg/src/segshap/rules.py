"""Removability classification of dependency relations, with a file-based rule table."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from importlib import resources


class Removability(enum.Enum):
    REMOVABLE = "removable"
    UNREMOVABLE = "unremovable"
    CONJUNCT = "conjunct"


class RuleTableError(Exception):
    pass


@dataclass(frozen=True)
class RuleTable:
    """deprel label -> class, with a mandatory default for unknown labels."""

    entries: dict[str, Removability]
    default: Removability

    def classify(self, deprel: str) -> Removability:
        return self.entries.get(deprel, self.default)


def parse_rules(text: str) -> RuleTable:
    """Parse `deprel = removable|unremovable|conjunct` lines; `#` comments; `default = ...` required."""
    entries: dict[str, Removability] = {}
    default: Removability | None = None
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RuleTableError(f"line {lineno}: expected 'label = class', got {raw!r}")
        label, _, value = (part.strip() for part in line.partition("="))
        try:
            cls = Removability(value)
        except ValueError as exc:
            raise RuleTableError(f"line {lineno}: unknown class {value!r}") from exc
        if label == "default":
            default = cls
        else:
            entries[label] = cls
    if default is None:
        raise RuleTableError("missing required 'default = ...' entry")
    if entries.get("conj", Removability.CONJUNCT) is not Removability.CONJUNCT:
        raise RuleTableError("'conj' must map to conjunct")
    return RuleTable(entries=entries, default=default)


def load_rules(path: str) -> RuleTable:
    with open(path, encoding="utf-8") as fh:
        return parse_rules(fh.read())


def default_rules() -> RuleTable:
    text = resources.files("segshap.data").joinpath("default_rules.txt").read_text(encoding="utf-8")
    return parse_rules(text)


def classify_relation(deprel: str, rules: RuleTable) -> Removability:
    return rules.classify(deprel)
