"""Grouping, distribution, filtering, and text-annotation analytics over run results.

group_by partitions counterfactuals by the inclusion pattern of selected segments
and reports, per group, Tukey boxplot statistics of the outcomes plus the set of
other segments whose inclusion is forced by the validity rules given the pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rules import Removability
from .segmenter import SegmentForest, UnknownSegment


class AnalysisError(Exception):
    pass


class EmptyInput(AnalysisError):
    pass


@dataclass(frozen=True)
class RunRow:
    cf_id: int
    bits: tuple[int, ...]
    choices: tuple[int, ...]
    text: str
    word_count: int
    outcome: float


@dataclass(frozen=True)
class BoxplotStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    whisker_low: float      # most extreme points within 1.5*IQR of the quartiles
    whisker_high: float
    outlier_ids: tuple[int, ...]

    def to_obj(self) -> dict:
        return {
            "min": self.minimum,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.maximum,
            "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high,
            "outlier_ids": list(self.outlier_ids),
        }


def boxplot_stats(values: list[float], ids: list[int] | None = None) -> BoxplotStats:
    if not values:
        raise EmptyInput("no values to summarize")
    if ids is None:
        ids = list(range(len(values)))
    if len(ids) != len(values):
        raise AnalysisError("ids and values must align")
    arr = np.asarray(values, dtype=float)
    q1, median, q3 = (float(q) for q in np.percentile(arr, [25, 50, 75]))
    iqr = q3 - q1
    low_fence, high_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inliers = arr[(arr >= low_fence) & (arr <= high_fence)]
    outliers = tuple(i for i, v in zip(ids, arr) if v < low_fence or v > high_fence)
    return BoxplotStats(
        minimum=float(arr.min()),
        q1=q1,
        median=median,
        q3=q3,
        maximum=float(arr.max()),
        whisker_low=float(inliers.min()),
        whisker_high=float(inliers.max()),
        outlier_ids=outliers,
    )


def deduce_states(forest: SegmentForest, pattern: dict[int, bool]) -> dict[int, bool] | None:
    """Close a partial inclusion assignment under the validity rules.

    Returns the forced states (root included plus everything implied by the
    pattern), or None when the pattern contradicts the rules and no valid
    counterfactual can match it.
    """
    state: dict[int, bool] = {forest.root_id: True}

    class _Contradiction(Exception):
        pass

    def assign(sid: int, value: bool) -> bool:
        if sid in state:
            if state[sid] != value:
                raise _Contradiction
            return False
        state[sid] = value
        return True

    try:
        for sid, value in pattern.items():
            forest.segment(sid)
            assign(sid, value)
        changed = True
        while changed:
            changed = False
            for sid, seg in forest.segments.items():
                value = state.get(sid)
                if value is True:
                    if seg.parent is not None:
                        changed |= assign(seg.parent, True)
                    for cid in seg.children:
                        child = forest.segment(cid)
                        if child.removability is Removability.UNREMOVABLE:
                            changed |= assign(cid, True)
                    if seg.is_dummy:
                        undecided = [c for c in seg.children if c not in state]
                        included = [c for c in seg.children if state.get(c) is True]
                        if not included:
                            if not undecided:
                                raise _Contradiction
                            if len(undecided) == 1:
                                changed |= assign(undecided[0], True)
                elif value is False:
                    for cid in seg.children:
                        changed |= assign(cid, False)
                    parent = seg.parent
                    if parent is not None and seg.removability is Removability.UNREMOVABLE:
                        changed |= assign(parent, False)
                if seg.is_dummy and sid not in state and seg.children and all(
                        state.get(c) is False for c in seg.children):
                    changed |= assign(sid, False)
    except _Contradiction:
        return None
    return state


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    state: str      # Included | Excluded | Varies

    def to_obj(self) -> dict:
        return {"start": self.start, "end": self.end, "state": self.state}


def annotate_text(forest: SegmentForest, states: dict[int, bool]) -> list[Span]:
    """Character spans of the prototype coloured by forced inclusion state.

    Each contiguous token run of a segment becomes one span; segments absent
    from the forced states are marked Varies.
    """
    char_spans = forest.sentence.char_spans()
    spans: list[Span] = []
    for sid, seg in forest.segments.items():
        if seg.merged:
            continue
        if sid in states:
            label = "Included" if states[sid] else "Excluded"
        else:
            label = "Varies"
        positions = sorted(set(seg.token_indices)
                           | ({seg.cc_token} if seg.cc_token else set()))
        run_start = prev = None
        for pos in positions:
            if prev is not None and pos == prev + 1:
                prev = pos
                continue
            if run_start is not None:
                spans.append(Span(char_spans[run_start - 1][0],
                                  char_spans[prev - 1][1], label))
            run_start = prev = pos
        if run_start is not None:
            spans.append(Span(char_spans[run_start - 1][0],
                              char_spans[prev - 1][1], label))
    return sorted(spans, key=lambda s: (s.start, s.end))


@dataclass(frozen=True)
class GroupSummary:
    selection: tuple[int, ...]
    pattern: tuple[bool, ...]          # aligned with selection
    member_cf_ids: tuple[int, ...]
    stats: BoxplotStats
    influenced_segments: tuple[int, ...]   # non-selected segments forced by the pattern
    spans: tuple[Span, ...]

    def to_obj(self) -> dict:
        return {
            "selection": list(self.selection),
            "pattern": ["Included" if b else "Excluded" for b in self.pattern],
            "member_cf_ids": list(self.member_cf_ids),
            "stats": self.stats.to_obj(),
            "influenced_segments": list(self.influenced_segments),
            "spans": [s.to_obj() for s in self.spans],
        }


def group_by(rows: list[RunRow], forest: SegmentForest,
             selection: list[int]) -> list[GroupSummary]:
    """Partition rows by the inclusion pattern of the selected segments."""
    if not rows:
        raise EmptyInput("no rows to group")
    if not selection:
        raise AnalysisError("selection must name at least one segment")
    variable_ids = forest.variable_ids
    index_of = {sid: i for i, sid in enumerate(variable_ids)}
    for sid in selection:
        forest.segment(sid)
        if sid not in index_of:
            raise UnknownSegment(f"segment {sid} has no inclusion bit")

    buckets: dict[tuple[bool, ...], list[RunRow]] = {}
    for row in rows:
        key = tuple(bool(row.bits[index_of[sid]]) for sid in selection)
        buckets.setdefault(key, []).append(row)

    summaries = []
    for pattern in sorted(buckets, reverse=True):
        members = buckets[pattern]
        stats = boxplot_stats([r.outcome for r in members], [r.cf_id for r in members])
        forced = deduce_states(forest, dict(zip(selection, pattern)))
        assert forced is not None  # the pattern occurs in valid rows
        influenced = tuple(sorted(
            sid for sid in forced
            if sid not in selection and sid != forest.root_id))
        spans = tuple(annotate_text(forest, forced))
        summaries.append(GroupSummary(
            selection=tuple(selection),
            pattern=pattern,
            member_cf_ids=tuple(r.cf_id for r in members),
            stats=stats,
            influenced_segments=influenced,
            spans=spans,
        ))
    return summaries


@dataclass(frozen=True)
class FilterSpec:
    outcome_min: float | None = None        # inclusive
    outcome_max: float | None = None        # exclusive, so ranges can tile
    word_count_min: int | None = None       # inclusive
    word_count_max: int | None = None       # inclusive
    required: dict[int, bool] = field(default_factory=dict)  # segment id -> included
    sort_key: str | None = None             # outcome | word_count
    descending: bool = False


def filter_sort(rows: list[RunRow], spec: FilterSpec,
                forest: SegmentForest | None = None) -> list[RunRow]:
    """Filter rows by outcome/word-count windows and inclusion requirements,
    then stable-sort by the requested key."""
    index_of = {}
    if spec.required:
        if forest is None:
            raise AnalysisError("inclusion requirements need the forest")
        index_of = {sid: i for i, sid in enumerate(forest.variable_ids)}
        for sid in spec.required:
            if sid not in index_of:
                raise UnknownSegment(f"segment {sid} has no inclusion bit")

    def keep(row: RunRow) -> bool:
        if spec.outcome_min is not None and row.outcome < spec.outcome_min:
            return False
        if spec.outcome_max is not None and row.outcome >= spec.outcome_max:
            return False
        if spec.word_count_min is not None and row.word_count < spec.word_count_min:
            return False
        if spec.word_count_max is not None and row.word_count > spec.word_count_max:
            return False
        for sid, wanted in spec.required.items():
            if bool(row.bits[index_of[sid]]) != wanted:
                return False
        return True

    kept = [row for row in rows if keep(row)]
    if spec.sort_key is not None:
        if spec.sort_key not in ("outcome", "word_count"):
            raise AnalysisError(f"unknown sort key {spec.sort_key!r}")
        kept.sort(key=lambda r: getattr(r, spec.sort_key), reverse=spec.descending)
    return kept
