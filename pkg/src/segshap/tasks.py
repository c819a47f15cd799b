"""Task lifecycle: storage, multi-sentence composition, and run execution.

A task wraps a prototype document (one or more parsed sentences), a prompt
template with a single {input} slot, and a set of evaluators. Pinned sentences
are excluded from segmentation and appear verbatim in every counterfactual.
Run artifacts are written as canonical JSON so identical configurations yield
byte-identical files; only status.json carries timestamps.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from . import engine
from .attribution import AttributionError, build_problem, result_to_obj, solve
from .conllu import SentenceParse, parse_conllu
from .engine import CapExceeded, CounterfactualVector
from .evaluator import AllFailed, Evaluator, Operator, apply_evaluator
from .gateway import Gateway
from .rules import RuleTable, default_rules
from .segmenter import (SegmentForest, build_forest, configure_alternatives,
                        expand_branch, forest_from_obj, forest_to_obj, merge_branch)


class TaskError(Exception):
    pass


class TemplateInvalid(TaskError):
    pass


class UnknownTask(TaskError):
    pass


class UnknownRun(TaskError):
    pass


class ActiveRun(TaskError):
    pass


# --- canonical serialization ------------------------------------------------------

def canon_dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_canon(path: Path, obj) -> None:
    atomic_write(path, canon_dumps(obj) + "\n")


def write_jsonl(path: Path, rows: list[dict]) -> None:
    atomic_write(path, "".join(canon_dumps(row) + "\n" for row in rows))


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# --- task model -------------------------------------------------------------------

def validate_template(template: str) -> None:
    count = template.count("{input}")
    if count != 1:
        raise TemplateInvalid(
            f"template must contain exactly one {{input}} placeholder, found {count}")


@dataclass(frozen=True)
class TaskSentence:
    index: int
    parse: SentenceParse
    pinned: bool
    forest: SegmentForest | None    # None when pinned

    @property
    def text(self) -> str:
        return self.parse.original_text


@dataclass(frozen=True)
class Task:
    task_id: str
    template: str
    evaluators: tuple[Evaluator, ...]
    pinned_spans: tuple[tuple[int, int], ...]
    sentences: tuple[TaskSentence, ...]
    created_at: str = ""

    @property
    def prototype_text(self) -> str:
        return " ".join(s.text for s in self.sentences)


def sentence_offsets(sentences: tuple[TaskSentence, ...]) -> list[tuple[int, int]]:
    """Character range of each sentence inside the space-joined document."""
    spans, pos = [], 0
    for s in sentences:
        spans.append((pos, pos + len(s.text)))
        pos += len(s.text) + 1
    return spans


def _intersects(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def create_task(conllu_text: str, template: str, evaluators: list[Evaluator],
                pinned_spans: list[tuple[int, int]] | None = None,
                rules: RuleTable | None = None, task_id: str | None = None) -> Task:
    """Parse the document, pin any sentence touched by a pinned span, and
    segment the rest."""
    validate_template(template)
    if not evaluators:
        raise TaskError("a task needs at least one evaluator")
    parses, errors = parse_conllu(conllu_text)
    if errors:
        raise TaskError(f"block {errors[0].block_index}: {errors[0].error}")
    if not parses:
        raise TaskError("document contains no sentences")
    rules = rules or default_rules()
    pinned_spans = [tuple(span) for span in (pinned_spans or [])]

    texts = [p.original_text for p in parses]
    offsets, pos = [], 0
    for text in texts:
        offsets.append((pos, pos + len(text)))
        pos += len(text) + 1
    sentences = []
    for i, parse in enumerate(parses):
        pinned = any(_intersects(offsets[i], span) for span in pinned_spans)
        forest = None if pinned else build_forest(parse, rules)
        sentences.append(TaskSentence(index=i, parse=parse, pinned=pinned, forest=forest))
    if all(s.pinned for s in sentences):
        raise TaskError("every sentence is pinned; nothing to segment")
    return Task(
        task_id=task_id or uuid.uuid4().hex[:12],
        template=template,
        evaluators=tuple(evaluators),
        pinned_spans=tuple(pinned_spans),
        sentences=tuple(sentences),
        created_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )


# --- global segment addressing -----------------------------------------------------

@dataclass(frozen=True)
class SegmentRef:
    sentence: int
    local_id: int
    global_id: int


class TaskSpace:
    """Product of the per-sentence counterfactual spaces, in sentence order.

    Global segment ids are the local ids shifted by a per-sentence base so the
    single-sentence case keeps its local numbering.
    """

    def __init__(self, sentences: tuple[TaskSentence, ...]):
        self.sentences = tuple(sentences)
        self.parts: list[tuple[TaskSentence, engine._Space]] = []
        self.bases: dict[int, int] = {}
        base = 0
        for sentence in self.sentences:
            if sentence.forest is None:
                continue
            self.bases[sentence.index] = base
            self.parts.append((sentence, engine._Space(sentence.forest)))
            base += max(sentence.forest.segments) + 1
        self.total = 1
        for _, space in self.parts:
            self.total *= space.total

    @property
    def m(self) -> int:
        return sum(len(space.var_ids) for _, space in self.parts)

    def variable_ids(self) -> list[int]:
        out = []
        for sentence, space in self.parts:
            base = self.bases[sentence.index]
            out.extend(base + sid for sid in space.var_ids)
        return out

    def refs(self) -> list[SegmentRef]:
        out = []
        for sentence, _ in self.parts:
            base = self.bases[sentence.index]
            for sid in sorted(sentence.forest.segments):
                out.append(SegmentRef(sentence.index, sid, base + sid))
        return out

    def locate(self, global_id: int) -> SegmentRef:
        for ref in self.refs():
            if ref.global_id == global_id:
                return ref
        raise TaskError(f"unknown segment id {global_id}")

    def _split(self, vector: CounterfactualVector) -> list[CounterfactualVector]:
        parts, at = [], 0
        for _, space in self.parts:
            width = len(space.var_ids)
            parts.append(CounterfactualVector(
                bits=vector.bits[at:at + width],
                choices=vector.choices[at:at + width]))
            at += width
        if at != len(vector.bits):
            raise engine.InvalidVector(
                f"vector has {len(vector.bits)} bits, expected {at}")
        return parts

    def _join(self, parts: list[CounterfactualVector]) -> CounterfactualVector:
        bits: tuple[int, ...] = ()
        choices: tuple[int, ...] = ()
        for part in parts:
            bits += part.bits
            choices += part.choices
        return CounterfactualVector(bits=bits, choices=choices)

    def identity(self) -> CounterfactualVector:
        return CounterfactualVector(bits=(1,) * self.m, choices=(0,) * self.m)

    def unrank(self, rank: int) -> CounterfactualVector:
        parts = []
        for _, space in reversed(self.parts):
            rank, digit = divmod(rank, space.total)
            parts.append(space.unrank(digit))
        return self._join(list(reversed(parts)))

    def enumerate(self, cap: int) -> list[CounterfactualVector]:
        if self.total > cap:
            raise CapExceeded(f"{self.total} valid vectors exceed cap {cap}")
        vectors = [self.unrank(r) for r in range(self.total)]
        vectors.sort(key=lambda v: (v.bits, v.choices))
        return vectors

    def sample(self, k: int, seed: int) -> list[CounterfactualVector]:
        import random
        if k >= self.total:
            return self.enumerate(cap=self.total)
        rng = random.Random(seed)
        if self.total <= 2 ** 62:
            ranks = sorted(rng.sample(range(self.total), k))
        else:
            picked: set[int] = set()
            while len(picked) < k:
                picked.add(rng.randrange(self.total))
            ranks = sorted(picked)
        return [self.unrank(r) for r in ranks]

    def realize(self, vector: CounterfactualVector) -> engine.Counterfactual:
        parts = self._split(vector)
        texts, at = [], 0
        for sentence in self.sentences:
            if sentence.forest is None:
                texts.append(sentence.text)
            else:
                texts.append(engine.realize_text(sentence.forest, parts[at]).text)
                at += 1
        text = " ".join(t for t in texts if t)
        return engine.Counterfactual(vector=vector, text=text,
                                     word_count=len(text.split()))


def apply_segment_action(task: Task, action: str, global_id: int,
                         options: list[str] | None = None) -> Task:
    """PATCH-style edit: merge, expand, or set_alternatives on one segment."""
    space = TaskSpace(task.sentences)
    ref = space.locate(global_id)
    sentence = task.sentences[ref.sentence]
    if action == "merge":
        forest = merge_branch(sentence.forest, ref.local_id)
    elif action == "expand":
        forest = expand_branch(sentence.forest, ref.local_id)
    elif action == "set_alternatives":
        forest = configure_alternatives(sentence.forest, ref.local_id, options or [])
    else:
        raise TaskError(f"unknown segment action {action!r}")
    sentences = list(task.sentences)
    sentences[ref.sentence] = replace(sentence, forest=forest)
    return replace(task, sentences=tuple(sentences))


# --- storage ----------------------------------------------------------------------

def evaluator_to_obj(ev: Evaluator) -> dict:
    return {"operator": ev.operator.value, "argument": ev.argument, "name": ev.name}


def evaluator_from_obj(obj: dict) -> Evaluator:
    return Evaluator(operator=Operator(obj["operator"]), argument=obj["argument"],
                     name=obj.get("name", ""))


def task_to_obj(task: Task) -> dict:
    return {
        "v": 1,
        "task_id": task.task_id,
        "template": task.template,
        "evaluators": [evaluator_to_obj(e) for e in task.evaluators],
        "pinned_spans": [list(span) for span in task.pinned_spans],
        "created_at": task.created_at,
        "sentences": [
            {
                "index": s.index,
                "pinned": s.pinned,
                "text": s.text,
                "forest": None if s.forest is None else forest_to_obj(s.forest),
                "tokens": None if s.forest is not None else [
                    {"index": t.index, "surface": t.surface, "head": t.head,
                     "deprel": t.deprel, "space_after": t.space_after,
                     "lemma": t.lemma, "upos": t.upos}
                    for t in s.parse.tokens
                ],
            }
            for s in task.sentences
        ],
    }


def task_from_obj(obj: dict) -> Task:
    from .conllu import Token
    sentences = []
    for s in obj["sentences"]:
        if s["forest"] is not None:
            forest = forest_from_obj(s["forest"])
            parse = forest.sentence
        else:
            forest = None
            tokens = tuple(
                Token(index=t["index"], surface=t["surface"], head=t["head"],
                      deprel=t["deprel"], space_after=t["space_after"],
                      lemma=t.get("lemma", "_"), upos=t.get("upos", "_"))
                for t in s["tokens"])
            parse = SentenceParse.from_tokens(tokens)
        sentences.append(TaskSentence(index=s["index"], parse=parse,
                                      pinned=s["pinned"], forest=forest))
    return Task(
        task_id=obj["task_id"],
        template=obj["template"],
        evaluators=tuple(evaluator_from_obj(e) for e in obj["evaluators"]),
        pinned_spans=tuple(tuple(span) for span in obj["pinned_spans"]),
        sentences=tuple(sentences),
        created_at=obj.get("created_at", ""),
    )


class Storage:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "tasks").mkdir(parents=True, exist_ok=True)

    def task_dir(self, task_id: str) -> Path:
        return self.root / "tasks" / task_id

    def run_dir(self, task_id: str, run_id: str) -> Path:
        return self.task_dir(task_id) / "runs" / run_id

    def save_task(self, task: Task) -> None:
        path = self.task_dir(task.task_id) / "task.json"
        atomic_write(path, json.dumps(task_to_obj(task), ensure_ascii=False,
                                      sort_keys=True, indent=2) + "\n")

    def load_task(self, task_id: str) -> Task:
        path = self.task_dir(task_id) / "task.json"
        if not path.exists():
            raise UnknownTask(f"no task {task_id}")
        return task_from_obj(json.loads(path.read_text(encoding="utf-8")))

    def list_tasks(self) -> list[str]:
        return sorted(p.name for p in (self.root / "tasks").iterdir()
                      if (p / "task.json").exists())

    def list_runs(self, task_id: str) -> list[str]:
        runs = self.task_dir(task_id) / "runs"
        if not runs.exists():
            return []
        return sorted(p.name for p in runs.iterdir() if p.is_dir())

    def find_run(self, run_id: str) -> tuple[str, Path]:
        for task_id in self.list_tasks():
            run_dir = self.run_dir(task_id, run_id)
            if run_dir.exists():
                return task_id, run_dir
        raise UnknownRun(f"no run {run_id}")

    def read_status(self, run_dir: Path) -> dict:
        path = run_dir / "status.json"
        if not path.exists():
            raise UnknownRun(f"missing status for {run_dir.name}")
        return json.loads(path.read_text(encoding="utf-8"))


# --- run execution -----------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    model: str
    n: int = 5
    seed: int = 0
    cap: int = 4096
    sample: int = 512
    temperature: float | None = None
    max_tokens: int | None = None


def write_status(run_dir: Path, state: str, progress: float = 0.0,
                 error: str | None = None, run_id: str | None = None) -> None:
    atomic_write(run_dir / "status.json", canon_dumps({
        "state": state,
        "progress": round(progress, 4),
        "error": error,
        "run_id": run_id or run_dir.name,
        "updated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }) + "\n")


def execute_run(task: Task, run_dir: Path, gateway: Gateway, config: RunConfig,
                on_progress: Callable[[float], None] | None = None) -> None:
    """Generate, query, score, and attribute; writes all artifacts under run_dir.

    Raises nothing: failures are recorded in status.json so pollers can see them.
    """
    run_dir.mkdir(parents=True, exist_ok=True)
    try:
        write_status(run_dir, "running", 0.0)
        space = TaskSpace(task.sentences)
        write_canon(run_dir / "config.json", {
            "v": 1,
            "model": config.model,
            "n": config.n,
            "seed": config.seed,
            "cap": config.cap,
            "sample": config.sample,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
            "template": task.template,
            "evaluators": [evaluator_to_obj(e) for e in task.evaluators],
            "m": space.m,
            "segment_ids": space.variable_ids(),
            "pinned_spans": [list(s) for s in task.pinned_spans],
        })

        if space.total <= config.cap:
            vectors = space.enumerate(config.cap)
        else:
            vectors = space.sample(config.sample, config.seed)
            identity = space.identity()
            if identity not in vectors:
                vectors.append(identity)
                vectors.sort(key=lambda v: (v.bits, v.choices))

        counterfactuals = [space.realize(v) for v in vectors]
        rows = [
            {
                "id": i,
                "bits": cf.vector.bits_string(),
                "choices": list(cf.vector.choices),
                "text": cf.text,
                "word_count": cf.word_count,
            }
            for i, cf in enumerate(counterfactuals)
        ]
        write_jsonl(run_dir / "counterfactuals.jsonl", rows)
        write_status(run_dir, "running", 0.2)
        if on_progress:
            on_progress(0.2)

        items = [
            (task.template.replace("{input}", cf.text), s)
            for cf in counterfactuals
            for s in range(config.n)
        ]
        outcomes = gateway.batch_complete(items, temperature=config.temperature,
                                          max_tokens=config.max_tokens)
        responses = [
            [outcomes[i * config.n + s].text for s in range(config.n)]
            for i in range(len(counterfactuals))
        ]
        write_status(run_dir, "running", 0.7)
        if on_progress:
            on_progress(0.7)

        any_scored = False
        for k, ev in enumerate(task.evaluators):
            out_rows = []
            scored: list[tuple[tuple[int, ...], float]] = []
            for i, cf in enumerate(counterfactuals):
                try:
                    record = apply_evaluator(ev, responses[i], cf_id=i, llm=gateway)
                except AllFailed:
                    out_rows.append({"cf_id": i, "error": "AllFailed",
                                     "n_requested": config.n, "n_effective": 0,
                                     "raw_responses": responses[i]})
                    continue
                out_rows.append(record.to_obj())
                scored.append((cf.vector.bits, record.outcome))
            write_jsonl(run_dir / f"outcomes-{k}.jsonl", out_rows)
            if scored:
                any_scored = True
            try:
                problem = build_problem(scored, space.m)
                result = solve(problem)
                obj = result_to_obj(result, space.variable_ids())
            except AttributionError as exc:
                obj = {"error": {"code": type(exc).__name__, "message": str(exc)}}
            write_canon(run_dir / f"shap-{k}.json", obj)

        if not any_scored:
            write_status(run_dir, "failed", 1.0, error="all counterfactuals failed")
        else:
            write_status(run_dir, "done", 1.0)
        if on_progress:
            on_progress(1.0)
    except Exception as exc:
        write_status(run_dir, "failed", 1.0, error=f"{type(exc).__name__}: {exc}")


def group_rows(task: Task, rows: list, selection: list[int]) -> list[dict]:
    """group_by over run rows with document-level segment ids and char spans.

    Influence deduction and annotation run per sentence on that sentence's slice
    of the pattern; spans come back in document coordinates, pinned sentences
    always marked Included.
    """
    from . import analysis

    if not rows:
        raise analysis.EmptyInput("no rows to group")
    if not selection:
        raise analysis.AnalysisError("selection must name at least one segment")
    space = TaskSpace(task.sentences)
    variable_ids = space.variable_ids()
    index_of = {gid: i for i, gid in enumerate(variable_ids)}
    for gid in selection:
        if gid not in index_of:
            raise analysis.AnalysisError(f"segment {gid} has no inclusion bit")

    doc_offsets = sentence_offsets(task.sentences)
    buckets: dict[tuple[bool, ...], list] = {}
    for row in rows:
        key = tuple(bool(row.bits[index_of[gid]]) for gid in selection)
        buckets.setdefault(key, []).append(row)

    groups = []
    for pattern in sorted(buckets, reverse=True):
        members = buckets[pattern]
        stats = analysis.boxplot_stats([r.outcome for r in members],
                                       [r.cf_id for r in members])
        influenced: list[int] = []
        spans: list[dict] = []
        for sentence, _ in space.parts:
            base = space.bases[sentence.index]
            local_pattern = {
                gid - base: value
                for gid, value in zip(selection, pattern)
                if space.locate(gid).sentence == sentence.index
            }
            forced = analysis.deduce_states(sentence.forest, local_pattern) or {}
            influenced.extend(
                base + sid for sid in forced
                if sid != sentence.forest.root_id and (base + sid) not in selection)
            start = doc_offsets[sentence.index][0]
            for span in analysis.annotate_text(sentence.forest, forced):
                spans.append({"start": span.start + start, "end": span.end + start,
                              "state": span.state})
        for sentence in task.sentences:
            if sentence.pinned:
                lo, hi = doc_offsets[sentence.index]
                spans.append({"start": lo, "end": hi, "state": "Included"})
        spans.sort(key=lambda s: (s["start"], s["end"]))
        groups.append({
            "selection": list(selection),
            "pattern": ["Included" if b else "Excluded" for b in pattern],
            "member_cf_ids": [r.cf_id for r in members],
            "stats": stats.to_obj(),
            "influenced_segments": sorted(influenced),
            "spans": spans,
        })
    return groups


ARTIFACT_NAMES = ("config.json", "counterfactuals.jsonl")


def run_artifacts(run_dir: Path) -> list[Path]:
    """The byte-deterministic artifact set for a completed run."""
    names = list(ARTIFACT_NAMES)
    names.extend(sorted(p.name for p in run_dir.glob("outcomes-*.jsonl")))
    names.extend(sorted(p.name for p in run_dir.glob("shap-*.json")))
    return [run_dir / name for name in names]
