"""REST service exposing tasks, runs, and result analytics under /api/v1.

Runs execute on a background thread and are polled via their status endpoint.
Each task allows one active run at a time; completed runs are append-only.
All error responses carry {"code": ..., "message": ...}.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import analysis, tasks
from .conllu import ConlluError, ParseProviderUnavailable, fetch_parse
from .engine import EngineError
from .evaluator import Evaluator, EvaluatorError, Operator
from .gateway import Gateway
from .rules import RuleTable, RuleTableError
from .segmenter import SegmentError, UnknownSegment, render_tree

_STATUS_BY_ERROR = [
    (tasks.UnknownTask, 404),
    (tasks.UnknownRun, 404),
    (UnknownSegment, 404),
    (tasks.ActiveRun, 409),
    (tasks.TemplateInvalid, 400),
    (tasks.TaskError, 400),
    (SegmentError, 400),
    (EngineError, 400),
    (analysis.AnalysisError, 400),
    (ConlluError, 400),
    (RuleTableError, 400),
    (EvaluatorError, 400),
    (ParseProviderUnavailable, 502),
]


class TaskBody(BaseModel):
    conllu: str | None = None
    text: str | None = None
    parse_provider_url: str | None = None
    template: str
    evaluators: list[dict]
    pinned: list[tuple[int, int]] = Field(default_factory=list)


class SegmentPatch(BaseModel):
    action: str
    segment_id: int
    options: list[str] = Field(default_factory=list)


class RunBody(BaseModel):
    model: str | None = None
    n: int = 5
    seed: int = 0
    cap: int = 4096
    sample: int = 512
    temperature: float | None = None
    max_tokens: int | None = None


class GroupByBody(BaseModel):
    selection: list[int]
    evaluator: int = 0


def _task_view(task: tasks.Task) -> dict:
    space = tasks.TaskSpace(task.sentences)
    segments = []
    for ref in space.refs():
        forest = task.sentences[ref.sentence].forest
        seg = forest.segments[ref.local_id]
        segments.append({
            "id": ref.global_id,
            "sentence": ref.sentence,
            "label": forest.label(ref.local_id),
            "root": ref.local_id == forest.root_id,
            "dummy": seg.is_dummy,
            "removability": seg.removability.value,
            "parent": None if seg.parent is None
            else space.bases[ref.sentence] + seg.parent,
            "children": [space.bases[ref.sentence] + c for c in seg.children],
            "alternatives": list(seg.alternatives),
            "merged": seg.merged,
        })
    return {
        "v": 1,
        "task_id": task.task_id,
        "prototype_text": task.prototype_text,
        "template": task.template,
        "evaluators": [tasks.evaluator_to_obj(e) for e in task.evaluators],
        "pinned_spans": [list(s) for s in task.pinned_spans],
        "sentences": [
            {"index": s.index, "text": s.text, "pinned": s.pinned,
             "tree": None if s.forest is None else render_tree(s.forest)}
            for s in task.sentences
        ],
        "m": space.m,
        "segment_ids": space.variable_ids(),
        "count_valid": space.total,
        "segments": segments,
    }


def _load_rows(run_dir: Path, evaluator_index: int) -> list[analysis.RunRow]:
    cf_path = run_dir / "counterfactuals.jsonl"
    out_path = run_dir / f"outcomes-{evaluator_index}.jsonl"
    if not cf_path.exists() or not out_path.exists():
        raise tasks.UnknownRun(f"run {run_dir.name} has no results yet")
    outcome_by_id = {
        row["cf_id"]: row for row in tasks.read_jsonl(out_path) if "error" not in row}
    rows = []
    for cf in tasks.read_jsonl(cf_path):
        outcome = outcome_by_id.get(cf["id"])
        if outcome is None:
            continue
        rows.append(analysis.RunRow(
            cf_id=cf["id"],
            bits=tuple(int(b) for b in cf["bits"]),
            choices=tuple(cf["choices"]),
            text=cf["text"],
            word_count=cf["word_count"],
            outcome=outcome["outcome"],
        ))
    return rows


def create_app(storage_root: str | Path, gateway: Gateway,
               rules: RuleTable | None = None) -> FastAPI:
    app = FastAPI(title="segshap", docs_url=None, redoc_url=None)
    storage = tasks.Storage(storage_root)
    active: dict[str, tuple[str, threading.Thread]] = {}
    lock = threading.Lock()

    def error_response(exc: Exception, status: int) -> JSONResponse:
        return JSONResponse(status_code=status, content={
            "code": type(exc).__name__, "message": str(exc)})

    for error_type, status in _STATUS_BY_ERROR:
        def make_handler(code: int):
            async def handler(request: Request, exc: Exception) -> JSONResponse:
                return error_response(exc, code)
            return handler
        app.add_exception_handler(error_type, make_handler(status))

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={
            "code": "ValidationError", "message": str(exc.errors()[:3])})

    def has_active_run(task_id: str) -> bool:
        with lock:
            entry = active.get(task_id)
            return entry is not None and entry[1].is_alive()

    @app.get("/api/v1/tasks")
    def list_tasks() -> dict:
        return {"v": 1, "tasks": storage.list_tasks()}

    @app.post("/api/v1/tasks", status_code=201)
    def create_task(body: TaskBody) -> dict:
        if body.conllu:
            conllu_text = body.conllu
        elif body.text and body.parse_provider_url:
            conllu_text = fetch_parse(body.parse_provider_url, body.text)
        else:
            raise tasks.TaskError(
                "provide either conllu or text plus parse_provider_url")
        evaluators = [
            Evaluator(operator=Operator(e["operator"]), argument=e["argument"],
                      name=e.get("name", ""))
            for e in body.evaluators
        ]
        task = tasks.create_task(conllu_text, body.template, evaluators,
                                 pinned_spans=[tuple(p) for p in body.pinned],
                                 rules=rules)
        storage.save_task(task)
        return _task_view(task)

    @app.get("/api/v1/tasks/{task_id}")
    def get_task(task_id: str) -> dict:
        return _task_view(storage.load_task(task_id))

    @app.patch("/api/v1/tasks/{task_id}/segments")
    def patch_segments(task_id: str, body: SegmentPatch) -> dict:
        if has_active_run(task_id):
            raise tasks.ActiveRun("cannot edit segments while a run is active")
        task = storage.load_task(task_id)
        task = tasks.apply_segment_action(task, body.action, body.segment_id,
                                          body.options)
        storage.save_task(task)
        return _task_view(task)

    @app.post("/api/v1/tasks/{task_id}/runs", status_code=202)
    def start_run(task_id: str, body: RunBody) -> dict:
        task = storage.load_task(task_id)
        if has_active_run(task_id):
            raise tasks.ActiveRun(f"task {task_id} already has a run in flight")
        run_id = "r" + uuid.uuid4().hex[:10]
        run_dir = storage.run_dir(task_id, run_id)
        run_dir.mkdir(parents=True)
        config = tasks.RunConfig(
            model=body.model or gateway.config.model,
            n=body.n, seed=body.seed, cap=body.cap, sample=body.sample,
            temperature=body.temperature, max_tokens=body.max_tokens)
        tasks.write_status(run_dir, "queued", 0.0)
        thread = threading.Thread(
            target=tasks.execute_run, args=(task, run_dir, gateway, config),
            daemon=True)
        with lock:
            active[task_id] = (run_id, thread)
        thread.start()
        return {"v": 1, "run_id": run_id, "task_id": task_id, "state": "queued"}

    @app.get("/api/v1/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        task_id, run_dir = storage.find_run(run_id)
        status = storage.read_status(run_dir)
        config_path = run_dir / "config.json"
        config = (json.loads(config_path.read_text(encoding="utf-8"))
                  if config_path.exists() else None)
        return {"v": 1, "run_id": run_id, "task_id": task_id,
                "status": status, "config": config}

    @app.get("/api/v1/runs/{run_id}/results")
    def get_results(run_id: str, evaluator: int = 0,
                    outcome_min: float | None = None,
                    outcome_max: float | None = None,
                    word_count_min: int | None = None,
                    word_count_max: int | None = None,
                    sort: str | None = None,
                    descending: bool = False) -> dict:
        task_id, run_dir = storage.find_run(run_id)
        task = storage.load_task(task_id)
        if not 0 <= evaluator < len(task.evaluators):
            raise tasks.TaskError(f"task has no evaluator {evaluator}")
        rows = _load_rows(run_dir, evaluator)
        spec = analysis.FilterSpec(
            outcome_min=outcome_min, outcome_max=outcome_max,
            word_count_min=word_count_min, word_count_max=word_count_max,
            sort_key=sort, descending=descending)
        kept = analysis.filter_sort(rows, spec)
        shap_path = run_dir / f"shap-{evaluator}.json"
        shap = (json.loads(shap_path.read_text(encoding="utf-8"))
                if shap_path.exists() else None)
        stats = (analysis.boxplot_stats([r.outcome for r in rows],
                                        [r.cf_id for r in rows]).to_obj()
                 if rows else None)
        task_view = _task_view(task)
        return {
            "v": 1,
            "run_id": run_id,
            "task_id": task_id,
            "evaluator": tasks.evaluator_to_obj(task.evaluators[evaluator]),
            "prototype_text": task.prototype_text,
            "segments": task_view["segments"],
            "segment_ids": task_view["segment_ids"],
            "shap": shap,
            "stats": stats,
            "rows": [
                {"cf_id": r.cf_id, "bits": "".join(str(b) for b in r.bits),
                 "text": r.text, "word_count": r.word_count, "outcome": r.outcome}
                for r in kept
            ],
        }

    @app.post("/api/v1/runs/{run_id}/groupby")
    def run_groupby(run_id: str, body: GroupByBody) -> dict:
        task_id, run_dir = storage.find_run(run_id)
        task = storage.load_task(task_id)
        if not 0 <= body.evaluator < len(task.evaluators):
            raise tasks.TaskError(f"task has no evaluator {body.evaluator}")
        rows = _load_rows(run_dir, body.evaluator)
        groups = tasks.group_rows(task, rows, body.selection)
        return {"v": 1, "run_id": run_id, "selection": body.selection,
                "groups": groups}

    @app.get("/api/v1/runs/{run_id}/cf/{cf_id}/text")
    def get_cf_text(run_id: str, cf_id: int) -> dict:
        _, run_dir = storage.find_run(run_id)
        for row in tasks.read_jsonl(run_dir / "counterfactuals.jsonl"):
            if row["id"] == cf_id:
                return {"v": 1, "cf_id": cf_id, "text": row["text"],
                        "bits": row["bits"], "word_count": row["word_count"]}
        raise tasks.UnknownRun(f"run {run_id} has no counterfactual {cf_id}")

    return app
