"""Grammaticality benchmark over a directory of dependency-parsed sentences.

Every sentence is segmented, its counterfactuals are enumerated (or sampled when
the space exceeds the cap), and each realization is checked against a
LanguageTool-protocol server. A counterfactual counts as grammatical when it
introduces no rule hit beyond those already present in the prototype, compared
as multisets per rule id.
"""

from __future__ import annotations

import json
import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .conllu import parse_conllu
from .engine import count_valid, enumerate_valid, realize_text, sample_valid
from .rules import RuleTable, default_rules
from .segmenter import build_forest

log = logging.getLogger(__name__)


class CheckerUnavailable(Exception):
    pass


class GrammarChecker:
    """Client for the LanguageTool HTTP protocol (POST /v2/check, form-encoded)."""

    def __init__(self, base_url: str, language: str = "en-US",
                 client: httpx.Client | None = None, timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.language = language
        self._client = client or httpx.Client(timeout=timeout_s)

    def check(self, text: str) -> list[str]:
        """Rule ids of all matches reported for the text, with multiplicity."""
        try:
            response = self._client.post(
                f"{self.base_url}/v2/check",
                data={"text": text, "language": self.language},
            )
            response.raise_for_status()
            payload = response.json()
        except (httpx.HTTPError, json.JSONDecodeError) as exc:
            raise CheckerUnavailable(f"grammar checker request failed: {exc}") from exc
        try:
            return [m["rule"]["id"] for m in payload["matches"]]
        except (KeyError, TypeError) as exc:
            raise CheckerUnavailable(f"malformed checker payload: {exc}") from exc


def new_error_count(prototype_rules: list[str], counterfactual_rules: list[str]) -> int:
    """Rule hits in the counterfactual exceeding the prototype count per rule id."""
    base = Counter(prototype_rules)
    extra = Counter(counterfactual_rules)
    return sum(max(0, n - base[rule]) for rule, n in extra.items())


def grammar_new_errors(prototype: str, counterfactual: str,
                       checker: GrammarChecker) -> int:
    return new_error_count(checker.check(prototype), checker.check(counterfactual))


@dataclass(frozen=True)
class BenchConfig:
    cap: int = 4096
    sample: int = 512
    seed: int = 0
    workers: int = 8
    rules: RuleTable | None = None


@dataclass(frozen=True)
class SentenceResult:
    source: str
    prototype: str
    word_count: int
    segment_count: int
    valid_count: int
    generated: int
    grammatical: int            # counterfactuals with zero new rule hits
    parse_ms: float
    engine_ms: float            # segmentation + generation + realization only


@dataclass(frozen=True)
class BenchReport:
    corpus: str
    sentences: int
    failures: int
    avg_sentence_length: float
    avg_counterfactuals: float
    grammatical_rate: float
    avg_parse_ms: float
    avg_engine_ms: float
    per_sentence: tuple[SentenceResult, ...] = field(repr=False, default=())

    def to_obj(self) -> dict:
        return {
            "v": 1,
            "corpus": self.corpus,
            "sentences": self.sentences,
            "failures": self.failures,
            "avg_sentence_length": self.avg_sentence_length,
            "avg_counterfactuals": self.avg_counterfactuals,
            "grammatical_rate": self.grammatical_rate,
            "avg_parse_ms": self.avg_parse_ms,
            "avg_engine_ms": self.avg_engine_ms,
            "per_sentence": [
                {
                    "source": s.source,
                    "prototype": s.prototype,
                    "word_count": s.word_count,
                    "segment_count": s.segment_count,
                    "valid_count": s.valid_count,
                    "generated": s.generated,
                    "grammatical": s.grammatical,
                    "parse_ms": round(s.parse_ms, 3),
                    "engine_ms": round(s.engine_ms, 3),
                }
                for s in self.per_sentence
            ],
        }


def _generate(forest, cfg: BenchConfig):
    total = count_valid(forest)
    if total <= cfg.cap:
        vectors = enumerate_valid(forest, cap=cfg.cap)
    else:
        vectors = sample_valid(forest, cfg.sample, cfg.seed)
    return total, [realize_text(forest, v) for v in vectors]


def run_benchmark(corpus_dir: str | Path, checker: GrammarChecker,
                  cfg: BenchConfig | None = None) -> BenchReport:
    cfg = cfg or BenchConfig()
    rules = cfg.rules or default_rules()
    corpus = Path(corpus_dir)
    files = sorted(corpus.glob("*.conllu"))
    if not files:
        raise FileNotFoundError(f"no .conllu files under {corpus}")

    results: list[SentenceResult] = []
    failures = 0
    for path in files:
        t0 = time.perf_counter()
        parses, errors = parse_conllu(path.read_text(encoding="utf-8"))
        parse_ms = (time.perf_counter() - t0) * 1000.0
        failures += len(errors)
        for err in errors:
            log.warning("%s block %d skipped: %s", path.name, err.block_index, err.error)
        for parse in parses:
            try:
                t1 = time.perf_counter()
                forest = build_forest(parse, rules)
                total, cfs = _generate(forest, cfg)
                engine_ms = (time.perf_counter() - t1) * 1000.0
            except Exception as exc:
                failures += 1
                log.warning("%s sentence failed: %s", path.name, exc)
                continue
            texts = [parse.original_text] + [cf.text for cf in cfs]
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                hits = list(pool.map(checker.check, texts))
            proto_rules, cf_rules = hits[0], hits[1:]
            grammatical = sum(
                1 for rules_i in cf_rules if new_error_count(proto_rules, rules_i) == 0)
            results.append(SentenceResult(
                source=path.name,
                prototype=parse.original_text,
                word_count=len(parse.original_text.split()),
                segment_count=len(forest.segments),
                valid_count=total,
                generated=len(cfs),
                grammatical=grammatical,
                parse_ms=parse_ms / max(1, len(parses)),
                engine_ms=engine_ms,
            ))

    if not results:
        raise CheckerUnavailable("every sentence in the corpus failed")
    generated = sum(r.generated for r in results)
    return BenchReport(
        corpus=str(corpus),
        sentences=len(results),
        failures=failures,
        avg_sentence_length=sum(r.word_count for r in results) / len(results),
        avg_counterfactuals=sum(r.valid_count for r in results) / len(results),
        grammatical_rate=sum(r.grammatical for r in results) / generated,
        avg_parse_ms=sum(r.parse_ms for r in results) / len(results),
        avg_engine_ms=sum(r.engine_ms for r in results) / len(results),
        per_sentence=tuple(results),
    )


def report_to_markdown(report: BenchReport) -> str:
    rows = [
        ("Sentences", f"{report.sentences}"),
        ("Failures", f"{report.failures}"),
        ("Avg sentence length (words)", f"{report.avg_sentence_length:.1f}"),
        ("Avg counterfactuals / sentence", f"{report.avg_counterfactuals:.1f}"),
        ("Grammatical rate", f"{report.grammatical_rate:.1%}"),
        ("Avg parse time (ms)", f"{report.avg_parse_ms:.1f}"),
        ("Avg engine time (ms)", f"{report.avg_engine_ms:.1f}"),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"| {'Metric'.ljust(width)} | Value |",
             f"|{'-' * (width + 2)}|-------|"]
    lines.extend(f"| {name.ljust(width)} | {value} |" for name, value in rows)
    return "\n".join(lines) + "\n"


def write_report(report: BenchReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_obj(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    (out / "report.md").write_text(report_to_markdown(report), encoding="utf-8")
