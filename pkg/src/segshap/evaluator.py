"""Outcome evaluators over LLM responses.

Token operators compare the raw response against the argument string directly.
Logic operators delegate to an LLM judge at temperature 0; a judge verdict that
contains neither YES nor NO marks that sample as failed rather than false.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from . import gateway as gw
from .engine import Counterfactual


class EvaluatorError(Exception):
    pass


class JudgeUnparseable(EvaluatorError):
    pass


class AllFailed(EvaluatorError):
    pass


class Operator(str, enum.Enum):
    CONTAIN = "CONTAIN"
    STARTWITH = "STARTWITH"
    EQUAL = "EQUAL"
    ENTAIL = "ENTAIL"
    CONTRADICT = "CONTRADICT"
    SEMANTICEQUAL = "SEMANTICEQUAL"

    @property
    def needs_judge(self) -> bool:
        return self in (Operator.ENTAIL, Operator.CONTRADICT, Operator.SEMANTICEQUAL)


@dataclass(frozen=True)
class Evaluator:
    operator: Operator
    argument: str
    name: str = ""

    def __post_init__(self) -> None:
        if not self.argument:
            raise EvaluatorError("evaluator argument must be non-empty")
        if not self.name:
            object.__setattr__(self, "name", f"{self.operator.value}({self.argument})")


_ENTAIL_TEMPLATE = (
    "Premise: {premise}\nHypothesis: {hypothesis}\n"
    "Does the premise entail the hypothesis? Answer YES or NO."
)
_CONTRADICT_TEMPLATE = (
    "Premise: {premise}\nHypothesis: {hypothesis}\n"
    "Does the premise contradict the hypothesis? Answer YES or NO."
)

_VERDICT = re.compile(r"\b(YES|NO)\b", re.IGNORECASE)


def parse_judge_answer(text: str) -> bool:
    matches = _VERDICT.findall(text)
    if not matches:
        raise JudgeUnparseable(f"judge answered neither YES nor NO: {text[:120]!r}")
    return matches[-1].upper() == "YES"


def eval_token(evaluator: Evaluator, response: str) -> bool:
    arg = evaluator.argument.casefold()
    if evaluator.operator is Operator.CONTAIN:
        return arg in response.casefold()
    if evaluator.operator is Operator.STARTWITH:
        return response.lstrip().casefold().startswith(arg)
    if evaluator.operator is Operator.EQUAL:
        return response.strip().casefold() == evaluator.argument.strip().casefold()
    raise EvaluatorError(f"{evaluator.operator.value} is not a token operator")


def _judge(llm: gw.Gateway, template: str, premise: str, hypothesis: str) -> bool:
    prompt = template.format(premise=premise, hypothesis=hypothesis)
    answer = llm.complete(prompt, sample_index=0, temperature=0.0)
    return parse_judge_answer(answer)


def eval_logic(evaluator: Evaluator, response: str, llm: gw.Gateway) -> bool:
    """Judge the response as premise against the evaluator argument as hypothesis."""
    if evaluator.operator is Operator.ENTAIL:
        return _judge(llm, _ENTAIL_TEMPLATE, response, evaluator.argument)
    if evaluator.operator is Operator.CONTRADICT:
        return _judge(llm, _CONTRADICT_TEMPLATE, response, evaluator.argument)
    if evaluator.operator is Operator.SEMANTICEQUAL:
        return (_judge(llm, _ENTAIL_TEMPLATE, response, evaluator.argument)
                and _judge(llm, _ENTAIL_TEMPLATE, evaluator.argument, response))
    raise EvaluatorError(f"{evaluator.operator.value} is not a logic operator")


def eval_response(evaluator: Evaluator, response: str,
                  llm: gw.Gateway | None = None) -> bool:
    if evaluator.operator.needs_judge:
        if llm is None:
            raise EvaluatorError(f"{evaluator.operator.value} requires a judge gateway")
        return eval_logic(evaluator, response, llm)
    return eval_token(evaluator, response)


@dataclass(frozen=True)
class OutcomeRecord:
    cf_id: int
    outcome: float                      # fraction of completed samples judged true
    samples: tuple[bool, ...]           # verdicts of completed samples, in order
    n_requested: int
    n_effective: int
    raw_responses: tuple[str | None, ...]   # one slot per requested sample

    @property
    def partial(self) -> bool:
        return self.n_effective < self.n_requested

    def to_obj(self) -> dict:
        return {
            "cf_id": self.cf_id,
            "outcome": self.outcome,
            "samples": list(self.samples),
            "n_requested": self.n_requested,
            "n_effective": self.n_effective,
            "raw_responses": list(self.raw_responses),
        }


def apply_evaluator(evaluator: Evaluator, responses: list[str | None], cf_id: int = 0,
                    llm: gw.Gateway | None = None) -> OutcomeRecord:
    """Score already-collected responses; None entries count as failed samples."""
    samples: list[bool] = []
    for response in responses:
        if response is None:
            continue
        try:
            samples.append(eval_response(evaluator, response, llm))
        except (JudgeUnparseable, gw.GatewayError):
            continue
    if not samples:
        raise AllFailed(f"no sample of {len(responses)} produced a verdict")
    return OutcomeRecord(
        cf_id=cf_id,
        outcome=sum(samples) / len(samples),
        samples=tuple(samples),
        n_requested=len(responses),
        n_effective=len(samples),
        raw_responses=tuple(responses),
    )


def estimate_outcome(cf: Counterfactual, task_prompt: str, evaluator: Evaluator,
                     llm: gw.Gateway, n: int = 5, cf_id: int = 0) -> OutcomeRecord:
    """Query the model n times on the counterfactual prompt and score the responses."""
    prompt = task_prompt.replace("{input}", cf.text)
    outcomes = llm.batch_complete([(prompt, i) for i in range(n)])
    responses = [o.text for o in outcomes]
    return apply_evaluator(evaluator, responses, cf_id=cf_id, llm=llm)
