"""Correctness evaluation: render the impartial-evaluator prompt, collect a
candidate answer per question, have a judge model score it 0-5, aggregate.

The prompt template ships as an asset and is substituted with a single
forward scan, so payloads that happen to contain placeholder-looking text
are never treated as placeholders. Scores accumulate as exact rationals;
the 0-100 figure is the mean scaled by 20.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

from .errors import (
    AllFailedError,
    CorruptError,
    MissingFieldError,
    MissingPredictionError,
    NoJsonError,
    OutOfRangeError,
)
from .llm import ChatRequest, ChatResponse, ModelProfile
from .util import atomic_write_text, extract_json_array, load_prompt

JUDGE_PLACEHOLDERS = ("{ Question }", "{ Prediction }", "{ Ground Truth }")

SCORE_MIN = 0
SCORE_MAX = 5


@dataclass(frozen=True)
class EvalItem:
    question: str
    ground_truth: str
    prediction: str | None = None
    score: int | None = None
    error: str | None = None

    def __post_init__(self):
        if not self.question:
            raise ValueError("question must be non-empty")
        if not self.ground_truth:
            raise ValueError("ground_truth must be non-empty")
        if self.score is not None and not SCORE_MIN <= self.score <= SCORE_MAX:
            raise ValueError(f"score {self.score} outside {SCORE_MIN}..{SCORE_MAX}")


@dataclass(frozen=True)
class EvalReport:
    items: tuple[EvalItem, ...]
    mean_score: float
    normalized: float
    failures: int


def load_judge_template() -> str:
    return load_prompt("judge")


def judge_template_sha256() -> str:
    return hashlib.sha256(load_judge_template().encode("utf-8")).hexdigest()


def render_judge_prompt(item: EvalItem, template: str | None = None) -> str:
    """Fill the evaluator template with question, prediction, ground truth.

    Substitution walks the template left to right with str.partition, so a
    substituted payload is never rescanned for further placeholders.
    """
    if not item.prediction:
        raise MissingPredictionError(
            "item has no prediction; run the candidate model first"
        )
    if template is None:
        template = load_judge_template()
    payloads = dict(
        zip(JUDGE_PLACEHOLDERS, (item.question, item.prediction, item.ground_truth))
    )
    parts = []
    rest = template
    for placeholder in JUDGE_PLACEHOLDERS:
        head, sep, rest = rest.partition(placeholder)
        if not sep:
            raise ValueError(f"judge template missing placeholder {placeholder!r}")
        parts.append(head)
        parts.append(payloads[placeholder])
    parts.append(rest)
    return "".join(parts)


def parse_judge_response(text: str) -> int:
    """Pull the integer correctness score out of a judge reply."""
    if not text:
        raise NoJsonError("empty judge response")
    try:
        array = extract_json_array(text)
    except ValueError as exc:
        raise NoJsonError(f"no JSON array in judge response: {exc}") from exc
    first = next((el for el in array if isinstance(el, dict)), None)
    if first is None or "correctness" not in first:
        raise MissingFieldError("judge response lacks a correctness field")
    value = first["correctness"]
    if isinstance(value, bool):
        raise MissingFieldError(f"correctness is not a number: {value!r}")
    if isinstance(value, int):
        score = value
    elif isinstance(value, float):
        if not value.is_integer():
            raise MissingFieldError(f"correctness is not an integer: {value!r}")
        score = int(value)
    elif isinstance(value, str):
        try:
            score = int(value.strip())
        except ValueError as exc:
            raise MissingFieldError(
                f"correctness is not a number: {value!r}"
            ) from exc
    else:
        raise MissingFieldError(f"correctness has unusable type: {type(value)}")
    if not SCORE_MIN <= score <= SCORE_MAX:
        raise OutOfRangeError(f"correctness {score} outside {SCORE_MIN}..{SCORE_MAX}")
    return score


def load_evalset(path: str | Path) -> list[EvalItem]:
    """Read a JSONL evalset of {question, ground_truth} rows."""
    path = Path(path)
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                items.append(
                    EvalItem(
                        question=row["question"], ground_truth=row["ground_truth"]
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptError(
                    f"evalset line {lineno}: {exc}", path=str(path), line=lineno
                ) from exc
    return items


def run_eval(
    items: list[EvalItem],
    candidate: ModelProfile,
    judge: ModelProfile,
    client,
    template: str | None = None,
    progress=None,
) -> EvalReport:
    """Score every item; judgment failures are counted, never fatal."""
    if not items:
        raise ValueError("items must be non-empty")
    if template is None:
        template = load_judge_template()
    total = len(items)

    # candidate answers, temperature 0 so reruns are comparable
    candidate_reqs = [
        ChatRequest(user=item.question, overrides={"temperature": 0.0})
        for item in items
    ]
    candidate_out = client.complete_batch(candidate, candidate_reqs)

    answered: list[EvalItem] = []
    for item, result in zip(items, candidate_out):
        if isinstance(result, ChatResponse) and result.content.strip():
            answered.append(replace(item, prediction=result.content.strip()))
        else:
            reason = str(result) if isinstance(result, Exception) else "empty answer"
            answered.append(replace(item, error=f"candidate failed: {reason}"))

    judged_idx = [i for i, item in enumerate(answered) if item.prediction]
    judge_reqs = [
        ChatRequest(user=render_judge_prompt(answered[i], template))
        for i in judged_idx
    ]
    judge_out = client.complete_batch(judge, judge_reqs) if judge_reqs else []

    done = 0
    finished: list[EvalItem] = list(answered)
    for i, result in zip(judged_idx, judge_out):
        if isinstance(result, ChatResponse):
            try:
                score = parse_judge_response(result.content)
                finished[i] = replace(finished[i], score=score)
            except (NoJsonError, MissingFieldError, OutOfRangeError) as exc:
                finished[i] = replace(finished[i], error=f"judgment unparseable: {exc}")
        else:
            finished[i] = replace(finished[i], error=f"judge failed: {result}")
        done += 1
        if progress:
            progress(done, total)

    scored = [item.score for item in finished if item.score is not None]
    if not scored:
        raise AllFailedError("no item produced a usable judgment")
    mean = Fraction(sum(scored), len(scored))
    return EvalReport(
        items=tuple(finished),
        mean_score=float(mean),
        normalized=float(mean * 20),
        failures=total - len(scored),
    )


def write_report(report: EvalReport, json_path: str | Path,
                 summary_path: str | Path | None = None) -> list[Path]:
    """Persist the report as JSON and a short plain-text summary."""
    json_path = Path(json_path)
    payload = {
        "mean_score": report.mean_score,
        "normalized": report.normalized,
        "failures": report.failures,
        "items": [
            {
                "question": item.question,
                "ground_truth": item.ground_truth,
                "prediction": item.prediction,
                "score": item.score,
                "error": item.error,
            }
            for item in report.items
        ],
    }
    atomic_write_text(json_path, json.dumps(payload, ensure_ascii=False, indent=2) + "\n")
    written = [json_path]
    if summary_path is not None:
        summary_path = Path(summary_path)
        scored = len(report.items) - report.failures
        lines = [
            f"items: {len(report.items)}",
            f"scored: {scored}",
            f"failures: {report.failures}",
            f"mean score (0-5): {report.mean_score:g}",
            f"normalized (0-100): {report.normalized:g}",
        ]
        atomic_write_text(summary_path, "\n".join(lines) + "\n")
        written.append(summary_path)
    return written
