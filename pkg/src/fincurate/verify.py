"""Length-adaptive verification: short-form verifier vs long-form judge.

Concise reference answers (and sentiment tasks, whatever their reference
length) go to the short-form verifier, which answers Correct/Incorrect/
Invalid. Extended analytical references go to the long-form judge, which
answers Yes/No on semantic consistency. Judge output parsing is total:
every possible reply maps to exactly one verdict, with unparseable output
falling back to Invalid.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import assets
from .corpus import Sample, TaskType
from .endpoints import EndpointConfig, chat_complete
from .errors import ConfigError, DataError
from .lengths import TokenMethod, count_tokens

DEFAULT_SHORT_TOKEN_LIMIT = 16

SHORT_PROMPT_TEMPLATE = assets.load_text("judge_short_prompt.txt")
LONG_PROMPT_TEMPLATE = assets.load_text("judge_long_prompt.txt")

# Leftmost match wins. Word tokens are case-insensitive; the single-letter
# aliases must be uppercase so the article "a" never reads as a judgment.
_SHORT_VERDICT_RE = re.compile(r"(?i:\b(incorrect|correct|invalid)\b)|\b([ABC])\b")
_LONG_VERDICT_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


class Verdict(str, Enum):
    CORRECT = "Correct"
    INCORRECT = "Incorrect"
    INVALID = "Invalid"


class Route(str, Enum):
    SHORT_FORM = "short_form"
    LONG_FORM = "long_form"


@dataclass(frozen=True, slots=True)
class VerificationRecord:
    sample_id: str
    route: Route
    verdict: Verdict
    judge_raw: str  # retained verbatim for audit
    verifier_model: str

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "route": self.route.value,
            "verdict": self.verdict.value,
            "judge_raw": self.judge_raw,
            "verifier_model": self.verifier_model,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "VerificationRecord":
        return cls(
            sample_id=obj["sample_id"],
            route=Route(obj["route"]),
            verdict=Verdict(obj["verdict"]),
            judge_raw=obj.get("judge_raw", ""),
            verifier_model=obj.get("verifier_model", ""),
        )


def fill_template(template: str, slots: Mapping[str, str]) -> str:
    """Substitute ``{name}`` placeholders in one pass; values are inserted verbatim."""
    return re.sub(
        r"\{(" + "|".join(re.escape(k) for k in slots) + r")\}",
        lambda m: slots[m.group(1)],
        template,
    )


def route(
    sample: Sample,
    short_token_limit: int = DEFAULT_SHORT_TOKEN_LIMIT,
    method: TokenMethod = TokenMethod.WHITESPACE,
) -> Route:
    """Pick the verification route for a sample; deterministic.

    Sentiment tasks are always short-form regardless of reference length:
    their label is checkable even when the reference carries a rationale.
    """
    if short_token_limit < 1:
        raise ConfigError("short_token_limit must be >= 1")
    if sample.task_type is TaskType.SENTIMENT:
        return Route.SHORT_FORM
    if count_tokens(sample.reference_answer, method).count <= short_token_limit:
        return Route.SHORT_FORM
    return Route.LONG_FORM


def parse_short_verdict(text: str) -> Verdict:
    """First judgment token wins; anything unparseable is Invalid."""
    match = _SHORT_VERDICT_RE.search(text)
    if match is None:
        return Verdict.INVALID
    word, letter = match.groups()
    if word is not None:
        return Verdict(word.capitalize())
    return {"A": Verdict.CORRECT, "B": Verdict.INCORRECT, "C": Verdict.INVALID}[letter]


def parse_long_verdict(text: str) -> Verdict:
    """Yes => Correct, No => Incorrect, neither => Invalid; bold markers tolerated."""
    match = _LONG_VERDICT_RE.search(text)
    if match is None:
        return Verdict.INVALID
    return Verdict.CORRECT if match.group(1).lower() == "yes" else Verdict.INCORRECT


def build_short_prompt(question: str, reference: str, prediction: str) -> str:
    return fill_template(
        SHORT_PROMPT_TEMPLATE,
        {"question": question, "reference": reference, "prediction": prediction},
    )


def build_long_prompt(question: str, reference: str, prediction: str) -> str:
    return fill_template(
        LONG_PROMPT_TEMPLATE,
        {"question": question, "reference_answer": reference, "student_answer": prediction},
    )


def _require_texts(question: str, reference: str, prediction: str) -> None:
    if not question or not reference or not prediction:
        raise DataError("verification requires non-empty question, reference, and prediction")


def verify_short(question: str, reference: str, prediction: str, verifier: EndpointConfig) -> Verdict:
    """Strict final-answer check through the short-form verifier endpoint."""
    _require_texts(question, reference, prediction)
    result = chat_complete(verifier, None, build_short_prompt(question, reference, prediction))
    return parse_short_verdict(result.text)


def verify_long(question: str, reference: str, prediction: str, judge: EndpointConfig) -> Verdict:
    """Semantic-consistency check of an extended answer through the judge endpoint."""
    _require_texts(question, reference, prediction)
    result = chat_complete(judge, None, build_long_prompt(question, reference, prediction))
    return parse_long_verdict(result.text)


def verify_batch(
    samples: Sequence[Sample],
    verifier: EndpointConfig,
    judge: EndpointConfig,
    short_token_limit: int = DEFAULT_SHORT_TOKEN_LIMIT,
    method: TokenMethod = TokenMethod.WHITESPACE,
) -> list[VerificationRecord]:
    """Route and verify each sample's CoT, keeping the raw judge replies.

    Short-form routes judge the boxed final answer (or the whole trace when
    no box exists); long-form routes judge the full trace for semantic
    consistency. Records come back in input order; calls run concurrently
    under each endpoint's own bound.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .distill import extract_boxed

    def one(sample: Sample) -> VerificationRecord:
        if sample.cot is None:
            raise DataError(f"sample {sample.id!r} reached verification without a CoT")
        chosen = route(sample, short_token_limit=short_token_limit, method=method)
        if chosen is Route.SHORT_FORM:
            prediction = extract_boxed(sample.cot) or sample.cot
            prompt = build_short_prompt(sample.question, sample.reference_answer, prediction)
            raw = chat_complete(verifier, None, prompt).text
            verdict = parse_short_verdict(raw)
            model = verifier.model
        else:
            prompt = build_long_prompt(sample.question, sample.reference_answer, sample.cot)
            raw = chat_complete(judge, None, prompt).text
            verdict = parse_long_verdict(raw)
            model = judge.model
        return VerificationRecord(
            sample_id=sample.id, route=chosen, verdict=verdict, judge_raw=raw, verifier_model=model
        )

    workers = verifier.max_concurrency + judge.max_concurrency
    if len(samples) <= 1:
        return [one(s) for s in samples]
    with ThreadPoolExecutor(max_workers=min(workers, len(samples))) as pool:
        return list(pool.map(one, samples))


def filter_verified(
    samples: Sequence[Sample],
    records: Mapping[str, VerificationRecord],
) -> list[Sample]:
    """Keep exactly the samples judged Correct, preserving input order."""
    kept = []
    for sample in samples:
        record = records.get(sample.id)
        if record is None:
            raise DataError(f"no verification record for sample {sample.id!r}")
        if record.verdict is Verdict.CORRECT:
            kept.append(sample)
    return kept


def verdict_counts(records: Iterable[VerificationRecord]) -> dict[str, int]:
    counts = {v.value: 0 for v in Verdict}
    for record in records:
        counts[record.verdict.value] += 1
    return counts


def write_verification_records(records: Iterable[VerificationRecord], path: str | Path) -> int:
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n
