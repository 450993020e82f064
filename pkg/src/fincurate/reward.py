"""Reward function for GRPO training: format score times outcome multiplier.

The format score checks ``<think>`` tag discipline: 0.25 for an opening tag,
0.25 for a closing tag, 0.5 for exactly one correctly ordered pair. The
answer is then extracted hierarchically (boxed content, then pinned answer
phrases, then the raw post-think text), judged Correct/Incorrect/Invalid by
rule-based matching or the short-form verifier model, and mapped to an
outcome multiplier of 1.0 (Correct) or 0.5 (anything else, including failed
extraction). The total reward is the product, so a response earns 1.0 only
with perfect format and a correct answer, while a well-formatted wrong
answer keeps partial credit of 0.5.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from . import assets
from .distill import extract_boxed
from .endpoints import EndpointConfig
from .errors import ConfigError, DataError
from .verify import Verdict, verify_short

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"

_ANSWER_PHRASE_RE = re.compile(
    "(?:" + "|".join(f"(?:{p})" for p in assets.load_patterns("answer_patterns.txt")) + r")[ \t]*(?P<rest>[^\n]*)",
    re.IGNORECASE,
)

_TRAILING_PUNCT = ".,;:!?"


class ExtractionMethod(str, Enum):
    BOXED = "boxed"
    REGEX = "regex"
    RAW = "raw"


class OutcomeCause(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    INVALID = "invalid"
    EXTRACTION_FAILED = "extraction_failed"


class RewardMode(str, Enum):
    RULE = "rule"
    MODEL = "model"


@dataclass(frozen=True, slots=True)
class FormatReward:
    i_start: int
    i_end: int
    i_pair: int
    value: float

    def __post_init__(self) -> None:
        if not all(i in (0, 1) for i in (self.i_start, self.i_end, self.i_pair)):
            raise DataError("format indicators must be 0 or 1")
        if self.i_pair == 1 and not (self.i_start == 1 and self.i_end == 1):
            raise DataError("a tag pair implies both tags present")
        if self.value != 0.25 * self.i_start + 0.25 * self.i_end + 0.5 * self.i_pair:
            raise DataError("format value must equal 0.25*i_start + 0.25*i_end + 0.5*i_pair")


@dataclass(frozen=True, slots=True)
class OutcomeMultiplier:
    value: float
    cause: OutcomeCause

    def __post_init__(self) -> None:
        if self.value not in (0.5, 1.0):
            raise DataError("outcome multiplier must be 0.5 or 1.0")
        if (self.value == 1.0) != (self.cause is OutcomeCause.CORRECT):
            raise DataError("multiplier is 1.0 exactly when the judgment is Correct")


@dataclass(frozen=True, slots=True)
class RewardBreakdown:
    format: FormatReward
    outcome: OutcomeMultiplier
    total: float
    extracted_answer: str | None
    extraction_method: ExtractionMethod

    def __post_init__(self) -> None:
        if self.total != self.format.value * self.outcome.value:
            raise DataError("total must equal format value times outcome value")

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "format_value": self.format.value,
            "outcome_value": self.outcome.value,
            "outcome_cause": self.outcome.cause.value,
            "extracted_answer": self.extracted_answer,
            "extraction_method": self.extraction_method.value,
        }


def format_reward(response: str) -> FormatReward:
    """Score ``<think>`` tag structure; tags are matched as exact literals."""
    n_open = response.count(THINK_OPEN)
    n_close = response.count(THINK_CLOSE)
    i_start = 1 if n_open >= 1 else 0
    i_end = 1 if n_close >= 1 else 0
    i_pair = 0
    if n_open == 1 and n_close == 1 and response.find(THINK_OPEN) < response.find(THINK_CLOSE):
        i_pair = 1
    value = 0.25 * i_start + 0.25 * i_end + 0.5 * i_pair
    return FormatReward(i_start=i_start, i_end=i_end, i_pair=i_pair, value=value)


def post_think_segment(response: str) -> str:
    """Text after the last closing think tag; the whole response if there is none."""
    idx = response.rfind(THINK_CLOSE)
    if idx < 0:
        return response
    return response[idx + len(THINK_CLOSE) :]


def extract_answer(response: str) -> tuple[str | None, ExtractionMethod]:
    """Hierarchical answer extraction on the post-think segment.

    Precedence: last balanced boxed group, then the first pinned answer
    phrase (answer = remainder of that line, trailing punctuation stripped),
    then the trimmed segment itself. An empty result means extraction failed.
    """
    segment = post_think_segment(response)
    boxed = extract_boxed(segment)
    if boxed is not None:
        return boxed, ExtractionMethod.BOXED
    match = _ANSWER_PHRASE_RE.search(segment)
    if match is not None:
        answer = match.group("rest").strip().rstrip(_TRAILING_PUNCT + " \t")
        if answer:
            return answer, ExtractionMethod.REGEX
    raw = segment.strip()
    if raw:
        return raw, ExtractionMethod.RAW
    return None, ExtractionMethod.RAW


def normalize_answer(text: str) -> str:
    """Normalization used by rule matching: case, quotes, punctuation, spacing."""
    t = text.strip().casefold()
    while len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'`":
        t = t[1:-1].strip()
    while t and t[-1] in ".%,":
        t = t[:-1].rstrip()
    return " ".join(t.split())


def _parse_number(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def match_rule(extracted: str, reference: str) -> Verdict:
    """Rule-based answer check: normalized string equality, then numeric equality.

    Numbers match within a relative tolerance of 1e-6 so rounding artifacts
    like "3.50" vs "3.5" do not read as wrong answers. Never returns Invalid.
    """
    if not extracted or not reference:
        raise DataError("rule matching requires non-empty extracted and reference answers")
    a = normalize_answer(extracted)
    b = normalize_answer(reference)
    if a == b:
        return Verdict.CORRECT
    x = _parse_number(a)
    y = _parse_number(b)
    if x is not None and y is not None and abs(x - y) <= 1e-6 * max(1.0, abs(y)):
        return Verdict.CORRECT
    return Verdict.INCORRECT


def outcome_multiplier(verdict: Verdict | None) -> OutcomeMultiplier:
    """Map a judgment (None encodes extraction failure) to its multiplier."""
    if verdict is Verdict.CORRECT:
        return OutcomeMultiplier(value=1.0, cause=OutcomeCause.CORRECT)
    if verdict is Verdict.INCORRECT:
        return OutcomeMultiplier(value=0.5, cause=OutcomeCause.INCORRECT)
    if verdict is Verdict.INVALID:
        return OutcomeMultiplier(value=0.5, cause=OutcomeCause.INVALID)
    return OutcomeMultiplier(value=0.5, cause=OutcomeCause.EXTRACTION_FAILED)


def total_reward(
    response: str,
    reference: str,
    mode: RewardMode = RewardMode.RULE,
    verifier: EndpointConfig | None = None,
    question: str | None = None,
) -> RewardBreakdown:
    """Full reward for one response: format score times outcome multiplier.

    Rule mode is a pure function of (response, reference). Model mode sends
    the extracted answer to the short-form verifier; endpoint failures
    propagate rather than being converted into a fabricated reward.
    """
    mode = RewardMode(mode)
    if mode is RewardMode.MODEL and verifier is None:
        raise ConfigError("model mode requires a verifier endpoint")
    if not reference:
        raise DataError("reference must be non-empty")
    fmt = format_reward(response)
    extracted, method = extract_answer(response)
    if extracted is None:
        verdict: Verdict | None = None
    elif mode is RewardMode.RULE:
        verdict = match_rule(extracted, reference)
    else:
        assert verifier is not None
        verdict = verify_short(question or "N/A", reference, extracted, verifier)
    outcome = outcome_multiplier(verdict)
    return RewardBreakdown(
        format=fmt,
        outcome=outcome,
        total=fmt.value * outcome.value,
        extracted_answer=extracted,
        extraction_method=method,
    )
