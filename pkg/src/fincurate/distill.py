"""Chain-of-thought synthesis for samples that lack a reasoning trace.

Samples that already carry a CoT pass through untouched (no endpoint call);
the rest are prompted through the distiller endpoint, and the boxed final
answer is extracted from the completion. Whether that answer is *correct*
is decided later by the verification stage; this stage only insists that a
final answer exists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from . import assets
from .corpus import Sample
from .endpoints import EndpointConfig, chat_complete
from .errors import ConfigError, DataError

DISTILL_PROMPT_TEMPLATE = assets.load_text("distill_prompt.txt")

# The distiller needs headroom for long reasoning traces; temperature matches
# the rollout setting used elsewhere in the pipeline.
DISTILLER_SAMPLING = {"temperature": 0.6, "top_p": 0.95, "max_tokens": 8192}


@dataclass(frozen=True, slots=True)
class DistillationRecord:
    sample_id: str
    generated_cot: str
    extracted_answer: str | None
    attempts: int
    accepted: bool

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise DataError("attempts must be >= 1")
        if self.accepted and self.extracted_answer is None:
            raise DataError("accepted records must carry an extracted answer")

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "generated_cot": self.generated_cot,
            "extracted_answer": self.extracted_answer,
            "attempts": self.attempts,
            "accepted": self.accepted,
        }


def build_distill_prompt(question: str) -> str:
    """Fill the distillation template; braces in the question are preserved."""
    if not question:
        raise ConfigError("question must be non-empty")
    return DISTILL_PROMPT_TEMPLATE.replace("{question}", question)


def extract_boxed(text: str) -> str | None:
    """Content of the last balanced ``\\boxed{...}`` group, or None.

    Nested braces inside the box are preserved; occurrences whose braces
    never balance are ignored.
    """
    marker = "\\boxed{"
    start = len(text)
    while True:
        start = text.rfind(marker, 0, start)
        if start < 0:
            return None
        depth = 1
        i = start + len(marker)
        while i < len(text):
            ch = text[i]
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start + len(marker) : i]
            i += 1
        # unbalanced: keep scanning earlier occurrences


def synthesize_cot(
    sample: Sample,
    distiller: EndpointConfig,
    max_attempts: int = 1,
) -> DistillationRecord:
    """Generate a CoT for one sample, retrying while no boxed answer appears."""
    if max_attempts < 1:
        raise ConfigError("max_attempts must be >= 1")
    if sample.cot is not None:
        # Existing high-quality CoT is retained as-is.
        answer = extract_boxed(sample.cot)
        return DistillationRecord(
            sample_id=sample.id,
            generated_cot=sample.cot,
            extracted_answer=answer if answer is not None else sample.reference_answer,
            attempts=1,
            accepted=True,
        )
    prompt = build_distill_prompt(sample.question)
    completion_text = ""
    for attempt in range(1, max_attempts + 1):
        result = chat_complete(distiller, None, prompt)
        completion_text = result.text
        answer = extract_boxed(completion_text)
        if answer is not None:
            return DistillationRecord(
                sample_id=sample.id,
                generated_cot=completion_text,
                extracted_answer=answer,
                attempts=attempt,
                accepted=True,
            )
    return DistillationRecord(
        sample_id=sample.id,
        generated_cot=completion_text,
        extracted_answer=None,
        attempts=max_attempts,
        accepted=False,
    )


def write_distillation_records(records: Iterable[DistillationRecord], path: str | Path) -> int:
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n
