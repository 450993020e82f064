"""Difficulty probing and selection of the RL training corpus.

Each candidate sample is probed with k policy rollouts; its failure rate is
the fraction judged not Correct. The RL corpus keeps samples that are hard
(failure rate strictly greater than the threshold) but still verifiable
online (reference answer strictly shorter than the token cap). Both
inequalities are strict, so a 0.5 failure rate at the default threshold and
an exactly-16-token answer at the default cap are dropped.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import Sample
from .distill import build_distill_prompt
from .endpoints import EndpointConfig, chat_complete
from .errors import ConfigError, DataError
from .lengths import TokenMethod, count_tokens
from .reward import extract_answer
from .verify import Verdict

DEFAULT_K = 4
DEFAULT_FAILURE_THRESHOLD = 0.5
DEFAULT_ANSWER_MAX_TOKENS = 16

Scorer = Callable[[str, str, str], Verdict]  # (question, reference, prediction)


@dataclass(frozen=True, slots=True)
class RolloutStats:
    sample_id: str
    k: int
    failures: int
    failure_rate: float
    rollout_verdicts: tuple[Verdict, ...]

    def __post_init__(self) -> None:
        if self.k < 1:
            raise DataError("k must be >= 1")
        if not (0 <= self.failures <= self.k):
            raise DataError("failures must be in [0, k]")
        if len(self.rollout_verdicts) != self.k:
            raise DataError("one verdict per rollout is required")
        if self.failures != sum(1 for v in self.rollout_verdicts if v is not Verdict.CORRECT):
            raise DataError("failures must count the non-Correct verdicts")
        if self.failure_rate != self.failures / self.k:
            raise DataError("failure_rate must equal failures / k")

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "k": self.k,
            "failures": self.failures,
            "failure_rate": self.failure_rate,
            "rollout_verdicts": [v.value for v in self.rollout_verdicts],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "RolloutStats":
        return cls(
            sample_id=obj["sample_id"],
            k=obj["k"],
            failures=obj["failures"],
            failure_rate=obj["failure_rate"],
            rollout_verdicts=tuple(Verdict(v) for v in obj["rollout_verdicts"]),
        )


def stats_from_verdicts(sample_id: str, verdicts: Sequence[Verdict]) -> RolloutStats:
    failures = sum(1 for v in verdicts if v is not Verdict.CORRECT)
    return RolloutStats(
        sample_id=sample_id,
        k=len(verdicts),
        failures=failures,
        failure_rate=failures / len(verdicts),
        rollout_verdicts=tuple(verdicts),
    )


def probe_difficulty(
    sample: Sample,
    policy: EndpointConfig,
    k: int = DEFAULT_K,
    scorer: Scorer | None = None,
) -> RolloutStats:
    """Estimate difficulty with k independent policy rollouts.

    Each rollout answers the distillation prompt; the scored prediction is
    the extracted answer (or the full completion if extraction fails). The
    probe is all-or-nothing per sample: any rollout failure raises and no
    partial stats are emitted.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if scorer is None:
        raise ConfigError("probe_difficulty requires a scorer (e.g. a short-form verifier)")
    prompt = build_distill_prompt(sample.question)

    def one_rollout(_: int) -> Verdict:
        completion = chat_complete(policy, None, prompt)
        prediction, _method = extract_answer(completion.text)
        return scorer(sample.question, sample.reference_answer, prediction or completion.text)

    if k == 1:
        verdicts = [one_rollout(0)]
    else:
        with ThreadPoolExecutor(max_workers=min(k, policy.max_concurrency)) as pool:
            verdicts = list(pool.map(one_rollout, range(k)))
    return stats_from_verdicts(sample.id, verdicts)


def is_hard(stats: RolloutStats, failure_threshold: float) -> bool:
    # Compare in integers against threshold*k; avoids failure_rate float ties.
    return stats.failures > failure_threshold * stats.k


def is_verifiable(sample: Sample, answer_max_tokens: int, method: TokenMethod = TokenMethod.WHITESPACE) -> bool:
    return count_tokens(sample.reference_answer, method).count < answer_max_tokens


def select_rl(
    samples: Sequence[Sample],
    stats: Mapping[str, RolloutStats],
    failure_threshold: float = DEFAULT_FAILURE_THRESHOLD,
    answer_max_tokens: int = DEFAULT_ANSWER_MAX_TOKENS,
    method: TokenMethod = TokenMethod.WHITESPACE,
) -> list[Sample]:
    """Keep hard-but-verifiable samples, preserving input order."""
    for sample in samples:
        if sample.id not in stats:
            raise DataError(f"no rollout stats for sample {sample.id!r}")
    return [
        sample
        for sample in samples
        if is_hard(stats[sample.id], failure_threshold) and is_verifiable(sample, answer_max_tokens, method)
    ]


def write_rollout_stats(stats: Iterable[RolloutStats], path: str | Path) -> int:
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for record in stats:
            fh.write(json.dumps(record.to_json_dict()))
            fh.write("\n")
            n += 1
    return n


def load_rollout_stats(path: str | Path) -> dict[str, RolloutStats]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"rollout stats file not found: {path}")
    stats: dict[str, RolloutStats] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = RolloutStats.from_json_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: malformed stats record: {exc}") from exc
            stats[record.sample_id] = record
    return stats
