"""Canonical sample schema, line-delimited record I/O, and corpus statistics.

A corpus file is UTF-8, one JSON record per line, with the field order
``id, source, task_type, language, question, reference_answer, cot, metadata``.
Optional fields (``cot``; an empty ``metadata`` map) are omitted rather than
written as null, so a canonicalized file round-trips byte for byte.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError

logger = logging.getLogger(__name__)

FIELD_ORDER = ("id", "source", "task_type", "language", "question", "reference_answer", "cot", "metadata")


class TaskType(str, Enum):
    FINANCIAL_QA = "financial_qa"
    SENTIMENT = "sentiment"
    INFO_EXTRACTION = "info_extraction"
    FORECASTING = "forecasting"
    TRADING = "trading"
    RISK = "risk"
    OTHER = "other"


class Language(str, Enum):
    EN = "en"
    ZH = "zh"
    OTHER = "other"


def coerce_task_type(value: str) -> TaskType:
    """Map a raw task label onto the taxonomy; unknown labels become OTHER."""
    try:
        return TaskType(value)
    except ValueError:
        logger.warning("unknown task_type %r mapped to 'other'", value)
        return TaskType.OTHER


def coerce_language(value: str) -> Language:
    """Map a raw language label onto the enumeration; unknown labels become OTHER."""
    try:
        return Language(value)
    except ValueError:
        logger.warning("unknown language %r mapped to 'other'", value)
        return Language.OTHER


@dataclass(frozen=True, slots=True)
class Sample:
    """One raw or curated training record.

    Samples are immutable value objects, safe to share across pipeline
    workers. ``cot`` is the chain-of-thought trace when one exists.
    """

    id: str
    source: str
    task_type: TaskType
    language: Language
    question: str
    reference_answer: str
    cot: str | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("sample id must be non-empty")
        if not self.question.strip():
            raise DataError(f"sample {self.id!r}: question is empty")
        if not self.reference_answer.strip():
            raise DataError(f"sample {self.id!r}: reference_answer is empty")
        if self.cot is not None and not self.cot.strip():
            object.__setattr__(self, "cot", None)
        if not isinstance(self.task_type, TaskType):
            object.__setattr__(self, "task_type", coerce_task_type(str(self.task_type)))
        if not isinstance(self.language, Language):
            object.__setattr__(self, "language", coerce_language(str(self.language)))

    def with_cot(self, cot: str) -> "Sample":
        return Sample(
            id=self.id,
            source=self.source,
            task_type=self.task_type,
            language=self.language,
            question=self.question,
            reference_answer=self.reference_answer,
            cot=cot,
            metadata=self.metadata,
        )

    def to_json_dict(self) -> dict:
        out: dict = {
            "id": self.id,
            "source": self.source,
            "task_type": self.task_type.value,
            "language": self.language.value,
            "question": self.question,
            "reference_answer": self.reference_answer,
        }
        if self.cot is not None:
            out["cot"] = self.cot
        if self.metadata:
            out["metadata"] = dict(sorted(self.metadata.items()))
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Sample":
        if not isinstance(obj, dict):
            raise DataError("record is not a JSON object")
        unknown = set(obj) - set(FIELD_ORDER)
        if unknown:
            raise DataError(f"unknown fields: {sorted(unknown)}")
        missing = {"id", "source", "task_type", "language", "question", "reference_answer"} - set(obj)
        if missing:
            raise DataError(f"missing fields: {sorted(missing)}")
        metadata = obj.get("metadata", {})
        if not isinstance(metadata, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
        ):
            raise DataError("metadata must be a string-to-string map")
        cot = obj.get("cot")
        if cot is not None and not isinstance(cot, str):
            raise DataError("cot must be a string when present")
        for key in ("id", "source", "task_type", "language", "question", "reference_answer"):
            if not isinstance(obj[key], str):
                raise DataError(f"field {key!r} must be a string")
        return cls(
            id=obj["id"],
            source=obj["source"],
            task_type=coerce_task_type(obj["task_type"]),
            language=coerce_language(obj["language"]),
            question=obj["question"],
            reference_answer=obj["reference_answer"],
            cot=cot,
            metadata=metadata,
        )


@dataclass(slots=True)
class PipelineManifest:
    """Per-stage audit record: counts, parameters, and wall-clock bounds.

    For filtering stages ``output_count + dropped == input_count``.
    """

    stage_name: str
    input_count: int
    output_count: int
    dropped: int
    parameters: dict[str, str] = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""

    def __post_init__(self) -> None:
        if self.output_count + self.dropped != self.input_count:
            raise DataError(
                f"stage {self.stage_name!r}: output ({self.output_count}) + dropped "
                f"({self.dropped}) != input ({self.input_count})"
            )

    def to_json_dict(self) -> dict:
        return {
            "stage_name": self.stage_name,
            "input_count": self.input_count,
            "output_count": self.output_count,
            "dropped": self.dropped,
            "parameters": dict(sorted(self.parameters.items())),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PipelineManifest":
        return cls(
            stage_name=obj["stage_name"],
            input_count=obj["input_count"],
            output_count=obj["output_count"],
            dropped=obj["dropped"],
            parameters=obj.get("parameters", {}),
            started_at=obj.get("started_at", ""),
            finished_at=obj.get("finished_at", ""),
        )


@dataclass(slots=True)
class CorpusStats:
    total: int
    by_source: dict[str, int]
    by_task: dict[str, int]
    by_language: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "by_source": dict(sorted(self.by_source.items())),
            "by_task": dict(sorted(self.by_task.items())),
            "by_language": dict(sorted(self.by_language.items())),
        }


class CorpusLoader:
    """Iterable over the samples of one corpus file.

    Strict by default: the first malformed line aborts with its line number.
    In lenient mode malformed lines are skipped and counted in ``skipped``.
    Duplicate ids are always an error, in either mode.
    """

    def __init__(self, path: str | Path, lenient: bool = False):
        self.path = Path(path)
        self.lenient = lenient
        self.skipped = 0
        if not self.path.is_file():
            raise DataError(f"corpus file not found: {self.path}")

    def __iter__(self) -> Iterator[Sample]:
        seen: dict[str, int] = {}
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    sample = Sample.from_json_dict(obj)
                except (json.JSONDecodeError, DataError) as exc:
                    if self.lenient:
                        self.skipped += 1
                        logger.warning("%s:%d skipped malformed line: %s", self.path, lineno, exc)
                        continue
                    raise DataError(f"{self.path}:{lineno}: {exc}") from exc
                if sample.id in seen:
                    raise DataError(
                        f"{self.path}: duplicate id {sample.id!r} at lines {seen[sample.id]} and {lineno}"
                    )
                seen[sample.id] = lineno
                yield sample


def load_corpus(path: str | Path, lenient: bool = False) -> CorpusLoader:
    """Open a corpus file for validated, order-preserving iteration."""
    return CorpusLoader(path, lenient=lenient)


def write_corpus(samples: Iterable[Sample], path: str | Path) -> int:
    """Write samples one record per line; returns the number written."""
    path = Path(path)
    if not path.parent.is_dir():
        raise DataError(f"destination directory does not exist: {path.parent}")
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            if not isinstance(sample, Sample):
                raise DataError(f"cannot serialize non-Sample object: {type(sample).__name__}")
            fh.write(json.dumps(sample.to_json_dict(), ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


def compute_stats(samples: Iterable[Sample]) -> CorpusStats:
    """Count samples by source, task type, and language."""
    by_source: Counter = Counter()
    by_task: Counter = Counter()
    by_language: Counter = Counter()
    total = 0
    for sample in samples:
        total += 1
        by_source[sample.source] += 1
        by_task[sample.task_type.value] += 1
        by_language[sample.language.value] += 1
    return CorpusStats(
        total=total,
        by_source=dict(by_source),
        by_task=dict(by_task),
        by_language=dict(by_language),
    )
