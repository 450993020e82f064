"""Embedding-based semantic deduplication over the raw pool.

A sample is embedded as ``question + "\\n\\n" + reference_answer`` (pairs that
differ only in the answer are not duplicates). The scan is greedy and
keep-earliest: walking the corpus in input order, a sample is removed iff its
cosine similarity with some already-kept sample reaches the threshold, and the
earliest qualifying kept sample is recorded as its keeper. Exact search, no
approximate nearest neighbors: the result is deterministic and checkable
against a brute-force oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Sample
from .endpoints import EndpointConfig, embed
from .errors import ConfigError, DataError

DEFAULT_THRESHOLD = 0.95


@dataclass(frozen=True)
class EmbeddingVector:
    sample_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise DataError(f"embedding for {self.sample_id!r} must be a non-empty 1-d vector")
        if not np.all(np.isfinite(values)):
            raise DataError(f"embedding for {self.sample_id!r} contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(slots=True)
class DedupReport:
    kept_ids: list[str]
    removed: list[tuple[str, str, float]]  # (removed_id, kept_id, similarity)

    @property
    def removed_ids(self) -> set[str]:
        return {removed_id for removed_id, _, _ in self.removed}


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding."""
    if u.dim != v.dim:
        raise DataError(f"dimension mismatch: {u.sample_id!r} has {u.dim}, {v.sample_id!r} has {v.dim}")
    norm_u = float(np.linalg.norm(u.values))
    norm_v = float(np.linalg.norm(v.values))
    if norm_u == 0.0 or norm_v == 0.0:
        raise DataError("cosine similarity is undefined for zero-norm vectors")
    sim = float(np.dot(u.values, v.values)) / (norm_u * norm_v)
    return max(-1.0, min(1.0, sim))


def deduplicate(
    samples: Sequence[Sample],
    vectors: Mapping[str, EmbeddingVector],
    threshold: float = DEFAULT_THRESHOLD,
) -> DedupReport:
    """Greedy keep-earliest scan; deterministic given input order."""
    if not (0 < threshold <= 1):
        raise ConfigError("threshold must be in (0, 1]")
    for sample in samples:
        if sample.id not in vectors:
            raise DataError(f"no embedding vector for sample {sample.id!r}")
    if not samples:
        return DedupReport(kept_ids=[], removed=[])

    dims = {vectors[s.id].dim for s in samples}
    if len(dims) != 1:
        raise DataError(f"embedding dimensions are inconsistent: {sorted(dims)}")
    dim = dims.pop()

    n = len(samples)
    raw = np.empty((n, dim), dtype=np.float64)
    for i, sample in enumerate(samples):
        raw[i] = vectors[sample.id].values
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms == 0.0):
        bad = samples[int(np.argmax(norms == 0.0))].id
        raise DataError(f"zero-norm embedding for sample {bad!r}")

    kept_ids: list[str] = []
    removed: list[tuple[str, str, float]] = []
    kept_rows = np.empty((n, dim), dtype=np.float64)
    kept_norms = np.empty(n, dtype=np.float64)
    kept_count = 0
    for i, sample in enumerate(samples):
        keeper_idx = -1
        similarity = 0.0
        if kept_count:
            sims = (kept_rows[:kept_count] @ raw[i]) / (kept_norms[:kept_count] * norms[i])
            np.clip(sims, -1.0, 1.0, out=sims)
            hits = np.flatnonzero(sims >= threshold)
            if hits.size:
                keeper_idx = int(hits[0])  # earliest kept sample wins
                similarity = float(sims[keeper_idx])
        if keeper_idx >= 0:
            removed.append((sample.id, kept_ids[keeper_idx], similarity))
        else:
            kept_rows[kept_count] = raw[i]
            kept_norms[kept_count] = norms[i]
            kept_ids.append(sample.id)
            kept_count += 1
    return DedupReport(kept_ids=kept_ids, removed=removed)


def embed_corpus(
    samples: Sequence[Sample],
    embedder: EndpointConfig,
    batch_size: int = 64,
) -> dict[str, EmbeddingVector]:
    """Embed every sample's question/answer pair; one vector per sample id."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if not samples:
        return {}
    texts = [embedding_text(s) for s in samples]
    vectors = embed(embedder, texts, batch_size=batch_size)
    return {
        sample.id: EmbeddingVector(sample_id=sample.id, values=np.asarray(vec))
        for sample, vec in zip(samples, vectors)
    }


def embedding_text(sample: Sample) -> str:
    return f"{sample.question}\n\n{sample.reference_answer}"


def write_vector_cache(vectors: Mapping[str, EmbeddingVector], path: str | Path) -> int:
    """Persist vectors one record per line: {"sample_id": ..., "values": [...]}."""
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for sample_id in vectors:
            vec = vectors[sample_id]
            fh.write(json.dumps({"sample_id": sample_id, "values": vec.values.tolist()}))
            fh.write("\n")
            n += 1
    return n


def load_vector_cache(path: str | Path) -> dict[str, EmbeddingVector]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"vector cache not found: {path}")
    vectors: dict[str, EmbeddingVector] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                vec = EmbeddingVector(sample_id=obj["sample_id"], values=np.asarray(obj["values"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed vector record: {exc}") from exc
            vectors[vec.sample_id] = vec
    return vectors
