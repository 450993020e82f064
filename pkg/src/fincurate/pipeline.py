"""Config-driven orchestration of the curation stages, with audit manifests.

A pipeline config declares the input corpus, a working directory, endpoint
definitions, and an ordered list of stages (``dedup``, ``distill``,
``verify``, ``filter`` for the SFT corpus; ``probe`` and ``select_rl`` for
the RL corpus). Each stage writes its output file into the working
directory and appends one manifest line to ``manifest.jsonl`` the moment it
completes, so an aborted run leaves the completed prefix intact and a rerun
with ``resume: true`` picks up from the intermediate files.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import yaml

from . import dedup as dedup_mod
from . import selection
from .corpus import PipelineManifest, Sample, load_corpus, write_corpus
from .distill import DistillationRecord, extract_boxed, synthesize_cot, write_distillation_records
from .endpoints import EndpointConfig, chat_complete, endpoint_from_dict
from .errors import ConfigError, DataError
from .lengths import TokenMethod, filter_by_length
from .verify import (
    Route,
    VerificationRecord,
    build_long_prompt,
    build_short_prompt,
    filter_verified,
    parse_long_verdict,
    parse_short_verdict,
    route,
    verify_short,
    write_verification_records,
)

STAGE_OUTPUTS = {
    "dedup": "dedup.jsonl",
    "distill": "distill.jsonl",
    "verify": "verify.jsonl",
    "filter": "sft.jsonl",
    "probe": "rollout_stats.jsonl",
    "select_rl": "rl.jsonl",
}

STAGE_OPTIONS = {
    "dedup": {"threshold", "batch_size", "vector_cache"},
    "distill": {"max_attempts"},
    "verify": {"short_token_limit", "token_method"},
    "filter": {"max_tokens", "token_method"},
    "probe": {"k"},
    "select_rl": {"failure_threshold", "answer_max_tokens", "token_method"},
}

STAGE_ENDPOINTS = {
    "dedup": ("embedder",),
    "distill": ("distiller",),
    "verify": ("verifier", "judge"),
    "filter": (),
    "probe": ("policy", "verifier"),
    "select_rl": (),
}


@dataclass(slots=True)
class StageSpec:
    name: str
    options: dict

    def opt(self, key: str, default):
        return self.options.get(key, default)


@dataclass(slots=True)
class PipelineConfig:
    input: Path
    workdir: Path
    stages: list[StageSpec]
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)
    resume: bool = False
    lenient: bool = False

    def endpoint(self, name: str) -> EndpointConfig:
        try:
            return self.endpoints[name]
        except KeyError:
            raise ConfigError(f"pipeline config defines no {name!r} endpoint") from None


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"pipeline config not found: {path}")
    try:
        obj = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return pipeline_config_from_dict(obj, base_dir=path.parent)


def pipeline_config_from_dict(obj: dict, base_dir: Path | None = None) -> PipelineConfig:
    """Validate the whole config up front: bad stage names fail before any work."""
    base = base_dir or Path(".")
    unknown_top = set(obj) - {"input", "workdir", "stages", "endpoints", "resume", "lenient"}
    if unknown_top:
        raise ConfigError(f"unknown pipeline config keys: {sorted(unknown_top)}")
    for key in ("input", "workdir", "stages"):
        if key not in obj:
            raise ConfigError(f"pipeline config missing {key!r}")

    endpoints = {}
    endpoints_obj = obj.get("endpoints", {})
    if not isinstance(endpoints_obj, dict):
        raise ConfigError("endpoints must be a mapping of name -> endpoint config")
    for name, spec in endpoints_obj.items():
        endpoints[str(name)] = endpoint_from_dict(spec)

    stages: list[StageSpec] = []
    if not isinstance(obj["stages"], list) or not obj["stages"]:
        raise ConfigError("stages must be a non-empty list")
    for raw in obj["stages"]:
        if isinstance(raw, str):
            raw = {"name": raw}
        if not isinstance(raw, dict) or "name" not in raw:
            raise ConfigError(f"each stage needs a name: {raw!r}")
        name = str(raw["name"]).replace("-", "_")
        if name not in STAGE_OUTPUTS:
            raise ConfigError(f"unknown stage name: {raw['name']!r} (known: {sorted(STAGE_OUTPUTS)})")
        options = {k: v for k, v in raw.items() if k != "name"}
        unknown = set(options) - STAGE_OPTIONS[name]
        if unknown:
            raise ConfigError(f"stage {name!r}: unknown options {sorted(unknown)}")
        for endpoint_name in STAGE_ENDPOINTS[name]:
            if endpoint_name not in endpoints:
                raise ConfigError(f"stage {name!r} requires an {endpoint_name!r} endpoint")
        stages.append(StageSpec(name=name, options=options))

    input_path = Path(obj["input"])
    workdir = Path(obj["workdir"])
    if not input_path.is_absolute():
        input_path = base / input_path
    if not workdir.is_absolute():
        workdir = base / workdir
    return PipelineConfig(
        input=input_path,
        workdir=workdir,
        stages=stages,
        endpoints=endpoints,
        resume=bool(obj.get("resume", False)),
        lenient=bool(obj.get("lenient", False)),
    )


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _append_manifest(workdir: Path, manifest: PipelineManifest) -> None:
    with (workdir / "manifest.jsonl").open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest.to_json_dict(), ensure_ascii=False))
        fh.write("\n")


def load_manifests(workdir: str | Path) -> list[PipelineManifest]:
    path = Path(workdir) / "manifest.jsonl"
    if not path.is_file():
        return []
    manifests = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                manifests.append(PipelineManifest.from_json_dict(json.loads(line)))
    return manifests


def _stringify(options: dict) -> dict[str, str]:
    return {str(k): str(v) for k, v in sorted(options.items())}


def _pool_map(fn: Callable, items: list, workers: int) -> list:
    """Order-preserving concurrent map."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _stage_dedup(samples: list[Sample], cfg: PipelineConfig, spec: StageSpec) -> tuple[list[Sample], dict[str, str]]:
    threshold = float(spec.opt("threshold", dedup_mod.DEFAULT_THRESHOLD))
    batch_size = int(spec.opt("batch_size", 64))
    cache_name = spec.opt("vector_cache", None)
    vectors = None
    if cache_name:
        cache_path = cfg.workdir / str(cache_name)
        if cache_path.is_file():
            vectors = dedup_mod.load_vector_cache(cache_path)
            missing = [s.id for s in samples if s.id not in vectors]
            if missing:
                vectors = None  # stale cache: recompute everything
    if vectors is None:
        vectors = dedup_mod.embed_corpus(samples, cfg.endpoint("embedder"), batch_size=batch_size)
        if cache_name:
            dedup_mod.write_vector_cache(vectors, cfg.workdir / str(cache_name))
    report = dedup_mod.deduplicate(samples, vectors, threshold=threshold)
    removed_path = cfg.workdir / "dedup_removed.jsonl"
    with removed_path.open("w", encoding="utf-8") as fh:
        for removed_id, kept_id, similarity in report.removed:
            fh.write(json.dumps({"removed_id": removed_id, "kept_id": kept_id, "similarity": similarity}))
            fh.write("\n")
    kept_set = set(report.kept_ids)
    kept = [s for s in samples if s.id in kept_set]
    params = _stringify({"threshold": threshold, "batch_size": batch_size})
    return kept, params


def _stage_distill(samples: list[Sample], cfg: PipelineConfig, spec: StageSpec) -> tuple[list[Sample], dict[str, str]]:
    max_attempts = int(spec.opt("max_attempts", 1))
    distiller = cfg.endpoint("distiller")

    def one(sample: Sample) -> DistillationRecord:
        return synthesize_cot(sample, distiller, max_attempts=max_attempts)

    records = _pool_map(one, samples, distiller.max_concurrency)
    write_distillation_records(records, cfg.workdir / "distill_records.jsonl")
    out: list[Sample] = []
    for sample, record in zip(samples, records):
        if not record.accepted:
            continue
        out.append(sample if sample.cot is not None else sample.with_cot(record.generated_cot))
    params = _stringify(
        {
            "max_attempts": max_attempts,
            "passed_through": sum(1 for s in samples if s.cot is not None),
            "dropped_no_answer": sum(1 for r in records if not r.accepted),
        }
    )
    return out, params


def _stage_verify(samples: list[Sample], cfg: PipelineConfig, spec: StageSpec) -> tuple[list[Sample], dict[str, str]]:
    limit = int(spec.opt("short_token_limit", 16))
    method = TokenMethod(spec.opt("token_method", "whitespace"))
    records = verify_batch(
        samples,
        verifier=cfg.endpoint("verifier"),
        judge=cfg.endpoint("judge"),
        short_token_limit=limit,
        method=method,
    )
    write_verification_records(records, cfg.workdir / "verify_records.jsonl")
    by_id = {r.sample_id: r for r in records}
    kept = filter_verified(samples, by_id)
    dropped_by_verdict = {"Incorrect": 0, "Invalid": 0}
    for record in records:
        if record.verdict.value in dropped_by_verdict:
            dropped_by_verdict[record.verdict.value] += 1
    params = _stringify(
        {
            "short_token_limit": limit,
            "token_method": method.value,
            "dropped_incorrect": dropped_by_verdict["Incorrect"],
            "dropped_invalid": dropped_by_verdict["Invalid"],
        }
    )
    return kept, params


def _stage_filter(samples: list[Sample], cfg: PipelineConfig, spec: StageSpec) -> tuple[list[Sample], dict[str, str]]:
    max_tokens = int(spec.opt("max_tokens", 16_384))
    method = TokenMethod(spec.opt("token_method", "whitespace"))
    kept = filter_by_length(samples, max_tokens=max_tokens, method=method)
    return kept, _stringify({"max_tokens": max_tokens, "token_method": method.value})


def _stage_probe(samples: list[Sample], cfg: PipelineConfig, spec: StageSpec) -> tuple[list[Sample], dict[str, str]]:
    k = int(spec.opt("k", selection.DEFAULT_K))
    policy = cfg.endpoint("policy")
    verifier = cfg.endpoint("verifier")

    def scorer(question: str, reference: str, prediction: str):
        return verify_short(question, reference, prediction, verifier)

    def one(sample: Sample) -> selection.RolloutStats:
        return selection.probe_difficulty(sample, policy, k=k, scorer=scorer)

    stats = _pool_map(one, samples, policy.max_concurrency)
    selection.write_rollout_stats(stats, cfg.workdir / STAGE_OUTPUTS["probe"])
    return samples, _stringify({"k": k})


def _stage_select_rl(samples: list[Sample], cfg: PipelineConfig, spec: StageSpec) -> tuple[list[Sample], dict[str, str]]:
    failure_threshold = float(spec.opt("failure_threshold", selection.DEFAULT_FAILURE_THRESHOLD))
    answer_max_tokens = int(spec.opt("answer_max_tokens", selection.DEFAULT_ANSWER_MAX_TOKENS))
    method = TokenMethod(spec.opt("token_method", "whitespace"))
    stats_path = cfg.workdir / STAGE_OUTPUTS["probe"]
    stats = selection.load_rollout_stats(stats_path)
    kept = selection.select_rl(
        samples,
        stats,
        failure_threshold=failure_threshold,
        answer_max_tokens=answer_max_tokens,
        method=method,
    )
    not_hard = sum(1 for s in samples if not selection.is_hard(stats[s.id], failure_threshold))
    too_long = sum(1 for s in samples if not selection.is_verifiable(s, answer_max_tokens, method))
    params = _stringify(
        {
            "failure_threshold": failure_threshold,
            "answer_max_tokens": answer_max_tokens,
            "token_method": method.value,
            "dropped_not_hard": not_hard,
            "dropped_answer_too_long": too_long,
        }
    )
    return kept, params


_STAGE_FNS = {
    "dedup": _stage_dedup,
    "distill": _stage_distill,
    "verify": _stage_verify,
    "filter": _stage_filter,
    "probe": _stage_probe,
    "select_rl": _stage_select_rl,
}


def run_pipeline(config: str | Path | PipelineConfig) -> list[PipelineManifest]:
    """Execute the configured stages in order; returns one manifest per stage."""
    cfg = config if isinstance(config, PipelineConfig) else load_pipeline_config(config)
    cfg.workdir.mkdir(parents=True, exist_ok=True)

    completed = {m.stage_name: m for m in load_manifests(cfg.workdir)} if cfg.resume else {}

    loader = load_corpus(cfg.input, lenient=cfg.lenient)
    samples = list(loader)
    manifests: list[PipelineManifest] = []
    for spec in cfg.stages:
        out_path = cfg.workdir / STAGE_OUTPUTS[spec.name]
        if cfg.resume and spec.name in completed and out_path.is_file():
            if spec.name == "probe":
                pass  # stats file already on disk; samples flow through unchanged
            else:
                samples = list(load_corpus(out_path))
            manifests.append(completed[spec.name])
            continue
        started = _utcnow()
        stage_fn = _STAGE_FNS[spec.name]
        input_count = len(samples)
        samples, params = stage_fn(samples, cfg, spec)
        if spec.name != "probe":
            write_corpus(samples, out_path)
        manifest = PipelineManifest(
            stage_name=spec.name,
            input_count=input_count,
            output_count=len(samples),
            dropped=input_count - len(samples),
            parameters=params,
            started_at=started,
            finished_at=_utcnow(),
        )
        _append_manifest(cfg.workdir, manifest)
        manifests.append(manifest)
    return manifests
