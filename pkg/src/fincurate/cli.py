"""Command-line interface: one verb per pipeline stage, plus scoring,
evaluation, the reward service, and config-driven end-to-end runs.

Exit codes: 0 success, 1 config error, 2 data error, 3 endpoint error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import dedup as dedup_mod
from . import metrics as metrics_mod
from . import selection
from .corpus import compute_stats, load_corpus, write_corpus
from .distill import synthesize_cot, write_distillation_records
from .endpoints import EndpointConfig, load_endpoint_config
from .errors import ConfigError, DataError, EndpointError
from .lengths import TokenMethod, filter_by_length
from .pipeline import run_pipeline
from .reward import RewardMode, match_rule, total_reward
from .service import serve_reward
from .verify import Verdict, verify_short


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, ensure_ascii=False, indent=2))


def _load_samples(path: str, lenient: bool = False):
    loader = load_corpus(path, lenient=lenient)
    return list(loader), loader


def _endpoint(path: str | None) -> EndpointConfig:
    if path is None:
        raise ConfigError("an endpoint config file is required for this command")
    return load_endpoint_config(path)


token_method_option = click.option(
    "--token-method",
    type=click.Choice([m.value for m in TokenMethod if m is not TokenMethod.EXTERNAL]),
    default=TokenMethod.WHITESPACE.value,
    show_default=True,
)


@click.group()
def cli() -> None:
    """Curation pipeline and reward engine for financial QA corpora."""


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--lenient", is_flag=True, help="Skip malformed lines instead of aborting.")
def ingest(input_path: str, output_path: str, lenient: bool) -> None:
    """Validate a raw corpus file and write its canonical form."""
    samples, loader = _load_samples(input_path, lenient=lenient)
    written = write_corpus(samples, output_path)
    _echo_json({"written": written, "skipped": loader.skipped})


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path())
def stats(input_path: str) -> None:
    """Print source/task/language distribution counts."""
    samples, _ = _load_samples(input_path)
    _echo_json(compute_stats(samples).to_json_dict())


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--threshold", type=float, default=dedup_mod.DEFAULT_THRESHOLD, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--vector-cache", type=click.Path(), default=None, help="Reuse/store embeddings here.")
@click.option("--removed-out", type=click.Path(), default=None, help="Write removed (id, keeper, similarity) records.")
@click.option("--embedder-config", type=click.Path(), required=True)
def dedup(
    input_path: str,
    output_path: str,
    threshold: float,
    batch_size: int,
    vector_cache: str | None,
    removed_out: str | None,
    embedder_config: str,
) -> None:
    """Drop semantic duplicates via embedding cosine similarity."""
    samples, _ = _load_samples(input_path)
    vectors = None
    if vector_cache and Path(vector_cache).is_file():
        vectors = dedup_mod.load_vector_cache(vector_cache)
        if any(s.id not in vectors for s in samples):
            vectors = None
    if vectors is None:
        vectors = dedup_mod.embed_corpus(samples, _endpoint(embedder_config), batch_size=batch_size)
        if vector_cache:
            dedup_mod.write_vector_cache(vectors, vector_cache)
    report = dedup_mod.deduplicate(samples, vectors, threshold=threshold)
    kept_set = set(report.kept_ids)
    written = write_corpus([s for s in samples if s.id in kept_set], output_path)
    if removed_out:
        with Path(removed_out).open("w", encoding="utf-8") as fh:
            for removed_id, kept_id, similarity in report.removed:
                fh.write(json.dumps({"removed_id": removed_id, "kept_id": kept_id, "similarity": similarity}) + "\n")
    _echo_json({"input": len(samples), "kept": written, "removed": len(report.removed), "threshold": threshold})


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--records", "records_path", type=click.Path(), default=None)
@click.option("--max-attempts", type=int, default=1, show_default=True)
@click.option("--distiller-config", type=click.Path(), required=True)
def distill(input_path: str, output_path: str, records_path: str | None, max_attempts: int, distiller_config: str) -> None:
    """Synthesize chain-of-thought traces for samples lacking them."""
    samples, _ = _load_samples(input_path)
    distiller = _endpoint(distiller_config)
    records = [synthesize_cot(s, distiller, max_attempts=max_attempts) for s in samples]
    if records_path:
        write_distillation_records(records, records_path)
    out = []
    for sample, record in zip(samples, records):
        if record.accepted:
            out.append(sample if sample.cot is not None else sample.with_cot(record.generated_cot))
    written = write_corpus(out, output_path)
    _echo_json({"input": len(samples), "kept": written, "dropped_no_answer": len(samples) - written})


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--records", "records_path", type=click.Path(), default=None)
@click.option("--short-token-limit", type=int, default=16, show_default=True)
@click.option("--verifier-config", type=click.Path(), required=True)
@click.option("--judge-config", type=click.Path(), required=True)
def verify(
    input_path: str,
    output_path: str,
    records_path: str | None,
    short_token_limit: int,
    verifier_config: str,
    judge_config: str,
) -> None:
    """Route each sample to the short-form verifier or long-form judge and keep Correct ones."""
    from .pipeline import PipelineConfig, StageSpec, _stage_verify

    samples, _ = _load_samples(input_path)
    cfg = PipelineConfig(
        input=Path(input_path),
        workdir=Path(output_path).resolve().parent,
        stages=[],
        endpoints={"verifier": _endpoint(verifier_config), "judge": _endpoint(judge_config)},
    )
    spec = StageSpec(name="verify", options={"short_token_limit": short_token_limit})
    kept, params = _stage_verify(samples, cfg, spec)
    if records_path:
        (cfg.workdir / "verify_records.jsonl").replace(records_path)
    written = write_corpus(kept, output_path)
    _echo_json({"input": len(samples), "kept": written, **{k: v for k, v in params.items() if k.startswith("dropped")}})


@cli.command("filter")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--max-tokens", type=int, default=16_384, show_default=True)
@token_method_option
def filter_cmd(input_path: str, output_path: str, max_tokens: int, token_method: str) -> None:
    """Drop samples whose question + CoT + answer exceed the token budget."""
    samples, _ = _load_samples(input_path)
    kept = filter_by_length(samples, max_tokens=max_tokens, method=TokenMethod(token_method))
    written = write_corpus(kept, output_path)
    _echo_json({"input": len(samples), "kept": written, "dropped": len(samples) - written})


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--stats", "stats_path", required=True, type=click.Path(), help="Rollout stats output file.")
@click.option("--k", type=int, default=selection.DEFAULT_K, show_default=True)
@click.option("--policy-config", type=click.Path(), required=True)
@click.option("--verifier-config", type=click.Path(), required=True)
def probe(input_path: str, stats_path: str, k: int, policy_config: str, verifier_config: str) -> None:
    """Estimate per-sample difficulty with k policy rollouts."""
    samples, _ = _load_samples(input_path)
    policy = _endpoint(policy_config)
    verifier = _endpoint(verifier_config)

    def scorer(question: str, reference: str, prediction: str) -> Verdict:
        return verify_short(question, reference, prediction, verifier)

    stats = [selection.probe_difficulty(s, policy, k=k, scorer=scorer) for s in samples]
    selection.write_rollout_stats(stats, stats_path)
    _echo_json({"probed": len(stats), "k": k})


@cli.command("select-rl")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--stats", "stats_path", required=True, type=click.Path(), help="Rollout stats input file.")
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--failure-threshold", type=float, default=selection.DEFAULT_FAILURE_THRESHOLD, show_default=True)
@click.option("--answer-max-tokens", type=int, default=selection.DEFAULT_ANSWER_MAX_TOKENS, show_default=True)
@token_method_option
def select_rl_cmd(
    input_path: str,
    stats_path: str,
    output_path: str,
    failure_threshold: float,
    answer_max_tokens: int,
    token_method: str,
) -> None:
    """Keep hard-but-verifiable samples for RL training."""
    samples, _ = _load_samples(input_path)
    stats = selection.load_rollout_stats(stats_path)
    kept = selection.select_rl(
        samples,
        stats,
        failure_threshold=failure_threshold,
        answer_max_tokens=answer_max_tokens,
        method=TokenMethod(token_method),
    )
    written = write_corpus(kept, output_path)
    _echo_json({"input": len(samples), "kept": written, "dropped": len(samples) - written})


@cli.command()
@click.option("--response", required=True)
@click.option("--reference", required=True)
@click.option("--mode", type=click.Choice(["rule", "model"]), default="rule", show_default=True)
@click.option("--verifier-config", type=click.Path(), default=None)
def score(response: str, reference: str, mode: str, verifier_config: str | None) -> None:
    """Compute the reward breakdown for one response."""
    verifier = load_endpoint_config(verifier_config) if verifier_config else None
    breakdown = total_reward(response, reference, mode=RewardMode(mode), verifier=verifier)
    _echo_json(breakdown.to_json_dict())


@cli.command("eval")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(), help="JSONL with prediction/reference fields.")
@click.option("--metric", type=click.Choice([m.value for m in metrics_mod.Metric]), default="accuracy", show_default=True)
@click.option("--scorer", type=click.Choice(["rule", "model"]), default="rule", show_default=True)
@click.option("--verifier-config", type=click.Path(), default=None)
def eval_cmd(pairs_path: str, metric: str, scorer: str, verifier_config: str | None) -> None:
    """Score prediction/reference pairs with accuracy or weighted F1."""
    predictions: list[str] = []
    references: list[str] = []
    path = Path(pairs_path)
    if not path.is_file():
        raise DataError(f"pairs file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                predictions.append(str(obj["prediction"]))
                references.append(str(obj["reference"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: malformed pair record: {exc}") from exc
    if scorer == "rule":
        scorer_fn = match_rule
    else:
        verifier = _endpoint(verifier_config)

        def scorer_fn(prediction: str, reference: str) -> Verdict:
            return verify_short("N/A", reference, prediction, verifier)

    report = metrics_mod.evaluate(predictions, references, scorer_fn, metric=metrics_mod.Metric(metric))
    _echo_json(report.to_json_dict())


@cli.command("serve-reward")
@click.option("--bind", default="127.0.0.1:8000", show_default=True, help="host:port to listen on.")
@click.option("--mode", type=click.Choice(["rule", "model"]), default="rule", show_default=True)
@click.option("--verifier-config", type=click.Path(), default=None)
def serve_reward_cmd(bind: str, mode: str, verifier_config: str | None) -> None:
    """Run the stateless reward service."""
    verifier = load_endpoint_config(verifier_config) if verifier_config else None
    if mode == "model" and verifier is None:
        raise ConfigError("model mode requires --verifier-config")
    serve_reward(bind_address=bind, default_mode=RewardMode(mode), verifier=verifier)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
def run(config_path: str) -> None:
    """Run the configured pipeline stages end to end."""
    manifests = run_pipeline(config_path)
    _echo_json([m.to_json_dict() for m in manifests])


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 1
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except EndpointError as exc:
        click.echo(f"endpoint error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
