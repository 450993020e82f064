from __future__ import annotations

import random
import string
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mockapi import MockServer

from fincurate.corpus import Language, Sample, TaskType
from fincurate.endpoints import EndpointConfig, SamplingParams


@pytest.fixture(scope="session")
def mock_server():
    server = MockServer().start()
    yield server
    server.stop()


@pytest.fixture
def make_endpoint(mock_server):
    def _make(model: str, **overrides) -> EndpointConfig:
        kwargs = dict(
            base_url=mock_server.base_url,
            model=model,
            timeout=30.0,
            max_retries=0,
            max_concurrency=8,
            sampling=SamplingParams(temperature=0.0, top_p=1.0, max_tokens=512),
        )
        kwargs.update(overrides)
        return EndpointConfig(**kwargs)

    return _make


def random_sample(rng: random.Random, idx: int, with_cot: bool = False) -> Sample:
    """One random but valid sample; unicode sneaks in to exercise encoding."""
    words = ["revenue", "ebitda", "margin", "利润", "增长", "yield", "spread", "beta"]
    question = " ".join(rng.choices(words, k=rng.randint(3, 12))) + "?"
    answer = " ".join(rng.choices(words, k=rng.randint(1, 6)))
    metadata = {}
    if rng.random() < 0.3:
        metadata = {"split": rng.choice(["train", "dev"]), "rank": str(rng.randint(0, 9))}
    return Sample(
        id=f"s{idx:05d}",
        source=rng.choice(["fin-instruct", "phrasebank", "fomc", "tatqa"]),
        task_type=rng.choice(list(TaskType)),
        language=rng.choice(list(Language)),
        question=question,
        reference_answer=answer,
        cot="step one\n\nstep two: " + answer if with_cot else None,
        metadata=metadata,
    )


def random_corpus(rng: random.Random, n: int, cot_fraction: float = 0.0) -> list[Sample]:
    return [random_sample(rng, i, with_cot=rng.random() < cot_fraction) for i in range(n)]


def random_text(rng: random.Random, max_len: int = 40) -> str:
    alphabet = string.ascii_letters + string.digits + " {}\\<>/.,:%$'\"\n"
    return "".join(rng.choices(alphabet, k=rng.randint(0, max_len)))
