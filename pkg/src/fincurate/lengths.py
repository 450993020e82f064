"""Token counting and the token-budget filter.

The pipeline never vendors a model tokenizer: the default ``whitespace``
method counts maximal non-whitespace runs, ``chars_div_4`` is the usual
four-characters-per-token estimate, and ``external`` defers to a serving
endpoint's ``POST {base_url}/tokenize`` route for model-exact counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .corpus import Sample
from .endpoints import EndpointConfig, count_tokens_external
from .errors import ConfigError

DEFAULT_MAX_TOKENS = 16_384


class TokenMethod(str, Enum):
    WHITESPACE = "whitespace"
    CHARS_DIV_4 = "chars_div_4"
    EXTERNAL = "external"


@dataclass(frozen=True, slots=True)
class TokenCount:
    method: TokenMethod
    count: int

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError("token count must be >= 0")


def count_tokens(
    text: str,
    method: TokenMethod = TokenMethod.WHITESPACE,
    endpoint: EndpointConfig | None = None,
) -> TokenCount:
    """Count tokens in ``text`` with the chosen method; deterministic per method."""
    method = TokenMethod(method)
    if method is TokenMethod.WHITESPACE:
        return TokenCount(method, len(text.split()))
    if method is TokenMethod.CHARS_DIV_4:
        return TokenCount(method, math.ceil(len(text) / 4))
    if endpoint is None:
        raise ConfigError("external token counting requires a tokenizer endpoint")
    return TokenCount(method, count_tokens_external(endpoint, text))


def sample_token_length(
    sample: Sample,
    method: TokenMethod = TokenMethod.WHITESPACE,
    endpoint: EndpointConfig | None = None,
) -> int:
    """Training-sequence length of a sample: question + cot (if any) + answer."""
    total = count_tokens(sample.question, method, endpoint).count
    if sample.cot is not None:
        total += count_tokens(sample.cot, method, endpoint).count
    total += count_tokens(sample.reference_answer, method, endpoint).count
    return total


def filter_by_length(
    samples: Sequence[Sample] | Iterable[Sample],
    max_tokens: int = DEFAULT_MAX_TOKENS,
    method: TokenMethod = TokenMethod.WHITESPACE,
    endpoint: EndpointConfig | None = None,
) -> list[Sample]:
    """Keep samples whose total length is at most ``max_tokens`` (boundary inclusive)."""
    if max_tokens < 1:
        raise ConfigError("max_tokens must be >= 1")
    return [s for s in samples if sample_token_length(s, method, endpoint) <= max_tokens]
