import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fincurate.corpus import Language, Sample, TaskType
from fincurate.distill import (
    DISTILL_PROMPT_TEMPLATE,
    DistillationRecord,
    build_distill_prompt,
    extract_boxed,
    synthesize_cot,
    write_distillation_records,
)
from fincurate.endpoints import EndpointConfig
from fincurate.errors import ConfigError, DataError


def sample(idx: int, question: str = "what is ROI?", cot: str | None = None) -> Sample:
    return Sample(
        id=f"d{idx}",
        source="src",
        task_type=TaskType.FINANCIAL_QA,
        language=Language.EN,
        question=question,
        reference_answer="42",
        cot=cot,
    )


class TestBuildPrompt:
    def test_contains_header_and_ends_with_question(self):
        prompt = build_distill_prompt("What is ROI?")
        assert "You are an expert in financial tasks" in prompt
        assert prompt.endswith("Question: What is ROI?")

    def test_braces_preserved_literally(self):
        prompt = build_distill_prompt("solve {x} for {x}=2")
        assert "solve {x} for {x}=2" in prompt

    def test_empty_question_rejected(self):
        with pytest.raises(ConfigError):
            build_distill_prompt("")

    def test_byte_for_byte_deterministic(self):
        assert build_distill_prompt("q1") == build_distill_prompt("q1")

    def test_template_has_single_slot(self):
        assert DISTILL_PROMPT_TEMPLATE.count("{question}") == 1


def oracle_extract_boxed(text: str) -> str | None:
    """Left-to-right recursive-descent reference: last complete group wins."""

    def parse_group(start: int) -> tuple[str | None, int]:
        depth = 1
        k = start
        while k < len(text):
            if text[k] == "{":
                depth += 1
            elif text[k] == "}":
                depth -= 1
                if depth == 0:
                    return text[start:k], k + 1
            k += 1
        return None, start

    result = None
    i = 0
    while True:
        j = text.find("\\boxed{", i)
        if j < 0:
            return result
        content, end = parse_group(j + len("\\boxed{"))
        if content is None:
            i = j + len("\\boxed{")
        else:
            result = content
            i = end


def braces_balanced(text: str) -> bool:
    depth = 0
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


class TestExtractBoxed:
    def test_simple(self):
        assert extract_boxed(r"\boxed{3.5}") == "3.5"

    def test_last_occurrence_wins(self):
        assert extract_boxed(r"\boxed{a} then \boxed{b}") == "b"

    def test_nested_fraction(self):
        # brace-balance trace: depth 1 at \frac's {1}, back to 0 at the outer }
        assert extract_boxed(r"\boxed{\frac{1}{2}}") == r"\frac{1}{2}"

    def test_unbalanced_is_absent(self):
        assert extract_boxed(r"\boxed{never closes") is None

    def test_unbalanced_last_falls_back_to_earlier(self):
        assert extract_boxed(r"\boxed{good} and \boxed{bad") == "good"

    def test_no_box(self):
        assert extract_boxed("the answer is 7") is None

    def test_empty_box(self):
        assert extract_boxed(r"\boxed{}") == ""

    def test_inner_box_is_the_last_occurrence(self):
        assert extract_boxed(r"\boxed{a \boxed{b} c}") == "b"

    def test_matches_oracle_on_generated_strings(self):
        rng = random.Random(2024)
        fillers = ["so", " the total is ", "x=1 ", "{stray", "}stray", " \\frac{1}{2} ", "\n"]
        contents = ["42", "-3.5%", "{a}{b}", "\\frac{7}{9}", "", "a{b{c}}d"]
        for _ in range(10_000):
            parts = []
            expected_groups = []
            for _ in range(rng.randint(0, 5)):
                parts.append(rng.choice(fillers))
                if rng.random() < 0.7:
                    content = rng.choice(contents)
                    parts.append("\\boxed{" + content + "}")
                    expected_groups.append(content)
            parts.append(rng.choice(fillers))
            text = "".join(parts)
            got = extract_boxed(text)
            assert got == oracle_extract_boxed(text)
            if expected_groups:
                assert got == expected_groups[-1]

    @given(st.text(alphabet="ab{}\\boxed ", max_size=60))
    @settings(max_examples=300, deadline=None)
    def test_never_returns_unbalanced_braces(self, text):
        got = extract_boxed(text)
        if got is not None:
            assert braces_balanced(got)


class TestSynthesize:
    def test_boxed_answer_extracted(self, mock_server, make_endpoint):
        config = make_endpoint("distiller")
        mock_server.reset_stats()
        record = synthesize_cot(sample(1, question="@@ans=42@@ what is six times seven?"), config)
        assert record.accepted and record.extracted_answer == "42"
        assert record.attempts == 1
        assert mock_server.stats()["chat_calls"] == 1
        assert "\\boxed{42}" in record.generated_cot

    def test_no_box_exhausts_attempts(self, mock_server, make_endpoint):
        config = make_endpoint("distiller")
        mock_server.reset_stats()
        record = synthesize_cot(sample(2, question="@@nobox@@ hard one"), config, max_attempts=2)
        assert not record.accepted
        assert record.extracted_answer is None
        assert record.attempts == 2
        assert mock_server.stats()["chat_calls"] == 2

    def test_existing_cot_passes_through_without_endpoint_call(self):
        # unreachable endpoint proves no call is made
        config = EndpointConfig(base_url="http://127.0.0.1:1/v1", model="x", timeout=0.2, max_retries=0)
        existing = "reasoning already present, answer \\boxed{99}"
        record = synthesize_cot(sample(3, cot=existing), config)
        assert record.accepted
        assert record.generated_cot == existing
        assert record.extracted_answer == "99"

    def test_existing_cot_without_box_uses_reference_answer(self):
        config = EndpointConfig(base_url="http://127.0.0.1:1/v1", model="x", timeout=0.2, max_retries=0)
        record = synthesize_cot(sample(4, cot="plain reasoning, no box"), config)
        assert record.accepted
        assert record.extracted_answer == "42"

    def test_bad_max_attempts(self, make_endpoint):
        with pytest.raises(ConfigError):
            synthesize_cot(sample(5), make_endpoint("distiller"), max_attempts=0)


class TestRecordInvariants:
    def test_accepted_requires_answer(self):
        with pytest.raises(DataError):
            DistillationRecord(sample_id="x", generated_cot="c", extracted_answer=None, attempts=1, accepted=True)

    def test_attempts_positive(self):
        with pytest.raises(DataError):
            DistillationRecord(sample_id="x", generated_cot="c", extracted_answer="a", attempts=0, accepted=True)

    def test_records_file(self, tmp_path):
        records = [
            DistillationRecord(sample_id="a", generated_cot="c1", extracted_answer="1", attempts=1, accepted=True),
            DistillationRecord(sample_id="b", generated_cot="c2", extracted_answer=None, attempts=2, accepted=False),
        ]
        path = tmp_path / "records.jsonl"
        assert write_distillation_records(records, path) == 2
        assert len(path.read_text().splitlines()) == 2
