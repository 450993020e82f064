"""Versioned text assets: prompt templates and the answer-phrase pattern set."""

from importlib import resources


def load_text(name: str) -> str:
    """Read a packaged asset, trimming the trailing file newline."""
    text = resources.files(__package__).joinpath(name).read_text(encoding="utf-8")
    return text.rstrip("\n")


def load_patterns(name: str) -> list[str]:
    """Read one regex per non-comment line."""
    lines = load_text(name).splitlines()
    return [line.strip() for line in lines if line.strip() and not line.startswith("#")]
