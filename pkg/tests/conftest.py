import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


@pytest.fixture
def tiny_jsonl() -> pathlib.Path:
    return FIXTURES / "tiny.jsonl"
