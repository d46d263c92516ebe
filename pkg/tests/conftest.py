import json
from pathlib import Path

import pytest

from sglayout import _kernels
from sglayout.graph import parse_vocab

DATA = Path(__file__).resolve().parents[1] / "src" / "sglayout" / "data"

# (criterion, passed, detail) rows appended by test_acceptance.py
ACCEPTANCE_RESULTS = []


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def vocab():
    return parse_vocab(DATA / "vocab.json")


@pytest.fixture
def fixture_corpus_path():
    return DATA / "fixture.jsonl"


@pytest.fixture
def synth_spec_doc():
    return json.loads((DATA / "synth_spec.json").read_text())


@pytest.fixture(params=["python", "native"])
def backend(request):
    if request.param == "native" and not _kernels.HAVE_NATIVE:
        pytest.skip("compiled kernels not built")
    previous = _kernels.backend
    _kernels.use_backend(request.param)
    yield request.param
    _kernels.use_backend(previous)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")
