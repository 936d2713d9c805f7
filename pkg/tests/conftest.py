import os

import numpy as np
import pytest

from selattn import trials

AUDIT_SEED = 12345
AUDIT_COUNT = 100_000

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    prev = _ACCEPTANCE.get(number, (title, "PASS"))
    if failed:
        _ACCEPTANCE[number] = (title, "FAIL")
    elif rep.when == "call" and rep.passed:
        _ACCEPTANCE[number] = prev


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")


@pytest.fixture(scope="session")
def corpus_100k():
    return trials.generate_corpus(AUDIT_COUNT, AUDIT_SEED)


@pytest.fixture(scope="session")
def labels_100k(corpus_100k):
    return trials.classify_many(corpus_100k.trials)


@pytest.fixture
def rng():
    return np.random.default_rng(20241017)


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("SELATTN_OUTPUT_DIR", str(tmp_path))
    return tmp_path
