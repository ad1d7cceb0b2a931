import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sophia_bench.corpus import PatentDocument, SectionName  # noqa: E402
from sophia_bench.synthetic import FIXTURE_CONFIG, bundled_fixture_dir, make_corpus  # noqa: E402


def make_doc(doc_id, year=2020, family=None, juris="EP", ipc=(), **sections):
    from sophia_bench.ipc import parse_ipc

    secs = {SectionName(k): v for k, v in sections.items()} or {SectionName.TITLE: f"title {doc_id}"}
    return PatentDocument(doc_id, family or f"F-{doc_id}", year, juris, tuple(parse_ipc(c) for c in ipc), secs)


@pytest.fixture(scope="session")
def fixture_corpus():
    return make_corpus(FIXTURE_CONFIG)


@pytest.fixture(scope="session")
def fixture_dir():
    return bundled_fixture_dir()


# --- acceptance summary -------------------------------------------------------------

_ACCEPTANCE: dict[int, list[bool]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    crit = getattr(report, "criterion", None)
    if crit is None:
        for key in report.keywords:
            if key.startswith("test_criterion_"):
                crit = int(key.split("_")[2])
                break
    if crit is not None:
        _ACCEPTANCE.setdefault(crit, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    from test_acceptance import CRITERIA

    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        results = _ACCEPTANCE.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {n:2d}: {CRITERIA[n]}")
