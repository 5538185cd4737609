"""Collects acceptance outcomes and prints one line per criterion at the end."""

import pytest

_ACCEPTANCE: dict = {}


class AcceptanceLog:
    def __init__(self, key: str, title: str):
        self.key = key
        self.title = title
        self.details = []

    def note(self, text: str):
        self.details.append(text)


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    log = AcceptanceLog(*marker.args)
    yield log
    rep = getattr(request.node, "rep_call", None)
    passed = rep is not None and rep.passed
    _ACCEPTANCE[log.key] = (log.title, passed, "; ".join(log.details))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(key, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=int):
        title, passed, detail = _ACCEPTANCE[key]
        line = f"[{'PASS' if passed else 'FAIL'}] {key}. {title}"
        if detail:
            line += f" -- {detail}"
        tr.write_line(line)
