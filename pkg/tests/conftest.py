import pytest

import toydata
from opinion_miner.syntax import SyntaxAnnotation, coarse_pos


def make_annotation(words, pos, heads, rels):
    return SyntaxAnnotation(tuple(words), tuple(coarse_pos(t) for t in pos), tuple(-1 if h is None else h for h in heads), tuple(rels))


@pytest.fixture
def r14():
    return toydata.build_dataset("R14")


@pytest.fixture
def l14():
    return toydata.build_dataset("L14")


@pytest.fixture
def toy_annotator():
    return toydata.build_annotator()


@pytest.fixture
def workspace(tmp_path):
    return toydata.write_workspace(tmp_path / "ws")


# -- acceptance summary -------------------------------------------------------

_acceptance: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    label = marker.args[0]
    if report.skipped:
        _acceptance.setdefault(label, "SKIP")
    elif report.failed:
        _acceptance[label] = "FAIL"
    elif report.when == "call":
        _acceptance.setdefault(label, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_acceptance, key=lambda s: int(s.split()[0])):
        terminalreporter.write_line(f"{_acceptance[label]}  criterion {label}")
