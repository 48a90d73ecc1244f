import os

import pytest

from families import unit_square

FULL_PROFILE = os.environ.get("TSGAME_FULL_PROFILE") == "1"

_criteria: dict[str, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    label = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _criteria.setdefault(label, []).append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, results in sorted(_criteria.items(), key=lambda kv: kv[0]):
        states = {o for _, o in results}
        if "failed" in states:
            verdict = "FAIL"
        elif states == {"skipped"}:
            verdict = "SKIP"
        else:
            verdict = "PASS"
        failed = [name for name, o in results if o == "failed"]
        shown = ", ".join(failed[:3]) + (f", +{len(failed) - 3} more" if len(failed) > 3 else "")
        extra = f"  ({len(failed)}/{len(results)} failing: {shown})" if failed else ""
        terminalreporter.write_line(f"{verdict}  {label}{extra}")


@pytest.fixture
def square():
    return unit_square()
