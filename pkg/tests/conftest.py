import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ncbsts", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ncbsts")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# --- acceptance report ---------------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not (rep.failed or rep.skipped)):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "status": [], "notes": []})
    if hasattr(rep, "wasxfail"):
        entry["status"].append("FAIL")
        entry["notes"].append(f"{item.name}: {rep.wasxfail}")
    elif rep.skipped:
        entry["status"].append("SKIP")
        entry["notes"].append(f"{item.name}: {rep.longrepr[2] if isinstance(rep.longrepr, tuple) else 'skipped'}")
    elif rep.failed:
        entry["status"].append("FAIL")
        entry["notes"].append(f"{item.name} failed")
    else:
        entry["status"].append("PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        st = e["status"]
        verdict = "FAIL" if "FAIL" in st else ("SKIP" if "SKIP" in st and "PASS" not in st else "PASS")
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {e['title']}")
        for note in e["notes"]:
            terminalreporter.write_line(f"    {note}")
