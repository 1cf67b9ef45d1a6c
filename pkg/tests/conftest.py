import pytest

CRITERIA = {
    1: "gradient suite",
    2: "closed-form suite",
    3: "oracle suite",
    4: "desk-scale leakage/utility sweep",
    5: "moment-matching contrast",
    6: "sweep determinism",
    7: "format round-trips",
}

_results: dict[int, tuple[bool, str]] = {}


class Outcome:
    def __init__(self, number: int):
        self.number = number
        self.detail = ""

    def note(self, text: str) -> None:
        self.detail = text


@pytest.fixture()
def criterion(request):
    """Record a PASS/FAIL line for the acceptance criterion named by the marker."""
    number = request.node.get_closest_marker("criterion").args[0]
    outcome = Outcome(number)
    yield outcome
    failed = getattr(request.node, "rep_call", None)
    passed = failed is not None and failed.passed
    prev_ok, prev_detail = _results.get(number, (True, ""))
    detail = "; ".join(d for d in (prev_detail, outcome.detail) if d)
    _results[number] = (prev_ok and passed, detail)


@pytest.hookimpl(wrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    if rep.when == "call":
        item.rep_call = rep
    return rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in CRITERIA.items():
        if number not in _results:
            terminalreporter.write_line(f"criterion {number} ({name}): NOT RUN")
            continue
        ok, detail = _results[number]
        line = f"criterion {number} ({name}): {'PASS' if ok else 'FAIL'}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
