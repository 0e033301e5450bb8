import re

CRITERIA = {
    1: "certificate soundness suite",
    2: "exact certificate arithmetic",
    3: "per-step inequality suite",
    4: "limit identification on proj-interval-explicit",
    5: "implicit/resolvent oracle equivalence",
    6: "hybrid/explicit equivalence",
    7: "VIP constants and empirical Lipschitz bounds",
    8: "VIP end-to-end",
    9: "moduli validation",
}

_outcomes: dict[int, str] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        if report.outcome == "failed" or _outcomes.get(k) != "FAIL":
            _outcomes[k] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k, title in CRITERIA.items():
        status = _outcomes.get(k, "NOT RUN")
        terminalreporter.write_line(f"criterion {k}: {status}  {title}")
