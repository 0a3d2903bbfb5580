"""Shared pytest configuration.

The acceptance tests record a one-line measured-vs-required summary via
``record_property``; after the run those lines are printed as a
PASS/FAIL table so the whole gate is readable at a glance.
"""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome, passed in (("passed", True), ("failed", False),
                            ("error", False)):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call":
                continue
            if "test_acceptance.py" not in str(rep.nodeid):
                continue
            props = dict(getattr(rep, "user_properties", []))
            rows.append((str(rep.nodeid), passed, props.get("acceptance")))
    if not rows:
        return
    rows.sort()
    terminalreporter.section("acceptance criteria")
    for nodeid, passed, line in rows:
        label = "PASS" if passed else "FAIL"
        text = line or nodeid.split("::")[-1]
        terminalreporter.write_line(f"[{label}] {text}")
