import re


def pytest_terminal_summary(terminalreporter):
    rows = {}
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", getattr(rep, "nodeid", ""))
            if m and rep.when == "call":
                detail = dict(rep.user_properties).get("detail", "")
                rows[int(m.group(1))] = (outcome == "passed", detail)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for i in sorted(rows):
        ok, detail = rows[i]
        terminalreporter.write_line(f"criterion {i:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
