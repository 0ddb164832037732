import re

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    outcome = {}
    detail = {}
    for key in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(key, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", getattr(rep, "nodeid", ""))
            if not m:
                continue
            name = (int(m.group(1)), m.group(2).replace("_", " "))
            if rep.failed or name not in outcome:
                outcome[name] = "FAIL" if rep.failed else ("SKIP" if rep.skipped else "PASS")
            for k, v in getattr(rep, "user_properties", []):
                if k == "detail":
                    detail[name] = v
    if not outcome:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(outcome):
        extra = f"  ({detail[name]})" if name in detail else ""
        terminalreporter.write_line(f"criterion {name[0]:2d} {outcome[name]}: {name[1]}{extra}")
