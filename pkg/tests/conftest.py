import os

import pytest
from hypothesis import settings

from risuav.orchestrator import run_algorithm2
from risuav.scenario import default_paper_scenario

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> list of (passed, detail) parts; filled by test_acceptance
ACCEPTANCE = {}


def record(n, ok, detail):
    ACCEPTANCE.setdefault(n, []).append((bool(ok), detail))
    print(f"criterion {n} part: {'PASS' if ok else 'FAIL'} - {detail}")
    return bool(ok)


class RunCache:
    """Memoised optimisation runs shared by the whole session."""

    def __init__(self):
        self._runs = {}

    def ris(self, scheme=1, **changes):
        key = ("ris", scheme, tuple(sorted(changes.items())))
        if key not in self._runs:
            cfg = default_paper_scenario().replace(**changes)
            self._runs[key] = (cfg,) + run_algorithm2(cfg, scheme)
        return self._runs[key]

    def af(self, **changes):
        from risuav.baseline_af import run_baseline

        key = ("af", tuple(sorted(changes.items())))
        if key not in self._runs:
            cfg = default_paper_scenario().replace(**changes)
            self._runs[key] = (cfg,) + run_baseline(cfg)
        return self._runs[key]


@pytest.fixture(scope="session")
def runs():
    return RunCache()


@pytest.fixture(scope="session")
def cfg():
    return default_paper_scenario()


@pytest.fixture(scope="session")
def default_run(runs):
    return runs.ris()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
