import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from radial_bump.geometry import build_grid, cap_domain

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def cap60():
    domain = cap_domain(np.pi / 3, 0.05)
    return domain, build_grid(domain)


@pytest.fixture(scope="session")
def cap60_coarse():
    domain = cap_domain(np.pi / 3, 0.1)
    return domain, build_grid(domain)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    rows = {}
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                rows[props["criterion"]] = (rep.outcome.upper(), props.get("detail", ""))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(rows):
        status, detail = rows[k]
        terminalreporter.write_line(f"criterion {k:2d} {status}: {detail}")
