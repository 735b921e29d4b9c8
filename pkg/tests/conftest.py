import numpy as np
import pytest

from fadingmac import Deterministic, Exponential, SystemParams


def unit_params(n_users=1, horizon=1, budgets=None, fading=None):
    """W = 1 MHz, tau = 1 s, N_o = 1 W."""
    budgets = (1.0,) * n_users if budgets is None else tuple(budgets)
    fading = fading or Exponential(1.0)
    if not isinstance(fading, (list, tuple)):
        fading = (fading,) * n_users
    return SystemParams(n_users, horizon, 1e6, 1.0, 1.0, budgets, tuple(fading))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def det1():
    return Deterministic(1.0)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid or rep.when != "call" and outcome != "error":
                continue
            detail = dict(getattr(rep, "user_properties", [])).get("detail", "")
            name = nodeid.split("::")[-1].removeprefix("test_")
            lines.append(("PASS" if outcome == "passed" else "FAIL", name, detail))
    if lines:
        terminalreporter.section("acceptance criteria")
        key = lambda item: (int(item[1].split("_")[1]), item[1])
        for status, name, detail in sorted(lines, key=key):
            terminalreporter.write_line(f"{status} {name}: {detail}")
