import numpy as np
import pytest

from dcsurv import synth
from dcsurv.data import Dataset

_criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = dict(item.user_properties).get("detail", "")
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _criteria.append((mark.args[0], status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in _criteria:
        line = f"[{status}] {label}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_synth():
    return synth.generate(synth.SynthConfig(n=400, seed=5))


def make_dataset(n=60, m=4, seed=0, confounded=True):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, m))
    lin = X.sum(axis=1) / 2 if confounded else np.zeros(n)
    Z = (r.random(n) < 1 / (1 + np.exp(-lin))).astype(int)
    Z[:2] = [0, 1]
    t = r.exponential(1.0, n)
    delta = (r.random(n) < 0.7).astype(int)
    return Dataset(np.arange(n), X, t, delta, Z)
