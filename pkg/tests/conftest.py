import numpy as np
import pytest

from ccsketch.sketch import ExactSignal, TurnstileEvent, exact_moment
from ccsketch.stable import project_signal, trial_seed

_CRITERIA: list[tuple[str, bool, str]] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    """Record one acceptance criterion outcome, then fail the test if it failed."""
    _CRITERIA.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


# a small fixed nonnegative signal; estimator behaviour does not depend on D
FIXED_SIGNAL = {1: 3.0, 2: 1.0, 4: 2.0}


def fixed_signal() -> ExactSignal:
    return ExactSignal.from_events(4, [TurnstileEvent(i, v) for i, v in FIXED_SIGNAL.items()])


def mc_counters(alpha: float, k: int, trials: int, seed: int = 12345) -> tuple[np.ndarray, float]:
    """Counters of ``trials`` independent sketches of the fixed signal, and its exact moment."""
    sig = fixed_signal()
    idx, vals = sig.nonzero()
    seeds = [trial_seed(seed, t) for t in range(trials)]
    return project_signal(idx, vals, seeds, k, alpha), exact_moment(sig, alpha)


def emp_var_factor(estimates: np.ndarray, exact: float, k: int) -> float:
    return k * np.var(estimates / exact, ddof=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
