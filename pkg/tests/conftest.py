import numpy as np
import pytest

from convsim.attribution import BASELINE_SUBTRACTED, LAST_CLICK
from convsim.env import EnvConfig, ProductCatalog
from convsim.events import BANDIT, CONVERSION, ORGANIC, Event, Timeline


def random_timeline(rng, user_id=0, max_events=20, num_products=4, max_step_gap=3):
    """A well-formed timeline of up to ``max_events`` random events."""
    n = int(rng.integers(0, max_events + 1))
    t = 0
    events = []
    for _ in range(n):
        t += int(rng.integers(0, max_step_gap + 1))
        kind = [ORGANIC, BANDIT, CONVERSION][int(rng.integers(3))]
        product = int(rng.integers(num_products))
        if kind == BANDIT:
            events.append(Event.bandit(t, user_id, product, bool(rng.random() < 0.6)))
        else:
            events.append(Event(t, user_id, kind, product))
    return Timeline(user_id, events)


def brute_force_credits(timeline, scheme, gamma=1.0, window=None, match_product=False, baseline=0.0):
    """Reference attribution by a double loop over (click, conversion) pairs.

    A conversion belongs to click ``i`` when ``i`` precedes it, no later
    eligible click sits between them, and the step gap is within the window.
    """
    ev = timeline.events
    clicks = [i for i, e in enumerate(ev) if e.kind == BANDIT and e.clicked]
    sales = [j for j, e in enumerate(ev) if e.kind == CONVERSION]

    def eligible(i, j):
        return not match_product or ev[i].product == ev[j].product

    def owner(i, j):
        if i > j or not eligible(i, j):
            return False
        if any(i < k < j and eligible(k, j) for k in clicks):
            return False
        return window is None or ev[j].t - ev[i].t <= window

    credits = {}
    for i in clicks:
        total = 0.0
        for j in sales:
            if owner(i, j):
                total += 1.0 if scheme == LAST_CLICK else gamma ** (ev[j].t - ev[i].t)
        if scheme == BASELINE_SUBTRACTED:
            total -= baseline
        credits[i] = total
    unattributed = sum(1 for j in sales if not any(owner(i, j) for i in clicks))
    return credits, unattributed


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_catalog():
    """P=2, K=1 catalog with hand-checkable numbers."""
    return ProductCatalog(
        organic_embed=np.array([[1.0], [0.0]]),
        click_embed=np.array([[1.0], [0.0]]),
        conversion_embed=np.array([[2.0], [-1.0]]),
    )


@pytest.fixture
def tiny_config():
    return EnvConfig(num_products=2, embed_dim=1, kappa=0.5)


# --- acceptance reporting ---------------------------------------------------

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion of the build")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _ACCEPTANCE.append((number, title, report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title}" + (f"  [{detail}]" if detail else ""))
