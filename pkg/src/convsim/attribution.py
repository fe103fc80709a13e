"""Credit assignment of conversions to clicked recommendations.

Three schemes share one click-selection rule: a conversion goes to the
most recent clicked bandit event that precedes it in the timeline, lies
within the attribution window and (optionally) recommended the same
product. They differ only in how much each conversion is worth:

* ``last_click``: 1 per conversion.
* ``discounted``: ``gamma ** (t_sale - t_click)`` per conversion.
* ``baseline_subtracted``: the discounted credit minus a constant
  ``baseline``, the expected number of conversions the user would have
  made anyway. Credits can go negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .events import BANDIT, CONVERSION, Event, Timeline
from .features import featurize

LAST_CLICK = "last_click"
DISCOUNTED = "discounted"
BASELINE_SUBTRACTED = "baseline_subtracted"
SCHEMES = (LAST_CLICK, DISCOUNTED, BASELINE_SUBTRACTED)


@dataclass(frozen=True)
class AttributionConfig:
    scheme: str = LAST_CLICK
    gamma: float = 1.0
    window: Optional[int] = None  # None means unbounded
    match_product: bool = False
    baseline: Optional[float] = 0.0  # None: estimate from logs, see resolve_baseline

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.window is not None and (int(self.window) != self.window or self.window < 1):
            raise ValueError(f"window must be a positive integer or None, got {self.window}")
        if self.baseline is not None and not (self.baseline >= 0.0 and math.isfinite(self.baseline)):
            raise ValueError(f"baseline must be a finite non-negative number, got {self.baseline}")


@dataclass
class CreditMap:
    """Credit per clicked bandit event, keyed by its position in the timeline."""

    credits: dict[int, float] = field(default_factory=dict)
    unattributed: int = 0

    @property
    def total(self) -> float:
        return math.fsum(self.credits.values())


def _matches(events: Sequence[Event], config: AttributionConfig):
    """Yield ``(sale_pos, click_pos or None)`` for every conversion."""
    last_any: Optional[int] = None
    last_by_product: dict[int, int] = {}
    for pos, e in enumerate(events):
        if e.kind == BANDIT and e.clicked:
            last_any = pos
            last_by_product[e.product] = pos
        elif e.kind == CONVERSION:
            click = last_by_product.get(e.product) if config.match_product else last_any
            if click is not None and config.window is not None and e.t - events[click].t > config.window:
                click = None
            yield pos, click


def _attribute(timeline: Timeline, config: AttributionConfig, gamma: float, baseline: float) -> CreditMap:
    events = timeline.events
    out = CreditMap({pos: 0.0 for pos, e in enumerate(events) if e.is_click})
    for sale, click in _matches(events, config):
        if click is None:
            out.unattributed += 1
        else:
            out.credits[click] += gamma ** (events[sale].t - events[click].t)
    if baseline:
        for pos in out.credits:
            out.credits[pos] -= baseline
    return out


def attribute_last_click(timeline: Timeline, config: AttributionConfig) -> CreditMap:
    return _attribute(timeline, config, 1.0, 0.0)


def attribute_discounted(timeline: Timeline, config: AttributionConfig) -> CreditMap:
    return _attribute(timeline, config, config.gamma, 0.0)


def attribute_baseline_subtracted(timeline: Timeline, config: AttributionConfig) -> CreditMap:
    if config.baseline is None:
        raise ValueError("baseline is unresolved; call resolve_baseline first")
    return _attribute(timeline, config, config.gamma, config.baseline)


def attribute(timeline: Timeline, config: AttributionConfig) -> CreditMap:
    """Dispatch on ``config.scheme``."""
    if config.scheme == LAST_CLICK:
        return attribute_last_click(timeline, config)
    if config.scheme == DISCOUNTED:
        return attribute_discounted(timeline, config)
    return attribute_baseline_subtracted(timeline, config)


@dataclass(frozen=True)
class BaselineEstimate:
    value: float
    pre_click_steps: int
    pre_click_sales: int

    @property
    def defined(self) -> bool:
        return self.pre_click_steps > 0


def estimate_organic_baseline(timelines: Iterable[Timeline], window: int) -> BaselineEstimate:
    """Mean conversions per ``window`` steps among steps before each user's first click.

    A step counts as pre-click when it is strictly earlier than the step of
    the user's first click (conversions in the click step itself come after
    the click). Returns a zero estimate with ``defined == False`` when no
    pre-click steps exist.
    """
    if int(window) != window or window < 1:
        raise ValueError(f"window must be a positive integer, got {window}")
    steps = sales = 0
    for tl in timelines:
        first_click = next((e.t for e in tl.events if e.is_click), None)
        pre = [e for e in tl.events if first_click is None or e.t < first_click]
        steps += len({e.t for e in pre})
        sales += sum(1 for e in pre if e.kind == CONVERSION)
    value = sales * window / steps if steps else 0.0
    return BaselineEstimate(value, steps, sales)


@dataclass(frozen=True, eq=False)
class CreditedExample:
    features: np.ndarray
    action: int
    credit: float


@dataclass(frozen=True, eq=False)
class ClickExample:
    features: np.ndarray
    action: int
    clicked: bool


Featurizer = Callable[[Sequence[Event], int], np.ndarray]


def _pre_step_history(events: Sequence[Event], pos: int) -> list[Event]:
    t = events[pos].t
    return [e for e in events[:pos] if e.t < t]


def build_training_set(
    timelines: Iterable[Timeline],
    config: AttributionConfig,
    num_products: int,
    featurizer: Featurizer = featurize,
) -> list[CreditedExample]:
    """One example per clicked bandit event, credited under ``config``."""
    out = []
    for tl in timelines:
        credits = attribute(tl, config).credits
        for pos in sorted(credits):
            e = tl.events[pos]
            if not 0 <= e.product < num_products:
                raise ValueError(f"user {tl.user_id}: product {e.product} outside [0, {num_products})")
            x = featurizer(_pre_step_history(tl.events, pos), num_products)
            out.append(CreditedExample(x, e.product, credits[pos]))
    return out


def build_click_training_set(
    timelines: Iterable[Timeline],
    num_products: int,
    featurizer: Featurizer = featurize,
) -> list[ClickExample]:
    """One example per bandit event labeled by whether it was clicked."""
    out = []
    for tl in timelines:
        for pos, e in enumerate(tl.events):
            if e.kind != BANDIT:
                continue
            if not 0 <= e.product < num_products:
                raise ValueError(f"user {tl.user_id}: product {e.product} outside [0, {num_products})")
            x = featurizer(_pre_step_history(tl.events, pos), num_products)
            out.append(ClickExample(x, e.product, bool(e.clicked)))
    return out


def discounted_window_mass(gamma: float, window: Optional[int]) -> float:
    """Sum of ``gamma ** dt`` over the steps ``dt = 0..window`` a click can collect credit from."""
    if window is None:
        if gamma == 1.0:
            raise ValueError("an unbounded window needs gamma < 1 to have finite mass")
        return 1.0 / (1.0 - gamma)
    return math.fsum(gamma**k for k in range(window + 1))


def resolve_baseline(config: AttributionConfig, timelines: Iterable[Timeline]) -> AttributionConfig:
    """Fill an unset baseline with the expected unmediated credit of one click.

    The per-step unmediated conversion rate is estimated from pre-click
    steps and scaled by the discounted mass of the attribution window.
    Configs with a baseline already set are returned unchanged.
    """
    if config.baseline is not None:
        return config
    rate = estimate_organic_baseline(timelines, 1).value
    return replace(config, baseline=rate * discounted_window_mass(config.gamma, config.window))
