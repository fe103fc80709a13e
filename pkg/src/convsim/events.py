"""Event and timeline types shared by the simulator, attribution and log IO."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

ORGANIC = "organic"
BANDIT = "bandit"
CONVERSION = "conversion"
KINDS = (ORGANIC, BANDIT, CONVERSION)


@dataclass(frozen=True)
class Event:
    """One log row.

    ``product`` is the viewed product for organic events, the recommended
    product for bandit events and the purchased product for conversions.
    ``clicked`` is set for bandit events only.
    """

    t: int
    user_id: int
    kind: str
    product: int
    clicked: Optional[bool] = None

    @classmethod
    def organic(cls, t: int, user_id: int, product: int) -> "Event":
        return cls(t, user_id, ORGANIC, product)

    @classmethod
    def bandit(cls, t: int, user_id: int, recommended: int, clicked: bool) -> "Event":
        return cls(t, user_id, BANDIT, recommended, bool(clicked))

    @classmethod
    def conversion(cls, t: int, user_id: int, product: int) -> "Event":
        return cls(t, user_id, CONVERSION, product)

    @property
    def is_click(self) -> bool:
        return self.kind == BANDIT and bool(self.clicked)


@dataclass
class Timeline:
    user_id: int
    events: list[Event] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def n_steps(self) -> int:
        """Number of simulated steps (each step emits one organic or bandit event)."""
        return sum(1 for e in self.events if e.kind != CONVERSION)

    @property
    def n_conversions(self) -> int:
        return sum(1 for e in self.events if e.kind == CONVERSION)

    @property
    def n_clicks(self) -> int:
        return sum(1 for e in self.events if e.is_click)

    def validate(self, num_products: Optional[int] = None) -> None:
        last_t = 0
        for pos, e in enumerate(self.events):
            if e.kind not in KINDS:
                raise ValueError(f"event {pos}: unknown kind {e.kind!r}")
            if e.user_id != self.user_id:
                raise ValueError(f"event {pos}: user_id {e.user_id} != {self.user_id}")
            if e.t < last_t or e.t < 0:
                raise ValueError(f"event {pos}: step {e.t} out of order")
            if e.product < 0 or (num_products is not None and e.product >= num_products):
                raise ValueError(f"event {pos}: product {e.product} out of range")
            if (e.kind == BANDIT) != (e.clicked is not None):
                raise ValueError(f"event {pos}: clicked flag only allowed on bandit events")
            last_t = e.t
