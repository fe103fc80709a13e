from __future__ import annotations

from typing import Iterable

import numpy as np

from .events import ORGANIC, Event


def featurize(history: Iterable[Event], num_products: int) -> np.ndarray:
    """Normalized organic view counts per product plus a trailing bias of 1.

    Only organic events count; bandit and conversion events are ignored.
    """
    x = np.zeros(num_products + 1)
    for e in history:
        if e.kind == ORGANIC:
            x[e.product] += 1.0
    total = x[:num_products].sum()
    if total > 0:
        x[:num_products] /= total
    x[num_products] = 1.0
    return x
