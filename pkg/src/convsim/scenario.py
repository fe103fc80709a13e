"""A catalog where last-click credit rewards a product that causes nothing.

Axes of the embedding space (``K >= 4``):

* axis 0, "fan" taste. Product 0 (the decoy) is clicked mostly by users
  high on this axis, and its conversion embedding sits at the mean
  ``delta`` of those clickers. Its fans buy it whether or not they click,
  and a click barely moves their state.
* axis 1, "clicky" taste. Product 1 (the incremental product) and every
  filler are clicked by users high on axis 1 and low on axis 0, so decoy
  fans rarely click anything else.
* axis 2, the incremental product's conversion embedding: a long vector
  orthogonal to the typical ``delta``, so a click on it raises its sale
  probability sharply and persistently.
* remaining axes drive organic views only.

Fillers have zero conversion embedding. Organic embeddings have no
component on axes 0 and 1, so view-count features carry no information
about who is a fan or who clicks a lot.

Because fans click rarely, the last click before their (unmediated)
purchases is nearly always the decoy, and last-click attribution hands it
every later sale until the episode ends. Discounting by elapsed time
bounds the window a click can collect from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import expit

from .env import EnvConfig, ProductCatalog

DECOY = 0
INCREMENTAL = 1


@dataclass(frozen=True)
class BiasScenario:
    fan_click: float = 2.5
    clicky_click: float = 2.5
    incremental_click: float = 2.0
    incremental_norm: float = 2.0
    organic_scale: float = 0.5


def bias_env_config(master_seed: int = 0, **overrides) -> EnvConfig:
    """Environment settings used with :func:`bias_catalog` in experiments."""
    params = dict(
        num_products=5,
        embed_dim=4,
        kappa=0.5,
        sale_scale=0.3,
        event_chain=((0.70, 0.28, 0.02), (0.30, 0.68, 0.02)),
        max_steps=100,
        master_seed=master_seed,
    )
    params.update(overrides)
    return EnvConfig(**params)


def mean_clicker_taste(weight: float, ctr_offset: float) -> float:
    """E[w | click] for w ~ N(0, 1) and click probability sigmoid(weight * w + ctr_offset)."""
    dens = lambda w: expit(weight * w + ctr_offset) * np.exp(-0.5 * w * w)
    num = integrate.quad(lambda w: w * dens(w), -12.0, 12.0)[0]
    return num / integrate.quad(dens, -12.0, 12.0)[0]


def bias_catalog(config: EnvConfig, rng: np.random.Generator, params: BiasScenario = BiasScenario()) -> ProductCatalog:
    P, K = config.num_products, config.embed_dim
    if P < 3 or K < 4:
        raise ValueError(f"bias scenario needs at least 3 products and 4 dimensions, got P={P}, K={K}")
    axes = np.eye(K)
    clicky = axes[1] - axes[0]

    click = np.tile(params.clicky_click * clicky, (P, 1))
    click[DECOY] = params.fan_click * axes[0]
    click[INCREMENTAL] = params.incremental_click * clicky

    conversion = np.zeros((P, K))
    conversion[DECOY] = mean_clicker_taste(params.fan_click, config.ctr_offset) * axes[0]
    conversion[INCREMENTAL] = params.incremental_norm * axes[2]

    organic = params.organic_scale * rng.standard_normal((P, K))
    organic[:, :2] = 0.0
    return ProductCatalog(organic, click, conversion)
