"""Generative user model: catalog, user state, event dynamics and sales.

Each product carries three embeddings: organic (what users view on their
own), click (what they click when it is recommended) and conversion (what
they buy). A user has fixed organic features ``omega`` and conversion
features ``delta`` which start equal to ``omega`` and are pulled toward a
product's conversion embedding every time the user clicks a recommendation
of that product. Sales at every step are independent Bernoulli draws, one
per product, with a probability increasing in ``delta . Lambda_b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .events import Event, Timeline

ORGANIC_STATE = 0
BANDIT_STATE = 1
STOP_STATE = 2

DEFAULT_CHAIN = (
    (0.70, 0.25, 0.05),  # from organic: organic, bandit, stop
    (0.30, 0.60, 0.10),  # from bandit
)

# history, true user state, policy rng -> recommended product
Policy = Callable[[Sequence[Event], "UserState", np.random.Generator], int]


@dataclass(frozen=True)
class EnvConfig:
    num_products: int = 10
    embed_dim: int = 5
    kappa: float = 0.3
    ctr_offset: float = -3.0
    sale_offset: float = -4.0
    sale_scale: float = 0.05
    lambda_corr: float = 0.0
    event_chain: tuple = DEFAULT_CHAIN
    max_steps: int = 200
    master_seed: int = 0

    def __post_init__(self):
        chain = tuple(tuple(float(p) for p in row) for row in self.event_chain)
        object.__setattr__(self, "event_chain", chain)
        self.validate()

    def validate(self) -> None:
        if int(self.num_products) != self.num_products or self.num_products < 2:
            raise ValueError(f"num_products must be an integer >= 2, got {self.num_products}")
        if int(self.embed_dim) != self.embed_dim or self.embed_dim < 1:
            raise ValueError(f"embed_dim must be an integer >= 1, got {self.embed_dim}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        # zero is allowed as the no-sales degenerate case
        if not 0.0 <= self.sale_scale <= 1.0:
            raise ValueError(f"sale_scale must lie in [0, 1], got {self.sale_scale}")
        if not -1.0 <= self.lambda_corr <= 1.0:
            raise ValueError(f"lambda_corr must lie in [-1, 1], got {self.lambda_corr}")
        for name in ("ctr_offset", "sale_offset"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if int(self.max_steps) != self.max_steps or self.max_steps < 0:
            raise ValueError(f"max_steps must be a non-negative integer, got {self.max_steps}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if len(self.event_chain) != 2 or any(len(row) != 3 for row in self.event_chain):
            raise ValueError("event_chain must have rows for organic and bandit, each over (organic, bandit, stop)")
        for name, row in zip(("organic", "bandit"), self.event_chain):
            if any(p < 0.0 for p in row) or abs(math.fsum(row) - 1.0) > 1e-12:
                raise ValueError(f"event_chain[{name}] must be a probability vector, got {row}")


@dataclass(frozen=True, eq=False)
class ProductCatalog:
    organic_embed: np.ndarray
    click_embed: np.ndarray
    conversion_embed: np.ndarray

    def __post_init__(self):
        shapes = {m.shape for m in (self.organic_embed, self.click_embed, self.conversion_embed)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise ValueError(f"catalog embeddings must share one P x K shape, got {shapes}")
        for m in (self.organic_embed, self.click_embed, self.conversion_embed):
            if not np.all(np.isfinite(m)):
                raise ValueError("catalog embeddings must be finite")

    @property
    def num_products(self) -> int:
        return self.organic_embed.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.organic_embed.shape[1]


@dataclass(eq=False)
class UserState:
    omega: np.ndarray
    delta: np.ndarray
    t: int = 0
    alive: bool = True


def sample_catalog(config: EnvConfig, rng: np.random.Generator) -> ProductCatalog:
    P, K, rho = config.num_products, config.embed_dim, config.lambda_corr
    gamma = rng.standard_normal((P, K))
    beta = rng.standard_normal((P, K))
    noise = rng.standard_normal((P, K))
    if rho == 1.0:
        lam = gamma.copy()
    else:
        lam = rho * gamma + math.sqrt(1.0 - rho * rho) * noise
    return ProductCatalog(gamma, beta, lam)


def init_user(config: EnvConfig, rng: np.random.Generator) -> UserState:
    omega = rng.standard_normal(config.embed_dim)
    return UserState(omega=omega, delta=omega.copy())


def organic_view_probs(catalog: ProductCatalog, user: UserState) -> np.ndarray:
    logits = catalog.organic_embed @ user.omega
    w = np.exp(logits - logits.max())
    return w / w.sum()


def click_prob(catalog: ProductCatalog, user: UserState, a: int, config: EnvConfig) -> float:
    return float(expit(catalog.click_embed[a] @ user.omega + config.ctr_offset))


def click_probs(catalog: ProductCatalog, user: UserState, config: EnvConfig) -> np.ndarray:
    return expit(catalog.click_embed @ user.omega + config.ctr_offset)


def sale_prob(catalog: ProductCatalog, user: UserState, a: int, config: EnvConfig) -> float:
    return float(config.sale_scale * expit(user.delta @ catalog.conversion_embed[a] + config.sale_offset))


def sale_probs(catalog: ProductCatalog, delta: np.ndarray, config: EnvConfig) -> np.ndarray:
    """Per-step sale probability of every product for conversion features ``delta``."""
    return config.sale_scale * expit(catalog.conversion_embed @ delta + config.sale_offset)


def apply_click_update(user: UserState, catalog: ProductCatalog, a: int, kappa: float) -> UserState:
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    delta = (1.0 - kappa) * user.delta + kappa * catalog.conversion_embed[a]
    return replace(user, delta=delta)


def _draw_index(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(cdf) - 1)


class Episode:
    """A single user's session, advanced one step at a time.

    Every step consumes exactly ``P + 3`` uniforms from the environment
    stream whatever happens in it (organic draw, click draw, chain
    transition, one sale draw per product). Two episodes built from the same
    stream therefore share every random number, which is what makes paired
    (common random number) comparisons exact.

    A ``passive`` episode shows nothing at bandit states: no event is emitted
    and no click can happen.
    """

    def __init__(
        self,
        catalog: ProductCatalog,
        config: EnvConfig,
        rng: np.random.Generator,
        user_id: int = 0,
        user: Optional[UserState] = None,
        passive: bool = False,
    ):
        if catalog.num_products != config.num_products or catalog.embed_dim != config.embed_dim:
            raise ValueError("catalog shape does not match config")
        self.catalog = catalog
        self.config = config
        self.rng = rng
        self.user_id = user_id
        self.passive = passive
        self.user = init_user(config, rng) if user is None else user
        self.state = ORGANIC_STATE
        self.user.alive = config.max_steps > 0
        self._organic_cdf = np.cumsum(organic_view_probs(catalog, self.user))
        self._chain_cdf = [np.cumsum(row) for row in config.event_chain]
        self._sale_probs = sale_probs(catalog, self.user.delta, config)

    @property
    def done(self) -> bool:
        return not self.user.alive

    @property
    def awaiting_action(self) -> bool:
        return self.user.alive and self.state == BANDIT_STATE and not self.passive

    def click(self, a: int) -> None:
        """Apply the state update of a click on ``a`` without consuming randomness."""
        self.user = apply_click_update(self.user, self.catalog, a, self.config.kappa)
        self._sale_probs = sale_probs(self.catalog, self.user.delta, self.config)

    def step(self, action: Optional[int] = None) -> tuple[list[Event], bool]:
        if not self.user.alive:
            raise RuntimeError("episode is over")
        P = self.config.num_products
        u = self.rng.random(P + 3)
        t, uid = self.user.t, self.user_id
        events: list[Event] = []

        if self.state == ORGANIC_STATE:
            events.append(Event.organic(t, uid, _draw_index(self._organic_cdf, u[0])))
        elif not self.passive:
            if action is None:
                raise ValueError(f"step {t}: bandit state requires an action")
            a = int(action)
            if not 0 <= a < P:
                raise ValueError(f"step {t}: action {a} outside [0, {P})")
            clicked = bool(u[1] < click_prob(self.catalog, self.user, a, self.config))
            events.append(Event.bandit(t, uid, a, clicked))
            if clicked:
                self.click(a)

        for b in np.flatnonzero(u[3:] < self._sale_probs):
            events.append(Event.conversion(t, uid, int(b)))

        self.user.t = t + 1
        self.state = _draw_index(self._chain_cdf[self.state], u[2])
        if self.state == STOP_STATE or self.user.t >= self.config.max_steps:
            self.user.alive = False
        return events, not self.user.alive


def simulate_episode(
    catalog: ProductCatalog,
    config: EnvConfig,
    policy: Policy,
    rng: np.random.Generator,
    user_id: int = 0,
    policy_rng: Optional[np.random.Generator] = None,
) -> Timeline:
    """Run one user from initialization until the chain stops.

    ``policy(history, user, policy_rng)`` is called at every bandit state
    with the events emitted so far. Policy randomness comes from
    ``policy_rng`` so that it never perturbs the environment stream.
    """
    if policy_rng is None:
        policy_rng = rng.spawn(1)[0]
    episode = Episode(catalog, config, rng, user_id=user_id)
    history: list[Event] = []
    while not episode.done:
        action = policy(history, episode.user, policy_rng) if episode.awaiting_action else None
        events, _ = episode.step(action)
        history.extend(events)
    return Timeline(user_id, history)
