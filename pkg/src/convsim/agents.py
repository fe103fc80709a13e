"""Recommendation agents and the weighted logistic scorer behind them."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit, log_expit

from .attribution import (
    BASELINE_SUBTRACTED,
    DISCOUNTED,
    LAST_CLICK,
    AttributionConfig,
    ClickExample,
    CreditedExample,
)
from .env import EnvConfig, ProductCatalog, UserState, click_probs
from .events import Event
from .features import featurize

RANDOM = "random"
POPULARITY = "popularity"
CLICK_BANDIT = "click_bandit"
LAST_CLICK_SALES = "last_click_sales"
DISCOUNTED_SALES = "discounted_sales"
BASELINE_SUBTRACTED_SALES = "baseline_subtracted_sales"
ORACLE_INCREMENTAL = "oracle_incremental"

SALES_KINDS = {
    LAST_CLICK_SALES: LAST_CLICK,
    DISCOUNTED_SALES: DISCOUNTED,
    BASELINE_SUBTRACTED_SALES: BASELINE_SUBTRACTED,
}
KINDS = (RANDOM, POPULARITY, CLICK_BANDIT, *SALES_KINDS, ORACLE_INCREMENTAL)
MODEL_KINDS = (CLICK_BANDIT, *SALES_KINDS)

Example = Union[CreditedExample, ClickExample]


@dataclass(frozen=True)
class AgentSpec:
    kind: str
    epsilon: float = 0.0
    attribution: Optional[AttributionConfig] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"agent kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.kind in SALES_KINDS:
            if self.attribution is None:
                object.__setattr__(self, "attribution", AttributionConfig(scheme=SALES_KINDS[self.kind]))
            elif self.attribution.scheme != SALES_KINDS[self.kind]:
                raise ValueError(f"{self.kind} needs a {SALES_KINDS[self.kind]} attribution config")
        if self.name is None:
            object.__setattr__(self, "name", self.kind)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    l2: float = 1e-4
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0


@dataclass(eq=False)
class PolicyModel:
    """Row ``a`` of ``weights`` scores action ``a`` against a feature vector."""

    weights: np.ndarray
    hyper: TrainingConfig = field(default_factory=TrainingConfig)
    empty: bool = False  # trained on zero examples

    @property
    def num_products(self) -> int:
        return self.weights.shape[0]

    def scores(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x


def encode(examples: Sequence[Example], num_products: int):
    """Stack examples into ``(X, actions, y, w)`` arrays.

    Click examples are plain labels with unit weight. Credited examples
    become positives weighted by the credit when it is positive, unit-weight
    negatives when it is zero, and negatives weighted by ``|credit|`` when it
    is negative.
    """
    n = len(examples)
    X = np.zeros((n, num_products + 1))
    actions = np.zeros(n, dtype=np.int64)
    y = np.zeros(n)
    w = np.ones(n)
    for i, ex in enumerate(examples):
        if not 0 <= ex.action < num_products:
            raise ValueError(f"example {i}: action {ex.action} outside [0, {num_products})")
        X[i] = ex.features
        actions[i] = ex.action
        if isinstance(ex, ClickExample):
            y[i] = float(ex.clicked)
            continue
        c = float(ex.credit)
        if not np.isfinite(c):
            raise ValueError(f"example {i}: credit {c} is not finite")
        if c > 0:
            y[i], w[i] = 1.0, c
        elif c < 0:
            w[i] = -c
    return X, actions, y, w


def objective(W, X, actions, y, w, l2):
    """Penalized negative weighted log likelihood (the quantity training minimizes)."""
    z = np.einsum("ij,ij->i", W[actions], X)
    ll = y * log_expit(z) + (1.0 - y) * log_expit(-z)
    return -np.dot(w, ll) + 0.5 * l2 * np.sum(W * W)


def gradient(W, X, actions, y, w, l2):
    z = np.einsum("ij,ij->i", W[actions], X)
    r = w * (expit(z) - y)
    G = l2 * W
    np.add.at(G, actions, r[:, None] * X)
    return G


def train_logistic(
    examples: Sequence[Example],
    num_products: int,
    hyper: TrainingConfig = TrainingConfig(),
    history: Optional[list] = None,
) -> PolicyModel:
    """Fit one weighted logistic regression per action by mini-batch gradient descent.

    Each mini-batch step follows the gradient of the objective divided by
    the number of examples, so the L2 term keeps its full-data strength.
    When ``history`` is given, the full objective after every epoch is
    appended to it.
    """
    W = np.zeros((num_products, num_products + 1))
    if not examples:
        warnings.warn("train_logistic: no examples, returning the all-zero model", stacklevel=2)
        return PolicyModel(W, hyper, empty=True)
    X, actions, y, w = encode(examples, num_products)
    n = len(y)
    rng = np.random.default_rng(hyper.seed)
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            b = order[start : start + hyper.batch_size]
            G = gradient(W, X[b], actions[b], y[b], w[b], 0.0) / len(b) + (hyper.l2 / n) * W
            W -= hyper.learning_rate * G
        if history is not None:
            history.append(objective(W, X, actions, y, w, hyper.l2))
    return PolicyModel(W, hyper)


def oracle_incremental_score(catalog: ProductCatalog, user: UserState, config: EnvConfig, a: int) -> float:
    """Expected one-step increase in total sale probability caused by recommending ``a``."""
    return float(oracle_incremental_scores(catalog, user, config)[a])


def oracle_incremental_scores(catalog: ProductCatalog, user: UserState, config: EnvConfig) -> np.ndarray:
    kappa, lam = config.kappa, catalog.conversion_embed
    lifted = (1.0 - kappa) * user.delta[None, :] + kappa * lam
    # identical reductions on both sides so that kappa == 0 gives exact zeros
    base = (user.delta[None, :] * lam).sum(axis=-1)
    after = (lifted[:, None, :] * lam[None, :, :]).sum(axis=-1)
    gain = expit(after + config.sale_offset) - expit(base + config.sale_offset)
    return click_probs(catalog, user, config) * config.sale_scale * gain.sum(axis=1)


class Agent:
    """A trained (or untrained) policy, callable as an episode policy."""

    def __init__(
        self,
        spec: AgentSpec,
        num_products: int,
        model: Optional[PolicyModel] = None,
        popularity: Optional[np.ndarray] = None,
        catalog: Optional[ProductCatalog] = None,
        config: Optional[EnvConfig] = None,
    ):
        if spec.kind in MODEL_KINDS:
            if model is None:
                raise ValueError(f"{spec.kind} agent needs a trained model")
            if model.weights.shape != (num_products, num_products + 1):
                raise ValueError(f"model shape {model.weights.shape} does not match {num_products} products")
        if spec.kind == ORACLE_INCREMENTAL and (catalog is None or config is None):
            raise ValueError("oracle agent needs the catalog and env config")
        self.spec = spec
        self.num_products = num_products
        self.model = model
        if popularity is not None:
            popularity = np.asarray(popularity, dtype=float)
            popularity = popularity / popularity.sum() if popularity.sum() > 0 else None
        self.popularity = popularity
        self.catalog = catalog
        self.config = config

    @property
    def name(self) -> str:
        return self.spec.name

    def act(self, features: np.ndarray, rng: np.random.Generator, scores: Optional[np.ndarray] = None) -> int:
        P = self.num_products
        kind = self.spec.kind
        if kind == RANDOM or (self.spec.epsilon > 0.0 and rng.random() < self.spec.epsilon):
            return int(rng.integers(P))
        if kind == POPULARITY:
            if self.popularity is None:
                return int(rng.integers(P))
            return int(rng.choice(P, p=self.popularity))
        if scores is None:
            scores = self.model.scores(features)
        # np.argmax returns the first maximum: ties go to the lowest id
        return int(np.argmax(scores))

    def __call__(self, history: Sequence[Event], user: UserState, rng: np.random.Generator) -> int:
        if self.spec.kind == ORACLE_INCREMENTAL:
            scores = oracle_incremental_scores(self.catalog, user, self.config)
            return self.act(None, rng, scores=scores)
        return self.act(featurize(history, self.num_products), rng)
