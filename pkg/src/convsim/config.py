from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .agents import (
    BASELINE_SUBTRACTED_SALES,
    CLICK_BANDIT,
    DISCOUNTED_SALES,
    LAST_CLICK_SALES,
    ORACLE_INCREMENTAL,
    POPULARITY,
    RANDOM,
    AgentSpec,
    TrainingConfig,
)
from .attribution import BASELINE_SUBTRACTED, DISCOUNTED, AttributionConfig
from .env import EnvConfig
from .rng import MAX_SEED
from .scenario import BiasScenario

SAMPLED = "sampled"
BIAS = "bias"
CATALOGS = (SAMPLED, BIAS)
LOGGING_KINDS = (RANDOM, ORACLE_INCREMENTAL)


def default_agents() -> tuple[AgentSpec, ...]:
    return (
        AgentSpec(RANDOM),
        AgentSpec(POPULARITY),
        AgentSpec(CLICK_BANDIT),
        AgentSpec(LAST_CLICK_SALES),
        AgentSpec(DISCOUNTED_SALES, attribution=AttributionConfig(DISCOUNTED, gamma=0.5)),
        AgentSpec(
            BASELINE_SUBTRACTED_SALES,
            attribution=AttributionConfig(BASELINE_SUBTRACTED, gamma=0.5, baseline=None),
        ),
        AgentSpec(ORACLE_INCREMENTAL),
    )


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to rerun an experiment bit for bit.

    ``train_seed`` and ``eval_seed`` default to ``env.master_seed`` and
    ``env.master_seed + 1``.
    """

    env: EnvConfig = field(default_factory=EnvConfig)
    catalog: str = SAMPLED
    scenario: BiasScenario = field(default_factory=BiasScenario)
    logging_policy: AgentSpec = field(default_factory=lambda: AgentSpec(RANDOM))
    n_train_users: int = 1000
    n_eval_users: int = 1000
    agents: tuple = field(default_factory=default_agents)
    attribution: AttributionConfig = field(default_factory=AttributionConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    n_bootstrap: int = 1000
    n_contexts: int = 500
    common_random_numbers: bool = False
    output_dir: str = "out"
    train_seed: Optional[int] = None
    eval_seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if self.catalog not in CATALOGS:
            raise ValueError(f"catalog must be one of {CATALOGS}, got {self.catalog!r}")
        if self.logging_policy.kind not in LOGGING_KINDS:
            raise ValueError(f"logging_policy must be one of {LOGGING_KINDS}, got {self.logging_policy.kind!r}")
        if self.n_train_users < 0:
            raise ValueError(f"n_train_users must be >= 0, got {self.n_train_users}")
        if self.n_eval_users < 1:
            raise ValueError(f"n_eval_users must be >= 1, got {self.n_eval_users}")
        if self.n_bootstrap < 100:
            raise ValueError(f"n_bootstrap must be >= 100, got {self.n_bootstrap}")
        if self.n_contexts < 1:
            raise ValueError(f"n_contexts must be >= 1, got {self.n_contexts}")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ValueError(f"agents must have unique names, got {names}")
        for name in ("train_seed", "eval_seed"):
            seed = getattr(self, name)
            if seed is not None and not 0 <= seed <= MAX_SEED:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {seed}")
        if self.train_seed_ == self.eval_seed_:
            raise ValueError("train_seed and eval_seed must differ")

    @property
    def train_seed_(self) -> int:
        return self.env.master_seed if self.train_seed is None else self.train_seed

    @property
    def eval_seed_(self) -> int:
        if self.eval_seed is None:
            return (self.env.master_seed + 1) % (MAX_SEED + 1)
        return self.eval_seed


def bias_experiment(master_seed: int = 0, **overrides) -> ExperimentSpec:
    """Experiment on the decoy/incremental catalog of :mod:`convsim.scenario`."""
    from .scenario import bias_env_config

    params = dict(
        env=bias_env_config(master_seed),
        catalog=BIAS,
        n_train_users=4000,
        n_eval_users=10000,
        common_random_numbers=True,
    )
    params.update(overrides)
    return ExperimentSpec(**params)
