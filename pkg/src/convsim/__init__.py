"""Conversion-aware recommendation simulator with click attribution and bandit agents."""

from .agents import Agent, AgentSpec, PolicyModel, TrainingConfig, train_logistic
from .attribution import AttributionConfig, CreditMap, attribute
from .config import ExperimentSpec
from .env import EnvConfig, Episode, ProductCatalog, UserState, simulate_episode
from .events import Event, Timeline

__all__ = [
    "Agent",
    "AgentSpec",
    "AttributionConfig",
    "CreditMap",
    "EnvConfig",
    "Episode",
    "Event",
    "ExperimentSpec",
    "PolicyModel",
    "ProductCatalog",
    "Timeline",
    "TrainingConfig",
    "UserState",
    "attribute",
    "simulate_episode",
    "train_logistic",
]
