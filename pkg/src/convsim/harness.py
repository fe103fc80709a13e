"""End-to-end experiments: logging, training, A/B tests, probes and ranking."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.stats import kendalltau

from . import logio
from .agents import (
    CLICK_BANDIT,
    MODEL_KINDS,
    ORACLE_INCREMENTAL,
    POPULARITY,
    RANDOM,
    SALES_KINDS,
    Agent,
    AgentSpec,
    oracle_incremental_scores,
    train_logistic,
)
from .attribution import (
    attribute,
    build_click_training_set,
    build_training_set,
    resolve_baseline,
)
from .config import BIAS, ExperimentSpec
from .env import EnvConfig, Episode, Policy, ProductCatalog, UserState, sample_catalog, simulate_episode
from .events import BANDIT, CONVERSION, ORGANIC, Event, Timeline
from .features import featurize
from .rng import BOOTSTRAP, CATALOG, CONTEXTS, ENV, EVAL, POLICY, PROBE, TRAIN, substream
from .scenario import bias_catalog

log = logging.getLogger(__name__)


def build_catalog(spec: ExperimentSpec) -> ProductCatalog:
    rng = substream(spec.env.master_seed, CATALOG)
    if spec.catalog == BIAS:
        return bias_catalog(spec.env, rng, spec.scenario)
    return sample_catalog(spec.env, rng)


# --- simulation -------------------------------------------------------------


def _user_keys(phase: int, arm: Optional[int], user_id: int) -> tuple:
    return (phase, user_id) if arm is None else (phase, arm, user_id)


def _simulate_chunk(args) -> list[Timeline]:
    catalog, config, policy, seed, phase, arm, user_ids = args
    out = []
    for uid in user_ids:
        keys = _user_keys(phase, arm, uid)
        out.append(
            simulate_episode(
                catalog, config, policy, substream(seed, *keys, ENV), uid, substream(seed, *keys, POLICY)
            )
        )
    return out


def simulate_users(
    catalog: ProductCatalog,
    config: EnvConfig,
    policy: Policy,
    seed: int,
    phase: int,
    user_ids: Sequence[int],
    arm: Optional[int] = None,
    parallel: int = 1,
) -> list[Timeline]:
    """Simulate each user on its own substream; output order follows ``user_ids``.

    Results do not depend on ``parallel``. ``arm`` separates the streams of
    A/B arms; leave it ``None`` for common random numbers across arms.
    """
    user_ids = list(user_ids)
    if parallel <= 1 or len(user_ids) < 2:
        return _simulate_chunk((catalog, config, policy, seed, phase, arm, user_ids))
    n = min(parallel, len(user_ids))
    bounds = np.linspace(0, len(user_ids), n + 1).astype(int)
    chunks = [user_ids[bounds[i] : bounds[i + 1]] for i in range(n)]
    with ProcessPoolExecutor(max_workers=n) as pool:
        parts = pool.map(_simulate_chunk, [(catalog, config, policy, seed, phase, arm, c) for c in chunks])
        return [tl for part in parts for tl in part]


def generate_logs(
    spec: ExperimentSpec,
    catalog: Optional[ProductCatalog] = None,
    path: Optional[Union[str, Path]] = None,
    parallel: int = 1,
) -> list[Timeline]:
    """Simulate the training population under the logging policy (and write it to ``path``)."""
    catalog = build_catalog(spec) if catalog is None else catalog
    logger = make_untrained_agent(spec.logging_policy, catalog, spec.env)
    corpus = simulate_users(catalog, spec.env, logger, spec.train_seed_, TRAIN, range(spec.n_train_users), parallel=parallel)
    if path is not None:
        logio.write_log(corpus, path)
    return corpus


# --- training ---------------------------------------------------------------


def organic_counts(corpus: Iterable[Timeline], num_products: int) -> np.ndarray:
    counts = np.zeros(num_products)
    for tl in corpus:
        for e in tl.events:
            if e.kind == ORGANIC:
                counts[e.product] += 1
    return counts


def make_untrained_agent(spec: AgentSpec, catalog: ProductCatalog, config: EnvConfig) -> Agent:
    if spec.kind == RANDOM:
        return Agent(spec, config.num_products)
    if spec.kind == ORACLE_INCREMENTAL:
        return Agent(spec, config.num_products, catalog=catalog, config=config)
    raise ValueError(f"{spec.kind} agents need training data")


def train_agents(spec: ExperimentSpec, corpus: Sequence[Timeline], catalog: ProductCatalog) -> dict[str, Agent]:
    """Fit every agent in ``spec.agents`` on the logged corpus.

    Auto baselines of baseline-subtracted agents are estimated from the
    corpus and written into the returned agents' specs.
    """
    P = spec.env.num_products
    agents: dict[str, Agent] = {}
    click_set = None
    for agent_spec in spec.agents:
        kind = agent_spec.kind
        if kind in (RANDOM, ORACLE_INCREMENTAL):
            agent = make_untrained_agent(agent_spec, catalog, spec.env)
        elif kind == POPULARITY:
            agent = Agent(agent_spec, P, popularity=organic_counts(corpus, P))
        elif kind == CLICK_BANDIT:
            if click_set is None:
                click_set = build_click_training_set(corpus, P)
            agent = Agent(agent_spec, P, model=train_logistic(click_set, P, spec.training))
        else:
            attribution = resolve_baseline(agent_spec.attribution, corpus)
            agent_spec = replace(agent_spec, attribution=attribution)
            examples = build_training_set(corpus, attribution, P)
            agent = Agent(agent_spec, P, model=train_logistic(examples, P, spec.training))
        log.info("trained %s", agent.name)
        agents[agent.name] = agent
    return agents


def save_agents(agents: dict[str, Agent], directory: Union[str, Path]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, agent in agents.items():
        if agent.model is not None:
            logio.save_model(agent.model, directory / f"{name}.model")
        elif agent.popularity is not None:
            logio.save_matrix(agent.popularity[None, :], directory / f"{name}.model")


def load_agents(spec: ExperimentSpec, directory: Union[str, Path], catalog: ProductCatalog) -> dict[str, Agent]:
    directory = Path(directory)
    P = spec.env.num_products
    agents = {}
    for agent_spec in spec.agents:
        path = directory / f"{agent_spec.name}.model"
        if agent_spec.kind in MODEL_KINDS:
            agents[agent_spec.name] = Agent(agent_spec, P, model=logio.load_model(path, spec.training))
        elif agent_spec.kind == POPULARITY:
            popularity = logio.load_matrix(path)[0] if path.exists() else None
            agents[agent_spec.name] = Agent(agent_spec, P, popularity=popularity)
        else:
            agents[agent_spec.name] = make_untrained_agent(agent_spec, catalog, spec.env)
    return agents


# --- statistics -------------------------------------------------------------


def bootstrap_ci(samples, n_boot: int = 1000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of ``samples``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("bootstrap_ci needs at least one sample")
    if n_boot < 100:
        raise ValueError(f"n_boot must be >= 100, got {n_boot}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])
    rng = np.random.default_rng(seed)
    means = np.empty(n_boot)
    batch = max(1, 2_000_000 // x.size)
    for start in range(0, n_boot, batch):
        stop = min(start + batch, n_boot)
        means[start:stop] = x[rng.integers(0, x.size, size=(stop - start, x.size))].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


@dataclass(frozen=True)
class RankingResult:
    tau: float
    defined: bool


def ranking_quality(scores, oracle_scores) -> RankingResult:
    """Kendall tau-b between two score vectors over the same actions.

    Undefined (``defined == False``, ``tau`` nan) when either vector is
    constant.
    """
    a = np.asarray(scores, dtype=float)
    b = np.asarray(oracle_scores, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"score vectors must be 1-D and equal length, got {a.shape} and {b.shape}")
    if np.all(a == a[0]) or np.all(b == b[0]):
        return RankingResult(math.nan, False)
    tau = float(kendalltau(a, b).statistic)
    return RankingResult(tau, math.isfinite(tau))


@dataclass(frozen=True)
class RankingSummary:
    mean_tau: float
    n_defined: int
    n_undefined: int


def summarize_rankings(results: Sequence[RankingResult]) -> RankingSummary:
    """Average tau over the defined results; undefined ones are only counted."""
    taus = [r.tau for r in results if r.defined]
    mean = float(np.mean(taus)) if taus else math.nan
    return RankingSummary(mean, len(taus), len(results) - len(taus))


# --- A/B testing ------------------------------------------------------------


@dataclass(eq=False)
class ArmOutcome:
    """Per-user outcomes of one arm, in user-id order."""

    name: str
    sales: np.ndarray
    clicks: np.ndarray
    impressions: np.ndarray
    attributed: np.ndarray


@dataclass(frozen=True)
class AgentMetrics:
    name: str
    users: int
    clicks_per_user: float
    ctr: float
    sales_per_user: float
    attributed_sales_per_user: float
    sales_ci_low: float
    sales_ci_high: float


@dataclass(frozen=True)
class PairedDifference:
    arm: str
    reference: str
    mean: float
    ci_low: float
    ci_high: float

    @property
    def excludes_zero(self) -> bool:
        return self.ci_low > 0.0 or self.ci_high < 0.0


@dataclass
class MetricsReport:
    agents: list[AgentMetrics] = field(default_factory=list)
    paired: list[PairedDifference] = field(default_factory=list)
    ranking: dict[str, RankingSummary] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def agent(self, name: str) -> AgentMetrics:
        return next(m for m in self.agents if m.name == name)

    def difference(self, arm: str, reference: str) -> PairedDifference:
        return next(d for d in self.paired if d.arm == arm and d.reference == reference)

    def to_dict(self) -> dict:
        return {
            "agents": [vars(m) for m in self.agents],
            "paired": [vars(d) for d in self.paired],
            "ranking": {k: vars(v) for k, v in self.ranking.items()},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(
            [AgentMetrics(**m) for m in data.get("agents", [])],
            [PairedDifference(**d) for d in data.get("paired", [])],
            {k: RankingSummary(**v) for k, v in data.get("ranking", {}).items()},
            dict(data.get("metadata", {})),
        )


def evaluate_agent(
    spec: ExperimentSpec,
    agent: Agent,
    catalog: ProductCatalog,
    arm: Optional[int] = None,
    parallel: int = 1,
) -> ArmOutcome:
    """Run ``n_eval_users`` fresh users under ``agent``.

    With ``arm=None`` every agent sees the same per-user random numbers.
    """
    timelines = simulate_users(
        catalog, spec.env, agent, spec.eval_seed_, EVAL, range(spec.n_eval_users), arm=arm, parallel=parallel
    )
    attribution = resolve_baseline(spec.attribution, timelines)
    n = len(timelines)
    sales, clicks, impressions, attributed = (np.zeros(n) for _ in range(4))
    for i, tl in enumerate(timelines):
        sales[i] = tl.n_conversions
        clicks[i] = tl.n_clicks
        impressions[i] = sum(1 for e in tl.events if e.kind == BANDIT)
        attributed[i] = attribute(tl, attribution).total
    return ArmOutcome(agent.name, sales, clicks, impressions, attributed)


def run_ab_test(
    spec: ExperimentSpec,
    agents: dict[str, Agent],
    catalog: ProductCatalog,
    common_random_numbers: Optional[bool] = None,
    parallel: int = 1,
) -> MetricsReport:
    """Evaluate every agent on fresh users and summarize the arms.

    Paired differences between every two arms are reported only under
    common random numbers, where user ``i`` is the same simulated person in
    every arm.
    """
    crn = spec.common_random_numbers if common_random_numbers is None else common_random_numbers
    outcomes = []
    for idx, agent in enumerate(agents.values()):
        log.info("evaluating %s", agent.name)
        outcomes.append(evaluate_agent(spec, agent, catalog, arm=None if crn else idx, parallel=parallel))
    report = MetricsReport(metadata=_metadata(spec, crn))
    for idx, o in enumerate(outcomes):
        lo, hi = bootstrap_ci(o.sales, spec.n_bootstrap, seed=_boot_seed(spec, idx))
        shown = o.impressions.sum()
        report.agents.append(
            AgentMetrics(
                name=o.name,
                users=len(o.sales),
                clicks_per_user=float(o.clicks.mean()),
                ctr=float(o.clicks.sum() / shown) if shown else 0.0,
                sales_per_user=float(o.sales.mean()),
                attributed_sales_per_user=float(o.attributed.mean()),
                sales_ci_low=lo,
                sales_ci_high=hi,
            )
        )
    if crn:
        for i, a in enumerate(outcomes):
            for j, b in enumerate(outcomes):
                if i == j:
                    continue
                diff = a.sales - b.sales
                lo, hi = bootstrap_ci(diff, spec.n_bootstrap, seed=_boot_seed(spec, i, j))
                report.paired.append(PairedDifference(a.name, b.name, float(diff.mean()), lo, hi))
    return report


def _boot_seed(spec: ExperimentSpec, *keys: int) -> int:
    return int(substream(spec.eval_seed_, BOOTSTRAP, *keys).integers(2**63))


def _metadata(spec: ExperimentSpec, crn: bool) -> dict:
    return {
        "config_hash": logio.config_hash(spec),
        "master_seed": spec.env.master_seed,
        "train_seed": spec.train_seed_,
        "eval_seed": spec.eval_seed_,
        "n_eval_users": spec.n_eval_users,
        "common_random_numbers": crn,
    }


# --- counterfactual probes --------------------------------------------------

ActionChoice = Union[int, Callable[[ProductCatalog, UserState], int]]


def alignment_maximizing_product(catalog: ProductCatalog, user: UserState) -> int:
    """The product whose click most increases ``delta`` . its own conversion embedding."""
    lam = catalog.conversion_embed
    return int(np.argmax((lam * lam).sum(axis=1) - lam @ user.delta))


def counterfactual_probe(
    catalog: ProductCatalog,
    config: EnvConfig,
    user_seed: int,
    action: ActionChoice,
    horizon: int,
) -> int:
    """Sales caused by a forced click on ``action`` at step 0, over ``horizon`` steps.

    Both rollouts draw every random number from the same stream, show no
    recommendations and differ only by the click. ``action`` may be a
    function choosing the product from the initial user state.
    """
    if not 0 <= horizon <= config.max_steps:
        raise ValueError(f"horizon must lie in [0, max_steps={config.max_steps}], got {horizon}")
    totals = []
    for forced in (True, False):
        episode = Episode(catalog, config, substream(config.master_seed, PROBE, user_seed), user_seed, passive=True)
        if forced:
            a = action(catalog, episode.user) if callable(action) else action
            episode.click(a)
        sales = 0
        while not episode.done and episode.user.t < horizon:
            events, _ = episode.step()
            sales += sum(1 for e in events if e.kind == CONVERSION)
        totals.append(sales)
    return totals[0] - totals[1]


@dataclass(eq=False)
class ProbeResult:
    deltas: np.ndarray
    mean: float
    ci_low: float
    ci_high: float


def _probe_chunk(args) -> list[int]:
    catalog, config, seeds, action, horizon = args
    return [counterfactual_probe(catalog, config, s, action, horizon) for s in seeds]


def probe_incrementality(
    catalog: ProductCatalog,
    config: EnvConfig,
    user_seeds: Sequence[int],
    action: ActionChoice,
    horizon: int,
    n_boot: int = 1000,
    level: float = 0.95,
    parallel: int = 1,
) -> ProbeResult:
    seeds = list(user_seeds)
    if parallel <= 1:
        deltas = _probe_chunk((catalog, config, seeds, action, horizon))
    else:
        n = min(parallel, len(seeds))
        bounds = np.linspace(0, len(seeds), n + 1).astype(int)
        jobs = [(catalog, config, seeds[bounds[i] : bounds[i + 1]], action, horizon) for i in range(n)]
        with ProcessPoolExecutor(max_workers=n) as pool:
            deltas = [d for part in pool.map(_probe_chunk, jobs) for d in part]
    deltas = np.asarray(deltas, dtype=float)
    lo, hi = bootstrap_ci(deltas, n_boot, level, seed=int(substream(config.master_seed, PROBE, BOOTSTRAP).integers(2**63)))
    return ProbeResult(deltas, float(deltas.mean()), lo, hi)


# --- ranking of incremental actions -----------------------------------------


@dataclass(eq=False)
class UserContext:
    features: np.ndarray
    user: UserState


def sample_contexts(catalog: ProductCatalog, config: EnvConfig, n: int, seed: int) -> list[UserContext]:
    """True user states and features at the first recommendation opportunity of fresh users.

    Users whose session ends before any bandit state are skipped; users are
    drawn until ``n`` contexts are collected.
    """
    out: list[UserContext] = []
    uid = 0
    while len(out) < n:
        episode = Episode(catalog, config, substream(seed, CONTEXTS, uid), uid)
        history: list[Event] = []
        while not episode.done and not episode.awaiting_action:
            events, _ = episode.step()
            history.extend(events)
        if not episode.done:
            out.append(UserContext(featurize(history, config.num_products), episode.user))
        uid += 1
        if uid > 1000 * n:
            raise RuntimeError("could not reach a recommendation opportunity; check event_chain")
    return out


def rank_schemes(
    spec: ExperimentSpec,
    agents: dict[str, Agent],
    catalog: ProductCatalog,
    contexts: Optional[list[UserContext]] = None,
) -> dict[str, RankingSummary]:
    """Mean Kendall tau between each sales agent's scores and the oracle's, per context."""
    if contexts is None:
        contexts = sample_contexts(catalog, spec.env, spec.n_contexts, spec.eval_seed_)
    oracle = [oracle_incremental_scores(catalog, c.user, spec.env) for c in contexts]
    out = {}
    for name, agent in agents.items():
        if agent.spec.kind not in SALES_KINDS:
            continue
        results = [ranking_quality(agent.model.scores(c.features), o) for c, o in zip(contexts, oracle)]
        out[name] = summarize_rankings(results)
    return out


def run_ranking_experiment(spec: ExperimentSpec, parallel: int = 1) -> dict[str, RankingSummary]:
    """Log, train the sales agents and score their rankings, all from ``spec``."""
    catalog = build_catalog(spec)
    corpus = generate_logs(spec, catalog, parallel=parallel)
    sales_only = replace(spec, agents=tuple(a for a in spec.agents if a.kind in SALES_KINDS))
    agents = train_agents(sales_only, corpus, catalog)
    return rank_schemes(spec, agents, catalog)
