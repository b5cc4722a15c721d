"""Federated round loop: client sampling, broadcast, local propensity-
weighted SGD, delta aggregation, and the server update."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .clicksim import (
    LoggingPolicy,
    UserState,
    collect_round_clicks,
    sample_user_bias,
    train_logging_policy,
)
from .dataset import Dataset
from .metrics import mean_ndcg
from .objective import ClientLossContext, PropensityProvider, click_gradient, client_loss
from .propensity import EmEstimatorState, estimated_propensity, federated_em_round
from .ranker import LinearRanker

MODES = ("fedips", "fedavg")
PROPENSITY_MODES = ("known", "estimated")


@dataclass(frozen=True)
class FederationConfig:
    """All knobs of one federated training run.

    `mode` selects propensity weighting ("fedips") or plain averaging of
    unweighted updates ("fedavg"); `propensity_mode` selects the oracle
    propensities logged with each impression or the federated EM estimate.
    """

    num_users: int = 200
    users_per_round: int = 50
    queries_per_user: int = 5
    k: int = 5
    m: int = 10
    gamma: float = 1.0
    gamma_sigma: float = 0.1
    eta_local: float = 1e-4
    eta_global: float = 0.5
    rounds: int = 100
    mode: str = "fedips"
    propensity_mode: str = "known"
    seed: int = 0
    eval_every: int = 1
    max_impressions_factor: int = 50
    logging_fraction: float = 0.01
    logging_epochs: int = 30
    logging_lr: float = 0.1
    em_iters: int = 1
    em_fit_lr: float = 0.5
    em_eta_f: float = 1.0
    em_floor: float = 0.01
    em_burn_in: int = 5
    em_pooling: float = 0.7

    def __post_init__(self) -> None:
        if self.num_users < 1 or self.users_per_round < 1:
            raise ValueError("user counts must be >= 1")
        if self.users_per_round > self.num_users:
            raise ValueError("users_per_round must not exceed num_users")
        if self.queries_per_user < 1:
            raise ValueError("queries_per_user must be >= 1")
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must be >= 1")
        if self.gamma < 0 or self.gamma_sigma < 0:
            raise ValueError("gamma and gamma_sigma must be >= 0")
        if self.eta_local <= 0 or self.eta_global <= 0:
            raise ValueError("learning rates must be positive")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.propensity_mode not in PROPENSITY_MODES:
            raise ValueError(f"propensity_mode must be one of {PROPENSITY_MODES}")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.max_impressions_factor < 1:
            raise ValueError("max_impressions_factor must be >= 1")
        if not 0.0 < self.logging_fraction <= 1.0:
            raise ValueError("logging_fraction must be in (0, 1]")


@dataclass(frozen=True)
class ClientUpdate:
    """One client's contribution to a round: its local weight delta and
    how much data produced it."""

    delta: np.ndarray
    clicks_used: int
    impressions_used: int

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.delta)):
            raise ValueError("delta must be finite")


@dataclass(frozen=True)
class RoundMetrics:
    """Per-round trace entry. ndcg5 is None on rounds the evaluation
    cadence skips; total_clicks is cumulative over the run."""

    round_index: int
    ndcg5: Optional[float]
    mean_client_loss: float
    total_clicks: int


@dataclass
class ExperimentState:
    """Mutable state of a running experiment between rounds."""

    config: FederationConfig
    model: LinearRanker
    users: list
    policy: LoggingPolicy
    train: Dataset
    test: Dataset
    queries_by_id: dict
    em: Optional[EmEstimatorState]
    rounds_done: int = 0
    total_clicks: int = 0


def client_opt(
    w_t: LinearRanker,
    records: Sequence,
    eta_local: float,
    propensities: PropensityProvider,
    rng: np.random.Generator,
) -> ClientUpdate:
    """One local SGD pass from the broadcast weights.

    Visits the round's clicked documents once each, in an order shuffled
    from the client's own stream, stepping against click_gradient at the
    current local weights. No clicks means a zero delta.
    """
    steps = []
    for record, query in records:
        for j in np.nonzero(record.clicks)[0]:
            p = float(propensities(record, int(j) + 1))
            if p <= 0.0:
                raise ValueError("clicked document has non-positive propensity")
            steps.append((query, int(record.displayed[j]), p))
    w = w_t.weights.copy()
    if steps:
        for idx in rng.permutation(len(steps)):
            query, d, p = steps[idx]
            w = w - eta_local * click_gradient(LinearRanker(w), query, d, p)
    return ClientUpdate(
        delta=w - w_t.weights, clicks_used=len(steps), impressions_used=len(records)
    )


def server_opt(
    w_t: LinearRanker, updates: Sequence[ClientUpdate], eta_global: float
) -> LinearRanker:
    """Server step: add eta_global times the mean client delta.

    The caller passes updates in ascending client-id order; the mean is
    accumulated in that order so results do not depend on scheduling.
    """
    if not updates:
        raise ValueError("updates must be nonempty")
    deltas = np.stack([u.delta for u in updates])
    return LinearRanker(w_t.weights + eta_global * deltas.mean(axis=0))


def _propensity_provider(
    state: ExperimentState, uid: int
) -> PropensityProvider:
    cfg = state.config
    if cfg.mode == "fedavg":
        return lambda record, position: 1.0
    if cfg.propensity_mode == "known":
        return lambda record, position: float(record.propensities[position - 1])
    em = state.em
    return lambda record, position: estimated_propensity(em, uid, position)


def init_state(
    cfg: FederationConfig, train: Dataset, test: Dataset
) -> ExperimentState:
    """Set up an experiment: train the logging policy, create the user
    population with sampled per-user bias and fixed query pools, and start
    from zero weights."""
    policy = train_logging_policy(
        train, cfg.logging_fraction, cfg.seed, cfg.logging_epochs, cfg.logging_lr
    )
    qids = [q.qid for q in train.queries]
    users = []
    for uid in range(cfg.num_users):
        stream = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, uid)))
        gamma_s = sample_user_bias(cfg.gamma, cfg.gamma_sigma, stream)
        pool = tuple(
            qids[int(i)] for i in stream.integers(len(qids), size=cfg.queries_per_user)
        )
        users.append(UserState(id=uid, gamma_s=gamma_s, query_pool=pool, rng_stream=stream))
    em = None
    if cfg.mode == "fedips" and cfg.propensity_mode == "estimated":
        em = EmEstimatorState(
            relevance_model=LinearRanker.zeros(train.feature_dim),
            k=cfg.k,
            floor=cfg.em_floor,
            em_iters=cfg.em_iters,
            fit_lr=cfg.em_fit_lr,
            burn_in=cfg.em_burn_in,
            pooling=cfg.em_pooling,
        )
    return ExperimentState(
        config=cfg,
        model=LinearRanker.zeros(train.feature_dim),
        users=users,
        policy=policy,
        train=train,
        test=test,
        queries_by_id=train.by_id(),
        em=em,
    )


def run_round(state: ExperimentState, cfg: FederationConfig) -> tuple[ExperimentState, RoundMetrics]:
    """One federated round: sample clients, collect their clicks, run
    local optimization at the broadcast weights, aggregate, then update
    the propensity estimator (estimated mode) and evaluate if due."""
    round_number = state.rounds_done + 1
    round_rng = np.random.default_rng(
        np.random.SeedSequence(cfg.seed, spawn_key=(2, state.rounds_done))
    )
    sampled = np.sort(
        round_rng.choice(cfg.num_users, size=cfg.users_per_round, replace=False)
    )
    round_records = {}
    for uid in sampled:
        user = state.users[uid]
        records = collect_round_clicks(
            user,
            state.queries_by_id,
            state.policy,
            cfg.k,
            cfg.m,
            cfg.max_impressions_factor * cfg.m,
            user.rng_stream,
        )
        round_records[int(uid)] = [
            (record, state.queries_by_id[record.query_id]) for record in records
        ]

    losses = []
    updates = []
    for uid in sampled:
        provider = _propensity_provider(state, int(uid))
        pairs = round_records[int(uid)]
        losses.append(
            client_loss(ClientLossContext(state.model, tuple(pairs), provider))
        )
        updates.append(
            client_opt(state.model, pairs, cfg.eta_local, provider, state.users[uid].rng_stream)
        )
    new_model = server_opt(state.model, updates, cfg.eta_global)

    if state.em is not None:
        state.em = federated_em_round(state.em, round_records, cfg.em_eta_f)

    state.model = new_model
    state.rounds_done = round_number
    state.total_clicks += sum(u.clicks_used for u in updates)

    evaluate = round_number % cfg.eval_every == 0 or round_number == cfg.rounds
    ndcg5 = mean_ndcg(new_model, state.test, 5) if evaluate else None
    metrics = RoundMetrics(
        round_index=round_number,
        ndcg5=ndcg5,
        mean_client_loss=float(np.mean(losses)),
        total_clicks=state.total_clicks,
    )
    return state, metrics


def run_experiment(
    cfg: FederationConfig, train: Dataset, test: Dataset
) -> list[RoundMetrics]:
    """Run a full experiment and return its round-by-round trace."""
    state = init_state(cfg, train, test)
    trace = []
    for _ in range(cfg.rounds):
        state, metrics = run_round(state, cfg)
        trace.append(metrics)
    return trace


def final_ndcg(trace: Sequence[RoundMetrics], tail: int = 10) -> float:
    """A run's converged score: mean test NDCG@5 over the last `tail`
    evaluated rounds. Less noisy than the single last round."""
    evaluated = [m.ndcg5 for m in trace if m.ndcg5 is not None]
    if not evaluated:
        raise ValueError("trace has no evaluated rounds")
    return float(np.mean(evaluated[-tail:]))
