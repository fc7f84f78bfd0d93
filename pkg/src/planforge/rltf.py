"""Reward-driven policy training.

Plans sampled from the current policy are executed on the task's
dataset; the mean similarity is the episode reward. Updates follow the
likelihood-ratio estimator with a moving-average reward baseline:
params gain lr times the batch mean of grad-log-prob weighted by
(reward - baseline). The baseline is refreshed after each batch from
that batch's mean reward.

Exploration is epsilon-greedy at the token level inside the sampler and
decays once per epoch. A supervised pretraining pass over gold plans
gives the policy a warm start; reinforcement then fixes what imitation
got wrong and adapts to the reward surface.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from statistics import fmean

from .benchgen import oracle_best_plan, required_oracle_depth
from .decoder import DecoderConfig, sample_plan
from .errors import NoFeasiblePlan
from .evalkit import ReportTable, evaluate, task_reward
from .plan_ir import PlanGraph, TaskSpec
from .policy import (
    PolicyParams,
    TabularPolicy,
    apply_gradient,
    grad_log_prob,
    pretrain_supervised,
)
from .registry import ToolRegistry
from .simkit import DEFAULT_CONSTANTS, SimConstants


@dataclass(frozen=True, slots=True)
class TrainConfig:
    epochs: int = 12
    lr: float = 0.1
    epsilon: float = 0.1
    epsilon_decay: float = 0.9
    baseline_momentum: float = 0.9
    rollouts_per_task: int = 4
    seed: int = 0
    pretrain_epochs: int = 150
    pretrain_lr: float = 0.1
    sampling: DecoderConfig = field(
        default=DecoderConfig(sampling="stochastic")
    )


@dataclass(frozen=True, slots=True)
class BaselineState:
    value: float = 0.0
    initialized: bool = False


def update_baseline(state: BaselineState, batch_mean: float, momentum: float) -> BaselineState:
    if not state.initialized:
        return BaselineState(value=batch_mean, initialized=True)
    return BaselineState(
        value=momentum * state.value + (1.0 - momentum) * batch_mean,
        initialized=True,
    )


@dataclass(frozen=True, slots=True)
class HistoryRow:
    epoch: int
    mean_reward: float
    baseline: float
    epsilon: float


def reinforce_step(
    params: PolicyParams,
    batch: list[tuple[TaskSpec, PlanGraph, float]],
    baseline: BaselineState,
    lr: float,
    registry: ToolRegistry,
    momentum: float = 0.9,
) -> tuple[PolicyParams, BaselineState]:
    """One policy-gradient update from a batch of scored rollouts.

    Gradients are taken at the incoming parameters; the baseline that
    centers the rewards is the one carried in, and the refreshed
    baseline only affects the next call.
    """
    if not batch:
        return params, baseline
    accum: dict = {}
    for task, plan, reward in batch:
        advantage = reward - baseline.value
        if advantage == 0.0:
            continue
        for key, g in grad_log_prob(params, plan, task, registry).items():
            accum[key] = accum.get(key, 0.0) + g * advantage
    updated = apply_gradient(params, accum, lr / len(batch))
    batch_mean = fmean(reward for _, _, reward in batch)
    return updated, update_baseline(baseline, batch_mean, momentum)


def train(
    params: PolicyParams,
    tasks: tuple[TaskSpec, ...] | list[TaskSpec],
    registry: ToolRegistry,
    cfg: TrainConfig,
    constants: SimConstants = DEFAULT_CONSTANTS,
) -> tuple[PolicyParams, tuple[HistoryRow, ...]]:
    """Epochs of per-task rollout batches. Returns params and history."""
    rng = random.Random(cfg.seed)
    epsilon = cfg.epsilon
    baseline = BaselineState()
    current = params.copy()
    history: list[HistoryRow] = []
    for epoch in range(cfg.epochs):
        epoch_rewards: list[float] = []
        for task in tasks:
            batch: list[tuple[TaskSpec, PlanGraph, float]] = []
            for _ in range(cfg.rollouts_per_task):
                try:
                    plan = sample_plan(
                        TabularPolicy(current), task, registry, cfg.sampling, rng, epsilon
                    )
                except NoFeasiblePlan:
                    continue
                batch.append((task, plan, task_reward(plan, task, registry, constants)))
            if not batch:
                continue
            current, baseline = reinforce_step(
                current, batch, baseline, cfg.lr, registry, cfg.baseline_momentum
            )
            epoch_rewards.extend(reward for _, _, reward in batch)
        history.append(
            HistoryRow(
                epoch=epoch,
                mean_reward=fmean(epoch_rewards) if epoch_rewards else 0.0,
                baseline=baseline.value,
                epsilon=epsilon,
            )
        )
        epsilon *= cfg.epsilon_decay
    return current, tuple(history)


def gold_plans(
    tasks: tuple[TaskSpec, ...] | list[TaskSpec],
    registry: ToolRegistry,
    constants: SimConstants = DEFAULT_CONSTANTS,
) -> list[tuple[TaskSpec, PlanGraph]]:
    """Oracle plans at each task's tight depth, restricted to plans the
    decoder can actually emit so they are usable as imitation targets."""
    return [
        (
            task,
            oracle_best_plan(
                task,
                registry,
                required_oracle_depth(task),
                constants,
                replayable_only=True,
            ).best_plan,
        )
        for task in tasks
    ]


@dataclass
class ComparisonResult:
    tables: dict[str, ReportTable | None]
    trained_params: PolicyParams
    supervised_params: PolicyParams
    history: tuple[HistoryRow, ...]


def run_schema_comparison(
    train_tasks: tuple[TaskSpec, ...] | list[TaskSpec],
    test_tasks: tuple[TaskSpec, ...] | list[TaskSpec],
    registry: ToolRegistry,
    cfg: TrainConfig,
    eval_cfg: DecoderConfig,
    constants: SimConstants = DEFAULT_CONSTANTS,
) -> ComparisonResult:
    """Zero-shot, supervised, and reinforced policies on the test split.

    The few-shot schema needs in-context examples and has no analogue
    here, so its column is reported as unavailable.
    """
    zero_table = evaluate(TabularPolicy(PolicyParams()), test_tasks, registry, eval_cfg, constants)

    golds = gold_plans(train_tasks, registry, constants)
    supervised_params = pretrain_supervised(
        PolicyParams(), golds, registry, cfg.pretrain_epochs, cfg.pretrain_lr
    )
    supervised_table = evaluate(
        TabularPolicy(supervised_params), test_tasks, registry, eval_cfg, constants
    )

    trained_params, history = train(supervised_params, train_tasks, registry, cfg, constants)
    rltf_table = evaluate(TabularPolicy(trained_params), test_tasks, registry, eval_cfg, constants)

    return ComparisonResult(
        tables={
            "zero": zero_table,
            "few": None,
            "supervised": supervised_table,
            "rltf": rltf_table,
        },
        trained_params=trained_params,
        supervised_params=supervised_params,
        history=history,
    )
