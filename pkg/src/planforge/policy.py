"""Policies over decoding actions.

The trainable policy is tabular: a sparse mapping from (context, token)
to a logit, implicitly zero. Contexts are scored at two levels, a
shared level with the previous tool wildcarded and the full context;
the effective logit is their sum, so rare full contexts back off to
behavior learned across previous tools. Scores returned to the decoder
are always normalized log-probabilities over the offered action set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .context import Context, context_from_json, context_levels, context_to_json
from .decoder import StepView, expected_action, replay_steps
from .errors import EmptyAllowedSet
from .plan_ir import PlanGraph, TaskSpec
from .registry import ToolRegistry


@dataclass
class PolicyParams:
    values: dict[tuple[Context, str], float] = field(default_factory=dict)

    def get(self, ctx: Context, token: str) -> float:
        return self.values.get((ctx, token), 0.0)

    def copy(self) -> "PolicyParams":
        return PolicyParams(dict(self.values))


def effective_logit(params: PolicyParams, ctx: Context, token: str) -> float:
    return sum(params.get(level, token) for level in context_levels(ctx))


def _log_softmax(logits: dict[str, float], order: Sequence[str]) -> dict[str, float]:
    peak = max(logits[a] for a in order)
    log_total = peak + math.log(sum(math.exp(logits[a] - peak) for a in order))
    return {a: logits[a] - log_total for a in order}


def score_tokens(
    params: PolicyParams, ctx: Context, allowed: Sequence[str]
) -> dict[str, float]:
    """Normalized log-probabilities over the allowed tokens."""
    if not allowed:
        raise EmptyAllowedSet("no tokens to score")
    logits = {a: effective_logit(params, ctx, a) for a in allowed}
    return _log_softmax(logits, allowed)


def log_prob(
    params: PolicyParams, plan: PlanGraph, task: TaskSpec, registry: ToolRegistry
) -> float:
    """Log-probability of the canonical episode that emits the plan."""
    total = 0.0
    for step in replay_steps(plan, task, registry):
        total += score_tokens(params, step.context, step.actions)[step.chosen]
    return total


def grad_log_prob(
    params: PolicyParams, plan: PlanGraph, task: TaskSpec, registry: ToolRegistry
) -> dict[tuple[Context, str], float]:
    """Gradient of log_prob with respect to every touched table entry.

    Per step and token the softmax gradient is (chosen - p); it lands on
    each backoff level of the step context, so both levels of the sum
    contribute and the per-level gradient sums to zero across tokens.
    """
    grad: dict[tuple[Context, str], float] = {}
    for step in replay_steps(plan, task, registry):
        log_probs = score_tokens(params, step.context, step.actions)
        for token in step.actions:
            g = (1.0 if token == step.chosen else 0.0) - math.exp(log_probs[token])
            if g == 0.0:
                continue
            for level in context_levels(step.context):
                key = (level, token)
                grad[key] = grad.get(key, 0.0) + g
    return grad


def apply_gradient(
    params: PolicyParams, grad: dict[tuple[Context, str], float], scale: float
) -> PolicyParams:
    values = dict(params.values)
    for key, g in grad.items():
        values[key] = values.get(key, 0.0) + scale * g
    return PolicyParams(values)


def pretrain_supervised(
    params: PolicyParams,
    labeled: Sequence[tuple[TaskSpec, PlanGraph]],
    registry: ToolRegistry,
    epochs: int,
    lr: float = 0.1,
) -> PolicyParams:
    """Maximize the log-likelihood of gold plans, one example at a time."""
    current = params.copy()
    for _ in range(epochs):
        for task, plan in labeled:
            grad = grad_log_prob(current, plan, task, registry)
            current = apply_gradient(current, grad, lr)
    return current


def params_to_json(params: PolicyParams) -> dict:
    entries = [
        {"context": context_to_json(ctx), "token": token, "value": value}
        for (ctx, token), value in params.values.items()
    ]
    entries.sort(key=lambda e: (sorted(e["context"].items()).__repr__(), e["token"]))
    return {"version": 1, "params": entries}


def params_from_json(doc: dict) -> PolicyParams:
    values = {
        (context_from_json(entry["context"]), entry["token"]): float(entry["value"])
        for entry in doc["params"]
    }
    return PolicyParams(values)


class TabularPolicy:
    def __init__(self, params: PolicyParams) -> None:
        self.params = params

    def score_step(
        self, ctx: Context, actions: Sequence[str], view: StepView
    ) -> dict[str, float]:
        return score_tokens(self.params, ctx, actions)


class UniformPolicy:
    def score_step(
        self, ctx: Context, actions: Sequence[str], view: StepView
    ) -> dict[str, float]:
        if not actions:
            raise EmptyAllowedSet("no tokens to score")
        lp = -math.log(len(actions))
        return {a: lp for a in actions}


class GuidedPlanPolicy:
    """Boosts whichever action continues toward a fixed target plan.

    Off the canonical path it falls back to uniform scores, so beam
    search under this policy ranks the target first when the target is
    reachable at all.
    """

    def __init__(self, plan: PlanGraph, registry: ToolRegistry, strength: float = 20.0) -> None:
        self.plan = plan
        self.registry = registry
        self.strength = strength

    def score_step(
        self, ctx: Context, actions: Sequence[str], view: StepView
    ) -> dict[str, float]:
        if not actions:
            raise EmptyAllowedSet("no tokens to score")
        token = expected_action(
            view.task, self.registry, view.state, view.branch_index, self.plan
        )
        logits = {a: self.strength if a == token else 0.0 for a in actions}
        return _log_softmax(logits, actions)


class RemotePolicy:
    """Scores steps over a newline-delimited JSON byte stream.

    One request per line: {"context": {...}, "allowed": [...]}. The
    peer answers {"scores": {token: logit}} on one line. Returned
    logits are renormalized locally, so the peer does not have to.
    """

    def __init__(self, transport) -> None:
        self.transport = transport

    def score_step(
        self, ctx: Context, actions: Sequence[str], view: StepView
    ) -> dict[str, float]:
        if not actions:
            raise EmptyAllowedSet("no tokens to score")
        request = {"context": context_to_json(ctx), "allowed": list(actions)}
        self.transport.write((json.dumps(request) + "\n").encode())
        self.transport.flush()
        line = self.transport.readline()
        if not line:
            raise ConnectionError("policy peer closed the stream")
        doc = json.loads(line)
        logits = {a: float(doc["scores"].get(a, 0.0)) for a in actions}
        return _log_softmax(logits, actions)


def serve_requests(
    transport,
    score_fn: Callable[[Context, list[str]], dict[str, float]],
    max_requests: int | None = None,
) -> int:
    """Answer RemotePolicy requests from a byte stream. Returns count served."""
    served = 0
    while max_requests is None or served < max_requests:
        line = transport.readline()
        if not line:
            break
        doc = json.loads(line)
        ctx = context_from_json(doc["context"])
        scores = score_fn(ctx, list(doc["allowed"]))
        transport.write((json.dumps({"scores": scores}) + "\n").encode())
        transport.flush()
        served += 1
    return served
