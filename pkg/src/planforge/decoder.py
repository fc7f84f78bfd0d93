"""Constrained plan decoding.

Plans are emitted tool by tool. Each task input starts a branch; a
round-robin scheduler gives every live branch a turn. On its turn a
branch may emit any unused tool whose first input slot matches the
branch modality, may propose a join (a two-input tool consuming another
branch's head), or may emit the end token. With several branches alive
the end token parks the branch so a later join can consume its head;
with one branch left it completes the plan, which is only allowed once
the branch modality matches the task output and every task input has
been consumed.

The same state machine drives beam search, stochastic rollout sampling,
and replay of an existing plan as a decoding episode. Replay is what
gives plans a log-probability under a policy.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

from .context import (
    BOS,
    END_TOKEN,
    Context,
    HintState,
    advance_hint,
    hint_token,
    initial_hint_state,
    merge_hint_states,
)
from .errors import InvalidPlan, NoFeasiblePlan
from .plan_ir import (
    InputRef,
    NodeOutput,
    PlanGraph,
    PlanNode,
    TaskInput,
    TaskSpec,
    plan_hash,
    validate_plan,
)
from .registry import ToolRegistry, compatible_successors
from .simkit import Modality
from .trie import build_trie, children_after


@dataclass(frozen=True, slots=True)
class DecoderConfig:
    beam_size: int = 30
    max_tools_per_branch: int = 6
    sampling: str = "greedy"
    temperature: float = 0.9
    top_k: int = 5
    top_p: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be positive")
        if self.sampling not in ("greedy", "stochastic"):
            raise ValueError(f"unknown sampling mode: {self.sampling}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")


@dataclass(frozen=True, slots=True)
class BranchState:
    root_input: int
    head: int | None
    modality: Modality
    prev_tool: str
    tool_count: int
    parked: bool
    consumed: bool
    hint: HintState


@dataclass(frozen=True, slots=True)
class BeamState:
    branches: tuple[BranchState, ...]
    used: frozenset[str]
    nodes: tuple[PlanNode, ...]
    next_id: int
    log_prob: float
    rr: int
    done: bool
    path: tuple[str, ...]
    output_node: int | None = None


@dataclass(frozen=True, slots=True)
class StepView:
    """What a policy may look at besides the context string fields."""

    task: TaskSpec
    state: BeamState
    branch_index: int


@dataclass(frozen=True, slots=True)
class StepFrontier:
    branch_index: int
    context: Context
    actions: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class ReplayStep:
    context: Context
    actions: tuple[str, ...]
    chosen: str


@dataclass(frozen=True, slots=True)
class DecodedPlan:
    plan: PlanGraph
    log_prob: float


class Policy(Protocol):
    def score_step(
        self, ctx: Context, actions: Sequence[str], view: StepView
    ) -> dict[str, float]: ...


def initial_state(task: TaskSpec) -> BeamState:
    branches = tuple(
        BranchState(
            root_input=i,
            head=None,
            modality=modality,
            prev_tool=BOS,
            tool_count=0,
            parked=False,
            consumed=False,
            hint=initial_hint_state(task.corruption_chains[i]),
        )
        for i, modality in enumerate(task.input_signature)
    )
    return BeamState(
        branches=branches,
        used=frozenset(),
        nodes=(),
        next_id=0,
        log_prob=0.0,
        rr=0,
        done=False,
        path=(),
    )


def head_ref(branch: BranchState) -> InputRef:
    if branch.head is None:
        return TaskInput(branch.root_input)
    return NodeOutput(branch.head)


def _active_index(state: BeamState) -> int | None:
    n = len(state.branches)
    for offset in range(n):
        idx = (state.rr + offset) % n
        branch = state.branches[idx]
        if not branch.parked and not branch.consumed:
            return idx
    return None


def _partner_index(state: BeamState, acting: int, want: Modality) -> int | None:
    """Lowest-index other live head whose modality fits the second slot."""
    for idx, branch in enumerate(state.branches):
        if idx != acting and not branch.consumed and branch.modality is want:
            return idx
    return None


def _consumed_task_inputs(state: BeamState) -> set[int]:
    return {
        ref.index
        for node in state.nodes
        for ref in node.input_refs
        if isinstance(ref, TaskInput)
    }


def step_frontier(
    state: BeamState,
    task: TaskSpec,
    registry: ToolRegistry,
    cfg: DecoderConfig,
) -> StepFrontier | None:
    """Acting branch, its context, and the legal actions. None on dead ends."""
    if state.done:
        return None
    acting = _active_index(state)
    if acting is None:
        return None
    branch = state.branches[acting]
    unconsumed = sum(1 for b in state.branches if not b.consumed)

    tools = []
    for spec in compatible_successors(registry, branch.modality, state.used):
        if len(spec.inputs) == 1:
            if branch.tool_count < cfg.max_tools_per_branch:
                tools.append(spec.name)
        elif unconsumed >= 2 and _partner_index(state, acting, spec.inputs[1]) is not None:
            tools.append(spec.name)

    end_ok = False
    if unconsumed >= 2:
        # Parking only helps if some future join could take this head.
        end_ok = any(
            len(spec.inputs) == 2
            and spec.name not in state.used
            and spec.inputs[1] is branch.modality
            for spec in registry
        )
    else:
        end_ok = (
            branch.modality is task.output_modality
            and _consumed_task_inputs(state) == set(range(len(task.input_signature)))
        )

    actions = tuple(sorted(tools)) + ((END_TOKEN,) if end_ok else ())
    if not actions:
        return None
    ctx = Context(
        task_category=task.category.value,
        prev_tool=branch.prev_tool,
        branch_modality=branch.modality.value,
        hint=hint_token(branch.hint, task.reference_builder),
    )
    return StepFrontier(branch_index=acting, context=ctx, actions=actions)


def apply_action(
    state: BeamState,
    token: str,
    task: TaskSpec,
    registry: ToolRegistry,
    lp_delta: float = 0.0,
) -> BeamState:
    """Advance the state by one eligible action."""
    acting = _active_index(state)
    if acting is None:
        raise InvalidPlan("no live branch to act")
    branch = state.branches[acting]
    branches = list(state.branches)
    n = len(branches)
    unconsumed = sum(1 for b in state.branches if not b.consumed)

    if token == END_TOKEN:
        if unconsumed >= 2:
            branches[acting] = replace(branch, parked=True)
            return replace(
                state,
                branches=tuple(branches),
                rr=(acting + 1) % n,
                log_prob=state.log_prob + lp_delta,
                path=state.path + (token,),
            )
        return replace(
            state,
            done=True,
            output_node=branch.head,
            log_prob=state.log_prob + lp_delta,
            path=state.path + (token,),
        )

    spec = registry.get(token)
    if len(spec.inputs) == 1:
        node = PlanNode(state.next_id, token, (head_ref(branch),))
        branches[acting] = BranchState(
            root_input=branch.root_input,
            head=state.next_id,
            modality=spec.output,
            prev_tool=token,
            tool_count=branch.tool_count + 1,
            parked=False,
            consumed=False,
            hint=advance_hint(branch.hint, spec.semantic),
        )
    else:
        partner_idx = _partner_index(state, acting, spec.inputs[1])
        if partner_idx is None:
            raise InvalidPlan(f"{token} has no join partner")
        partner = branches[partner_idx]
        node = PlanNode(state.next_id, token, (head_ref(branch), head_ref(partner)))
        # The merged branch continues in the proposer's slot with a fresh
        # tool budget; the join itself does not count against any cap.
        branches[acting] = BranchState(
            root_input=branch.root_input,
            head=state.next_id,
            modality=spec.output,
            prev_tool=token,
            tool_count=0,
            parked=False,
            consumed=False,
            hint=advance_hint(merge_hint_states(branch.hint, partner.hint), spec.semantic),
        )
        branches[partner_idx] = replace(partner, consumed=True)

    return replace(
        state,
        branches=tuple(branches),
        used=state.used | {token},
        nodes=state.nodes + (node,),
        next_id=state.next_id + 1,
        log_prob=state.log_prob + lp_delta,
        rr=(acting + 1) % n,
        path=state.path + (token,),
    )


def to_plan(state: BeamState) -> PlanGraph:
    if not state.done or state.output_node is None:
        raise InvalidPlan("state is not a completed plan")
    return PlanGraph(nodes=state.nodes, output_node=state.output_node)


def _step_cap(task: TaskSpec, registry: ToolRegistry) -> int:
    return len(registry) + len(task.input_signature) + 2


def beam_search(
    policy: Policy,
    task: TaskSpec,
    registry: ToolRegistry,
    cfg: DecoderConfig,
) -> list[DecodedPlan]:
    """Rank complete valid plans by episode log-probability."""
    live = [initial_state(task)]
    finished: dict[str, DecodedPlan] = {}

    for _ in range(_step_cap(task, registry)):
        if not live:
            break
        grown: list[BeamState] = []
        for state in live:
            frontier = step_frontier(state, task, registry, cfg)
            if frontier is None:
                continue
            scores = policy.score_step(
                frontier.context, frontier.actions, StepView(task, state, frontier.branch_index)
            )
            for token in frontier.actions:
                child = apply_action(state, token, task, registry, lp_delta=scores[token])
                if child.done:
                    plan = to_plan(child)
                    key = plan_hash(plan)
                    best = finished.get(key)
                    if best is None or child.log_prob > best.log_prob:
                        finished[key] = DecodedPlan(plan, child.log_prob)
                else:
                    grown.append(child)
        grown.sort(key=lambda s: (-s.log_prob, s.path))
        live = grown[: cfg.beam_size]

    ranked = [
        dp
        for dp in finished.values()
        if validate_plan(dp.plan, registry, task.input_signature, task.output_modality).ok
    ]
    ranked.sort(key=lambda dp: (-dp.log_prob, plan_hash(dp.plan)))
    if not ranked:
        raise NoFeasiblePlan(f"beam found no valid plan for {task.id}")
    return ranked


def decode_nonlinear(
    policy: Policy,
    task: TaskSpec,
    registry: ToolRegistry,
    cfg: DecoderConfig,
) -> list[DecodedPlan]:
    if len(task.input_signature) != 2:
        raise ValueError("nonlinear decoding handles exactly two task inputs")
    return beam_search(policy, task, registry, cfg)


def decode(
    policy: Policy,
    task: TaskSpec,
    registry: ToolRegistry,
    cfg: DecoderConfig,
) -> list[DecodedPlan]:
    arity = len(task.input_signature)
    if arity == 1:
        return beam_search(policy, task, registry, cfg)
    if arity == 2:
        return decode_nonlinear(policy, task, registry, cfg)
    raise ValueError(f"tasks with {arity} inputs are not supported")


def _filtered_distribution(
    scores: dict[str, float],
    actions: Sequence[str],
    cfg: DecoderConfig,
    epsilon: float,
) -> list[tuple[str, float]]:
    """Temperature, top-k, and top-p filtering, then epsilon mixing."""
    logits = [scores[a] / cfg.temperature for a in actions]
    peak = max(logits)
    weights = [math.exp(lg - peak) for lg in logits]
    total = sum(weights)
    probs = sorted(
        ((a, w / total) for a, w in zip(actions, weights)),
        key=lambda kv: (-kv[1], kv[0]),
    )
    if cfg.top_k > 0:
        probs = probs[: cfg.top_k]
    kept: list[tuple[str, float]] = []
    cumulative = 0.0
    for a, p in probs:
        kept.append((a, p))
        cumulative += p
        if cumulative >= cfg.top_p:
            break
    mass = sum(p for _, p in kept)
    renormalized = {a: p / mass for a, p in kept}
    uniform = epsilon / len(actions)
    return [
        (a, (1.0 - epsilon) * renormalized.get(a, 0.0) + uniform)
        for a in actions
    ]


def _draw(
    scores: dict[str, float],
    actions: Sequence[str],
    cfg: DecoderConfig,
    rng: random.Random,
    epsilon: float,
) -> str:
    if cfg.sampling == "greedy":
        best = actions[0]
        for a in actions[1:]:
            if scores[a] > scores[best]:
                best = a
        return best
    mixture = _filtered_distribution(scores, actions, cfg, epsilon)
    roll = rng.random()
    cumulative = 0.0
    for a, p in mixture:
        cumulative += p
        if roll <= cumulative:
            return a
    return mixture[-1][0]


def sample_plan(
    policy: Policy,
    task: TaskSpec,
    registry: ToolRegistry,
    cfg: DecoderConfig,
    rng: random.Random,
    epsilon: float = 0.0,
    max_retries: int = 50,
) -> PlanGraph:
    """Sample one complete plan; dead-end episodes are retried."""
    for _ in range(max_retries):
        state = initial_state(task)
        dead = False
        for _ in range(_step_cap(task, registry)):
            if state.done:
                break
            frontier = step_frontier(state, task, registry, cfg)
            if frontier is None:
                dead = True
                break
            scores = policy.score_step(
                frontier.context, frontier.actions, StepView(task, state, frontier.branch_index)
            )
            token = _draw(scores, frontier.actions, cfg, rng, epsilon)
            state = apply_action(state, token, task, registry, lp_delta=scores[token])
        if dead or not state.done:
            continue
        plan = to_plan(state)
        if validate_plan(plan, registry, task.input_signature, task.output_modality).ok:
            return plan
    raise NoFeasiblePlan(f"sampling kept dead-ending on {task.id}")


def sample_plans(
    policy: Policy,
    task: TaskSpec,
    registry: ToolRegistry,
    cfg: DecoderConfig,
    count: int,
    rng: random.Random,
    epsilon: float = 0.0,
) -> list[PlanGraph]:
    return [sample_plan(policy, task, registry, cfg, rng, epsilon) for _ in range(count)]


def _map_ref(ref: InputRef, id_map: dict[int, int]) -> InputRef | None:
    if isinstance(ref, TaskInput):
        return ref
    mapped = id_map.get(ref.node)
    return None if mapped is None else NodeOutput(mapped)


def expected_action(
    task: TaskSpec,
    registry: ToolRegistry,
    state: BeamState,
    branch_index: int,
    target: PlanGraph,
) -> str | None:
    """The action that continues the state toward the target plan.

    Returns None when the state is not a partial canonical decoding of
    the target. Matching is structural: tools are unique within a plan,
    so nodes pair up by tool name and references must agree after id
    translation.
    """
    target_by_tool = {node.tool: node for node in target.nodes}
    if len(target_by_tool) != len(target.nodes):
        return None

    id_map: dict[int, int] = {}
    for node in state.nodes:
        match = target_by_tool.get(node.tool)
        if match is None:
            return None
        mapped = tuple(_map_ref(ref, id_map) for ref in node.input_refs)
        if None in mapped or mapped != match.input_refs:
            return None
        id_map[node.id] = match.id

    emitted = {node.tool for node in state.nodes}
    remaining = [node for node in target.nodes if node.tool not in emitted]
    branch = state.branches[branch_index]
    mapped_head = _map_ref(head_ref(branch), id_map)
    if mapped_head is None:
        return None

    candidates = [node for node in remaining if node.input_refs[0] == mapped_head]
    if len(candidates) > 1:
        return None
    if candidates:
        node = candidates[0]
        if len(node.input_refs) == 2:
            partner_idx = _partner_index(
                state, branch_index, registry.get(node.tool).inputs[1]
            )
            if partner_idx is None:
                return None
            partner_head = _map_ref(head_ref(state.branches[partner_idx]), id_map)
            if partner_head != node.input_refs[1]:
                return None
        return node.tool

    # Head extends nothing: park if a later join wants it, finish if it
    # is the plan output and nothing is left.
    if any(len(n.input_refs) == 2 and n.input_refs[1] == mapped_head for n in remaining):
        return END_TOKEN
    if not remaining and mapped_head == NodeOutput(target.output_node):
        return END_TOKEN
    return None


def replay_steps(
    plan: PlanGraph,
    task: TaskSpec,
    registry: ToolRegistry,
) -> list[ReplayStep]:
    """Reconstruct the decoding episode that emits the plan.

    Raises InvalidPlan when no canonical episode produces it. The
    per-branch tool cap does not apply here; replay defines the plan
    family, the cap only bounds search.
    """
    cap_free = DecoderConfig(max_tools_per_branch=len(registry))
    state = initial_state(task)
    steps: list[ReplayStep] = []
    for _ in range(_step_cap(task, registry)):
        if state.done:
            break
        frontier = step_frontier(state, task, registry, cap_free)
        if frontier is None:
            raise InvalidPlan("decoding dead-ends before the plan completes")
        token = expected_action(task, registry, state, frontier.branch_index, plan)
        if token is None or token not in frontier.actions:
            raise InvalidPlan("plan is not reachable by canonical decoding")
        steps.append(ReplayStep(frontier.context, frontier.actions, token))
        state = apply_action(state, token, task, registry)
    if not state.done:
        raise InvalidPlan("replay did not terminate")
    if len(state.nodes) != len(plan.nodes):
        raise InvalidPlan("plan has nodes the episode never emits")
    return steps


def allowed_tokens(
    state: BeamState,
    task: TaskSpec,
    registry: ToolRegistry,
    cfg: DecoderConfig,
    partial_words: tuple[str, ...] = (),
) -> frozenset[str]:
    """Word-level view of what may be emitted next.

    At an action boundary this is the set of first words of eligible
    tool names plus the end token when legal. Midway through a name it
    is the trie continuation set.
    """
    frontier = step_frontier(state, task, registry, cfg)
    if frontier is None:
        return frozenset()
    names = [a for a in frontier.actions if a != END_TOKEN]
    if not partial_words:
        first = {name.split()[0] for name in names}
        if END_TOKEN in frontier.actions:
            first.add(END_TOKEN)
        return frozenset(first)
    if not names:
        return frozenset()
    return children_after(build_trie(names), partial_words)
