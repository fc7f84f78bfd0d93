"""Decoding contexts and task-derived hints.

A context is what the policy sees before picking the next tool: the
task category, the previous tool on the acting branch, the branch's
current modality, and a hint string computed from information that is
plainly visible in the task document (the corruption chains named in
the description and the reference recipe).

The hint tracks what is left to do on a branch: ``fix:<Corruption>``
while corruptions remain, ``term:<SemanticId>`` while recipe steps
remain, then ``end``. Policies generalize across tasks through a
shared backoff level where the previous tool is wildcarded.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .simkit import RESTORES, Corruption, SemanticId

BOS = "<bos>"
END_TOKEN = "<end>"
SHARED_PREV = "*"


@dataclass(frozen=True, slots=True)
class Context:
    task_category: str
    prev_tool: str
    branch_modality: str
    hint: str


def shared(ctx: Context) -> Context:
    return replace(ctx, prev_tool=SHARED_PREV)


def context_levels(ctx: Context) -> tuple[Context, ...]:
    """Backoff levels, general first. Logits are summed across levels."""
    base = shared(ctx)
    if base == ctx:
        return (ctx,)
    return (base, ctx)


def context_to_json(ctx: Context) -> dict:
    return {
        "task_category": ctx.task_category,
        "prev_tool": ctx.prev_tool,
        "branch_modality": ctx.branch_modality,
        "hint": ctx.hint,
    }


def context_from_json(doc: dict) -> Context:
    return Context(
        task_category=doc["task_category"],
        prev_tool=doc["prev_tool"],
        branch_modality=doc["branch_modality"],
        hint=doc["hint"],
    )


@dataclass(frozen=True, slots=True)
class HintState:
    """Mirror of the corruption stack plus a cursor into the recipe."""

    remaining: tuple[Corruption, ...]
    terminals_done: int = 0


def initial_hint_state(chain: tuple[Corruption, ...]) -> HintState:
    return HintState(remaining=chain)


def advance_hint(state: HintState, semantic: SemanticId) -> HintState:
    """Update after a tool runs, following the simulator's stack rules."""
    remaining = state.remaining
    if semantic in RESTORES:
        target = RESTORES[semantic]
        if remaining and remaining[-1] is target:
            return replace(state, remaining=remaining[:-1])
        if target in remaining:
            idx = len(remaining) - 1 - remaining[::-1].index(target)
            return replace(state, remaining=remaining[:idx] + remaining[idx + 1 :])
        return state
    if semantic is SemanticId.TRANSLATE_EN_DE and remaining and remaining[-1] is Corruption.TRANSLATE:
        return replace(state, remaining=remaining[:-1])
    # Transform: residual corruptions are baked in, one recipe step done.
    return HintState(remaining=(), terminals_done=state.terminals_done + 1)


def merge_hint_states(a: HintState, b: HintState) -> HintState:
    """State of a joined branch, before the join tool itself advances it."""
    return HintState(remaining=(), terminals_done=max(a.terminals_done, b.terminals_done))


def hint_token(state: HintState, recipe: tuple[SemanticId, ...]) -> str:
    if state.remaining:
        return f"fix:{state.remaining[-1].value}"
    if state.terminals_done < len(recipe):
        return f"term:{recipe[state.terminals_done].value}"
    return "end"
