from __future__ import annotations

import math
import random

import pytest

from planforge.benchgen import build_task, oracle_best_plan, required_oracle_depth
from planforge.context import END_TOKEN
from planforge.decoder import (
    DecoderConfig,
    allowed_tokens,
    apply_action,
    beam_search,
    decode,
    initial_state,
    replay_steps,
    sample_plan,
    step_frontier,
    to_plan,
)
from planforge.errors import InvalidPlan, NoFeasiblePlan
from planforge.plan_ir import (
    TaskCategory,
    TaskSpec,
    from_linear_sequence,
    is_nonlinear,
    plan_hash,
    validate_plan,
)
from planforge.plan_ir import MetricSlot
from planforge.policy import GuidedPlanPolicy, PolicyParams, TabularPolicy, UniformPolicy
from planforge.registry import ToolRegistry, ToolSpec
from planforge.simkit import Corruption, Modality, SemanticId

I = Modality.IMAGE
T = Modality.TEXT

MINI = ToolRegistry(
    (
        ToolSpec("Colorization", (I,), I, SemanticId.REMOVE_GRAY),
        ToolSpec("Image Deblurring", (I,), I, SemanticId.REMOVE_BLUR),
        ToolSpec("Image Denoising", (I,), I, SemanticId.REMOVE_NOISE),
    )
)


def _mini_task() -> TaskSpec:
    return build_task(
        "mini-0",
        TaskCategory.IMAGE_TO_IMAGE,
        ((Corruption.GRAY, Corruption.BLUR, Corruption.NOISE),),
        (),
        samples_per_task=2,
    )


def test_config_validation() -> None:
    with pytest.raises(ValueError):
        DecoderConfig(beam_size=0)
    with pytest.raises(ValueError):
        DecoderConfig(sampling="annealed")
    with pytest.raises(ValueError):
        DecoderConfig(temperature=0.0)
    with pytest.raises(ValueError):
        DecoderConfig(top_p=0.0)


def test_no_end_before_any_tool() -> None:
    task = _mini_task()
    frontier = step_frontier(initial_state(task), task, MINI, DecoderConfig())
    assert frontier.actions == ("Colorization", "Image Deblurring", "Image Denoising")
    assert END_TOKEN not in frontier.actions


def test_uniform_beam_enumerates_every_ordering() -> None:
    """30 beams cover the whole 3-tool space: 15 plans, all validated."""
    task = _mini_task()
    results = beam_search(UniformPolicy(), task, MINI, DecoderConfig(beam_size=30))
    sequences = {tuple(n.tool for n in dp.plan.nodes) for dp in results}
    assert len(results) == 15
    names = ("Colorization", "Image Deblurring", "Image Denoising")
    full_orderings = {
        seq for seq in sequences if len(seq) == 3
    }
    import itertools

    assert full_orderings == set(itertools.permutations(names))
    for dp in results:
        assert validate_plan(dp.plan, MINI, task.input_signature, task.output_modality).ok


def test_uniform_beam_log_probs_are_exact() -> None:
    task = _mini_task()
    results = beam_search(UniformPolicy(), task, MINI, DecoderConfig(beam_size=30))
    # One tool: 1/3 for the tool, then 1/3 against two tools plus end.
    # Two tools: extra 1/3, then end against one leftover tool.
    # Three tools: the final end is forced, so same mass as two tools.
    expected = {1: math.log(1 / 9), 2: math.log(1 / 18), 3: math.log(1 / 18)}
    for dp in results:
        assert dp.log_prob == pytest.approx(expected[len(dp.plan.nodes)])


def test_greedy_beam_is_deterministic() -> None:
    task = _mini_task()
    cfg = DecoderConfig(beam_size=7)
    first = [plan_hash(dp.plan) for dp in beam_search(UniformPolicy(), task, MINI, cfg)]
    second = [plan_hash(dp.plan) for dp in beam_search(UniformPolicy(), task, MINI, cfg)]
    assert first == second


def test_max_tools_per_branch_caps_plan_length() -> None:
    task = _mini_task()
    results = beam_search(
        UniformPolicy(), task, MINI, DecoderConfig(beam_size=30, max_tools_per_branch=2)
    )
    assert {len(dp.plan.nodes) for dp in results} == {1, 2}


def test_allowed_tokens_word_level(registry) -> None:
    img_task = build_task(
        "ii-x", TaskCategory.IMAGE_TO_IMAGE, ((Corruption.BLUR,),), (), samples_per_task=1
    )
    state = initial_state(img_task)
    cfg = DecoderConfig()
    first = allowed_tokens(state, img_task, registry, cfg)
    assert first == frozenset({"Image", "Colorization", "Object"})
    mid = allowed_tokens(state, img_task, registry, cfg, partial_words=("Image",))
    assert mid == frozenset(
        {"Classification", "Deblurring", "Denoising", "Super", "Captioning"}
    )

    txt_task = build_task(
        "tt-x",
        TaskCategory.TEXT_TO_TEXT,
        ((Corruption.MASK,),),
        (SemanticId.SUMMARIZE,),
        samples_per_task=1,
    )
    after = apply_action(initial_state(txt_task), "Text Summarization", txt_task, registry)
    tokens = allowed_tokens(after, txt_task, registry, cfg)
    assert END_TOKEN in tokens
    # Question Answering needs a second branch to feed its other slot, so
    # it is gated out on a single-input task.
    assert tokens - {END_TOKEN} == frozenset({"Text", "Sentiment", "Machine", "Fill"})

    ttt_task = build_task(
        "ttt-x",
        TaskCategory.TEXT_TEXT_TO_TEXT,
        ((Corruption.MASK,), (Corruption.MASK,)),
        (SemanticId.QA,),
        samples_per_task=1,
    )
    state = apply_action(initial_state(ttt_task), "Text Summarization", ttt_task, registry)
    state = apply_action(state, END_TOKEN, ttt_task, registry)  # park branch 1
    tokens = allowed_tokens(state, ttt_task, registry, cfg)
    assert tokens - {END_TOKEN} == frozenset(
        {"Text", "Sentiment", "Question", "Machine", "Fill"}
    )


def test_guided_beam_recovers_nonlinear_gold(catalog, registry) -> None:
    task = next(t for t in catalog if t.category is TaskCategory.IMAGE_TEXT_TO_TEXT)
    gold = oracle_best_plan(
        task, registry, required_oracle_depth(task), replayable_only=True
    ).best_plan
    assert is_nonlinear(gold)
    top = decode(GuidedPlanPolicy(gold, registry), task, registry, DecoderConfig())[0]
    assert plan_hash(top.plan) == plan_hash(gold)


def test_decode_dispatches_on_input_count(catalog, registry) -> None:
    single = next(t for t in catalog if len(t.input_signature) == 1)
    double = next(t for t in catalog if len(t.input_signature) == 2)
    assert decode(UniformPolicy(), single, registry, DecoderConfig())
    assert decode(UniformPolicy(), double, registry, DecoderConfig())
    triple = TaskSpec(
        id="bad",
        description="three inputs",
        category=TaskCategory.TEXT_TEXT_TO_TEXT,
        input_signature=(T, T, T),
        output_modality=T,
        corruption_chains=((), (), ()),
        reference_builder=(SemanticId.QA,),
        metric_slot=MetricSlot.BERT,
        dataset=(),
    )
    with pytest.raises(ValueError):
        decode(UniformPolicy(), triple, registry, DecoderConfig())


def test_replay_reproduces_decoded_plan(catalog, registry) -> None:
    for task in list(catalog)[:3] + [next(t for t in catalog if len(t.input_signature) == 2)]:
        top = decode(UniformPolicy(), task, registry, DecoderConfig())[0]
        steps = replay_steps(top.plan, task, registry)
        state = initial_state(task)
        for step in steps:
            assert step.chosen in step.actions
            state = apply_action(state, step.chosen, task, registry)
        assert state.done
        assert plan_hash(to_plan(state)) == plan_hash(top.plan)


def test_replay_rejects_foreign_plans(catalog, registry) -> None:
    task = next(t for t in catalog if t.category is TaskCategory.IMAGE_TO_TEXT)
    broken = from_linear_sequence(["Image Captioning", "Text Summarization"], registry)
    steps = replay_steps(broken, task, registry)
    assert [s.chosen for s in steps][:2] == ["Image Captioning", "Text Summarization"]

    two_input = next(t for t in catalog if len(t.input_signature) == 2)
    with pytest.raises(InvalidPlan):
        replay_steps(broken, two_input, registry)


def test_stochastic_top1_is_seed_independent(catalog, registry) -> None:
    cfg = DecoderConfig(sampling="stochastic", top_k=1)
    policy = TabularPolicy(PolicyParams())
    for task in list(catalog)[:5]:
        a = sample_plan(policy, task, registry, cfg, random.Random(1))
        b = sample_plan(policy, task, registry, cfg, random.Random(99))
        assert plan_hash(a) == plan_hash(b)


def test_stochastic_sampling_is_reproducible(catalog, registry) -> None:
    cfg = DecoderConfig(sampling="stochastic")
    policy = UniformPolicy()
    task = list(catalog)[0]
    a = [plan_hash(sample_plan(policy, task, registry, cfg, random.Random(7))) for _ in range(3)]
    b = [plan_hash(sample_plan(policy, task, registry, cfg, random.Random(7))) for _ in range(3)]
    assert a == b


def test_infeasible_task_raises() -> None:
    # Image output but only text-to-text tools available.
    lonely = ToolRegistry(
        (ToolSpec("Text Summarization", (T,), T, SemanticId.SUMMARIZE),)
    )
    task = build_task(
        "ti-x", TaskCategory.TEXT_TO_IMAGE, ((),), (SemanticId.GENERATE,), samples_per_task=1
    )
    with pytest.raises(NoFeasiblePlan):
        beam_search(UniformPolicy(), task, lonely, DecoderConfig())
