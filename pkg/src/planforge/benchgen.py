"""Benchmark catalog generation and the exhaustive planning oracle.

Tasks are built backwards: pick corruption chains for each input and a
reference recipe for the output, corrupt fresh content accordingly, and
keep the recipe's result on the clean content as the reference. A task
is solvable exactly because it was manufactured from the operations
that undo it.

The oracle enumerates the full canonical plan family up to a depth
bound, scores every candidate, and keeps the argmax. It shares nothing
with the beam decoder except the plan data structures.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass
from statistics import fmean

from .decoder import replay_steps
from .errors import EngineError, InfeasibleCount, InvalidPlan, NoFeasiblePlan
from .evalkit import assign_slot
from .executor import execute_task
from .plan_ir import (
    CATEGORY_SIGNATURES,
    NodeOutput,
    PlanGraph,
    PlanNode,
    Sample,
    TaskCategory,
    TaskInput,
    TaskSpec,
    plan_to_json,
    task_from_json,
    task_to_json,
)
from .registry import ToolRegistry
from .simkit import (
    DEFAULT_CONSTANTS,
    IMAGE_CORRUPTIONS,
    SEMANTIC_SIGNATURES,
    Corruption,
    Modality,
    Payload,
    SemanticId,
    SimConstants,
    apply_chain,
    apply_tool,
    make_leaf,
    similarity,
)

Chain = tuple[Corruption, ...]
Combo = tuple[tuple[Chain, ...], tuple[SemanticId, ...]]


@dataclass(frozen=True, slots=True)
class CatalogConfig:
    image_image: int = 47
    image_text: int = 24
    text_image: int = 22
    text_text: int = 24
    image_text_text: int = 34
    text_text_text: int = 34
    samples_per_task: int = 20
    max_chain_length: int = 4
    seed: int = 0


# The five well-formed text corruption chains of length <= 2. A second
# Translate is illegal (the text is already German) and repeats of the
# same corruption are not used by the catalog.
TEXT_CHAINS: tuple[Chain, ...] = (
    (),
    (Corruption.MASK,),
    (Corruption.TRANSLATE,),
    (Corruption.MASK, Corruption.TRANSLATE),
    (Corruption.TRANSLATE, Corruption.MASK),
)

_TEXT_STEP_POOL = (SemanticId.SUMMARIZE, SemanticId.SENTIMENT, SemanticId.TRANSLATE_EN_DE)


def _image_chains(lengths: set[int]) -> list[Chain]:
    """Ordered duplicate-free image corruption chains of the given lengths."""
    top = max(lengths) if lengths else 0
    out: list[Chain] = []

    def grow(prefix: tuple[Corruption, ...]) -> None:
        if len(prefix) in lengths:
            out.append(prefix)
        if len(prefix) < top:
            for kind in IMAGE_CORRUPTIONS:
                if kind not in prefix:
                    grow(prefix + (kind,))

    grow(())
    return out


def _sem_seqs(lengths: set[int]) -> list[tuple[SemanticId, ...]]:
    top = max(lengths) if lengths else 0
    out: list[tuple[SemanticId, ...]] = []

    def grow(prefix: tuple[SemanticId, ...]) -> None:
        if len(prefix) in lengths:
            out.append(prefix)
        if len(prefix) < top:
            for sem in _TEXT_STEP_POOL:
                if sem not in prefix:
                    grow(prefix + (sem,))

    grow(())
    return out


def _translate_conflict(chains: tuple[Chain, ...], builder: tuple[SemanticId, ...]) -> bool:
    """One Machine Translation tool cannot both restore and translate."""
    corrupted = any(Corruption.TRANSLATE in chain for chain in chains)
    return corrupted and SemanticId.TRANSLATE_EN_DE in builder


def category_space(category: TaskCategory, cfg: CatalogConfig) -> list[Combo]:
    """Every distinct (chains, recipe) combination the category offers."""
    combos: list[Combo] = []
    if category is TaskCategory.IMAGE_TO_IMAGE:
        lengths = {n for n in (3, 4) if n <= cfg.max_chain_length}
        combos = [((chain,), ()) for chain in _image_chains(lengths)]
    elif category is TaskCategory.IMAGE_TO_TEXT:
        lengths = set(range(1, cfg.max_chain_length + 1))
        combos = [
            ((chain,), (terminal,))
            for chain in _image_chains(lengths)
            for terminal in (SemanticId.CLASSIFY, SemanticId.DETECT, SemanticId.CAPTION)
        ]
    elif category is TaskCategory.TEXT_TO_IMAGE:
        combos = [
            ((chain,), pre + (SemanticId.GENERATE,))
            for chain in TEXT_CHAINS
            for pre in _sem_seqs({1, 2})
            if not _translate_conflict((chain,), pre)
        ]
    elif category is TaskCategory.TEXT_TO_TEXT:
        combos = [
            ((chain,), builder)
            for chain in TEXT_CHAINS
            for builder in _sem_seqs({0, 1, 2})
            if not _translate_conflict((chain,), builder)
            and len(chain) + len(builder) >= 2
        ]
    elif category is TaskCategory.IMAGE_TEXT_TO_TEXT:
        image_chains = _image_chains({1, 2})
        combos = [
            ((ichain, tchain), (SemanticId.VQA,) + post)
            for ichain in image_chains
            for tchain in TEXT_CHAINS
            if len(tchain) <= len(ichain)
            for post in _sem_seqs({0, 1, 2})
            if not _translate_conflict((ichain, tchain), post)
        ]
    elif category is TaskCategory.TEXT_TEXT_TO_TEXT:
        pairs = [
            (c0, c1)
            for c0 in TEXT_CHAINS
            for c1 in TEXT_CHAINS
            if len(c0) >= len(c1)
            and len(c0) - len(c1) <= 1
            and not (Corruption.TRANSLATE in c0 and Corruption.TRANSLATE in c1)
        ]
        combos = [
            ((c0, c1), (SemanticId.QA,) + post)
            for c0, c1 in pairs
            for post in _sem_seqs({0, 1, 2})
            if not _translate_conflict((c0, c1), post)
            and len(c0) + len(c1) + 1 + len(post) >= 2
        ]
    else:
        raise ValueError(f"unknown category: {category}")

    def key(combo: Combo):
        chains, builder = combo
        return (
            tuple(tuple(c.value for c in chain) for chain in chains),
            tuple(s.value for s in builder),
        )

    return sorted(combos, key=key)


_ADJECTIVES = {
    Corruption.BLUR: "blurry",
    Corruption.NOISE: "noisy",
    Corruption.GRAY: "grayscale",
    Corruption.LOWRES: "low-resolutioned",
    Corruption.MASK: "clozed",
    Corruption.TRANSLATE: "translated",
}

_TERMINAL_PHRASES = {
    SemanticId.CLASSIFY: "return the class label in English",
    SemanticId.DETECT: "return the object names in English",
    SemanticId.CAPTION: "describe the image in English",
    SemanticId.GENERATE: "generate an image",
    SemanticId.SUMMARIZE: "summarize the text in English",
    SemanticId.SENTIMENT: "classify the sentiment",
    SemanticId.TRANSLATE_EN_DE: "translate the text in German",
    SemanticId.QA: "answer the question in English",
    SemanticId.VQA: "answer the question in English",
}

_NOUNS = {
    TaskCategory.IMAGE_TO_IMAGE: ("image",),
    TaskCategory.IMAGE_TO_TEXT: ("image",),
    TaskCategory.TEXT_TO_IMAGE: ("text",),
    TaskCategory.TEXT_TO_TEXT: ("text",),
    TaskCategory.IMAGE_TEXT_TO_TEXT: ("image", "query"),
    TaskCategory.TEXT_TEXT_TO_TEXT: ("document", "query"),
}


def _noun_phrase(chain: Chain, modality: Modality, noun: str) -> str:
    words = [_ADJECTIVES[c] for c in chain]
    if modality is Modality.TEXT:
        words.append("German" if Corruption.TRANSLATE in chain else "English")
    words.append(noun)
    article = "an" if words[0][0].lower() in "aeiou" else "a"
    return f"{article} {' '.join(words)}"


def describe(category: TaskCategory, chains: tuple[Chain, ...], builder: tuple[SemanticId, ...]) -> str:
    signature, out_modality = CATEGORY_SIGNATURES[category]
    nouns = _NOUNS[category]
    subjects = " and ".join(
        _noun_phrase(chain, modality, noun)
        for chain, modality, noun in zip(chains, signature, nouns)
    )
    if not builder:
        phrases = [f"return the regular {nouns[0]}"]
    else:
        phrases = []
        for sem in builder:
            phrase = _TERMINAL_PHRASES[sem]
            if (
                sem is SemanticId.TRANSLATE_EN_DE
                and phrases
                and phrases[-1].endswith("in English")
            ):
                # "summarize ... in English and then translate in German"
                # reads better folded into one step.
                phrases[-1] = phrases[-1][: -len("in English")] + "in German"
            else:
                phrases.append(phrase)
    steps = " and then ".join(phrases)
    return f"Given {subjects}, how to {steps} step by step?"


def _apply_builder(
    cleans: tuple[Payload, ...],
    builder: tuple[SemanticId, ...],
    constants: SimConstants,
) -> Payload:
    if not builder:
        return cleans[0]
    first = builder[0]
    arity = len(SEMANTIC_SIGNATURES[first][0])
    current = apply_tool(first, cleans[:arity], constants)
    for sem in builder[1:]:
        current = apply_tool(sem, (current,), constants)
    return current


def build_task(
    task_id: str,
    category: TaskCategory,
    chains: tuple[Chain, ...],
    builder: tuple[SemanticId, ...],
    samples_per_task: int = 20,
    constants: SimConstants = DEFAULT_CONSTANTS,
    content_counter: "itertools.count | None" = None,
) -> TaskSpec:
    signature, out_modality = CATEGORY_SIGNATURES[category]
    if len(chains) != len(signature):
        raise ValueError("one corruption chain per task input")
    counter = content_counter if content_counter is not None else itertools.count()
    samples = []
    for _ in range(samples_per_task):
        cleans = tuple(
            make_leaf(modality, f"x{next(counter):05d}") for modality in signature
        )
        corrupted = tuple(
            apply_chain(clean, chain, constants) for clean, chain in zip(cleans, chains)
        )
        samples.append(Sample(inputs=corrupted, reference=_apply_builder(cleans, builder, constants)))
    return TaskSpec(
        id=task_id,
        description=describe(category, chains, builder),
        category=category,
        input_signature=signature,
        output_modality=out_modality,
        corruption_chains=chains,
        reference_builder=builder,
        metric_slot=assign_slot(builder, out_modality),
        dataset=tuple(samples),
    )


_CATEGORY_ORDER: tuple[tuple[TaskCategory, str, str], ...] = (
    (TaskCategory.IMAGE_TO_IMAGE, "ii", "image_image"),
    (TaskCategory.IMAGE_TO_TEXT, "it", "image_text"),
    (TaskCategory.TEXT_TO_IMAGE, "ti", "text_image"),
    (TaskCategory.TEXT_TO_TEXT, "tt", "text_text"),
    (TaskCategory.IMAGE_TEXT_TO_TEXT, "itt", "image_text_text"),
    (TaskCategory.TEXT_TEXT_TO_TEXT, "ttt", "text_text_text"),
)


def generate_catalog(
    cfg: CatalogConfig, constants: SimConstants = DEFAULT_CONSTANTS
) -> tuple[TaskSpec, ...]:
    """Deterministic catalog: same config, same tasks, byte for byte."""
    rng = random.Random(cfg.seed)
    counter = itertools.count()
    tasks: list[TaskSpec] = []
    for category, prefix, field_name in _CATEGORY_ORDER:
        count = getattr(cfg, field_name)
        space = category_space(category, cfg)
        if count > len(space):
            raise InfeasibleCount(
                f"{category.value} offers {len(space)} distinct tasks, {count} requested"
            )
        picks = sorted(rng.sample(range(len(space)), count))
        for position, index in enumerate(picks):
            chains, builder = space[index]
            tasks.append(
                build_task(
                    task_id=f"{prefix}-{position:03d}",
                    category=category,
                    chains=chains,
                    builder=builder,
                    samples_per_task=cfg.samples_per_task,
                    constants=constants,
                    content_counter=counter,
                )
            )
    return tuple(tasks)


def catalog_to_json(catalog: tuple[TaskSpec, ...] | list[TaskSpec]) -> list[dict]:
    return [task_to_json(task) for task in catalog]


def catalog_from_json(docs: list[dict]) -> tuple[TaskSpec, ...]:
    return tuple(task_from_json(doc) for doc in docs)


def split_train_test(
    catalog: tuple[TaskSpec, ...] | list[TaskSpec], seed: int
) -> tuple[tuple[TaskSpec, ...], tuple[TaskSpec, ...], tuple[TaskSpec, ...]]:
    """Stratified 10/10/80 split; sizes round half up per category."""
    rng = random.Random(seed)
    train: list[TaskSpec] = []
    test: list[TaskSpec] = []
    rest: list[TaskSpec] = []
    for category in TaskCategory:
        group = [t for t in catalog if t.category is category]
        if not group:
            continue
        shuffled = group[:]
        rng.shuffle(shuffled)
        n = int(len(group) * 0.1 + 0.5)
        train.extend(shuffled[:n])
        test.extend(shuffled[n : 2 * n])
        rest.extend(shuffled[2 * n :])
    return tuple(train), tuple(test), tuple(rest)


def required_oracle_depth(task: TaskSpec) -> int:
    """Tight per-branch depth at which the task's intended plan exists."""
    if len(task.input_signature) == 1:
        return max(1, len(task.corruption_chains[0]) + len(task.reference_builder))
    return max(
        1,
        max(len(chain) for chain in task.corruption_chains),
        len(task.reference_builder) - 1,
    )


@dataclass(frozen=True, slots=True)
class OracleResult:
    best_plan: PlanGraph
    best_reward: float
    plans_examined: int


def _chain_plan(names: tuple[str, ...], root: int, start_id: int) -> tuple[list[PlanNode], int]:
    nodes: list[PlanNode] = []
    head: TaskInput | NodeOutput = TaskInput(root)
    nid = start_id
    for name in names:
        nodes.append(PlanNode(nid, name, (head,)))
        head = NodeOutput(nid)
        nid += 1
    return nodes, nid


def _enumerate_chains(
    registry: ToolRegistry,
    start_modality: Modality,
    start_payload: Payload | None,
    max_depth: int,
    constants: SimConstants,
) -> list[tuple[tuple[str, ...], Modality, Payload | None]]:
    """All duplicate-free single-input tool chains up to the depth.

    Payloads are threaded through incrementally; a chain that errors
    carries None and scores zero, as the executor would.
    """
    arity1 = [spec for spec in registry if len(spec.inputs) == 1]
    found: list[tuple[tuple[str, ...], Modality, Payload | None]] = [
        ((), start_modality, start_payload)
    ]

    def grow(names: tuple[str, ...], modality: Modality, payload: Payload | None) -> None:
        if len(names) == max_depth:
            return
        for spec in arity1:
            if spec.name in names or spec.inputs[0] is not modality:
                continue
            nxt: Payload | None = None
            if payload is not None:
                try:
                    nxt = apply_tool(spec.semantic, (payload,), constants)
                except EngineError:
                    nxt = None
            grown = names + (spec.name,)
            found.append((grown, spec.output, nxt))
            grow(grown, spec.output, nxt)

    grow((), start_modality, start_payload)
    return found


def oracle_best_plan(
    task: TaskSpec,
    registry: ToolRegistry,
    max_depth: int,
    constants: SimConstants = DEFAULT_CONSTANTS,
    replayable_only: bool = False,
) -> OracleResult:
    """Exhaustive argmax over the canonical plan family.

    Single-input tasks get every duplicate-free tool chain up to
    max_depth. Two-input tasks get a chain per input (each up to
    max_depth), one join in either input orientation, and a tail chain
    up to max_depth. Ties break toward fewer tools, then the
    lexicographically smallest plan document.
    """
    if len(task.input_signature) > 2:
        raise ValueError("oracle handles one or two task inputs")
    if not task.dataset:
        raise ValueError("oracle needs at least one sample")
    sample = task.dataset[0]

    examined = 0
    best: tuple[float, int, str] | None = None
    best_plan: PlanGraph | None = None

    def offer(plan: PlanGraph, payload: Payload | None) -> None:
        nonlocal examined, best, best_plan
        examined += 1
        score = 0.0 if payload is None else similarity(payload, sample.reference, constants)
        key = (
            -score,
            len(plan.nodes),
            json.dumps(plan_to_json(plan), sort_keys=True),
        )
        if best is not None and key >= best:
            return
        if replayable_only:
            # Checked lazily: only candidates that would displace the
            # current best pay for a replay.
            try:
                replay_steps(plan, task, registry)
            except InvalidPlan:
                return
        best = key
        best_plan = plan

    if len(task.input_signature) == 1:
        chains = _enumerate_chains(
            registry, task.input_signature[0], sample.inputs[0], max_depth, constants
        )
        for names, modality, payload in chains:
            if not names or modality is not task.output_modality:
                continue
            nodes, _ = _chain_plan(names, 0, 0)
            offer(PlanGraph(tuple(nodes), nodes[-1].id), payload)
    else:
        joins = [spec for spec in registry if len(spec.inputs) == 2]
        per_input = [
            _enumerate_chains(registry, task.input_signature[i], sample.inputs[i], max_depth, constants)
            for i in range(2)
        ]
        for a, b in ((0, 1), (1, 0)):
            for join in joins:
                for names0, mod0, pay0 in per_input[a]:
                    if mod0 is not join.inputs[0]:
                        continue
                    for names1, mod1, pay1 in per_input[b]:
                        if mod1 is not join.inputs[1]:
                            continue
                        used = set(names0) | set(names1)
                        if len(used) != len(names0) + len(names1) or join.name in used:
                            continue
                        joined: Payload | None = None
                        if pay0 is not None and pay1 is not None:
                            try:
                                joined = apply_tool(join.semantic, (pay0, pay1), constants)
                            except EngineError:
                                joined = None
                        tails = _enumerate_chains(
                            registry, join.output, joined, max_depth, constants
                        )
                        for tail_names, tail_mod, tail_pay in tails:
                            if tail_mod is not task.output_modality:
                                continue
                            tail_set = set(tail_names)
                            if len(tail_set) != len(tail_names):
                                continue
                            if (used | {join.name}) & tail_set:
                                continue
                            nodes0, nid = _chain_plan(names0, a, 0)
                            nodes1, nid = _chain_plan(names1, b, nid)
                            h0 = NodeOutput(nodes0[-1].id) if nodes0 else TaskInput(a)
                            h1 = NodeOutput(nodes1[-1].id) if nodes1 else TaskInput(b)
                            join_node = PlanNode(nid, join.name, (h0, h1))
                            nodes = nodes0 + nodes1 + [join_node]
                            nid += 1
                            head = NodeOutput(join_node.id)
                            for name in tail_names:
                                nodes.append(PlanNode(nid, name, (head,)))
                                head = NodeOutput(nid)
                                nid += 1
                            offer(PlanGraph(tuple(nodes), nodes[-1].id), tail_pay)

    if best_plan is None:
        raise NoFeasiblePlan(f"no plan reaches {task.output_modality.value} for {task.id}")
    reward = fmean(score for _, score in execute_task(best_plan, task, registry, constants))
    return OracleResult(best_plan=best_plan, best_reward=reward, plans_examined=examined)
