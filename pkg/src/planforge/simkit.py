"""Symbolic payload simulator.

A payload is an immutable value carrying a modality, a symbolic content
expression, a language tag, a stack of corruptions, and a quality score
in (0, 1]. Corruptions push onto the stack in application order, so the
most recent corruption is the last element. Restoration tools pop them
back off; transform tools consume payloads and emit fresh ones.

Quality accounting:
  * applying a corruption never touches quality (the damage is latent),
  * restoring the top corruption is free,
  * restoring a buried corruption costs a factor beta,
  * restoring an absent corruption costs a factor gamma and is a no-op
    on the stack,
  * transforms multiply input qualities and pay gamma per residual
    corruption still on any input stack, then start a clean stack.

Fixing corruptions in exact reverse order of application is therefore
the only way to reach quality 1.0.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum

from .errors import (
    ArityMismatch,
    IllegalCorruption,
    IllegalTranslate,
    LanguageGuard,
    ModalityMismatch,
)


class Modality(str, Enum):
    TEXT = "Text"
    IMAGE = "Image"


class Language(str, Enum):
    EN = "en"
    DE = "de"
    NONE = "none"


class Corruption(str, Enum):
    BLUR = "Blur"
    NOISE = "Noise"
    GRAY = "Gray"
    LOWRES = "LowRes"
    MASK = "Mask"
    TRANSLATE = "Translate"


class SemanticId(str, Enum):
    """What a tool does to payloads, independent of its display name."""

    REMOVE_BLUR = "RemoveBlur"
    REMOVE_NOISE = "RemoveNoise"
    REMOVE_GRAY = "RemoveGray"
    REMOVE_LOWRES = "RemoveLowRes"
    REMOVE_MASK = "RemoveMask"
    TRANSLATE_EN_DE = "TranslateEnDe"
    SUMMARIZE = "Summarize"
    SENTIMENT = "Sentiment"
    QA = "QA"
    CLASSIFY = "Classify"
    DETECT = "Detect"
    CAPTION = "Caption"
    GENERATE = "Generate"
    VQA = "VQA"


IMAGE_CORRUPTIONS: tuple[Corruption, ...] = (
    Corruption.BLUR,
    Corruption.NOISE,
    Corruption.GRAY,
    Corruption.LOWRES,
)

TEXT_CORRUPTIONS: tuple[Corruption, ...] = (
    Corruption.MASK,
    Corruption.TRANSLATE,
)

# Pure restorations. TranslateEnDe also restores Corruption.TRANSLATE but
# doubles as a forward translator, so it is handled separately.
RESTORES: dict[SemanticId, Corruption] = {
    SemanticId.REMOVE_BLUR: Corruption.BLUR,
    SemanticId.REMOVE_NOISE: Corruption.NOISE,
    SemanticId.REMOVE_GRAY: Corruption.GRAY,
    SemanticId.REMOVE_LOWRES: Corruption.LOWRES,
    SemanticId.REMOVE_MASK: Corruption.MASK,
}

_I = Modality.IMAGE
_T = Modality.TEXT

SEMANTIC_SIGNATURES: dict[SemanticId, tuple[tuple[Modality, ...], Modality]] = {
    SemanticId.REMOVE_BLUR: ((_I,), _I),
    SemanticId.REMOVE_NOISE: ((_I,), _I),
    SemanticId.REMOVE_GRAY: ((_I,), _I),
    SemanticId.REMOVE_LOWRES: ((_I,), _I),
    SemanticId.REMOVE_MASK: ((_T,), _T),
    SemanticId.TRANSLATE_EN_DE: ((_T,), _T),
    SemanticId.SUMMARIZE: ((_T,), _T),
    SemanticId.SENTIMENT: ((_T,), _T),
    SemanticId.QA: ((_T, _T), _T),
    SemanticId.CLASSIFY: ((_I,), _T),
    SemanticId.DETECT: ((_I,), _T),
    SemanticId.CAPTION: ((_I,), _T),
    SemanticId.GENERATE: ((_T,), _I),
    SemanticId.VQA: ((_I, _T), _T),
}

# Expression wrapper op per transform semantic.
TRANSFORM_OPS: dict[SemanticId, str] = {
    SemanticId.SUMMARIZE: "summ",
    SemanticId.SENTIMENT: "sent",
    SemanticId.QA: "qa",
    SemanticId.CLASSIFY: "class",
    SemanticId.DETECT: "detect",
    SemanticId.CAPTION: "caption",
    SemanticId.GENERATE: "gen",
    SemanticId.VQA: "vqa",
}

TRANSLATE_OP = "de"

# Expr is either a leaf content id or (op, child, ...).
Expr = str | tuple


@dataclass(frozen=True, slots=True)
class SimConstants:
    beta: float = 0.8
    gamma: float = 0.9
    language_mismatch: float = 0.5


DEFAULT_CONSTANTS = SimConstants()


@dataclass(frozen=True, slots=True)
class Payload:
    modality: Modality
    expr: Expr
    language: Language
    corruptions: tuple[Corruption, ...] = ()
    quality: float = 1.0

    def __post_init__(self) -> None:
        if self.modality is Modality.IMAGE and self.language is not Language.NONE:
            raise ValueError("image payloads carry no language")
        if self.modality is Modality.TEXT and self.language is Language.NONE:
            raise ValueError("text payloads need a language")
        if not 0.0 < self.quality <= 1.0:
            raise ValueError(f"quality out of range: {self.quality}")
        legal = IMAGE_CORRUPTIONS if self.modality is Modality.IMAGE else TEXT_CORRUPTIONS
        for c in self.corruptions:
            if c not in legal:
                raise ValueError(f"{c.value} cannot sit on a {self.modality.value} payload")


def make_leaf(modality: Modality, content_id: str, language: Language | None = None) -> Payload:
    """Fresh uncorrupted payload around a leaf content id."""
    if language is None:
        language = Language.EN if modality is Modality.TEXT else Language.NONE
    return Payload(modality=modality, expr=content_id, language=language)


def apply_corruption(
    payload: Payload,
    corruption: Corruption,
    constants: SimConstants = DEFAULT_CONSTANTS,
) -> Payload:
    """Push one corruption onto the payload's stack.

    Translate is only defined on English text and flips the language
    tag to German. Quality is untouched; the cost surfaces later when
    the corruption is restored out of order or left in place.
    """
    legal = IMAGE_CORRUPTIONS if payload.modality is Modality.IMAGE else TEXT_CORRUPTIONS
    if corruption not in legal:
        raise IllegalCorruption(
            f"{corruption.value} does not apply to {payload.modality.value}"
        )
    language = payload.language
    if corruption is Corruption.TRANSLATE:
        if payload.language is not Language.EN:
            raise IllegalTranslate("Translate corruption needs English text")
        language = Language.DE
    return replace(
        payload,
        corruptions=payload.corruptions + (corruption,),
        language=language,
    )


def apply_chain(
    payload: Payload,
    chain: tuple[Corruption, ...],
    constants: SimConstants = DEFAULT_CONSTANTS,
) -> Payload:
    for corruption in chain:
        payload = apply_corruption(payload, corruption, constants)
    return payload


def _check_inputs(semantic: SemanticId, inputs: tuple[Payload, ...]) -> None:
    expected, _ = SEMANTIC_SIGNATURES[semantic]
    if len(inputs) != len(expected):
        raise ArityMismatch(
            f"{semantic.value} takes {len(expected)} payloads, got {len(inputs)}"
        )
    for i, (payload, want) in enumerate(zip(inputs, expected)):
        if payload.modality is not want:
            raise ModalityMismatch(
                f"{semantic.value} input {i} wants {want.value}, got {payload.modality.value}"
            )


def _restore(payload: Payload, target: Corruption, constants: SimConstants) -> Payload:
    stack = payload.corruptions
    if stack and stack[-1] is target:
        return replace(payload, corruptions=stack[:-1])
    if target in stack:
        # Buried layer. Remove the most recent matching one and pay beta
        # for disturbing everything stacked above it.
        idx = len(stack) - 1 - stack[::-1].index(target)
        return replace(
            payload,
            corruptions=stack[:idx] + stack[idx + 1 :],
            quality=payload.quality * constants.beta,
        )
    # Nothing to fix. The tool still ran and degraded the content a bit.
    return replace(payload, quality=payload.quality * constants.gamma)


def _transform_language(semantic: SemanticId, inputs: tuple[Payload, ...]) -> Language:
    if semantic in (SemanticId.SUMMARIZE, SemanticId.SENTIMENT):
        return inputs[0].language
    if semantic in (SemanticId.CLASSIFY, SemanticId.DETECT, SemanticId.CAPTION):
        return Language.EN
    if semantic is SemanticId.GENERATE:
        return Language.NONE
    # QA and VQA answer in English unless some text input is German.
    text_langs = [p.language for p in inputs if p.modality is Modality.TEXT]
    if all(lang is Language.EN for lang in text_langs):
        return Language.EN
    return Language.DE


def apply_tool(
    semantic: SemanticId,
    inputs: tuple[Payload, ...],
    constants: SimConstants = DEFAULT_CONSTANTS,
) -> Payload:
    """Run one tool on its input payloads and return the output payload."""
    _check_inputs(semantic, inputs)

    if semantic in RESTORES:
        return _restore(inputs[0], RESTORES[semantic], constants)

    if semantic is SemanticId.TRANSLATE_EN_DE:
        payload = inputs[0]
        stack = payload.corruptions
        if stack and stack[-1] is Corruption.TRANSLATE:
            # Undo the translation corruption: back to English, free.
            return replace(payload, corruptions=stack[:-1], language=Language.EN)
        if payload.language is not Language.EN:
            raise LanguageGuard("translation tool needs English input")
        return Payload(
            modality=Modality.TEXT,
            expr=(TRANSLATE_OP, payload.expr),
            language=Language.DE,
            corruptions=(),
            quality=payload.quality * constants.gamma ** len(stack),
        )

    # Generic transform: wrap the exprs, combine qualities, pay gamma for
    # every corruption still sitting on an input stack, start clean.
    op = TRANSFORM_OPS[semantic]
    _, out_modality = SEMANTIC_SIGNATURES[semantic]
    quality = 1.0
    residuals = 0
    for payload in inputs:
        quality *= payload.quality
        residuals += len(payload.corruptions)
    return Payload(
        modality=out_modality,
        expr=(op,) + tuple(p.expr for p in inputs),
        language=_transform_language(semantic, inputs),
        corruptions=(),
        quality=quality * constants.gamma**residuals,
    )


def expr_labels(expr: Expr) -> Counter:
    """Multiset of node labels in an expression tree, leaves included."""
    labels: Counter = Counter()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, str):
            labels[node] += 1
        else:
            labels[node[0]] += 1
            stack.extend(node[1:])
    return labels


def similarity(
    out: Payload,
    ref: Payload,
    constants: SimConstants = DEFAULT_CONSTANTS,
) -> float:
    """Score an output payload against a reference payload in [0, 1].

    Product of a structure term (1.0 on identical exprs, multiset
    Jaccard over node labels otherwise), a language term, and the
    output's own quality discounted per residual corruption.
    """
    if out.modality is not ref.modality:
        return 0.0

    if out.expr == ref.expr:
        w_struct = 1.0
    else:
        a = expr_labels(out.expr)
        b = expr_labels(ref.expr)
        keys = set(a) | set(b)
        inter = sum(min(a[k], b[k]) for k in keys)
        union = sum(max(a[k], b[k]) for k in keys)
        w_struct = inter / union if union else 0.0

    w_lang = 1.0 if out.language is ref.language else constants.language_mismatch
    w_quality = out.quality * constants.gamma ** len(out.corruptions)
    return w_struct * w_lang * w_quality


def serialize_expr(expr: Expr) -> str:
    if isinstance(expr, str):
        return expr
    inner = " ".join(serialize_expr(child) for child in expr[1:])
    return f"({expr[0]} {inner})" if inner else f"({expr[0]})"


def parse_expr(text: str) -> Expr:
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    if not tokens:
        raise ValueError("empty expression")
    pos = 0

    def walk() -> Expr:
        nonlocal pos
        token = tokens[pos]
        pos += 1
        if token == ")":
            raise ValueError("unexpected )")
        if token != "(":
            return token
        if pos >= len(tokens) or tokens[pos] in "()":
            raise ValueError("expected op after (")
        op = tokens[pos]
        pos += 1
        children = []
        while pos < len(tokens) and tokens[pos] != ")":
            children.append(walk())
        if pos >= len(tokens):
            raise ValueError("unclosed (")
        pos += 1
        return (op, *children)

    expr = walk()
    if pos != len(tokens):
        raise ValueError("trailing tokens")
    return expr


def payload_to_json(payload: Payload) -> dict:
    return {
        "modality": payload.modality.value,
        "expr": serialize_expr(payload.expr),
        "language": payload.language.value,
        "corruptions": [c.value for c in payload.corruptions],
        "quality": payload.quality,
    }


def payload_from_json(doc: dict) -> Payload:
    return Payload(
        modality=Modality(doc["modality"]),
        expr=parse_expr(doc["expr"]),
        language=Language(doc["language"]),
        corruptions=tuple(Corruption(c) for c in doc["corruptions"]),
        quality=doc["quality"],
    )
