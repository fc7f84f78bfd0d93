from __future__ import annotations

import pytest
from hypothesis import given
import hypothesis.strategies as st

from planforge.errors import BadArity, DuplicateName, SemanticMismatch
from planforge.registry import (
    ToolSpec,
    compatible_successors,
    default_registry,
    register_tool,
    registry_from_json,
    registry_to_json,
)
from planforge.simkit import Modality, SemanticId

REG = default_registry()


def test_default_registry_has_fourteen_tools() -> None:
    assert len(REG) == 14
    assert REG.names()[:3] == (
        "Image Classification",
        "Colorization",
        "Object Detection",
    )
    assert "Visual Question Answering" in REG
    vqa = REG.get("Visual Question Answering")
    assert vqa.inputs == (Modality.IMAGE, Modality.TEXT)
    assert vqa.output == Modality.TEXT
    assert REG.get("Colorization").output is Modality.IMAGE


def test_text_successors_in_registry_order() -> None:
    names = [t.name for t in compatible_successors(REG, Modality.TEXT)]
    assert names == [
        "Text to Image Generation",
        "Sentiment Analysis",
        "Question Answering",
        "Text Summarization",
        "Machine Translation",
        "Fill Mask",
    ]


def test_image_successors_key_on_first_input() -> None:
    names = [t.name for t in compatible_successors(REG, Modality.IMAGE)]
    assert "Visual Question Answering" in names
    assert "Question Answering" not in names
    assert len(names) == 8


def test_used_tools_are_excluded() -> None:
    used = {"Text Summarization", "Fill Mask"}
    names = {t.name for t in compatible_successors(REG, Modality.TEXT, used)}
    assert names.isdisjoint(used)
    assert len(names) == 4


@given(st.sets(st.sampled_from(sorted(REG.names()))))
def test_successor_invariants(used: set[str]) -> None:
    for modality in (Modality.TEXT, Modality.IMAGE):
        out = compatible_successors(REG, modality, used)
        for spec in out:
            assert spec.name in REG
            assert spec.name not in used
            assert spec.inputs[0] is modality


def test_register_tool_rejects_duplicates() -> None:
    spec = ToolSpec("Image Deblurring II", (Modality.IMAGE,), Modality.IMAGE, SemanticId.REMOVE_BLUR)
    bigger = register_tool(REG, spec)
    assert len(bigger) == 15
    with pytest.raises(DuplicateName):
        register_tool(bigger, spec)


def test_tool_spec_validates_against_semantic() -> None:
    with pytest.raises(BadArity):
        ToolSpec("No Inputs", (), Modality.TEXT, SemanticId.QA)
    with pytest.raises(SemanticMismatch):
        ToolSpec("Broken QA", (Modality.TEXT,), Modality.TEXT, SemanticId.QA)
    with pytest.raises(SemanticMismatch):
        ToolSpec("Broken Caption", (Modality.TEXT,), Modality.TEXT, SemanticId.CAPTION)
    with pytest.raises(SemanticMismatch):
        ToolSpec("Wrong Output", (Modality.TEXT,), Modality.TEXT, SemanticId.GENERATE)


def test_registry_json_round_trip() -> None:
    doc = registry_to_json(REG)
    back = registry_from_json(doc)
    assert back.names() == REG.names()
    assert [t.semantic for t in back] == [t.semantic for t in REG]
