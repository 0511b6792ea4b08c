"""Prompt templates used for model-facing text.

The caption-rewrite template is fixed by contract (the rewrite endpoint
receives exactly this text with the input caption substituted). The rest
are editable defaults: override any field through a YAML file passed to
the CLI. The scene stub recognizes the defaults' quoting/coordinate
markers, so overriding them is only meaningful against live backends.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

REWRITE_TEMPLATE = (
    "Here is a sentence: '{input}'. "
    "Please only replace one of the objects in this sentence with another object."
)

INPAINT_PROMPT = "background, nothing, 8k."

ANSWER_LEFT = "A. the left image"
ANSWER_RIGHT = "B. the right image"


@dataclass(frozen=True)
class PromptTemplates:
    rewrite: str = REWRITE_TEMPLATE
    region_description: str = "Describe the main object in this image region in a few words."
    difference: str = (
        'The left image region was described as "{caption_a}". '
        'The right image region was described as "{caption_b}". '
        "Describe how the content inside the red boxes differs between the two images."
    )
    removal_description: str = (
        "Describe the object within the bounding box ({x0}, {y0}, {x1}, {y1}) "
        "in this image in a few words."
    )
    removal_question: str = (
        "which image has the object related to '{description}' within the red "
        "bounding box? A. the left image B. the right image."
    )
    inpaint: str = INPAINT_PROMPT
    # rotating question set for replacement samples; one is picked per
    # sample by seeded index
    questions: tuple[str, ...] = (
        "What objects have changed in this area?",
        "What is different inside the red boxes between these two images?",
        "Compare the highlighted regions of the two images and describe the change.",
        "What object difference do the red boxes mark?",
    )


def load_prompts(path: str | Path | None = None) -> PromptTemplates:
    if path is None:
        return PromptTemplates()
    data = yaml.safe_load(Path(path).read_text()) or {}
    known = {f.name for f in dataclasses.fields(PromptTemplates)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown prompt template keys: {sorted(unknown)}")
    if "questions" in data:
        data["questions"] = tuple(data["questions"])
    return PromptTemplates(**data)
