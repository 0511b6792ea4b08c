"""Capability bindings: which model serves each protocol capability.

Every capability must appear in the config, either bound to a model or
explicitly disabled. Models load eagerly at startup so a bad binding
fails the server before it accepts traffic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .models import BUILTIN_MODELS, ModelFn, ModelLoadError, load_hf_model
from .protocol import CAPABILITIES


@dataclass(frozen=True)
class CapabilityBinding:
    capability: str
    model: str = ""              # "builtin:<name>" or "hf:<model-id>"
    device: str = "cpu"
    batch_size: int = 8
    disabled: bool = False

    def __post_init__(self):
        if self.capability not in CAPABILITIES:
            raise ValueError(f"unknown capability {self.capability!r}")
        if not self.disabled and not self.model:
            raise ValueError(f"capability {self.capability}: bind a model or set disabled")
        if self.batch_size < 1:
            raise ValueError(f"capability {self.capability}: batch_size must be >= 1")


DEFAULT_BINDINGS = {
    "embed_image": "builtin:histogram-embedder",
    "embed_text": "builtin:bow-text-embedder",
    "itm": "builtin:color-itm",
    "segment": "builtin:color-segmenter",
    "rewrite_caption": "builtin:word-swapper",
    "generate_pair": "builtin:block-renderer",
    "inpaint": "builtin:background-inpainter",
    "mllm_complete": "builtin:template-captioner",
}


def default_bindings() -> list[CapabilityBinding]:
    return [CapabilityBinding(cap, model) for cap, model in DEFAULT_BINDINGS.items()]


def load_bindings(path: str | Path) -> list[CapabilityBinding]:
    data = yaml.safe_load(Path(path).read_text()) or {}
    raw = data.get("bindings", {})
    missing = [cap for cap in CAPABILITIES if cap not in raw]
    if missing:
        raise ValueError(f"config must bind or disable every capability; missing {missing}")
    bindings = []
    for cap, spec in raw.items():
        if cap not in CAPABILITIES:
            raise ValueError(f"unknown capability {cap!r} in config")
        spec = spec or {}
        bindings.append(
            CapabilityBinding(
                capability=cap,
                model=spec.get("model", ""),
                device=spec.get("device", "cpu"),
                batch_size=spec.get("batch_size", 8),
                disabled=bool(spec.get("disabled", False)),
            )
        )
    return bindings


def instantiate(binding: CapabilityBinding) -> Optional[ModelFn]:
    """Load the bound model, or None for a disabled capability."""
    if binding.disabled:
        return None
    if binding.model.startswith("builtin:"):
        name = binding.model[len("builtin:") :]
        table = BUILTIN_MODELS.get(binding.capability, {})
        if name not in table:
            raise ModelLoadError(
                f"no builtin model {name!r} for capability {binding.capability}"
            )
        return table[name]
    if binding.model.startswith("hf:"):
        return load_hf_model(binding.capability, binding.model[len("hf:") :], binding.device)
    raise ModelLoadError(f"unrecognized model identifier {binding.model!r}")
