"""Validated pipeline configuration.

One record holds every named filtering threshold plus the few operational
knobs (divider width, box thickness, concurrency, seed). The config file
is YAML (JSON works too) with exactly the field names below; unspecified
keys take the defaults.

Comparison conventions, fixed once here and used everywhere:
  * "exceeds" gates are strict:  score > threshold   (bitm, citm, rm_itm_pos, seg_conf)
  * "below" gates are strict:    score < threshold   (cs, diff_sim, rm_contains_sim, rm_itm_neg)
  * the image-similarity band is closed on both ends: is_low <= s <= is_high
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """Config file failed to parse or a value violated its range."""


@dataclass(frozen=True)
class ThresholdConfig:
    is_low: float = 0.90          # image-similarity band, lower edge
    is_high: float = 0.98         # image-similarity band, upper edge
    bitm: float = 0.35            # box image-text matching gate (keep if score > bitm)
    diff_sim: float = 0.85        # difference detector (keep if sub-image sim < diff_sim)
    seg_conf: float = 0.05        # segmentation confidence floor (keep if conf > seg_conf)
    iou: float = 0.50             # overlap suppression threshold (accept if IoU <= iou)
    citm: float = 0.40            # content-caption image-text matching gate (keep if > citm)
    cs: float = 0.85              # caption-similarity gate (captions differ if cosine < cs)
    top_n: int = 5                # regions per pair forwarded to caption labeling
    rm_contains_sim: float = 0.90  # removal: region holds an object if cross-pair sim < this
    rm_itm_pos: float = 0.35      # removal: description vs object side (accept if > this)
    rm_itm_neg: float = 0.20      # removal: description vs erased side (accept if < this)
    divider_px: int = 20          # black divider width between concatenated images
    box_thickness_px: int = 3     # red highlight box stroke, drawn inward
    max_in_flight: int = 4        # concurrent items per stage
    seed: int = 0                 # run seed; per-item seeds derive from it

    def __post_init__(self):
        def check(cond: bool, key: str, bound: str):
            if not cond:
                raise ConfigError(f"config key {key!r} out of range: {bound}, got {getattr(self, key)}")

        check(0.0 <= self.is_low <= 1.0, "is_low", "must be in [0, 1]")
        check(0.0 <= self.is_high <= 1.0, "is_high", "must be in [0, 1]")
        check(self.is_low < self.is_high, "is_low", "must be strictly below is_high")
        for key in ("bitm", "diff_sim", "citm", "cs", "rm_contains_sim", "rm_itm_pos", "rm_itm_neg"):
            check(0.0 <= getattr(self, key) <= 1.0, key, "must be in [0, 1]")
        check(0.0 <= self.seg_conf <= 1.0, "seg_conf", "must be in [0, 1]")
        check(0.0 < self.iou <= 1.0, "iou", "must be in (0, 1]")
        check(self.top_n >= 1, "top_n", "must be >= 1")
        check(self.divider_px >= 1, "divider_px", "must be >= 1")
        check(self.box_thickness_px >= 1, "box_thickness_px", "must be >= 1")
        check(self.max_in_flight >= 1, "max_in_flight", "must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **overrides) -> "ThresholdConfig":
        return dataclasses.replace(self, **overrides)

    def digest(self) -> str:
        """Stable hash of the config, used to guard checkpoint resumption."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# Every named filtering threshold maps to exactly one config field; the
# audit test walks this registry against the dataclass. Operational knobs
# are listed separately so the registry stays exhaustive.
THRESHOLD_FIELDS = {
    "is_low": "image-similarity prefilter band, lower edge",
    "is_high": "image-similarity prefilter band, upper edge",
    "bitm": "box image-text matching gate",
    "diff_sim": "sub-image difference detector similarity cut",
    "seg_conf": "segmentation confidence floor",
    "iou": "bounding-box overlap suppression threshold",
    "citm": "content-caption image-text matching gate",
    "cs": "caption-similarity difference gate",
    "top_n": "regions per pair forwarded to captioning",
    "rm_contains_sim": "removal object-presence similarity cut",
    "rm_itm_pos": "removal description gate, object side",
    "rm_itm_neg": "removal description gate, erased side",
}

OPERATIONAL_FIELDS = {
    "divider_px": "concatenation divider width in pixels",
    "box_thickness_px": "red highlight stroke width in pixels",
    "max_in_flight": "concurrent items per stage",
    "seed": "run seed",
}

_INT_FIELDS = {"top_n", "divider_px", "box_thickness_px", "max_in_flight", "seed"}


def load_config(path: str | Path | None = None) -> ThresholdConfig:
    """Load a config file, falling back to defaults for absent keys.

    An empty file yields the all-defaults config. Unknown keys and
    out-of-range values raise ConfigError naming the offending key.
    """
    data: dict = {}
    if path is not None:
        raw = Path(path).read_text()
        try:
            loaded = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"could not parse config file {path}: {e}") from e
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping, got {type(loaded).__name__}")
        data = loaded

    known = {f.name for f in dataclasses.fields(ThresholdConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    coerced = {}
    for key, value in data.items():
        if key in _INT_FIELDS:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
            coerced[key] = value
        else:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
            coerced[key] = float(value)
    return ThresholdConfig(**coerced)


def save_config(cfg: ThresholdConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
