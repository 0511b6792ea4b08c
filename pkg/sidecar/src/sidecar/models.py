"""Model implementations behind the capability bindings.

`builtin:` models are small deterministic reference implementations that
keep the server usable with no downloads: color-histogram embeddings,
hashed bag-of-words text embeddings, color-word grounding for image-text
matching, connected-component segmentation, block rendering, background
inpainting, word-swap rewriting, and template captioning.

`hf:` models load through transformers at startup; a failed load aborts
server start (never a silent fallback).
"""

from __future__ import annotations

import hashlib
import re
from typing import Callable

import numpy as np

from .protocol import (
    CapabilityError,
    decode_image,
    decode_mask,
    encode_image,
    encode_mask,
    require,
)

ModelFn = Callable[[dict, int | None], dict]


class ModelLoadError(RuntimeError):
    pass


def _hash64(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


STOPWORDS = frozenset(
    {"a", "an", "the", "and", "or", "of", "on", "in", "is", "are", "with", "to"}
)

BASIC_COLORS = {
    "red": (220, 40, 40),
    "green": (40, 180, 40),
    "blue": (40, 40, 220),
    "yellow": (230, 220, 40),
    "purple": (150, 40, 190),
    "orange": (240, 140, 30),
    "cyan": (40, 200, 210),
    "black": (15, 15, 15),
    "white": (245, 245, 245),
    "gray": (128, 128, 128),
}

SWAP_WORDS = (
    "circle", "square", "triangle", "horse", "motorcycle", "car", "dog", "cat",
    "tree", "house", "boat", "bird", "table", "chair", "apple", "orange",
)


def _tokens(text: str) -> list[str]:
    raw = "".join(c.lower() if c.isalnum() else " " for c in text).split()
    return [t for t in raw if t not in STOPWORDS]


def _colors_present(pixels: np.ndarray, min_fraction: float = 0.01) -> set[str]:
    """Basic color names covering at least min_fraction of the pixels."""
    h, w = pixels.shape[:2]
    total = h * w
    flat = pixels.reshape(-1, 3).astype(np.int64)
    present = set()
    for name, rgb in BASIC_COLORS.items():
        dist = np.abs(flat - np.asarray(rgb)).sum(axis=1)
        if (dist < 120).sum() >= min_fraction * total:
            present.add(name)
    return present


def _dominant_color_name(pixels: np.ndarray) -> str:
    flat = pixels.reshape(-1, 3).astype(np.int64)
    best, best_count = "gray", -1
    for name, rgb in BASIC_COLORS.items():
        count = int((np.abs(flat - np.asarray(rgb)).sum(axis=1) < 120).sum())
        if count > best_count:
            best, best_count = name, count
    return best


# --- builtin models ---------------------------------------------------------


def builtin_histogram_embedder(payload: dict, seed) -> dict:
    (image_b64,) = require(payload, "image")
    px = decode_image(image_b64)
    q = px // 64
    idx = q[:, :, 0].astype(np.int64) * 16 + q[:, :, 1] * 4 + q[:, :, 2]
    hist = np.bincount(idx.ravel(), minlength=64).astype(float)
    return {"embedding": hist.tolist()}


def builtin_bow_text_embedder(payload: dict, seed) -> dict:
    (text,) = require(payload, "text")
    vec = np.zeros(64)
    for tok in _tokens(text):
        vec[_hash64("tok:" + tok) % 64] += 1.0
    if not vec.any():
        vec[_hash64("tok:<empty>") % 64] = 1.0
    return {"embedding": vec.tolist()}


def builtin_color_itm(payload: dict, seed) -> dict:
    """Color-word grounding: the score is the fraction of text tokens that
    name a color visibly present in the image."""
    image_b64, text = require(payload, "image", "text")
    toks = _tokens(text)
    if not toks:
        return {"score": 0.0}
    present = _colors_present(decode_image(image_b64))
    hits = sum(1 for t in toks if t in present)
    return {"score": hits / len(toks)}


def builtin_color_segmenter(payload: dict, seed) -> dict:
    """Connected components of pixels that differ from the dominant
    (background) color, split by quantized color."""
    (image_b64,) = require(payload, "image")
    px = decode_image(image_b64)
    h, w = px.shape[:2]
    q = (px // 32).astype(np.int64)
    key = q[:, :, 0] * 64 + q[:, :, 1] * 8 + q[:, :, 2]
    values, counts = np.unique(key, return_counts=True)
    background = values[counts.argmax()]
    fg = key != background
    seen = np.zeros((h, w), dtype=bool)
    regions = []
    for y in range(h):
        for x in range(w):
            if not fg[y, x] or seen[y, x]:
                continue
            color = key[y, x]
            stack = [(y, x)]
            seen[y, x] = True
            member = []
            while stack:
                cy, cx = stack.pop()
                member.append((cy, cx))
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx]:
                        if fg[ny, nx] and key[ny, nx] == color:
                            seen[ny, nx] = True
                            stack.append((ny, nx))
            if len(member) < 4:
                continue
            ys = [p[0] for p in member]
            xs = [p[1] for p in member]
            x0, y0, x1, y1 = min(xs), min(ys), max(xs) + 1, max(ys) + 1
            mask = np.zeros((y1 - y0, x1 - x0), dtype=bool)
            for cy, cx in member:
                mask[cy - y0, cx - x0] = True
            regions.append(
                {
                    "box": [x0, y0, x1, y1],
                    "confidence": round(float(mask.mean()), 6),
                    "mask": encode_mask(mask),
                }
            )
    regions.sort(key=lambda r: (r["box"][1], r["box"][0]))
    return {"regions": regions}


def builtin_word_swapper(payload: dict, seed) -> dict:
    """Replace one content word with the next entry of a fixed word list."""
    (caption,) = require(payload, "caption")
    words = caption.split()
    slots = [i for i, word in enumerate(words) if word.lower().strip(".,") not in STOPWORDS]
    if not slots:
        return {"edited": caption, "replaced_object": "", "replacement_object": ""}
    idx = slots[(seed or 0) % len(slots)]
    replaced = words[idx].strip(".,").lower()
    if replaced in SWAP_WORDS:
        replacement = SWAP_WORDS[(SWAP_WORDS.index(replaced) + 1) % len(SWAP_WORDS)]
    else:
        replacement = SWAP_WORDS[_hash64(f"{replaced}:{seed}") % len(SWAP_WORDS)]
        if replacement == replaced:
            replacement = SWAP_WORDS[(SWAP_WORDS.index(replacement) + 1) % len(SWAP_WORDS)]
    edited_words = list(words)
    edited_words[idx] = replacement
    return {
        "edited": " ".join(edited_words),
        "replaced_object": replaced,
        "replacement_object": replacement,
    }


def _render_blocks(caption: str, seed: int, size: int = 64) -> np.ndarray:
    px = np.full((size, size, 3), 200, dtype=np.uint8)
    color_words = [t for t in _tokens(caption) if t in BASIC_COLORS][:4]
    slots = ((0, 0), (32, 0), (0, 32), (32, 32))
    for i, name in enumerate(color_words):
        sx, sy = slots[i]
        h = _hash64(f"block:{seed}:{i}")
        side = 20 + h % 8
        x0 = sx + (32 - side) // 2
        y0 = sy + (32 - side) // 2
        px[y0 : y0 + side, x0 : x0 + side] = BASIC_COLORS[name]
    return px


def builtin_block_renderer(payload: dict, seed) -> dict:
    caption_a, caption_b = require(payload, "caption_a", "caption_b")
    return {
        "image_a": encode_image(_render_blocks(caption_a, seed or 0)),
        "image_b": encode_image(_render_blocks(caption_b, seed or 0)),
    }


def builtin_background_inpainter(payload: dict, seed) -> dict:
    image_b64, mask_b64, box, _prompt = require(payload, "image", "mask", "box", "prompt")
    px = decode_image(image_b64).copy()
    mask = decode_mask(mask_b64)
    x0, y0, x1, y1 = box
    outside = np.ones(px.shape[:2], dtype=bool)
    outside[y0:y1, x0:x1] = False
    flat = px[outside].reshape(-1, 3)
    if len(flat) == 0:
        fill = np.array([200, 200, 200], dtype=np.uint8)
    else:
        colors, counts = np.unique(flat, axis=0, return_counts=True)
        fill = colors[counts.argmax()]
    region = px[y0:y1, x0:x1]
    region[mask] = fill
    return {"image": encode_image(px)}


_QUOTED = re.compile(r'"([^"]*)"')


def builtin_template_captioner(payload: dict, seed) -> dict:
    image_b64, prompt = require(payload, "image", "prompt")
    quoted = _QUOTED.findall(prompt)
    if len(quoted) >= 2:
        return {"text": f"LEFT: {quoted[0]}; RIGHT: {quoted[1]}"}
    px = decode_image(image_b64)
    m = re.search(r"\((\d+),\s*(\d+),\s*(\d+),\s*(\d+)\)", prompt)
    if m:
        x0, y0, x1, y1 = (int(g) for g in m.groups())
        px = px[y0:y1, x0:x1]
    return {"text": f"a {_dominant_color_name(px)} object"}


BUILTIN_MODELS: dict[str, dict[str, ModelFn]] = {
    "embed_image": {"histogram-embedder": builtin_histogram_embedder},
    "embed_text": {"bow-text-embedder": builtin_bow_text_embedder},
    "itm": {"color-itm": builtin_color_itm},
    "segment": {"color-segmenter": builtin_color_segmenter},
    "rewrite_caption": {"word-swapper": builtin_word_swapper},
    "generate_pair": {"block-renderer": builtin_block_renderer},
    "inpaint": {"background-inpainter": builtin_background_inpainter},
    "mllm_complete": {"template-captioner": builtin_template_captioner},
}


# --- hugging face adapters ---------------------------------------------------


def load_hf_model(capability: str, model_id: str, device: str) -> ModelFn:
    """Load a transformers-backed implementation. Only embedding/matching/
    captioning capabilities have adapters; generation and segmentation
    need dedicated servers."""
    try:
        import torch  # noqa: F401
        import transformers  # noqa: F401
    except ImportError as e:
        raise ModelLoadError(
            f"hf:{model_id} for {capability} needs the [hf] extras installed: {e}"
        ) from e

    if capability in ("embed_image", "embed_text"):
        return _load_hf_clip(capability, model_id, device)
    if capability == "itm":
        return _load_hf_itm(model_id, device)
    if capability == "mllm_complete":
        return _load_hf_captioner(model_id, device)
    raise ModelLoadError(f"no hf adapter for capability {capability}")


def _load_hf_clip(capability: str, model_id: str, device: str) -> ModelFn:
    import torch
    from PIL import Image
    from transformers import CLIPModel, CLIPProcessor

    try:
        model = CLIPModel.from_pretrained(model_id).to(device).eval()
        processor = CLIPProcessor.from_pretrained(model_id)
    except Exception as e:
        raise ModelLoadError(f"failed to load {model_id}: {e}") from e

    def run(payload: dict, seed) -> dict:
        with torch.no_grad():
            if capability == "embed_image":
                (image_b64,) = require(payload, "image")
                image = Image.fromarray(decode_image(image_b64))
                inputs = processor(images=image, return_tensors="pt").to(device)
                features = model.get_image_features(**inputs)
            else:
                (text,) = require(payload, "text")
                inputs = processor(text=[text], return_tensors="pt", truncation=True).to(device)
                features = model.get_text_features(**inputs)
        return {"embedding": features[0].cpu().double().tolist()}

    return run


def _load_hf_itm(model_id: str, device: str) -> ModelFn:
    import torch
    from PIL import Image
    from transformers import BlipForImageTextRetrieval, BlipProcessor

    try:
        model = BlipForImageTextRetrieval.from_pretrained(model_id).to(device).eval()
        processor = BlipProcessor.from_pretrained(model_id)
    except Exception as e:
        raise ModelLoadError(f"failed to load {model_id}: {e}") from e

    def run(payload: dict, seed) -> dict:
        image_b64, text = require(payload, "image", "text")
        image = Image.fromarray(decode_image(image_b64))
        inputs = processor(images=image, text=text, return_tensors="pt").to(device)
        with torch.no_grad():
            logits = model(**inputs).itm_score
            prob = torch.softmax(logits, dim=1)[0, 1].item()
        return {"score": float(prob)}

    return run


def _load_hf_captioner(model_id: str, device: str) -> ModelFn:
    import torch
    from PIL import Image
    from transformers import pipeline

    try:
        pipe = pipeline("image-to-text", model=model_id, device=device)
    except Exception as e:
        raise ModelLoadError(f"failed to load {model_id}: {e}") from e

    def run(payload: dict, seed) -> dict:
        image_b64, prompt = require(payload, "image", "prompt")
        image = Image.fromarray(decode_image(image_b64))
        torch.manual_seed(seed or 0)
        out = pipe(image, prompt=prompt)
        text = out[0]["generated_text"] if out else ""
        return {"text": text}

    return run
