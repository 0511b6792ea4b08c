"""A deterministic synthetic world of colored shapes on a flat canvas.

The scene stub backend is built on these primitives: captions describe a
small set of colored shapes ("a red square and a green triangle"), images
render them on fixed grid slots, and every analysis (segmentation,
embeddings, matching scores, descriptions) is a pure function of pixels
or text. Ground truth (object boxes, layouts) is exposed so tests can
check pipeline output against what the scene generator knows it drew.

Embeddings are 64-bin RGB color histograms (4 levels per channel) for
images and hashed bag-of-words vectors for text.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..imaging import RasterImage
from ..types import BBox
from ..util import stable_hash64

CANVAS_SIZE = 64
BACKGROUND = (200, 200, 200)

# Colors are chosen so each lands in its own 64-bin histogram cell and
# none collides with the background bin.
PALETTE = {
    "red": (220, 30, 30),
    "green": (30, 160, 30),
    "blue": (30, 30, 220),
    "yellow": (230, 220, 30),
    "purple": (140, 30, 190),
    "orange": (240, 130, 20),
    "cyan": (30, 200, 210),
}
COLOR_NAMES = list(PALETTE)
RGB_TO_COLOR = {rgb: name for name, rgb in PALETTE.items()}

SHAPES = ("square", "circle", "triangle")

# 2x2 grid of 32px slots; at most four objects per scene.
SLOTS = ((0, 0), (32, 0), (0, 32), (32, 32))
MAX_OBJECTS = len(SLOTS)

STOPWORDS = frozenset({"a", "an", "the", "and", "or", "of", "on", "in", "is", "are", "with"})


def text_tokens(text: str) -> list[str]:
    """Lowercase alphanumeric tokens with filler words removed."""
    raw = "".join(c.lower() if c.isalnum() else " " for c in text).split()
    return [t for t in raw if t not in STOPWORDS]


@dataclass(frozen=True)
class SceneObject:
    color: str
    shape: str

    @property
    def phrase(self) -> str:
        return f"{self.color} {self.shape}"


def parse_caption(caption: str) -> list[SceneObject]:
    """Extract (color, shape) objects from a scene caption, in order."""
    toks = "".join(c.lower() if c.isalnum() else " " for c in caption).split()
    objects = []
    for i in range(len(toks) - 1):
        if toks[i] in PALETTE and toks[i + 1] in SHAPES:
            objects.append(SceneObject(toks[i], toks[i + 1]))
    return objects


def compose_caption(objects: list[SceneObject]) -> str:
    return "a " + " and a ".join(o.phrase for o in objects)


def substitute_object(obj: SceneObject, taken_colors: set[str], salt: int) -> SceneObject:
    """Deterministic replacement: step both color and shape forward,
    skipping colors already used elsewhere in the caption."""
    ci = COLOR_NAMES.index(obj.color)
    step = 1 + salt % (len(COLOR_NAMES) - 1)
    for k in range(len(COLOR_NAMES) - 1):
        cand = COLOR_NAMES[(ci + step + k) % len(COLOR_NAMES)]
        if cand != obj.color and cand not in taken_colors:
            new_color = cand
            break
    else:
        new_color = COLOR_NAMES[(ci + 1) % len(COLOR_NAMES)]
    new_shape = SHAPES[(SHAPES.index(obj.shape) + 1) % len(SHAPES)]
    return SceneObject(new_color, new_shape)


def rewrite_scene_caption(caption: str, seed: int) -> tuple[str, SceneObject, SceneObject] | None:
    """Replace one object in the caption. Returns (edited, replaced,
    replacement), or None when the caption holds no recognizable object."""
    objects = parse_caption(caption)
    if not objects:
        return None
    idx = seed % len(objects)
    target = objects[idx]
    others = {o.color for j, o in enumerate(objects) if j != idx}
    replacement = substitute_object(target, others, salt=seed // max(1, len(objects)))
    edited = list(objects)
    edited[idx] = replacement
    return compose_caption(edited), target, replacement


def object_layout(seed: int, index: int) -> BBox:
    """Slot-confined box for object `index`; identical for both images of
    a pair so the pixel difference stays inside the replaced region."""
    if index >= MAX_OBJECTS:
        raise ValueError(f"scene supports at most {MAX_OBJECTS} objects, got index {index}")
    sx, sy = SLOTS[index]
    h = stable_hash64(f"layout:{seed}:{index}")
    size = 22 + h % 7                      # 22..28 px
    jx = (h >> 8) % 5 - 2                  # -2..2
    jy = (h >> 16) % 5 - 2
    x0 = sx + (32 - size) // 2 + jx
    y0 = sy + (32 - size) // 2 + jy
    return BBox(x0, y0, x0 + size, y0 + size)


def _shape_mask(shape: str, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == "square":
        return np.ones((size, size), dtype=bool)
    if shape == "circle":
        c = (size - 1) / 2.0
        r = size / 2.0
        return (xx - c) ** 2 + (yy - c) ** 2 <= r * r
    if shape == "triangle":
        # apex at top center, base along the bottom edge
        c = (size - 1) / 2.0
        halfwidth = (yy + 1) * size / (2.0 * size)
        return np.abs(xx - c) <= halfwidth
    raise ValueError(f"unknown shape {shape!r}")


def render_scene(objects: list[SceneObject], seed: int) -> RasterImage:
    px = np.empty((CANVAS_SIZE, CANVAS_SIZE, 3), dtype=np.uint8)
    px[:, :] = BACKGROUND
    for i, obj in enumerate(objects[:MAX_OBJECTS]):
        box = object_layout(seed, i)
        mask = _shape_mask(obj.shape, box.width)
        region = px[box.y0 : box.y1, box.x0 : box.x1]
        region[mask] = PALETTE[obj.color]
    return RasterImage(px)


def make_scene_captions(n: int, seed: int) -> list[tuple[str, str]]:
    """Deterministic corpus of (source_id, caption) records for fixtures
    and demos. Object count cycles 1..3; colors are distinct per caption."""
    records = []
    for i in range(n):
        h = stable_hash64(f"caption:{seed}:{i}")
        count = 1 + i % 3
        colors: list[str] = []
        objects = []
        for j in range(count):
            color = COLOR_NAMES[(h >> (8 * j)) % len(COLOR_NAMES)]
            while color in colors:
                color = COLOR_NAMES[(COLOR_NAMES.index(color) + 1) % len(COLOR_NAMES)]
            colors.append(color)
            shape = SHAPES[(h >> (8 * j + 4)) % len(SHAPES)]
            objects.append(SceneObject(color, shape))
        records.append((f"c{i:05d}", compose_caption(objects)))
    return records


# --- pixel analysis -------------------------------------------------------


def color_components(image: RasterImage) -> list[tuple[BBox, np.ndarray, tuple[int, int, int]]]:
    """4-connected same-color components of non-canvas pixels.

    The canvas color is the fixed scene background, so the analysis stays
    correct on tight crops where an object covers most pixels. Returns
    (box, mask aligned to box, color) per component, ordered by (y0, x0)
    for determinism.
    """
    bg = BACKGROUND
    px = image.pixels
    h, w = px.shape[:2]
    fg = ~np.all(px == bg, axis=2)
    seen = np.zeros((h, w), dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if not fg[y, x] or seen[y, x]:
                continue
            color = tuple(int(v) for v in px[y, x])
            stack = [(y, x)]
            seen[y, x] = True
            member = []
            while stack:
                cy, cx = stack.pop()
                member.append((cy, cx))
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx]:
                        if fg[ny, nx] and tuple(int(v) for v in px[ny, nx]) == color:
                            seen[ny, nx] = True
                            stack.append((ny, nx))
            ys = [p[0] for p in member]
            xs = [p[1] for p in member]
            box = BBox(min(xs), min(ys), max(xs) + 1, max(ys) + 1)
            mask = np.zeros((box.height, box.width), dtype=bool)
            for cy, cx in member:
                mask[cy - box.y0, cx - box.x0] = True
            comps.append((box, mask, color))
    comps.sort(key=lambda c: (c[0].y0, c[0].x0, c[0].y1, c[0].x1))
    return comps


def classify_shape(mask: np.ndarray) -> str:
    fill = mask.mean()
    if fill >= 0.95:
        return "square"
    if fill >= 0.65:
        return "circle"
    return "triangle"


def describe_image(image: RasterImage) -> str:
    """Name the dominant (largest) object as "<color> <shape>", or
    "background" when nothing but canvas is visible."""
    comps = color_components(image)
    if not comps:
        return "background"
    box, mask, color = max(comps, key=lambda c: (int(c[1].sum()), -c[0].y0, -c[0].x0))
    name = RGB_TO_COLOR.get(color)
    if name is None:
        return "background"
    return f"{name} {classify_shape(mask)}"


def image_tokens(image: RasterImage) -> set[str]:
    desc = describe_image(image)
    return set() if desc == "background" else set(desc.split())


def token_overlap_score(image: RasterImage, text: str) -> float:
    """Image-text matching score: fraction of the text's content tokens
    present in the image's dominant-object description."""
    toks = text_tokens(text)
    if not toks:
        return 0.0
    img_toks = image_tokens(image)
    return sum(1 for t in toks if t in img_toks) / len(toks)


HISTOGRAM_BINS = 64  # 4 levels per RGB channel


def color_histogram(image: RasterImage) -> np.ndarray:
    """64-bin color histogram used as the scene image embedding."""
    q = image.pixels // 64
    idx = q[:, :, 0].astype(np.int64) * 16 + q[:, :, 1] * 4 + q[:, :, 2]
    return np.bincount(idx.ravel(), minlength=HISTOGRAM_BINS).astype(np.float64)


TEXT_EMBED_DIM = 64


def bow_text_embedding(text: str) -> np.ndarray:
    """Hashed bag-of-words text embedding."""
    vec = np.zeros(TEXT_EMBED_DIM, dtype=np.float64)
    for tok in text_tokens(text):
        vec[stable_hash64(f"tok:{tok}") % TEXT_EMBED_DIM] += 1.0
    return vec
