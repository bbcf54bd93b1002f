"""Synthetic shape world: deterministic scenes, rasterized images, and captions.

Scenes are tiny collections of colored, textured shapes on a gray canvas.
Captions come from a frequency-skewed template grammar, so that the most
frequent caption pattern ("a {color} {shape}") dominates and rarer patterns
(texture or relation captions) are systematically under-represented. All
randomness flows from explicit integer seeds through numpy Generators, and
rasterization uses integer half-unit geometry so that images are bit-stable
across platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Iterable, Optional

import numpy as np

SHAPES = ("circle", "diamond", "hexagon", "square", "star", "triangle")
COLORS = ("blue", "cyan", "green", "magenta", "orange", "purple", "red", "yellow")
SIZES = ("small", "large")
TEXTURES = ("solid", "striped", "dotted", "checkered")
RARE_TEXTURES = ("striped", "dotted", "checkered")
# Spatial predicates; captions use the predicate verbatim ("left of" -> two tokens).
PREDICATES = ("left of", "right of", "above", "below", "near")
RELATION_WORDS = ("left", "right", "above", "below", "near")

COLOR_RGB = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
    "orange": (1.0, 0.5, 0.0),
    "purple": (0.5, 0.0, 1.0),
}

BACKGROUND = 0.5
# Texture secondary shade: scales the base color so striped/dotted/checkered
# objects keep their hue but alternate between bright and dark cells.
TEXTURE_SHADE = 0.35

TEMPLATES = ("T0", "T1", "T2")


class PlacementError(RuntimeError):
    """Raised when objects cannot be placed under the overlap constraint."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, top-left origin, pixel units."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got {self}")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


def box_iou(a: Box, b: Box) -> float:
    ix = max(0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0, min(a.y2, b.y2) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class SceneObject:
    id: int
    shape: str
    color: str
    size: str
    texture: str
    box: Box


@dataclass(frozen=True)
class Relation:
    subject_id: int
    predicate: str
    object_id: int


@dataclass
class SceneGraph:
    scene_id: int
    seed: int
    canvas_size: int
    objects: list[SceneObject]
    relations: list[Relation]

    def object_by_id(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(f"no object with id {object_id}")

    def relations_from(self, subject_id: int) -> list[Relation]:
        return [r for r in self.relations if r.subject_id == subject_id]

    def to_json(self) -> str:
        payload = {
            "scene_id": self.scene_id,
            "seed": self.seed,
            "canvas_size": self.canvas_size,
            "objects": [
                {
                    "id": o.id,
                    "shape": o.shape,
                    "color": o.color,
                    "size": o.size,
                    "texture": o.texture,
                    "box": o.box.as_list(),
                }
                for o in self.objects
            ],
            "relations": [[r.subject_id, r.predicate, r.object_id] for r in self.relations],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass
class WorldConfig:
    canvas_size: int = 96
    min_objects: int = 2
    max_objects: int = 5
    # Probability that a scene contains exactly one non-solid object. With
    # objects uniform on [min_objects, max_objects] this keeps the per-object
    # non-solid fraction near 0.2 while most scenes still offer a texture
    # caption to sample.
    textured_scene_prob: float = 0.7
    small_size: tuple[int, int] = (12, 18)
    large_size: tuple[int, int] = (22, 28)
    max_overlap_iou: float = 0.3
    near_distance: int = 30
    max_place_attempts: int = 1000
    template_weights: tuple[float, float, float] = (0.8, 0.1, 0.1)
    box_jitter: float = 0.0  # fraction of w/h, <= 0.1; 0 disables

    def validate(self) -> None:
        if not (1 <= self.min_objects <= self.max_objects):
            raise ValueError("need 1 <= min_objects <= max_objects")
        if self.canvas_size < max(self.large_size[1], 16):
            raise ValueError("canvas too small for configured object sizes")
        if abs(sum(self.template_weights) - 1.0) > 1e-9:
            raise ValueError("template weights must sum to 1")
        if not 0.0 <= self.box_jitter <= 0.1:
            raise ValueError("box_jitter must lie in [0, 0.1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        for key in ("small_size", "large_size", "template_weights"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class RegionSample:
    scene_id: int
    box: Box
    caption: list[str]
    template_id: str
    gold_subject_tags: list[str]
    gold_object_tags: list[str]
    rarity: str  # "frequent" | "rare"
    object_id: int = 0

    def to_record(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "box": self.box.as_list(),
            "caption": list(self.caption),
            "template_id": self.template_id,
            "gold_subject_tags": sorted(self.gold_subject_tags),
            "gold_object_tags": sorted(self.gold_object_tags),
            "rarity": self.rarity,
            "object_id": self.object_id,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "RegionSample":
        return cls(
            scene_id=rec["scene_id"],
            box=Box(*rec["box"]),
            caption=list(rec["caption"]),
            template_id=rec["template_id"],
            gold_subject_tags=list(rec["gold_subject_tags"]),
            gold_object_tags=list(rec["gold_object_tags"]),
            rarity=rec["rarity"],
            object_id=rec.get("object_id", 0),
        )


def scene_seed(dataset_seed: int, scene_id: int) -> int:
    """Stable per-scene seed derived from the dataset seed."""
    ss = np.random.SeedSequence(entropy=(int(dataset_seed), int(scene_id)))
    return int(ss.generate_state(1, np.uint64)[0])


def _relation_for(a: SceneObject, b: SceneObject, near_distance: int) -> str:
    # Centers in half-units so everything stays integer.
    ax, ay = 2 * a.box.x + a.box.w, 2 * a.box.y + a.box.h
    bx, by = 2 * b.box.x + b.box.w, 2 * b.box.y + b.box.h
    dx, dy = bx - ax, by - ay
    if dx * dx + dy * dy < (2 * near_distance) ** 2:
        return "near"
    if abs(dx) >= abs(dy):
        return "left of" if dx > 0 else "right of"
    return "above" if dy > 0 else "below"


def generate_scene(seed: int, config: Optional[WorldConfig] = None) -> SceneGraph:
    """Build a deterministic scene for (seed, config).

    Raises PlacementError when the overlap constraint cannot be met after
    config.max_place_attempts tries (over-dense configuration).
    """
    config = config or WorldConfig()
    config.validate()
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(rng.integers(config.min_objects, config.max_objects + 1))

    textured_idx = -1
    if rng.random() < config.textured_scene_prob:
        textured_idx = int(rng.integers(n))
    rare_texture = str(rng.choice(RARE_TEXTURES))

    objects: list[SceneObject] = []
    for idx in range(n):
        shape = str(rng.choice(SHAPES))
        color = str(rng.choice(COLORS))
        size = str(rng.choice(SIZES))
        lo, hi = config.small_size if size == "small" else config.large_size
        side = int(rng.integers(lo, hi + 1))
        texture = rare_texture if idx == textured_idx else "solid"

        placed = False
        for _ in range(config.max_place_attempts):
            x = int(rng.integers(0, config.canvas_size - side + 1))
            y = int(rng.integers(0, config.canvas_size - side + 1))
            box = Box(x, y, side, side)
            if all(box_iou(box, o.box) <= config.max_overlap_iou for o in objects):
                objects.append(SceneObject(idx, shape, color, size, texture, box))
                placed = True
                break
        if not placed:
            raise PlacementError(
                f"could not place object {idx} after {config.max_place_attempts} attempts"
            )

    relations = [
        Relation(a.id, _relation_for(a, b, config.near_distance), b.id)
        for a in objects
        for b in objects
        if a.id != b.id
    ]
    return SceneGraph(
        scene_id=0,
        seed=seed,
        canvas_size=config.canvas_size,
        objects=objects,
        relations=relations,
    )


def _shape_mask(shape: str, box: Box, canvas: int) -> np.ndarray:
    """Boolean inside-shape mask using half-unit integer geometry."""
    ys, xs = np.mgrid[0:canvas, 0:canvas]
    # Pixel centers and box center in half-units (all integers).
    px = 2 * xs + 1 - (2 * box.x + box.w)
    py = 2 * ys + 1 - (2 * box.y + box.h)
    w, h = box.w, box.h  # half-extents in half-units
    ax, ay = np.abs(px), np.abs(py)

    in_box = (xs >= box.x) & (xs < box.x2) & (ys >= box.y) & (ys < box.y2)
    if shape == "square":
        return in_box
    if shape == "circle":
        return (px * px + py * py <= w * h) & in_box
    if shape == "diamond":
        return (ax * h + ay * w <= w * h) & in_box
    if shape == "hexagon":
        return (4 * ay <= 3 * h) & (3 * ax * h + 2 * ay * w <= 3 * w * h) & in_box
    if shape == "triangle":
        # Apex top-center, base bottom edge.
        return (py <= h) & (2 * ax * h <= (py + h) * w) & in_box
    if shape == "star":
        # Hexagram: union of an up- and a down-pointing triangle.
        up = (py <= h // 2 + h // 4) & (2 * ax * h <= (py + h) * w)
        down = (py >= -(h // 2 + h // 4)) & (2 * ax * h <= (h - py) * w)
        return (up | down) & in_box
    raise ValueError(f"unknown shape {shape!r}")


def _texture_bright(texture: str, canvas: int) -> np.ndarray:
    """True where the texture shows the bright (full color) cell."""
    ys, xs = np.mgrid[0:canvas, 0:canvas]
    if texture == "solid":
        return np.ones((canvas, canvas), dtype=bool)
    if texture == "striped":
        return (ys // 2) % 2 == 0
    if texture == "dotted":
        return ((ys // 2) % 2 == 0) & ((xs // 2) % 2 == 0)
    if texture == "checkered":
        return ((ys // 4) + (xs // 4)) % 2 == 0
    raise ValueError(f"unknown texture {texture!r}")


def render(scene: SceneGraph) -> np.ndarray:
    """Rasterize a scene to float32 HxWx3 values in [0, 1].

    Pure function of the scene; objects drawn in id order.
    """
    canvas = scene.canvas_size
    img = np.full((canvas, canvas, 3), BACKGROUND, dtype=np.float32)
    for obj in scene.objects:
        mask = _shape_mask(obj.shape, obj.box, canvas)
        bright = _texture_bright(obj.texture, canvas)
        color = np.array(COLOR_RGB[obj.color], dtype=np.float32)
        img[mask & bright] = color
        img[mask & ~bright] = (color * TEXTURE_SHADE).astype(np.float32)
    return img


def realize_caption(
    scene: SceneGraph,
    object_id: int,
    rng: np.random.Generator,
    template: Optional[str] = None,
    jitter: float = 0.0,
    weights: Optional[tuple[float, float, float]] = None,
) -> RegionSample:
    """Sample (or force) a template and realize the caption for one object.

    T1 falls back to T0 when the object is solid; T2 falls back to T0 when
    the object has no outgoing relation.
    """
    obj = scene.object_by_id(object_id)
    if template is None:
        weights = weights or _DEFAULT_TEMPLATE_WEIGHTS
        template = str(rng.choice(TEMPLATES, p=list(weights)))
    if template == "T1" and obj.texture == "solid":
        template = "T0"
    relations = scene.relations_from(object_id)
    if template == "T2" and not relations:
        template = "T0"

    subject_tags = {obj.color, obj.shape}
    object_tags: set[str] = set()
    if template == "T0":
        caption = ["a", obj.color, obj.shape]
    elif template == "T1":
        caption = ["a", obj.texture, obj.color, obj.shape]
        subject_tags.add(obj.texture)
    elif template == "T2":
        rel = relations[int(rng.integers(len(relations)))]
        partner = scene.object_by_id(rel.object_id)
        caption = (
            ["a", obj.color, obj.shape]
            + rel.predicate.split()
            + ["a", partner.color, partner.shape]
        )
        object_tags = {partner.color, partner.shape} - subject_tags
    else:
        raise ValueError(f"unknown template {template!r}")

    box = obj.box
    if jitter > 0.0:
        dx = int(round(rng.uniform(-jitter, jitter) * box.w))
        dy = int(round(rng.uniform(-jitter, jitter) * box.h))
        x = min(max(0, box.x + dx), scene.canvas_size - box.w)
        y = min(max(0, box.y + dy), scene.canvas_size - box.h)
        box = Box(x, y, box.w, box.h)

    return RegionSample(
        scene_id=scene.scene_id,
        box=box,
        caption=caption,
        template_id=template,
        gold_subject_tags=sorted(subject_tags),
        gold_object_tags=sorted(object_tags),
        rarity="rare" if template in ("T1", "T2") else "frequent",
        object_id=object_id,
    )


_DEFAULT_TEMPLATE_WEIGHTS = (0.8, 0.1, 0.1)


def grammar_vocabulary() -> list[str]:
    """All words that can occur in a caption, plus size words."""
    words = {"a", "of"}
    words.update(SHAPES)
    words.update(COLORS)
    words.update(SIZES)
    words.update(RARE_TEXTURES)
    words.update(RELATION_WORDS)
    return sorted(words)


def classify_template(tokens: Iterable[str]) -> str:
    """Pattern-match a token list against the caption grammar.

    Returns "T0", "T1", "T2", or "other".
    """
    toks = list(tokens)
    if len(toks) == 3 and toks[0] == "a" and toks[1] in COLORS and toks[2] in SHAPES:
        return "T0"
    if (
        len(toks) == 4
        and toks[0] == "a"
        and toks[1] in RARE_TEXTURES
        and toks[2] in COLORS
        and toks[3] in SHAPES
    ):
        return "T1"
    if len(toks) >= 7 and classify_template(toks[:3]) == "T0":
        rest = toks[3:]
        for pred in PREDICATES:
            pt = pred.split()
            if rest[: len(pt)] == pt and classify_template(rest[len(pt) :]) == "T0":
                return "T2"
    return "other"
