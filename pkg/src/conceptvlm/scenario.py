"""Synthetic multi-concept scenarios: colored-shape images, exact masks, metadata.

Each concept is a stable (color, shape) pair rendered at random positions over
dark gray noisy backgrounds. Concept colors are strong distinct hues; external
distractor objects are grayscale so that no distractor is systematically closer
to one concept than to another. Multi-concept test images place all shapes at
disjoint locations and record ground-truth centers and horizontal thirds.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import InputError, ValidationError

SCHEMA_VERSION = 1
IMAGE_SIZE = 64

CONCEPT_PALETTE = [
    ("red", (235, 20, 20)),
    ("blue", (20, 20, 235)),
    ("green", (20, 200, 20)),
    ("yellow", (235, 235, 20)),
]
CONCEPT_SHAPES = ["circle", "square", "triangle", "diamond"]

DISTRACTOR_COLORS = [
    ("silver", (200, 200, 200)),
    ("gray", (140, 140, 140)),
    ("white", (245, 245, 245)),
    ("slate", (90, 90, 90)),
]
DISTRACTOR_SHAPES = ["cross", "ring", "square", "triangle"]

THIRDS = ["left", "middle", "right"]


def third_of(cx: float, width: int = IMAGE_SIZE) -> str:
    """Horizontal third of an x coordinate; boundaries belong to the lower third."""
    if cx <= width / 3:
        return "left"
    if cx <= 2 * width / 3:
        return "middle"
    return "right"


def shape_mask(shape: str, size: int, cx: int, cy: int, r: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    dx, dy = xx - cx, yy - cy
    if shape == "circle":
        return dx * dx + dy * dy <= r * r
    if shape == "square":
        half = int(round(r * 0.85))
        return (np.abs(dx) <= half) & (np.abs(dy) <= half)
    if shape == "triangle":
        # apex up, half-width grows linearly to r at the base
        rel = (dy + r) / 2.0
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= rel)
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    if shape == "cross":
        arm = max(1, r // 3)
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | (
            (np.abs(dy) <= arm) & (np.abs(dx) <= r)
        )
    if shape == "ring":
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= (r // 2) * (r // 2))
    raise InputError(f"unknown shape {shape!r}")


def render_scene(objects, rng: np.random.Generator, size: int = IMAGE_SIZE):
    """Render objects [(shape, rgb, cx, cy, r)] over a dark noisy background.

    Returns (uint8 image, list of exact boolean masks in object order).
    """
    bg = rng.integers(15, 55)
    img = np.full((size, size, 3), bg, dtype=np.float64)
    masks = []
    for shape, rgb, cx, cy, r in objects:
        bits = shape_mask(shape, size, cx, cy, r)
        img[bits] = np.asarray(rgb, dtype=np.float64)
        masks.append(bits)
    img += rng.normal(0, 4.0, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8), masks


@dataclass(frozen=True)
class ConceptSpec:
    concept_id: str
    identifier: str
    color: str
    rgb: tuple[int, int, int]
    shape: str
    radius: int

    def to_dict(self) -> dict:
        return {
            "concept_id": self.concept_id,
            "identifier": self.identifier,
            "color": self.color,
            "rgb": list(self.rgb),
            "shape": self.shape,
            "radius": self.radius,
        }


@dataclass
class Scenario:
    """In-memory scenario: metadata plus all rendered images and masks, keyed
    by their relative paths inside the scenario directory."""

    meta: dict
    images: dict[str, np.ndarray] = field(default_factory=dict)
    masks: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def scenario_id(self) -> str:
        return self.meta["scenario_id"]

    @property
    def m(self) -> int:
        return self.meta["m"]

    @property
    def n(self) -> int:
        return self.meta["n"]

    @property
    def concepts(self) -> list[ConceptSpec]:
        return [
            ConceptSpec(
                concept_id=c["concept_id"],
                identifier=c["identifier"],
                color=c["color"],
                rgb=tuple(c["rgb"]),
                shape=c["shape"],
                radius=c["radius"],
            )
            for c in self.meta["concepts"]
        ]

    @property
    def identifiers(self) -> tuple[str, ...]:
        return tuple(c["identifier"] for c in self.meta["concepts"])

    def concept(self, concept_id: str) -> ConceptSpec:
        for spec in self.concepts:
            if spec.concept_id == concept_id:
                return spec
        raise InputError(f"unknown concept {concept_id!r}")

    def train_records(self, concept_id: str) -> list[dict]:
        return self.meta["train"][concept_id]

    def image(self, key: str) -> np.ndarray:
        return self.images[key]

    def mask(self, key: str) -> np.ndarray:
        return self.masks[key]


def _place_free(rng, radius, size=IMAGE_SIZE):
    cx = int(rng.integers(radius + 1, size - radius - 1))
    cy = int(rng.integers(radius + 1, size - radius - 1))
    return cx, cy


def _multi_placements(rng, m, radius, size=IMAGE_SIZE):
    """Disjoint slots for m shapes; centers recorded with their true thirds."""
    if m == 1:
        slots_x = [int(rng.integers(radius + 1, size - radius - 1))]
        slots_y = [int(rng.integers(radius + 1, size - radius - 1))]
    elif m == 2:
        slots_x = [10, 53]
        slots_y = [int(rng.integers(14, 50)) for _ in range(2)]
    elif m == 3:
        slots_x = [10, 32, 53]
        slots_y = [int(rng.integers(14, 50)) for _ in range(3)]
    else:
        slots_x = [12, 51, 12, 51]
        slots_y = [16, 16, 48, 48]
    order = rng.permutation(m)
    placements = []
    for idx in order:
        jitter = int(rng.integers(-2, 3))
        placements.append((slots_x[idx] + jitter, slots_y[idx]))
    return placements


def generate_scenario(
    m: int,
    n: int,
    seed: int = 1,
    test_per_concept: int = 5,
    n_multi_test: int = 5,
    n_external_train: int = 100,
    n_external_single: int = 50,
    n_external_multi: int = 50,
) -> Scenario:
    """Generate a complete synthetic scenario, deterministic in the seed."""
    if not 1 <= m <= 4:
        raise InputError(f"supported concept counts are 1..4, got {m}")
    if n < 1:
        raise InputError(f"need at least one training image per concept, got {n}")
    rng = np.random.default_rng(seed)
    concepts = []
    for j in range(m):
        color, rgb = CONCEPT_PALETTE[j]
        concepts.append(
            ConceptSpec(
                concept_id=f"concept{j + 1}",
                identifier=f"<sks{j + 1}>",
                color=color,
                rgb=rgb,
                shape=CONCEPT_SHAPES[j],
                radius=13,
            )
        )
    meta: dict = {
        "schema": SCHEMA_VERSION,
        "scenario_id": f"m{m}-n{n}-seed{seed}",
        "seed": seed,
        "m": m,
        "n": n,
        "concepts": [c.to_dict() for c in concepts],
        "train": {},
        "test_single": [],
        "test_multi": [],
        "external_train": [],
        "external_single": [],
        "external_multi": [],
    }
    scenario = Scenario(meta=meta)

    def add_image(key, img):
        scenario.images[key] = img

    for spec in concepts:
        records = []
        for i in range(n):
            cx, cy = _place_free(rng, spec.radius)
            img, masks = render_scene([(spec.shape, spec.rgb, cx, cy, spec.radius)], rng)
            ikey = f"concepts/{spec.concept_id}/train/{i:03d}.png"
            mkey = f"concepts/{spec.concept_id}/masks/{i:03d}.png"
            add_image(ikey, img)
            scenario.masks[mkey] = masks[0]
            records.append(
                {"image": ikey, "mask": mkey, "cx": cx, "cy": cy, "third": third_of(cx)}
            )
        meta["train"][spec.concept_id] = records

    for spec in concepts:
        for i in range(test_per_concept):
            cx, cy = _place_free(rng, spec.radius)
            img, _ = render_scene([(spec.shape, spec.rgb, cx, cy, spec.radius)], rng)
            key = f"test/single/{spec.concept_id}_{i:03d}.png"
            add_image(key, img)
            meta["test_single"].append(
                {
                    "image": key,
                    "concept_id": spec.concept_id,
                    "cx": cx,
                    "cy": cy,
                    "third": third_of(cx),
                }
            )

    multi_radius = 8 if m >= 2 else 13
    for i in range(n_multi_test):
        placements = _multi_placements(rng, m, multi_radius)
        objects = []
        placement_meta = {}
        for spec, (cx, cy) in zip(concepts, placements):
            objects.append((spec.shape, spec.rgb, cx, cy, multi_radius))
            placement_meta[spec.concept_id] = {"cx": cx, "cy": cy, "third": third_of(cx)}
        img, _ = render_scene(objects, rng)
        key = f"test/multi/{i:03d}.png"
        add_image(key, img)
        meta["test_multi"].append({"image": key, "placements": placement_meta})

    def distractor_objects(count):
        objs = []
        for _ in range(count):
            shape = DISTRACTOR_SHAPES[rng.integers(len(DISTRACTOR_SHAPES))]
            _, rgb = DISTRACTOR_COLORS[rng.integers(len(DISTRACTOR_COLORS))]
            radius = int(rng.integers(9, 14))
            cx, cy = _place_free(rng, radius)
            objs.append((shape, rgb, cx, cy, radius))
        return objs

    for group, count, n_objects in (
        ("external_train", n_external_train, 1),
        ("external_single", n_external_single, 1),
        ("external_multi", n_external_multi, 2),
    ):
        for i in range(count):
            if n_objects == 1:
                objs = distractor_objects(1)
            else:
                # two grayscale shapes on opposite sides, never overlapping
                objs = []
                for side, x0 in (("l", 10), ("r", 53)):
                    shape = DISTRACTOR_SHAPES[rng.integers(len(DISTRACTOR_SHAPES))]
                    _, rgb = DISTRACTOR_COLORS[rng.integers(len(DISTRACTOR_COLORS))]
                    objs.append((shape, rgb, x0 + int(rng.integers(-2, 3)), int(rng.integers(14, 50)), 8))
            img, _ = render_scene(objs, rng)
            key = f"external/{group.split('_')[1]}/{i:03d}.png"
            add_image(key, img)
            meta[group].append(key)

    return scenario


# -- persistence ---------------------------------------------------------------


def save_scenario(scenario: Scenario, out_dir: str) -> None:
    """Write images as PNG, masks as single-channel PNG, and meta.json."""
    for key, img in scenario.images.items():
        path = os.path.join(out_dir, key)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        Image.fromarray(img, mode="RGB").save(path)
    for key, bits in scenario.masks.items():
        path = os.path.join(out_dir, key)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        Image.fromarray((bits.astype(np.uint8)) * 255, mode="L").save(path)
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(scenario.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scenario(scenario_dir: str) -> Scenario:
    meta_path = os.path.join(scenario_dir, "meta.json")
    if not os.path.isfile(meta_path):
        raise ValidationError(f"missing meta.json in {scenario_dir}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    if meta.get("schema") != SCHEMA_VERSION:
        raise ValidationError(f"unsupported scenario schema {meta.get('schema')!r}")
    scenario = Scenario(meta=meta)
    keys = []
    for records in meta["train"].values():
        for rec in records:
            keys.append(rec["image"])
            scenario.masks[rec["mask"]] = None  # placeholder, loaded below
    keys.extend(rec["image"] for rec in meta["test_single"])
    keys.extend(rec["image"] for rec in meta["test_multi"])
    for group in ("external_train", "external_single", "external_multi"):
        keys.extend(meta[group])
    for key in keys:
        path = os.path.join(scenario_dir, key)
        if not os.path.isfile(path):
            raise ValidationError(f"scenario image missing: {key}")
        scenario.images[key] = np.asarray(Image.open(path).convert("RGB"))
    for mkey in list(scenario.masks):
        path = os.path.join(scenario_dir, mkey)
        if not os.path.isfile(path):
            raise ValidationError(f"scenario mask missing: {mkey}")
        scenario.masks[mkey] = np.asarray(Image.open(path).convert("L")) != 0
    return scenario
