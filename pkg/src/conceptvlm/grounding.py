"""Inference-time visual grounding: per-concept similarity maps, bias-corrected
confidence maps, existence/localization decisions, and Set-of-Mark annotation.

For a single concept the bias-corrected map is identically zero by
construction, so detection falls back to thresholding the raw mean similarity
map instead.
"""

from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .errors import DegenerateInputError, InputError
from .validation import check_image
from .vision import FeatureBank, FeatureGrid, VisionEncoder

MARK_RADIUS = 6


@dataclass(frozen=True)
class GroundingConfig:
    tau: float = 0.32
    gamma: float = 100 / 65536  # minimum presence ratio, fraction of map cells

    def __post_init__(self):
        if not -1.0 < self.tau < 1.0:
            raise InputError(f"tau must lie in (-1, 1), got {self.tau}")
        if not 0.0 < self.gamma < 1.0:
            raise InputError(f"gamma must lie in (0, 1), got {self.gamma}")


@dataclass
class SimilarityStack:
    concept_id: str
    maps: np.ndarray  # (l, h, w), cosine values in [-1, 1]


@dataclass
class Detection:
    concept_id: str
    present: bool
    patch_rc: tuple[int, int] | None
    pixel_xy: tuple[int, int] | None
    max_confidence: float
    exceedance_ratio: float


@dataclass
class Mark:
    concept_id: str
    identifier: str
    pixel_xy: tuple[int, int]
    number: int


@dataclass
class GroundingResult:
    marks: list[Mark]
    prompt: str
    detections: list[Detection]
    annotated: np.ndarray
    confidence_maps: dict[str, np.ndarray] = field(default_factory=dict)


def similarity_stack(bank: FeatureBank, grid: FeatureGrid) -> SimilarityStack:
    """Cosine similarity between every bank vector and every test patch feature."""
    if bank.c != grid.c:
        raise InputError(f"bank dim {bank.c} does not match grid channels {grid.c}")
    feats = grid.vectors()
    fnorm = np.linalg.norm(feats, axis=1)
    bnorm = np.linalg.norm(bank.vectors, axis=1)
    if np.any(fnorm == 0) or np.any(bnorm == 0):
        raise DegenerateInputError("zero-norm feature vector in similarity computation")
    sims = (bank.vectors / bnorm[:, None]) @ (feats / fnorm[:, None]).T
    return SimilarityStack(concept_id=bank.concept_id, maps=sims.reshape(-1, grid.h, grid.w))


def mean_map(stack: SimilarityStack) -> np.ndarray:
    return stack.maps.mean(axis=0)


def confidence_maps(stacks: list[SimilarityStack]) -> dict[str, np.ndarray]:
    """Bias-corrected maps: per-concept mean similarity minus the global mean
    over concepts, computed pointwise. The maps sum to zero at every cell."""
    if not stacks:
        raise InputError("need at least one similarity stack")
    shapes = {s.maps.shape[1:] for s in stacks}
    if len(shapes) != 1:
        raise InputError(f"similarity stacks disagree on map shape: {shapes}")
    means = np.stack([mean_map(s) for s in stacks])
    if means.shape[0] == 2:
        # algebraically (A1 - A2) / 2 and its negation; this form makes the
        # two-concept antisymmetry exact in floating point
        half_gap = (means[0] - means[1]) / 2.0
        corrected = np.stack([half_gap, -half_gap])
    else:
        corrected = means - means.mean(axis=0)
    return {s.concept_id: corrected[i] for i, s in enumerate(stacks)}


def detect(conf_map: np.ndarray, config: GroundingConfig, patch_size: int,
           concept_id: str = "") -> Detection:
    """Existence test and localization on one confidence map.

    Present iff the fraction of cells exceeding tau is greater than gamma; the
    location is the argmax cell's pixel center, ties broken row-major.
    """
    if not np.all(np.isfinite(conf_map)):
        raise InputError("confidence map contains non-finite values")
    h, w = conf_map.shape
    exceed = int((conf_map > config.tau).sum())
    ratio = exceed / (h * w)
    present = ratio > config.gamma
    flat_idx = int(conf_map.argmax())  # row-major first occurrence on ties
    r, c = divmod(flat_idx, w)
    pixel = (int(c * patch_size + patch_size // 2), int(r * patch_size + patch_size // 2))
    return Detection(
        concept_id=concept_id,
        present=present,
        patch_rc=(r, c) if present else None,
        pixel_xy=pixel if present else None,
        max_confidence=float(conf_map.max()),
        exceedance_ratio=ratio,
    )


def location_prompt(marks: list[Mark]) -> str:
    return "".join(
        f'{m.identifier} is located at "Mark Number {m.number}".' for m in marks
    )


def annotate(image, marks: list[Mark]) -> tuple[np.ndarray, str]:
    """Draw numbered mark glyphs (filled circle + numeral) and build the
    location prompt. With no marks the image is returned unchanged."""
    pixels = check_image(image)
    height, width = pixels.shape[:2]
    for m in marks:
        x, y = m.pixel_xy
        if not (0 <= x < width and 0 <= y < height):
            raise InputError(f"mark coordinate {m.pixel_xy} outside {width}x{height} image")
    if not marks:
        return (pixels * 255).astype(np.uint8), ""
    canvas = Image.fromarray((pixels * 255).astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(canvas)
    for m in marks:
        x, y = m.pixel_xy
        r = MARK_RADIUS
        draw.ellipse([x - r, y - r, x + r, y + r], fill=(0, 0, 0), outline=(255, 255, 255))
        draw.text((x - 3, y - 5), str(m.number), fill=(255, 255, 255))
    return np.asarray(canvas), location_prompt(marks)


def ground(
    banks: list[FeatureBank],
    image,
    encoder: VisionEncoder,
    config: GroundingConfig = GroundingConfig(),
    identifiers: dict[str, str] | None = None,
) -> GroundingResult:
    """Full grounding pass: encode, per-concept similarity stacks, confidence
    maps (raw mean map when only one concept), detection, and annotation."""
    if not banks:
        raise InputError("need at least one feature bank")
    grid = encoder.encode(image)
    stacks = [similarity_stack(bank, grid) for bank in banks]
    if len(stacks) == 1:
        maps = {stacks[0].concept_id: mean_map(stacks[0])}
    else:
        maps = confidence_maps(stacks)
    detections = []
    for bank in banks:
        det = detect(maps[bank.concept_id], config, grid.patch_size, bank.concept_id)
        detections.append(det)
    marks = []
    for det in detections:
        if det.present:
            ident = (identifiers or {}).get(det.concept_id, det.concept_id)
            marks.append(
                Mark(
                    concept_id=det.concept_id,
                    identifier=ident,
                    pixel_xy=det.pixel_xy,
                    number=len(marks) + 1,
                )
            )
    annotated, prompt = annotate(image, marks)
    return GroundingResult(
        marks=marks,
        prompt=prompt,
        detections=detections,
        annotated=annotated,
        confidence_maps=maps,
    )
