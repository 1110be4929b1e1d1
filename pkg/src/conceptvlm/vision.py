"""Synthetic vision backend: patch encoder, projector, mask filtering, feature banks.

The encoder is a seeded fixed linear projection of per-patch pixel statistics
(per-channel mean/variance plus 4x4 pooled pixels plus a small constant term),
L2-normalized. It is deterministic and local: a patch's feature depends only on
that patch's pixels, and visually similar patches get similar features.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionError, EmptySelectionError, InputError
from .validation import check_image, check_mask, check_vectors

# 3 channel means + 3 channel variances + 4x4x3 pooled pixels + constant term
PATCH_STAT_DIM = 55
# keeps all-black patches away from the zero vector without inflating
# cross-color cosines (bias cancels in the confidence-map subtraction anyway)
DC_TERM = 0.05

ENCODER_SPACE = "encoder"
PROJECTOR_SPACE = "projector"


@dataclass(frozen=True)
class FeatureGrid:
    """h x w grid of c-dim patch features plus the patch size that produced it."""

    data: np.ndarray  # (h, w, c) float64
    patch_size: int

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def c(self) -> int:
        return self.data.shape[2]

    def vectors(self) -> np.ndarray:
        """All patch features as an (h*w, c) row-major stack."""
        return self.data.reshape(-1, self.data.shape[2])


@dataclass
class FeatureBank:
    """Mask-filtered feature vectors for one concept."""

    concept_id: str
    vectors: np.ndarray  # (l, c) float64
    space: str = ENCODER_SPACE

    @property
    def l(self) -> int:
        return self.vectors.shape[0]

    @property
    def c(self) -> int:
        return self.vectors.shape[1]


def patch_statistics(patch: np.ndarray) -> np.ndarray:
    """Statistic vector for one (ps, ps, 3) patch with pixels in [0, 1]."""
    ps = patch.shape[0]
    means = patch.reshape(-1, 3).mean(axis=0)
    variances = patch.reshape(-1, 3).var(axis=0)
    cell = ps // 4
    pooled = patch.reshape(4, cell, 4, cell, 3).mean(axis=(1, 3)).reshape(-1)
    return np.concatenate([means, variances, pooled, [DC_TERM]])


class VisionEncoder:
    """Deterministic stand-in for a pretrained patch encoder.

    Immutable after construction; safe for concurrent reads.
    """

    def __init__(self, patch_size: int = 8, channels: int = 64, seed: int = 7):
        if patch_size < 4 or patch_size % 4 != 0:
            raise InputError(f"patch_size must be a positive multiple of 4, got {patch_size}")
        if channels < 1:
            raise InputError(f"channels must be >= 1, got {channels}")
        self.patch_size = patch_size
        self.channels = channels
        self.seed = seed
        rng = np.random.default_rng(seed)
        self._proj = rng.standard_normal((PATCH_STAT_DIM, channels)) / np.sqrt(PATCH_STAT_DIM)

    def encode(self, image) -> FeatureGrid:
        """Encode an image into an h x w grid of unit-norm patch features."""
        pixels = check_image(image)
        height, width = pixels.shape[:2]
        ps = self.patch_size
        if height % ps != 0 or width % ps != 0:
            raise DimensionError(
                f"image dimensions {height}x{width} not divisible by patch size {ps}"
            )
        h, w = height // ps, width // ps
        stats = np.empty((h, w, PATCH_STAT_DIM))
        for i in range(h):
            for j in range(w):
                patch = pixels[i * ps : (i + 1) * ps, j * ps : (j + 1) * ps]
                stats[i, j] = patch_statistics(patch)
        feats = stats.reshape(-1, PATCH_STAT_DIM) @ self._proj
        norms = np.linalg.norm(feats, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise DegenerateInputError("patch feature collapsed to the zero vector")
        feats = feats / norms
        return FeatureGrid(data=feats.reshape(h, w, self.channels), patch_size=ps)


class Projector:
    """Fixed, seeded, frozen projection from encoder space to the LM embedding space.

    mode="random" uses a seeded orthogonal matrix (cosine-preserving when square);
    mode="identity" requires matching dimensions and is intended for tests.
    """

    def __init__(self, in_dim: int = 64, out_dim: int = 64, mode: str = "random", seed: int = 11):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.mode = mode
        self.seed = seed
        if mode == "identity":
            if in_dim != out_dim:
                raise DimensionError("identity projector requires in_dim == out_dim")
            self._mat = np.eye(in_dim)
        elif mode == "random":
            rng = np.random.default_rng(seed)
            gauss = rng.standard_normal((max(in_dim, out_dim), max(in_dim, out_dim)))
            q, r = np.linalg.qr(gauss)
            q = q * np.sign(np.diag(r))  # fix QR sign ambiguity for determinism
            self._mat = q[:in_dim, :out_dim]
        else:
            raise InputError(f"unknown projector mode {mode!r}")

    def project_vectors(self, vectors: np.ndarray) -> np.ndarray:
        vecs = check_vectors(vectors, name="vectors")
        if vecs.shape[1] != self.in_dim:
            raise DimensionError(
                f"projector expects {self.in_dim} channels, got {vecs.shape[1]}"
            )
        return vecs @ self._mat

    def project(self, grid: FeatureGrid) -> FeatureGrid:
        if grid.c != self.in_dim:
            raise DimensionError(f"projector expects {self.in_dim} channels, got {grid.c}")
        out = grid.vectors() @ self._mat
        return FeatureGrid(
            data=out.reshape(grid.h, grid.w, self.out_dim), patch_size=grid.patch_size
        )


def filter_by_mask(grid: FeatureGrid, mask) -> np.ndarray:
    """Features of patches whose pixels are strictly-majority mask-set, row-major.

    Raises EmptySelectionError when no patch qualifies.
    """
    bits = check_mask(mask)
    ps = grid.patch_size
    expected = (grid.h * ps, grid.w * ps)
    if bits.shape != expected:
        raise DimensionError(f"mask shape {bits.shape} does not match image shape {expected}")
    counts = bits.reshape(grid.h, ps, grid.w, ps).sum(axis=(1, 3))
    keep = counts * 2 > ps * ps  # strict majority
    if not keep.any():
        raise EmptySelectionError("mask selects no patch by strict majority")
    return grid.vectors()[keep.reshape(-1)]


def build_bank(
    images,
    masks,
    encoder: VisionEncoder,
    projector: Projector | None = None,
    space: str = ENCODER_SPACE,
    concept_id: str = "",
) -> FeatureBank:
    """Concatenate mask-filtered features over all images of one concept."""
    if space not in (ENCODER_SPACE, PROJECTOR_SPACE):
        raise InputError(f"unknown feature space {space!r}")
    if space == PROJECTOR_SPACE and projector is None:
        raise InputError("projector space requires a projector")
    if len(images) != len(masks):
        raise InputError(f"got {len(images)} images but {len(masks)} masks")
    if len(images) == 0:
        raise InputError("need at least one image")
    chunks = []
    for image, mask in zip(images, masks):
        grid = encoder.encode(image)
        if space == PROJECTOR_SPACE:
            grid = projector.project(grid)
        chunks.append(filter_by_mask(grid, mask))
    return FeatureBank(concept_id=concept_id, vectors=np.concatenate(chunks, axis=0), space=space)
