"""Concept token initialization: k-means over projected visual tokens plus norm alignment."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InputError
from .validation import check_matrix, check_vectors
from .vision import FeatureBank


@dataclass
class ClusterResult:
    centers: np.ndarray  # (k, d)
    assignments: np.ndarray  # (n,) int
    inertia: float
    inertia_history: list[float]


@dataclass
class ConceptTokenBlock:
    """The (k+1) x D trainable embeddings for one concept: identifier row + k soft tokens."""

    concept_id: str
    sks: np.ndarray  # (D,)
    tokens: np.ndarray  # (k, D)

    @property
    def k(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.sks.shape[0]

    def rows(self) -> np.ndarray:
        """All k+1 rows, identifier first."""
        return np.vstack([self.sks[None, :], self.tokens])


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (n, k) squared euclidean distances
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _plus_plus_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers; pick uniformly
            centers[i] = points[rng.integers(n)]
            continue
        idx = rng.choice(n, p=closest / total)
        centers[i] = points[idx]
        closest = np.minimum(closest, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(points, k: int, seed: int = 0, max_iters: int = 100) -> ClusterResult:
    """Lloyd's algorithm with k-means++ seeding and euclidean distance.

    Empty clusters are re-seeded to the point currently farthest from its
    assigned center, so all k centers stay defined. Inertia is recorded after
    every assignment step and checked to be non-increasing.
    """
    pts = check_vectors(points, name="points")
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    if pts.shape[0] < k:
        raise InputError(f"need at least k={k} points, got {pts.shape[0]}")
    if max_iters < 1:
        raise InputError(f"max_iters must be >= 1, got {max_iters}")
    rng = np.random.default_rng(seed)
    centers = _plus_plus_seed(pts, k, rng)
    history: list[float] = []
    assignments = np.zeros(pts.shape[0], dtype=int)
    for _ in range(max_iters):
        d2 = _sq_dists(pts, centers)
        new_assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(pts.shape[0]), new_assign].sum())
        if history and inertia > history[-1] * (1 + 1e-10) + 1e-12:
            raise AssertionError(
                f"k-means inertia increased: {history[-1]} -> {inertia}"
            )
        history.append(inertia)
        converged = history and len(history) > 1 and np.array_equal(new_assign, assignments)
        assignments = new_assign
        if converged:
            break
        for j in range(k):
            chosen = assignments == j
            if chosen.any():
                centers[j] = pts[chosen].mean(axis=0)
            else:
                # steal the globally worst-served point
                d2 = _sq_dists(pts, centers)
                worst = d2[np.arange(pts.shape[0]), assignments].argmax()
                centers[j] = pts[worst]
                assignments[worst] = j
    return ClusterResult(
        centers=centers,
        assignments=assignments,
        inertia=history[-1],
        inertia_history=history,
    )


def reference_norm(vocab_embeddings) -> float:
    """Target norm K_o: the mean L2 norm of the frozen vocabulary embedding rows."""
    table = check_matrix(vocab_embeddings, name="vocab_embeddings")
    return float(np.linalg.norm(table, axis=1).mean())


def norm_align(vector, k_o: float) -> np.ndarray:
    """Rescale a vector to L2 norm k_o, preserving direction."""
    vec = np.asarray(vector, dtype=np.float64)
    if k_o <= 0:
        raise InputError(f"target norm must be positive, got {k_o}")
    norm = float(np.linalg.norm(vec))
    if norm == 0:
        raise DegenerateInputError("cannot norm-align the zero vector")
    return vec * (k_o / norm)


def init_block(bank: FeatureBank, k: int, seed: int, k_o: float) -> ConceptTokenBlock:
    """Initial token block: k-means centers as soft tokens, their mean as the
    identifier embedding, all k+1 rows norm-aligned to k_o."""
    if bank.l < k:
        raise InputError(f"bank has {bank.l} vectors, need at least k={k}")
    result = kmeans(bank.vectors, k, seed=seed)
    sks = result.centers.mean(axis=0)
    tokens = np.vstack([norm_align(c, k_o) for c in result.centers])
    return ConceptTokenBlock(concept_id=bank.concept_id, sks=norm_align(sks, k_o), tokens=tokens)


def random_block(
    concept_id: str, k: int, dim: int, seed: int, k_o: float
) -> ConceptTokenBlock:
    """Seeded random block at norm k_o; the ablation baseline for k-means init."""
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((k + 1, dim))
    rows = np.vstack([norm_align(r, k_o) for r in rows])
    return ConceptTokenBlock(concept_id=concept_id, sks=rows[0], tokens=rows[1:])
