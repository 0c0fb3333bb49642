"""Spectral-clustering speaker diarization over per-segment embeddings.

Standard normalized spectral clustering: cosine affinities mapped to [0, 1],
per-row percentile pruning, symmetric normalized Laplacian, eigengap
speaker-count estimation, and k-means over row-normalized eigenvectors.
Everything is deterministic under a fixed seed; distinct meetings can run in
parallel workers.

``SpectralDiarizer`` wraps the same pipeline as an sklearn-compatible
estimator so it composes with sklearn tooling (``fit_predict``,
``get_params``/``set_params``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.cluster import KMeans
from sklearn.utils.validation import check_array

from .errors import DataError
from .ingest import EmbeddingRecord
from .timeline import Segment, SpeakerTimelineSet, normalize

ArrayLike = Union[np.ndarray, Sequence[Sequence[float]], Sequence[EmbeddingRecord]]


@dataclass(frozen=True)
class DiarizationConfig:
    max_speakers: int = 8
    fixed_k: Optional[int] = None
    affinity_percentile: float = 40.0
    kmeans_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_speakers < 1:
            raise ValueError(f"max_speakers must be >= 1, got {self.max_speakers}")
        if self.fixed_k is not None and not 1 <= self.fixed_k <= self.max_speakers:
            raise ValueError(
                f"fixed_k must be in [1, max_speakers={self.max_speakers}], got {self.fixed_k}"
            )
        if not 0.0 < self.affinity_percentile < 100.0:
            raise ValueError(
                f"affinity_percentile must be in (0, 100), got {self.affinity_percentile}"
            )
        if self.kmeans_restarts < 1:
            raise ValueError(f"kmeans_restarts must be >= 1, got {self.kmeans_restarts}")


@dataclass(frozen=True)
class DiarizationResult:
    labels: Tuple[int, ...]
    k: int
    eigenvalues: Tuple[float, ...]


def _as_matrix(embeddings: ArrayLike) -> np.ndarray:
    if len(embeddings) and isinstance(embeddings[0], EmbeddingRecord):
        matrix = np.asarray([e.vector for e in embeddings], dtype=float)
    else:
        matrix = np.asarray(embeddings, dtype=float)
    if matrix.ndim != 2:
        raise DataError(f"expected a 2-D embedding matrix, got shape {matrix.shape}")
    return matrix


def _cosine_affinity(matrix: np.ndarray) -> np.ndarray:
    """Cosine similarities mapped to [0, 1] via (1 + cos) / 2."""
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms < 1e-12):
        raise DataError(f"zero-norm embedding at index {int(np.argmin(norms))}")
    unit = matrix / norms[:, None]
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    return 0.5 * (1.0 + cos)


def build_affinity(embeddings: ArrayLike, cfg: DiarizationConfig) -> np.ndarray:
    """Pruned, symmetric, non-negative affinity matrix with unit diagonal.

    Per row, values below that row's ``affinity_percentile`` percentile are
    zeroed; the result is symmetrized by elementwise maximum.
    """
    matrix = _as_matrix(embeddings)
    if matrix.shape[0] < 2:
        raise DataError(f"need at least 2 embeddings, got {matrix.shape[0]}")
    affinity = _cosine_affinity(matrix)
    thresholds = np.percentile(affinity, cfg.affinity_percentile, axis=1)
    pruned = np.where(affinity < thresholds[:, None], 0.0, affinity)
    sym = np.maximum(pruned, pruned.T)
    np.fill_diagonal(sym, 1.0)
    return sym


def eigendecompose_laplacian(affinity: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the symmetric normalized Laplacian, ascending.

    L = I - D^(-1/2) A D^(-1/2); eigenvalues lie in [0, 2] and the number of
    (near-)zero ones equals the number of connected components.
    """
    a = np.asarray(affinity, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"affinity must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ValueError("affinity must be symmetric")
    degrees = a.sum(axis=1)
    if np.any(degrees <= 1e-12):
        idx = int(np.argmin(degrees))
        raise DataError(
            f"row {idx} has zero degree (isolated node); lower the affinity percentile"
        )
    inv_sqrt = 1.0 / np.sqrt(degrees)
    laplacian = np.eye(len(a)) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    eigenvalues, eigenvectors = np.linalg.eigh(laplacian)
    return eigenvalues, eigenvectors


def estimate_k(eigenvalues: Sequence[float], max_speakers: int) -> int:
    """Speaker count by the largest eigengap among the smallest eigenvalues.

    k maximizes eigenvalue[k] - eigenvalue[k-1] over 1..max_speakers (ties
    broken toward the smallest k); fewer than 2 eigenvalues means k = 1.
    """
    ev = np.asarray(eigenvalues, dtype=float)
    if ev.size < 2:
        return 1
    k_max = min(max_speakers, ev.size - 1)
    gaps = ev[1 : k_max + 1] - ev[:k_max]
    return int(np.argmax(gaps)) + 1


def cluster(embeddings: ArrayLike, cfg: DiarizationConfig) -> DiarizationResult:
    """Full spectral-clustering pass over one meeting's embeddings."""
    matrix = _as_matrix(embeddings)
    n = matrix.shape[0]
    if n == 0:
        raise DataError("cannot cluster zero embeddings")
    if n == 1:
        return DiarizationResult((0,), 1, (0.0,))
    affinity = build_affinity(matrix, cfg)
    eigenvalues, eigenvectors = eigendecompose_laplacian(affinity)
    k = cfg.fixed_k if cfg.fixed_k is not None else estimate_k(eigenvalues, cfg.max_speakers)
    k = min(k, n)
    spectral = eigenvectors[:, :k]
    row_norms = np.linalg.norm(spectral, axis=1)
    row_norms[row_norms < 1e-12] = 1.0
    spectral = spectral / row_norms[:, None]
    kmeans = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=cfg.kmeans_restarts,
        random_state=cfg.seed,
    ).fit(spectral)
    return DiarizationResult(
        tuple(int(label) for label in kmeans.labels_),
        k,
        tuple(float(v) for v in eigenvalues),
    )


def to_timeline_set(
    result: DiarizationResult, segments: Sequence[Segment], recording_id: str
) -> SpeakerTimelineSet:
    """Render cluster labels as per-speaker timelines.

    Cluster ids become "spk00", "spk01", ... in order of first appearance
    along the segment sequence.
    """
    if len(result.labels) != len(segments):
        raise DataError(
            f"{recording_id}: {len(result.labels)} labels vs {len(segments)} segments"
        )
    names: Dict[int, str] = {}
    grouped: Dict[str, List[Segment]] = {}
    for label, seg in zip(result.labels, segments):
        if label not in names:
            names[label] = f"spk{len(names):02d}"
        grouped.setdefault(names[label], []).append(seg)
    return {spk: normalize(segs) for spk, segs in grouped.items()}


class SpectralDiarizer(ClusterMixin, BaseEstimator):
    """sklearn-style wrapper: ``fit(X)`` clusters rows of an (n, d) matrix.

    Attributes after fit: ``labels_``, ``k_``, ``eigenvalues_``.
    """

    def __init__(
        self,
        max_speakers: int = 8,
        fixed_k: Optional[int] = None,
        affinity_percentile: float = 40.0,
        kmeans_restarts: int = 10,
        seed: int = 0,
    ):
        self.max_speakers = max_speakers
        self.fixed_k = fixed_k
        self.affinity_percentile = affinity_percentile
        self.kmeans_restarts = kmeans_restarts
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        result = cluster(
            X,
            DiarizationConfig(
                max_speakers=self.max_speakers,
                fixed_k=self.fixed_k,
                affinity_percentile=self.affinity_percentile,
                kmeans_restarts=self.kmeans_restarts,
                seed=self.seed,
            ),
        )
        self.labels_ = np.asarray(result.labels)
        self.k_ = result.k
        self.eigenvalues_ = np.asarray(result.eigenvalues)
        return self
