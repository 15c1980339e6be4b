"""Cross-modal retrieval evaluation, compositional query arithmetic, and the
alignment/magnitude diagnostics of paired embedding pools.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .kernels import ensure_vector

DIRECTIONS = ("audio_to_image", "image_to_audio")


def _normalize_rows(m: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1)
    if (norms <= 1e-12).any():
        raise ValidationError(f"zero vector in {what} embeddings")
    return m / norms[:, None]


@dataclass(frozen=True)
class RetrievalPool:
    """Paired visual/audio embeddings; row i of each matrix is a positive pair."""

    visual: np.ndarray  # (n, d)
    audio: np.ndarray  # (n, d)
    source: str = "backbone"  # or "projected"

    def __post_init__(self):
        v = np.asarray(self.visual, dtype=np.float64)
        a = np.asarray(self.audio, dtype=np.float64)
        if v.ndim != 2 or a.ndim != 2 or v.shape != a.shape:
            raise ValidationError(f"pool matrices must match: visual {v.shape}, audio {a.shape}")
        if v.shape[0] < 1:
            raise ValidationError("empty retrieval pool")
        if not (np.isfinite(v).all() and np.isfinite(a).all()):
            raise ValidationError("non-finite pool embeddings")
        object.__setattr__(self, "visual", v)
        object.__setattr__(self, "audio", a)

    def __len__(self) -> int:
        return self.visual.shape[0]


def _rank_candidates(candidates_unit: np.ndarray, query_unit: np.ndarray) -> np.ndarray:
    """Candidate indices by descending cosine; ties by ascending index."""
    sims = candidates_unit @ query_unit
    return np.argsort(-sims, kind="stable")


def recall_at_k(pool: RetrievalPool, direction: str, ks) -> dict:
    """Recall@k per requested k: fraction of queries whose pair ranks in the top k."""
    if direction not in DIRECTIONS:
        raise ValidationError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    ks = [int(k) for k in ks]
    n = len(pool)
    if not ks or min(ks) < 1 or max(ks) > n:
        raise ValidationError(f"ks must lie in [1, {n}], got {ks}")
    queries, candidates = (
        (pool.audio, pool.visual) if direction == "audio_to_image" else (pool.visual, pool.audio)
    )
    queries = _normalize_rows(queries, "query")
    candidates = _normalize_rows(candidates, "candidate")
    ranks = np.empty(n, dtype=np.int64)
    for i in range(n):
        order = _rank_candidates(candidates, queries[i])
        ranks[i] = int(np.nonzero(order == i)[0][0])
    return {k: float(np.mean(ranks < k)) for k in ks}


@dataclass(frozen=True)
class ComposedQuery:
    vector: np.ndarray  # raw interpolation
    unit: np.ndarray  # normalized variant (equals vector when it is zero)


def compose(v, a, lam: float, normalize_inputs: bool = True) -> ComposedQuery:
    """Interpolated multimodal query: lam * v + (1 - lam) * a.

    Inputs are L2-normalized before mixing by default; the result is
    returned raw together with a normalized variant.
    """
    vv = ensure_vector(v, "visual")
    aa = ensure_vector(a, "audio")
    if vv.shape != aa.shape:
        raise ValidationError(f"dim mismatch: {vv.shape} vs {aa.shape}")
    if normalize_inputs:
        nv, na = np.linalg.norm(vv), np.linalg.norm(aa)
        if nv <= 1e-12 or na <= 1e-12:
            raise ValidationError("cannot normalize a zero vector")
        vv = vv / nv
        aa = aa / na
    mixed = lam * vv + (1.0 - lam) * aa
    norm = np.linalg.norm(mixed)
    unit = mixed / norm if norm > 1e-12 else mixed.copy()
    return ComposedQuery(vector=mixed, unit=unit)


def retrieve(pool: RetrievalPool, query, k: int, candidates: str = "visual") -> list:
    """Top-k candidate row indices by cosine to the query vector."""
    if candidates not in ("visual", "audio"):
        raise ValidationError(f"candidates must be visual|audio, got {candidates!r}")
    n = len(pool)
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in [1, {n}], got {k}")
    matrix = _normalize_rows(pool.visual if candidates == "visual" else pool.audio, candidates)
    q = ensure_vector(query, "query")
    nq = np.linalg.norm(q)
    if nq <= 1e-12:
        raise ValidationError("zero query vector")
    order = _rank_candidates(matrix, q / nq)
    return [int(i) for i in order[:k]]


def compositional_retrieve(pool: RetrievalPool, v, a, lam: float, k: int) -> list:
    """Top-k image rows for the interpolated audio-visual query."""
    query = compose(v, a, lam)
    return retrieve(pool, query.vector, k, candidates="visual")


@dataclass
class AlignmentReport:
    """Closeness diagnostics of the positive pairs in a pool."""

    alignment: float  # mean pairwise cosine
    magnitude_mean: float  # mean L2 gap of normalized pairs
    magnitude_std: float
    num_pairs: int

    def to_dict(self) -> dict:
        return {
            "alignment": self.alignment,
            "magnitude_mean": self.magnitude_mean,
            "magnitude_std": self.magnitude_std,
            "num_pairs": self.num_pairs,
        }


def alignment_magnitude(pool: RetrievalPool) -> AlignmentReport:
    """Mean pairwise cosine plus mean/std of the normalized embedding gap.

    For each pair, magnitude^2 == 2 - 2 * cosine (law of cosines on unit
    vectors), which ties the two diagnostics together.
    """
    v = _normalize_rows(pool.visual, "visual")
    a = _normalize_rows(pool.audio, "audio")
    cosines = np.clip(np.einsum("nd,nd->n", v, a), -1.0, 1.0)
    gaps = np.linalg.norm(v - a, axis=1)
    return AlignmentReport(
        alignment=float(cosines.mean()),
        magnitude_mean=float(gaps.mean()),
        magnitude_std=float(gaps.std()),
        num_pairs=len(pool),
    )
