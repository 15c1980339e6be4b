"""Positive-set construction: exact nearest-neighbor search over embedding
pools, seeded concept sampling, audio temporal shifting, and assembly of the
per-sample positive triples with full provenance.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .loss import PositiveTriple, SamplePositives

DEFAULT_TOP_K = 1000


@dataclass(frozen=True)
class EmbeddingIndex:
    """Exact (brute-force) cosine index over L2-normalized embeddings."""

    ids: tuple
    vectors: np.ndarray  # (n, d), unit rows
    modality: str = "unspecified"

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or len(self.ids) != vectors.shape[0]:
            raise ValidationError("ids / vectors length mismatch")
        norms = np.linalg.norm(vectors, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValidationError("index rows must be unit-norm; use build_index")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_positions", {s: k for k, s in enumerate(self.ids)})

    def __len__(self) -> int:
        return len(self.ids)

    def row(self, sample_id) -> int:
        if sample_id not in self._positions:
            raise ValidationError(f"unknown query id {sample_id!r}")
        return self._positions[sample_id]


@dataclass(frozen=True)
class MiningConfig:
    k: int = DEFAULT_TOP_K
    exclude_anchor: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")

    def to_dict(self) -> dict:
        return {"k": self.k, "exclude_anchor": self.exclude_anchor, "seed": self.seed}


def build_index(ids, raw_vectors, modality: str = "unspecified") -> EmbeddingIndex:
    """Normalize pool vectors and build an exact cosine index.

    Duplicate ids and zero vectors are rejected.
    """
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate ids in embedding pool")
    vectors = np.asarray(raw_vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise ValidationError(f"expected ({len(ids)}, d) vector matrix, got {vectors.shape}")
    if vectors.shape[0] < 1:
        raise ValidationError("empty embedding pool")
    if not np.isfinite(vectors).all():
        raise ValidationError("non-finite embeddings")
    norms = np.linalg.norm(vectors, axis=1)
    if (norms <= 1e-12).any():
        bad = ids[int(np.argmax(norms <= 1e-12))]
        raise ValidationError(f"zero embedding vector for id {bad!r}")
    return EmbeddingIndex(ids=tuple(ids), vectors=vectors / norms[:, None], modality=modality)


def top_k(index: EmbeddingIndex, query_id, k: int, exclude_anchor: bool = True) -> list:
    """Ids of the k most cosine-similar pool entries, ties by ascending id."""
    row = index.row(query_id)
    sims = index.vectors @ index.vectors[row]
    candidates = [
        (float(-sims[j]), index.ids[j]) for j in range(len(index))
        if not (exclude_anchor and j == row)
    ]
    if k > len(candidates):
        raise ValidationError(f"k={k} exceeds pool size {len(candidates)} (after anchor exclusion)")
    candidates.sort()
    return [sample_id for _, sample_id in candidates[:k]]


def _query_rng(seed: int, query_id) -> np.random.Generator:
    # Per-query stream derived from the global seed and a stable id hash, so
    # draws are reproducible regardless of query order.
    digest = hashlib.sha256(f"{seed}:{query_id}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def sample_concept(index: EmbeddingIndex, query_id, cfg: MiningConfig):
    """Uniform seeded draw from the query's top-k neighborhood."""
    neighbors = top_k(index, query_id, cfg.k, cfg.exclude_anchor)
    rng = _query_rng(cfg.seed, query_id)
    return neighbors[int(rng.integers(0, len(neighbors)))]


def audio_time_shift(feature_sequence, shift: int) -> np.ndarray:
    """Circular shift of a (frames, d) feature sequence along the frame axis."""
    seq = np.asarray(feature_sequence, dtype=np.float64)
    if seq.ndim != 2:
        raise ValidationError(f"expected (frames, d) matrix, got shape {seq.shape}")
    frames = seq.shape[0]
    if abs(shift) > frames:
        raise ValidationError(f"shift {shift} out of range for {frames} frames")
    return np.roll(seq, shift, axis=0)


@dataclass(frozen=True)
class PairProvenance:
    """Where each positive-set member of one sample came from."""

    visual_concept_id: object
    audio_concept_id: object
    visual_view: str = "caller-supplied"
    audio_view: str = "caller-supplied"

    def to_dict(self) -> dict:
        return {
            "visual_concept_id": self.visual_concept_id,
            "audio_concept_id": self.audio_concept_id,
            "visual_view": self.visual_view,
            "audio_view": self.audio_view,
        }


@dataclass(frozen=True)
class PairedSample:
    sample_id: object
    visual: PositiveTriple
    audio: PositiveTriple
    provenance: PairProvenance

    def to_loss_sample(self) -> SamplePositives:
        return SamplePositives.from_triples(self.visual, self.audio)


@dataclass(frozen=True)
class PairBatch:
    samples: tuple
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def to_loss_batch(self) -> list:
        return [s.to_loss_sample() for s in self.samples]

    def enumerate_pairs(self):
        """All (sample_id, visual_slot, audio_slot) positive pairs: 9 per sample."""
        slot_names = ("anchor", "augmented", "concept")
        pairs = []
        for sample in self.samples:
            for sv in slot_names:
                for sa in slot_names:
                    pairs.append((sample.sample_id, sv, sa))
        return pairs


def _require(mapping, key, what):
    try:
        return np.asarray(mapping[key], dtype=np.float64)
    except KeyError:
        raise ValidationError(f"missing {what} for id {key!r}") from None


def assemble_pair_batch(
    anchor_ids,
    visual_features,
    audio_features,
    visual_views,
    audio_views,
    visual_index: EmbeddingIndex,
    audio_index: EmbeddingIndex,
    cfg: MiningConfig,
) -> PairBatch:
    """Build full positive triples for each anchor.

    ``visual_features`` / ``audio_features`` map sample ids to feature
    arrays and must cover every anchor and every sampled concept id;
    ``visual_views`` / ``audio_views`` carry one caller-supplied view per
    anchor. Concept members are mined from the indexes with cfg.
    """
    samples = []
    for anchor_id in anchor_ids:
        v_concept_id = sample_concept(visual_index, anchor_id, cfg)
        a_concept_id = sample_concept(audio_index, anchor_id, cfg)
        visual = PositiveTriple(
            anchor=_require(visual_features, anchor_id, "visual feature"),
            augmented=_require(visual_views, anchor_id, "visual view"),
            concept=_require(visual_features, v_concept_id, "visual pool feature"),
        )
        audio = PositiveTriple(
            anchor=_require(audio_features, anchor_id, "audio feature"),
            augmented=_require(audio_views, anchor_id, "audio view"),
            concept=_require(audio_features, a_concept_id, "audio pool feature"),
        )
        samples.append(
            PairedSample(
                sample_id=anchor_id,
                visual=visual,
                audio=audio,
                provenance=PairProvenance(
                    visual_concept_id=v_concept_id, audio_concept_id=a_concept_id
                ),
            )
        )
    return PairBatch(samples=tuple(samples), config=cfg.to_dict())
