"""Spatial localization similarity, projected alignment similarity, and
correspondence-map extraction.

The localization similarity is the spatial mean of per-location cosines
between each visual feature column and the audio embedding; the alignment
similarity is the cosine of the two modalities after average pooling and a
per-modality affine projection.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .kernels import EPS_NORM, avg_pool, ensure_binary, ensure_feature_map, ensure_vector


@dataclass(frozen=True)
class ProjectionParams:
    """One affine projection ``x -> weight @ x + bias`` (one instance per modality)."""

    weight: np.ndarray  # (d_out, c)
    bias: np.ndarray  # (d_out,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValidationError(f"projection shape mismatch: weight {w.shape}, bias {b.shape}")
        if w.shape[0] < 1:
            raise ValidationError("projection output dim must be >= 1")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValidationError("projection parameters must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


def identity_projection(dim: int) -> ProjectionParams:
    """Projection performing no change: identity weight, zero bias."""
    return ProjectionParams(np.eye(dim), np.zeros(dim))


def init_projection(in_dim: int, out_dim: int | None = None, *, rng: np.random.Generator) -> ProjectionParams:
    """Seeded fan-in initialization: entries uniform in [-1/sqrt(c), 1/sqrt(c)]."""
    out_dim = in_dim if out_dim is None else out_dim
    bound = 1.0 / np.sqrt(in_dim)
    return ProjectionParams(
        rng.uniform(-bound, bound, size=(out_dim, in_dim)),
        rng.uniform(-bound, bound, size=out_dim),
    )


def project(x, p: ProjectionParams) -> np.ndarray:
    """Apply an affine projection to a vector."""
    vec = ensure_vector(x)
    if vec.shape[0] != p.in_dim:
        raise ValidationError(f"project: dim mismatch, input {vec.shape[0]} vs weight {p.weight.shape}")
    return p.weight @ vec + p.bias


def correspondence_map(v, a) -> np.ndarray:
    """Per-location cosine between each visual column v[:, x, y] and audio vector.

    Returns an (h, w) grid with values in [-1, 1].
    """
    vis = ensure_feature_map(v, "visual")
    aud = ensure_vector(a, "audio")
    if vis.shape[0] != aud.shape[0]:
        raise ValidationError(f"channel mismatch: visual {vis.shape[0]} vs audio {aud.shape[0]}")
    a_norm = np.linalg.norm(aud)
    if a_norm <= EPS_NORM:
        raise ValidationError("audio vector is zero")
    col_norms = np.linalg.norm(vis, axis=0)
    if (col_norms <= EPS_NORM).any():
        x, y = np.argwhere(col_norms <= EPS_NORM)[0]
        raise ValidationError(f"zero visual feature column at location ({x}, {y})")
    scores = np.tensordot(aud, vis, axes=(0, 0)) / (col_norms * a_norm)
    return np.clip(scores, -1.0, 1.0)


def sim_localize(v, a, mask=None) -> float:
    """Localization similarity: mean of the correspondence map over ``mask``.

    Without a mask the mean runs over all h*w locations. A mask must be
    binary, match the spatial dims, and select at least one pixel; the mean
    is over selected pixels only.
    """
    cmap = correspondence_map(v, a)
    if mask is None:
        return float(cmap.mean())
    m = ensure_binary(mask)
    if m.shape != cmap.shape:
        raise ValidationError(f"mask shape {m.shape} != map shape {cmap.shape}")
    selected = m.sum()
    if selected < 1:
        raise ValidationError("mask selects no pixels")
    return float((cmap * m).sum() / selected)


def sim_align(v, a, pv: ProjectionParams, pa: ProjectionParams) -> float:
    """Alignment similarity: cosine of projected pooled visual and projected audio."""
    zv = project(avg_pool(v), pv)
    za = project(ensure_vector(a, "audio"), pa)
    if zv.shape != za.shape:
        raise ValidationError(f"projection output dims differ: {zv.shape} vs {za.shape}")
    nv = np.linalg.norm(zv)
    na = np.linalg.norm(za)
    if nv <= EPS_NORM or na <= EPS_NORM:
        raise ValidationError("projected vector is zero")
    return float(np.clip(zv.dot(za) / (nv * na), -1.0, 1.0))
