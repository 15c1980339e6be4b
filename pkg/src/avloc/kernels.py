"""Dense numeric primitives shared by every other module.

Array conventions (all computation is float64 internally):

* feature map  -- ``(c, h, w)`` array, channel-major
* grid         -- ``(h, w)`` array (heatmaps, masks, correspondence maps)
* vector       -- ``(c,)`` array (audio embeddings, pooled features)

Binary masks are float/int grids containing only 0 and 1.
"""

import numpy as np

from .errors import ValidationError

EPS_NORM = 1e-12


def _as_float64(x, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValidationError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name}: empty array")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name}: non-finite values")
    return arr


def ensure_vector(x, name: str = "vector") -> np.ndarray:
    """Validate and return a finite 1-d float64 array."""
    return _as_float64(x, name, 1)


def ensure_grid(x, name: str = "grid") -> np.ndarray:
    """Validate and return a finite 2-d float64 array."""
    return _as_float64(x, name, 2)


def ensure_feature_map(x, name: str = "feature map") -> np.ndarray:
    """Validate and return a finite 3-d ``(c, h, w)`` float64 array."""
    return _as_float64(x, name, 3)


def ensure_binary(g, name: str = "mask") -> np.ndarray:
    """Validate a grid that contains only 0/1 values."""
    arr = ensure_grid(g, name)
    if not np.isin(arr, (0.0, 1.0)).all():
        raise ValidationError(f"{name}: values other than 0/1")
    return arr


def l2_normalize(x, eps: float = EPS_NORM) -> tuple[np.ndarray, bool]:
    """Scale ``x`` to unit L2 norm.

    Returns ``(unit_vector, degenerate)``. When the norm is <= ``eps`` the
    input is returned unchanged with ``degenerate=True`` so bad feature files
    surface instead of silently passing through.
    """
    arr = ensure_vector(x)
    norm = float(np.linalg.norm(arr))
    if norm <= eps:
        return arr.copy(), True
    return arr / norm, False


def cosine(x, y) -> float:
    """Cosine similarity of two equal-length nonzero vectors, clipped to [-1, 1]."""
    a = ensure_vector(x, "x")
    b = ensure_vector(y, "y")
    if a.shape != b.shape:
        raise ValidationError(f"cosine: dim mismatch {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= EPS_NORM or nb <= EPS_NORM:
        raise ValidationError("cosine: zero vector")
    return float(np.clip(a.dot(b) / (na * nb), -1.0, 1.0))


def avg_pool(v) -> np.ndarray:
    """Spatial average pooling: ``(c, h, w) -> (c,)``."""
    arr = ensure_feature_map(v)
    return arr.mean(axis=(1, 2))


def _top_indices(flat: np.ndarray, count: int) -> np.ndarray:
    # Stable sort on negated values: descending by value, ties by ascending
    # linear index. Deterministic by construction.
    order = np.argsort(-flat, kind="stable")
    return order[:count]


def round_half_up(x: float) -> int:
    """round() with halves away from zero (not banker's rounding)."""
    return int(np.floor(x + 0.5))


def top_fraction_mask(g, fraction: float) -> np.ndarray:
    """Binary mask keeping the top ``round(fraction * h * w)`` pixels of ``g``.

    Ties are broken by ascending linear (row-major) index.
    """
    grid = ensure_grid(g)
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    count = round_half_up(fraction * grid.size)
    mask = np.zeros(grid.size, dtype=np.float64)
    if count > 0:
        mask[_top_indices(grid.ravel(), count)] = 1.0
    return mask.reshape(grid.shape)


def top_count_mask(g, count: int) -> np.ndarray:
    """Binary mask keeping exactly the ``count`` highest-valued pixels of ``g``."""
    grid = ensure_grid(g)
    if not 1 <= count <= grid.size:
        raise ValidationError(f"count must be in [1, {grid.size}], got {count}")
    mask = np.zeros(grid.size, dtype=np.float64)
    mask[_top_indices(grid.ravel(), int(count))] = 1.0
    return mask.reshape(grid.shape)


def _axis_coords(out_len: int, src_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Pixel-center convention: source coordinate (i + 0.5) * src/out - 0.5,
    # edges clamped.
    src = (np.arange(out_len) + 0.5) * (src_len / out_len) - 0.5
    lo = np.floor(src).astype(np.int64)
    t = src - lo
    lo_c = np.clip(lo, 0, src_len - 1)
    hi_c = np.clip(lo + 1, 0, src_len - 1)
    return lo_c, hi_c, t


def bilinear_resize(g, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a grid using pixel-center sampling with clamped edges."""
    grid = ensure_grid(g)
    if out_h < 1 or out_w < 1:
        raise ValidationError(f"output dims must be >= 1, got ({out_h}, {out_w})")
    r0, r1, tr = _axis_coords(out_h, grid.shape[0])
    c0, c1, tc = _axis_coords(out_w, grid.shape[1])
    tr = tr[:, None]
    tc = tc[None, :]
    top = grid[np.ix_(r0, c0)] * (1 - tc) + grid[np.ix_(r0, c1)] * tc
    bot = grid[np.ix_(r1, c0)] * (1 - tc) + grid[np.ix_(r1, c1)] * tc
    return top * (1 - tr) + bot * tr
