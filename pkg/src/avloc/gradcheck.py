"""Central finite-difference verification of the analytic loss gradients.

The check perturbs every feature entry and projection parameter by +/- step,
evaluates the loss on the whole stack of perturbed inputs in one vectorized
pass, and compares the resulting central differences against the closed-form
gradients block by block. Relative error is measured on vector norms per
parameter block: ||g_a - g_fd|| / max(||g_a||, ||g_fd||), which is stable
where individual near-zero coordinates would make a per-entry ratio
meaningless under a fixed step size.
"""

from dataclasses import dataclass

import numpy as np

from .correspondence import ProjectionParams, init_projection
from .loss import (
    ContrastiveConfig,
    LossGradients,
    SamplePositives,
    _resolve_projections,
    _total_loss_raw,
    multi_positive_gradients,
    pack_batch,
)

_BLOCKS = ("visual", "audio", "pv_weight", "pv_bias", "pa_weight", "pa_bias")


@dataclass
class GradCheckResult:
    max_relative_error: float
    per_block: dict
    step: float

    def to_dict(self) -> dict:
        return {
            "max_relative_error": self.max_relative_error,
            "per_block": dict(self.per_block),
            "step": self.step,
        }


def make_toy_batch(seed: int, n: int = 4, c: int = 8, h: int = 3, w: int = 3, slots: int = 3):
    """Seeded random batch of positive sets plus seeded projections."""
    rng = np.random.default_rng(seed)
    batch = [
        SamplePositives(
            visual=tuple(rng.normal(size=(c, h, w)) for _ in range(slots)),
            audio=tuple(rng.normal(size=c) for _ in range(slots)),
        )
        for _ in range(n)
    ]
    pv = init_projection(c, rng=rng)
    pa = init_projection(c, rng=rng)
    return batch, (pv, pa)


def finite_difference_gradients(batch, cfg, projections, step: float = 1e-3) -> LossGradients:
    """Central differences of the total loss for every input coordinate."""
    visual, audio = pack_batch(batch)
    pv, pa = _resolve_projections(projections, visual.shape[2])
    parts = [visual, audio, pv.weight, pv.bias, pa.weight, pa.bias]
    sizes = [p.size for p in parts]
    shapes = [p.shape for p in parts]
    theta = np.concatenate([p.ravel() for p in parts])
    dim = theta.size

    # Stack of 2*dim perturbed parameter vectors, evaluated in one shot.
    stack = np.broadcast_to(theta, (2 * dim, dim)).copy()
    rows = np.arange(dim)
    stack[rows, rows] += step
    stack[dim + rows, rows] -= step

    offsets = np.cumsum([0] + sizes)
    blocks = [
        stack[:, offsets[k]: offsets[k + 1]].reshape((2 * dim,) + shapes[k])
        for k in range(len(parts))
    ]
    totals = _total_loss_raw(*blocks, cfg)
    grad_flat = (totals[:dim] - totals[dim:]) / (2 * step)

    out = [
        grad_flat[offsets[k]: offsets[k + 1]].reshape(shapes[k]) for k in range(len(parts))
    ]
    return LossGradients(*out)


def _block_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale < 1e-12:
        return 0.0
    return diff / scale


def gradient_check(
    batch,
    cfg: ContrastiveConfig | None = None,
    projections=None,
    step: float = 1e-3,
) -> GradCheckResult:
    """Compare analytic gradients against central differences."""
    cfg = cfg or ContrastiveConfig()
    analytic = multi_positive_gradients(batch, cfg, projections)
    numeric = finite_difference_gradients(batch, cfg, projections, step)
    per_block = {
        name: _block_error(getattr(analytic, name), getattr(numeric, name))
        for name in _BLOCKS
    }
    return GradCheckResult(
        max_relative_error=max(per_block.values()),
        per_block=per_block,
        step=step,
    )
