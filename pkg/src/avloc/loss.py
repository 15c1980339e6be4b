"""Multi-positive cross-modal contrastive objective with analytic gradients.

The objective pairs a visual positive set V (anchor, augmented view,
semantically similar sample) with the matching audio set A, forming
|V| x |A| slot pairs per batch sample. Each slot pair contributes an
InfoNCE term on the spatial localization similarity and, optionally, one
on the projected alignment similarity; an intra-modality alignment term
can be added on top. Gradients are closed-form (softmax-weighted cosine
gradients), not autodiff, and are verified against central finite
differences in the test suite.
"""

from dataclasses import dataclass, field

import numpy as np

from .correspondence import ProjectionParams, identity_projection, sim_align, sim_localize
from .errors import ValidationError
from .kernels import ensure_feature_map, ensure_vector


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(x - m), axis=axis))


def info_nce(sims, positive_index: int, temperature: float) -> float:
    """InfoNCE over one similarity row: -log softmax(s/tau) at the positive.

    Stabilized with log-sum-exp so arbitrarily large s/tau stays finite.
    """
    s = ensure_vector(sims, "similarities")
    if temperature <= 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    if not 0 <= positive_index < s.shape[0]:
        raise ValidationError(f"positive_index {positive_index} out of range for {s.shape[0]} sims")
    z = s / temperature
    return float(_logsumexp(z, axis=0) - z[positive_index])


@dataclass(frozen=True)
class ContrastiveConfig:
    """Knobs of the contrastive objective.

    ``symmetric`` averages the visual-anchor and audio-anchor directions.
    ``pair_reduction`` sums ("sum", the default) or means over slot pairs.
    ``negative_slots`` picks negatives from the same slot as the positive
    ("same", deterministic) or from seeded random slots ("random").
    """

    temperature: float = 0.07
    include_alignment_term: bool = True
    include_intra_modality_term: bool = False
    symmetric: bool = True
    pair_reduction: str = "sum"
    negative_slots: str = "same"
    negative_seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if self.pair_reduction not in ("sum", "mean"):
            raise ValidationError(f"pair_reduction must be sum|mean, got {self.pair_reduction!r}")
        if self.negative_slots not in ("same", "random"):
            raise ValidationError(f"negative_slots must be same|random, got {self.negative_slots!r}")

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "include_alignment_term": self.include_alignment_term,
            "include_intra_modality_term": self.include_intra_modality_term,
            "symmetric": self.symmetric,
            "pair_reduction": self.pair_reduction,
            "negative_slots": self.negative_slots,
            "negative_seed": self.negative_seed,
        }


@dataclass(frozen=True)
class SampleFeatures:
    """One batch sample: spatial visual feature map plus audio embedding."""

    visual: np.ndarray  # (c, h, w)
    audio: np.ndarray  # (c,)

    def __post_init__(self):
        object.__setattr__(self, "visual", ensure_feature_map(self.visual, "visual"))
        object.__setattr__(self, "audio", ensure_vector(self.audio, "audio"))


@dataclass(frozen=True)
class PositiveTriple:
    """The three positive members of one modality: anchor, view, concept sample."""

    anchor: np.ndarray
    augmented: np.ndarray
    concept: np.ndarray

    def __post_init__(self):
        for name in ("anchor", "augmented", "concept"):
            value = getattr(self, name)
            if value is None:
                raise ValidationError(f"positive triple missing member {name!r}")
            object.__setattr__(self, name, np.asarray(value, dtype=np.float64))

    @property
    def slots(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.anchor, self.augmented, self.concept)


@dataclass(frozen=True)
class SamplePositives:
    """Per-sample positive sets, one tuple of feature arrays per modality.

    Full triples give the 3 x 3 = 9 positive pairs; single-element sets
    reduce the objective to the plain cross-modal contrastive loss.
    """

    visual: tuple
    audio: tuple

    def __post_init__(self):
        if len(self.visual) < 1 or len(self.audio) < 1:
            raise ValidationError("positive sets must have at least one member per modality")
        object.__setattr__(self, "visual", tuple(np.asarray(v, dtype=np.float64) for v in self.visual))
        object.__setattr__(self, "audio", tuple(np.asarray(a, dtype=np.float64) for a in self.audio))

    @classmethod
    def from_triples(cls, visual: PositiveTriple, audio: PositiveTriple) -> "SamplePositives":
        return cls(visual=visual.slots, audio=audio.slots)

    @classmethod
    def from_sample(cls, sample: SampleFeatures) -> "SamplePositives":
        return cls(visual=(sample.visual,), audio=(sample.audio,))


@dataclass
class LossGradients:
    """Partial derivatives of the total loss w.r.t. every input."""

    visual: np.ndarray  # (n, Sv, c, h, w)
    audio: np.ndarray  # (n, Sa, c)
    pv_weight: np.ndarray
    pv_bias: np.ndarray
    pa_weight: np.ndarray
    pa_bias: np.ndarray


@dataclass
class LossReport:
    """Loss decomposition: total == per-pair grids summed (+ intra term)."""

    total: float
    per_pair_localization: np.ndarray  # (Sv, Sa) contributions to total
    per_pair_alignment: np.ndarray | None  # None when the term is disabled
    intra: float
    config: dict = field(default_factory=dict)
    gradients: LossGradients | None = None

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_pair_localization": self.per_pair_localization.tolist(),
            "per_pair_alignment": None
            if self.per_pair_alignment is None
            else self.per_pair_alignment.tolist(),
            "intra": self.intra,
            "config": dict(self.config),
        }


def pack_batch(batch) -> tuple[np.ndarray, np.ndarray]:
    """Stack a list of SamplePositives into (n, Sv, c, h, w) and (n, Sa, c)."""
    if len(batch) == 0:
        raise ValidationError("empty batch")
    sv = len(batch[0].visual)
    sa = len(batch[0].audio)
    for k, sample in enumerate(batch):
        if len(sample.visual) != sv or len(sample.audio) != sa:
            raise ValidationError(f"sample {k}: positive-set sizes differ across the batch")
    visual = np.stack([np.stack([ensure_feature_map(v) for v in s.visual]) for s in batch])
    audio = np.stack([np.stack([ensure_vector(a) for a in s.audio]) for s in batch])
    if visual.shape[2] != audio.shape[2]:
        raise ValidationError(
            f"channel mismatch: visual c={visual.shape[2]} vs audio c={audio.shape[2]}"
        )
    return visual, audio


def _resolve_projections(projections, channels: int) -> tuple[ProjectionParams, ProjectionParams]:
    if projections is None:
        p = identity_projection(channels)
        return p, p
    pv, pa = projections
    if pv.in_dim != channels or pa.in_dim != channels:
        raise ValidationError("projection input dims do not match feature channels")
    if pv.out_dim != pa.out_dim:
        raise ValidationError("projection output dims differ between modalities")
    return pv, pa


def _negative_slot_draws(cfg: ContrastiveConfig, sv: int, sa: int, n: int):
    """Seeded random candidate-slot choices; diagonals pinned to the true slot."""
    rng = np.random.default_rng(cfg.negative_seed)
    diag = np.arange(n)
    r_row = rng.integers(0, sa, size=(sv, sa, n, n))  # audio candidate slots
    r_col = rng.integers(0, sv, size=(sv, sa, n, n))  # visual candidate slots
    q_idx = np.arange(sa)[None, :, None]
    p_idx = np.arange(sv)[:, None, None]
    r_row[:, :, diag, diag] = np.broadcast_to(q_idx, (sv, sa, n))
    r_col[:, :, diag, diag] = np.broadcast_to(p_idx, (sv, sa, n))
    return r_row, r_col


def _gather_slot(sim: np.ndarray, slot_idx: np.ndarray, cand_axis: str) -> np.ndarray:
    """Pick per-candidate slots out of sim (..., i, p, j, q).

    cand_axis "audio": result[..., p, q, i, j] = sim[..., i, p, j, slot_idx[p, q, i, j]]
    cand_axis "visual": result[..., p, q, i, j] = sim[..., i, slot_idx[p,q,i,j], j, q]
    """
    if cand_axis == "audio":
        arr = np.swapaxes(sim, -4, -3)  # (..., p, i, j, q)
        arr = arr[..., :, None, :, :, :]  # (..., p, 1, i, j, q)
    else:
        arr = np.moveaxis(sim, (-4, -3, -2, -1), (-3, -1, -2, -4))  # (..., q, i, j, p)
        arr = arr[..., None, :, :, :, :]  # (..., 1, q, i, j, p)
    idx = slot_idx[..., None]
    idx = idx.reshape((1,) * (arr.ndim - idx.ndim) + idx.shape)
    lead = np.broadcast_shapes(arr.shape[:-1], idx.shape[:-1])
    arr = np.broadcast_to(arr, lead + arr.shape[-1:])
    idx = np.broadcast_to(idx, lead + (1,))
    return np.take_along_axis(arr, idx, axis=-1)[..., 0]


def _pair_tensor(sim: np.ndarray, cfg: ContrastiveConfig, direction: str, slot_draws) -> np.ndarray:
    """Arrange a similarity tensor (..., i, p, j, q) as (..., p, q, i, j)."""
    if cfg.negative_slots == "same" or slot_draws is None:
        return np.moveaxis(sim, (-4, -3, -2, -1), (-2, -4, -1, -3))
    r_row, r_col = slot_draws
    if direction == "row":
        return _gather_slot(sim, r_row, "audio")
    return _gather_slot(sim, r_col, "visual")


def _direction_losses(t: np.ndarray, tau: float, axis: int) -> np.ndarray:
    """Per-anchor InfoNCE losses along one direction of (..., p, q, i, j)."""
    diag = np.diagonal(t, axis1=-2, axis2=-1)
    return _logsumexp(t / tau, axis=axis) - diag / tau


def _direction_weights(t: np.ndarray, tau: float, axis: int, anchor_w: np.ndarray) -> np.ndarray:
    """d(loss)/d(t) for one direction, scaled by per-anchor weights."""
    z = t / tau
    m = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - m)
    soft = e / e.sum(axis=axis, keepdims=True)
    n = t.shape[-1]
    eye = np.eye(n)
    w = (soft - eye) / tau
    if axis == -1:  # anchors are rows
        w = w * anchor_w[:, None]
    else:  # anchors are columns
        w = w * anchor_w[None, :]
    return w


class _Forward:
    """All intermediates of one loss evaluation (supports leading batch dims)."""

    def __init__(self, visual, audio, wv, bv, wa, ba, cfg: ContrastiveConfig):
        self.cfg = cfg
        self.visual = visual
        self.audio = audio
        self.wv, self.bv, self.wa, self.ba = wv, bv, wa, ba
        *_, self.n, self.sv, self.c, self.h, self.w = visual.shape
        self.sa = audio.shape[-2]
        hw = self.h * self.w

        self.col_norms = np.sqrt(np.einsum("...ipchw,...ipchw->...iphw", visual, visual))
        if (self.col_norms <= 1e-12).any():
            raise ValidationError("zero visual feature column in batch")
        self.unit = visual / self.col_norms[..., :, :, None, :, :]
        self.ubar = self.unit.mean(axis=(-2, -1))  # (..., n, Sv, c)
        self.a_norm = np.sqrt(np.einsum("...jqc,...jqc->...jq", audio, audio))
        if (self.a_norm <= 1e-12).any():
            raise ValidationError("zero audio vector in batch")
        self.a_hat = audio / self.a_norm[..., None]
        self.pooled = visual.mean(axis=(-2, -1))  # (..., n, Sv, c)
        self.hw = hw

        self.sim_loc = np.einsum("...ipc,...jqc->...ipjq", self.ubar, self.a_hat)

        self.need_align = cfg.include_alignment_term or cfg.include_intra_modality_term
        if self.need_align:
            self.zv = np.einsum("...dc,...ipc->...ipd", wv, self.pooled) + bv[..., None, None, :]
            self.za = np.einsum("...dc,...jqc->...jqd", wa, audio) + ba[..., None, None, :]
            self.zv_norm = np.sqrt(np.einsum("...ipd,...ipd->...ip", self.zv, self.zv))
            self.za_norm = np.sqrt(np.einsum("...jqd,...jqd->...jq", self.za, self.za))
            if (self.zv_norm <= 1e-12).any() or (self.za_norm <= 1e-12).any():
                raise ValidationError("zero projected vector in batch")
            self.zv_hat = self.zv / self.zv_norm[..., None]
            self.za_hat = self.za / self.za_norm[..., None]
            self.sim_align = np.einsum("...ipd,...jqd->...ipjq", self.zv_hat, self.za_hat)

        self.slot_draws = None
        if cfg.negative_slots == "random":
            self.slot_draws = _negative_slot_draws(cfg, self.sv, self.sa, self.n)

    def _anchor_mean(self, per_anchor: np.ndarray, anchor_index) -> np.ndarray:
        if anchor_index is None:
            return per_anchor.mean(axis=-1)
        return per_anchor[..., anchor_index]

    def cross_term(self, sim: np.ndarray, anchor_index) -> np.ndarray:
        """Per-slot-pair contributions (..., p, q) of one cross-modal family."""
        cfg = self.cfg
        tau = cfg.temperature
        t_row = _pair_tensor(sim, cfg, "row", self.slot_draws)
        per_anchor = _direction_losses(t_row, tau, axis=-1)
        if cfg.symmetric:
            t_col = _pair_tensor(sim, cfg, "col", self.slot_draws)
            per_anchor = 0.5 * (per_anchor + _direction_losses(t_col, tau, axis=-2))
        grid = self._anchor_mean(per_anchor, anchor_index)
        if cfg.pair_reduction == "mean":
            grid = grid / (self.sv * self.sa)
        return grid

    def intra_term(self, anchor_index) -> np.ndarray:
        """Total intra-modality alignment contribution (leading dims preserved)."""
        cfg = self.cfg
        tau = cfg.temperature
        total = 0.0
        for z_hat, s in ((self.zv_hat, self.sv), (self.za_hat, self.sa)):
            if s < 2:
                continue
            sim = np.einsum("...ipd,...jrd->...ipjr", z_hat, z_hat)
            t = np.moveaxis(sim, (-4, -3, -2, -1), (-2, -4, -1, -3))  # (..., p, r, i, j)
            per_anchor = _direction_losses(t, tau, axis=-1)
            grid = self._anchor_mean(per_anchor, anchor_index)  # (..., p, r)
            off_diag = 1.0 - np.eye(s)
            total = total + (grid * off_diag).sum(axis=(-2, -1))
        return total


def _total_loss_raw(visual, audio, wv, bv, wa, ba, cfg: ContrastiveConfig, anchor_index=None):
    """Total loss for packed inputs; every array may carry leading batch dims."""
    fwd = _Forward(visual, audio, wv, bv, wa, ba, cfg)
    grid_loc = fwd.cross_term(fwd.sim_loc, anchor_index)
    total = grid_loc.sum(axis=(-2, -1))
    if cfg.include_alignment_term:
        total = total + fwd.cross_term(fwd.sim_align, anchor_index).sum(axis=(-2, -1))
    if cfg.include_intra_modality_term:
        total = total + fwd.intra_term(anchor_index)
    return total


def _cross_weights(fwd: _Forward, sim: np.ndarray, anchor_w: np.ndarray):
    """Loss weights per direction: (w_row, w_col), each (p, q, i, j) or None."""
    cfg = fwd.cfg
    tau = cfg.temperature
    scale = 1.0 / (fwd.sv * fwd.sa) if cfg.pair_reduction == "mean" else 1.0
    dir_scale = 0.5 * scale if cfg.symmetric else scale
    t_row = _pair_tensor(sim, cfg, "row", fwd.slot_draws)
    w_row = _direction_weights(t_row, tau, -1, anchor_w) * dir_scale
    w_col = None
    if cfg.symmetric:
        t_col = _pair_tensor(sim, cfg, "col", fwd.slot_draws)
        w_col = _direction_weights(t_col, tau, -2, anchor_w) * dir_scale
    return w_row, w_col


def _accumulate_cross(fwd: _Forward, w_row, w_col, anchor_feats, cand_feats):
    """Fold direction weights into gradients w.r.t. the two unit-feature stacks.

    anchor_feats: (n, Sv, c) unit features on the row-anchor side.
    cand_feats: (n, Sa, c) unit features on the candidate side.
    Returns (g_anchor, g_cand) with matching shapes.
    """
    g_anchor = np.zeros_like(anchor_feats)
    g_cand = np.zeros_like(cand_feats)
    n, sv = anchor_feats.shape[0], anchor_feats.shape[1]
    sa = cand_feats.shape[1]
    if fwd.slot_draws is None:
        if w_row is not None:
            g_anchor += np.einsum("pqij,jqc->ipc", w_row, cand_feats)
            g_cand += np.einsum("pqij,ipc->jqc", w_row, anchor_feats)
        if w_col is not None:
            g_anchor += np.einsum("pqij,jqc->ipc", w_col, cand_feats)
            g_cand += np.einsum("pqij,ipc->jqc", w_col, anchor_feats)
        return g_anchor, g_cand

    r_row, r_col = fwd.slot_draws
    i_idx = np.arange(n)[None, None, :, None]
    j_idx = np.arange(n)[None, None, None, :]
    p_idx = np.arange(sv)[:, None, None, None]
    q_idx = np.arange(sa)[None, :, None, None]
    shape4 = (sv, sa, n, n)
    if w_row is not None:
        cand_sel = cand_feats[np.broadcast_to(j_idx, shape4), r_row]  # (p,q,i,j,c)
        g_anchor += np.einsum("pqij,pqijc->ipc", w_row, cand_sel)
        anchor_bc = np.broadcast_to(
            anchor_feats[np.broadcast_to(i_idx, shape4), np.broadcast_to(p_idx, shape4)],
            shape4 + (anchor_feats.shape[-1],),
        )
        np.add.at(g_cand, (np.broadcast_to(j_idx, shape4), r_row), w_row[..., None] * anchor_bc)
    if w_col is not None:
        anchor_sel = anchor_feats[np.broadcast_to(i_idx, shape4), r_col]
        g_cand += np.einsum("pqij,pqijc->jqc", w_col, anchor_sel)
        cand_bc = np.broadcast_to(
            cand_feats[np.broadcast_to(j_idx, shape4), np.broadcast_to(q_idx, shape4)],
            shape4 + (cand_feats.shape[-1],),
        )
        np.add.at(g_anchor, (np.broadcast_to(i_idx, shape4), r_col), w_col[..., None] * cand_bc)
    return g_anchor, g_cand


def _gradients(fwd: _Forward, anchor_w: np.ndarray) -> LossGradients:
    cfg = fwd.cfg
    n, sv, sa = fwd.n, fwd.sv, fwd.sa
    d_visual = np.zeros_like(fwd.visual)
    d_audio = np.zeros_like(fwd.audio)
    g_ubar = np.zeros_like(fwd.ubar)
    g_ahat = np.zeros_like(fwd.a_hat)
    g_zv_hat = np.zeros(fwd.zv_hat.shape) if fwd.need_align else None
    g_za_hat = np.zeros(fwd.za_hat.shape) if fwd.need_align else None

    w_row, w_col = _cross_weights(fwd, fwd.sim_loc, anchor_w)
    ga, gc = _accumulate_cross(fwd, w_row, w_col, fwd.ubar, fwd.a_hat)
    g_ubar += ga
    g_ahat += gc

    if cfg.include_alignment_term:
        w_row, w_col = _cross_weights(fwd, fwd.sim_align, anchor_w)
        ga, gc = _accumulate_cross(fwd, w_row, w_col, fwd.zv_hat, fwd.za_hat)
        g_zv_hat += ga
        g_za_hat += gc

    if cfg.include_intra_modality_term:
        tau = cfg.temperature
        for z_hat, g_acc, s in ((fwd.zv_hat, g_zv_hat, sv), (fwd.za_hat, g_za_hat, sa)):
            if s < 2:
                continue
            sim = np.einsum("ipd,jrd->ipjr", z_hat, z_hat)
            t = np.moveaxis(sim, (-4, -3, -2, -1), (-2, -4, -1, -3))
            w = _direction_weights(t, tau, -1, anchor_w)
            w = w * (1.0 - np.eye(s))[:, :, None, None]
            g_acc += np.einsum("prij,jrc->ipc", w, z_hat)
            g_acc += np.einsum("prij,ipc->jrc", w, z_hat)

    # Chain rule: unit visual features back to raw feature maps.
    dots = np.einsum("ipc,ipchw->iphw", g_ubar, fwd.unit)
    d_visual += (g_ubar[:, :, :, None, None] - dots[:, :, None, :, :] * fwd.unit) / (
        fwd.hw * fwd.col_norms[:, :, None, :, :]
    )
    # Unit audio back to raw audio vectors.
    adots = np.einsum("jqc,jqc->jq", g_ahat, fwd.a_hat)
    d_audio += (g_ahat - adots[..., None] * fwd.a_hat) / fwd.a_norm[..., None]

    d_wv = np.zeros_like(fwd.wv)
    d_bv = np.zeros_like(fwd.bv)
    d_wa = np.zeros_like(fwd.wa)
    d_ba = np.zeros_like(fwd.ba)
    if fwd.need_align:
        # Normalized projected vectors back to pre-norm projections.
        zdots = np.einsum("ipd,ipd->ip", g_zv_hat, fwd.zv_hat)
        g_zv = (g_zv_hat - zdots[..., None] * fwd.zv_hat) / fwd.zv_norm[..., None]
        zdots = np.einsum("jqd,jqd->jq", g_za_hat, fwd.za_hat)
        g_za = (g_za_hat - zdots[..., None] * fwd.za_hat) / fwd.za_norm[..., None]
        # Affine projections back to parameters and inputs.
        d_wv += np.einsum("ipd,ipc->dc", g_zv, fwd.pooled)
        d_bv += g_zv.sum(axis=(0, 1))
        d_visual += np.einsum("dc,ipd->ipc", fwd.wv, g_zv)[:, :, :, None, None] / fwd.hw
        d_wa += np.einsum("jqd,jqc->dc", g_za, fwd.audio)
        d_ba += g_za.sum(axis=(0, 1))
        d_audio += np.einsum("dc,jqd->jqc", fwd.wa, g_za)

    return LossGradients(
        visual=d_visual, audio=d_audio,
        pv_weight=d_wv, pv_bias=d_bv, pa_weight=d_wa, pa_bias=d_ba,
    )


def multi_positive_loss(
    batch,
    cfg: ContrastiveConfig | None = None,
    projections=None,
    *,
    anchor_index: int | None = None,
    with_gradients: bool = False,
) -> LossReport:
    """Evaluate the multi-positive objective over a batch of positive sets.

    ``batch`` is a sequence of SamplePositives (or anything pack_batch
    accepts). The report's per-pair grids hold each slot pair's contribution
    to the total (mean over anchors unless ``anchor_index`` selects one).
    """
    cfg = cfg or ContrastiveConfig()
    visual, audio = pack_batch(batch)
    n = visual.shape[0]
    if anchor_index is not None and not 0 <= anchor_index < n:
        raise ValidationError(f"anchor_index {anchor_index} out of range for batch of {n}")
    pv, pa = _resolve_projections(projections, visual.shape[2])

    fwd = _Forward(visual, audio, pv.weight, pv.bias, pa.weight, pa.bias, cfg)
    grid_loc = fwd.cross_term(fwd.sim_loc, anchor_index)
    grid_align = fwd.cross_term(fwd.sim_align, anchor_index) if cfg.include_alignment_term else None
    intra = float(fwd.intra_term(anchor_index)) if cfg.include_intra_modality_term else 0.0
    total = float(grid_loc.sum() + (0.0 if grid_align is None else grid_align.sum()) + intra)

    gradients = None
    if with_gradients:
        if anchor_index is None:
            anchor_w = np.full(n, 1.0 / n)
        else:
            anchor_w = np.zeros(n)
            anchor_w[anchor_index] = 1.0
        gradients = _gradients(fwd, anchor_w)

    return LossReport(
        total=total,
        per_pair_localization=grid_loc,
        per_pair_alignment=grid_align,
        intra=intra,
        config=cfg.to_dict(),
        gradients=gradients,
    )


def multi_positive_gradients(batch, cfg=None, projections=None, *, anchor_index=None) -> LossGradients:
    """Analytic gradients of multi_positive_loss w.r.t. all features and projections."""
    report = multi_positive_loss(
        batch, cfg, projections, anchor_index=anchor_index, with_gradients=True
    )
    return report.gradients


def intra_modality_loss(batch, cfg: ContrastiveConfig | None = None, projections=None) -> float:
    """The intra-modality alignment term alone (mean over anchors)."""
    cfg = cfg or ContrastiveConfig()
    visual, audio = pack_batch(batch)
    pv, pa = _resolve_projections(projections, visual.shape[2])
    forced = ContrastiveConfig(
        temperature=cfg.temperature,
        include_alignment_term=cfg.include_alignment_term,
        include_intra_modality_term=True,
        symmetric=cfg.symmetric,
        pair_reduction=cfg.pair_reduction,
        negative_slots=cfg.negative_slots,
        negative_seed=cfg.negative_seed,
    )
    fwd = _Forward(visual, audio, pv.weight, pv.bias, pa.weight, pa.bias, forced)
    return float(fwd.intra_term(None))


def contrastive_pair_loss(
    anchor_index: int,
    batch,
    kind: str = "localize",
    cfg: ContrastiveConfig | None = None,
    projections=None,
) -> float:
    """Plain cross-modal contrastive term: anchor sample against all audios.

    With cfg.symmetric the audio-anchor direction is averaged in. ``batch``
    is a sequence of SampleFeatures.
    """
    cfg = cfg or ContrastiveConfig()
    if kind not in ("localize", "align"):
        raise ValidationError(f"kind must be localize|align, got {kind!r}")
    n = len(batch)
    if not 0 <= anchor_index < n:
        raise ValidationError(f"anchor_index {anchor_index} out of range")
    pv, pa = _resolve_projections(projections, batch[0].visual.shape[0])

    def sim(i: int, j: int) -> float:
        if kind == "localize":
            return sim_localize(batch[i].visual, batch[j].audio)
        return sim_align(batch[i].visual, batch[j].audio, pv, pa)

    row = np.array([sim(anchor_index, j) for j in range(n)])
    loss = info_nce(row, anchor_index, cfg.temperature)
    if cfg.symmetric:
        col = np.array([sim(i, anchor_index) for i in range(n)])
        loss = 0.5 * (loss + info_nce(col, anchor_index, cfg.temperature))
    return loss
