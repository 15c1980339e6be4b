"""Toy end-to-end training loop on generated benchmark data.

Gradient descent runs on per-sample feature perturbations plus the two
projection layers; the backbone features themselves come from the generated
scenes and stay fixed. Positive sets are assembled once up front: the
augmented view is the sample plus a fixed seeded offset, the concept member
is mined from a nearest-neighbor index over the training pool. Held-out
scenes stay untouched and are scored with the interactive localization
metrics at the end.
"""

from dataclasses import dataclass, field

import numpy as np

from .correspondence import ProjectionParams, init_projection
from .errors import AvlocError, ValidationError
from .kernels import avg_pool
from .loss import ContrastiveConfig, SamplePositives, multi_positive_loss
from .manifest import Manifest, manifest_samples
from .metrics import InteractiveResult, MetricConfig, interactive_iou
from .mining import MiningConfig, build_index, sample_concept
from .retrieval import RetrievalPool, alignment_magnitude
from .tensorio import load_tensor


@dataclass
class ToyTrainResult:
    step_losses: list
    initial_loss: float
    final_loss: float
    initial_alignment: dict  # {"backbone": AlignmentReport, "projected": AlignmentReport}
    final_alignment: dict
    heldout: InteractiveResult | None
    heldout_scenes: list
    projections: tuple
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "step_losses": self.step_losses,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "initial_alignment": {k: v.to_dict() for k, v in self.initial_alignment.items()},
            "final_alignment": {k: v.to_dict() for k, v in self.final_alignment.items()},
            "heldout_scenes": list(self.heldout_scenes),
            "config": dict(self.config),
        }
        if self.heldout is not None:
            out["heldout"] = {"iiou": self.heldout.iiou, "iauc": self.heldout.iauc}
        return out


class _TrainState:
    """Learnable state: per-sample perturbations and the projection pair."""

    def __init__(self, visuals, audios, channels, rng):
        self.visuals = visuals  # list of (c, h, w) base features
        self.audios = audios  # list of (c,) base features
        self.dv = [np.zeros_like(v) for v in visuals]
        self.da = [np.zeros_like(a) for a in audios]
        self.pv = init_projection(channels, rng=rng)
        self.pa = init_projection(channels, rng=rng)

    def visual_of(self, i):
        return self.visuals[i] + self.dv[i]

    def audio_of(self, i):
        return self.audios[i] + self.da[i]


def _load_training_pool(manifest: Manifest):
    """Base features of all positive entries, grouped by scene."""
    ids, visuals, audios, groups = [], [], [], []
    for entry in manifest.entries:
        if not entry.positive:
            continue
        if entry.visual_path is None or entry.audio_path is None:
            raise ValidationError(f"entry {entry.sample_id!r}: toy training needs visual+audio features")
        ids.append(entry.sample_id)
        visuals.append(load_tensor(manifest.base_dir / entry.visual_path))
        audios.append(load_tensor(manifest.base_dir / entry.audio_path))
        groups.append(entry.group_id)
    if not ids:
        raise ValidationError("manifest has no positive feature entries")
    return ids, visuals, audios, groups


def _alignment_reports(state: _TrainState, indices) -> dict:
    pooled = np.stack([avg_pool(state.visual_of(i)) for i in indices])
    audio = np.stack([state.audio_of(i) for i in indices])
    backbone = alignment_magnitude(RetrievalPool(pooled, audio, source="backbone"))
    proj_v = pooled @ state.pv.weight.T + state.pv.bias
    proj_a = audio @ state.pa.weight.T + state.pa.bias
    projected = alignment_magnitude(RetrievalPool(proj_v, proj_a, source="projected"))
    return {"backbone": backbone, "projected": projected}


def toy_train(
    manifest: Manifest,
    cfg: ContrastiveConfig | None = None,
    steps: int = 200,
    lr: float = 0.1,
    seed: int = 0,
    batch_size: int | None = 16,
    heldout_fraction: float = 0.4,
    view_noise: float = 0.1,
    mining_k: int = 5,
    eval_variant: str = "adaptive",
    metric_cfg: MetricConfig | None = None,
) -> ToyTrainResult:
    """Run seeded gradient descent on the contrastive objective.

    Returns the loss trace, alignment diagnostics before/after, the final
    projections, and interactive localization scores on held-out scenes.
    Aborts with the trace attached if the loss goes non-finite.
    """
    cfg = cfg or ContrastiveConfig()
    metric_cfg = metric_cfg or MetricConfig()
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    ids, visuals, audios, groups = _load_training_pool(manifest)
    channels = visuals[0].shape[0]

    scene_ids = sorted(set(groups))
    rng = np.random.default_rng([seed, 0x70])
    order = list(rng.permutation(len(scene_ids)))
    n_held = int(round(heldout_fraction * len(scene_ids)))
    heldout_scenes = {scene_ids[j] for j in order[:n_held]}
    train_idx = [k for k, g in enumerate(groups) if g not in heldout_scenes]
    if len(train_idx) < 2:
        raise ValidationError("need at least two training samples after the held-out split")

    state = _TrainState(
        [visuals[k] for k in train_idx], [audios[k] for k in train_idx], channels, rng
    )
    n = len(train_idx)
    train_ids = [ids[k] for k in train_idx]

    # Fixed seeded view offsets (feature-space augmentation at desk scale).
    view_v = [view_noise * rng.normal(size=v.shape) for v in state.visuals]
    view_a = [view_noise * rng.normal(size=a.shape) for a in state.audios]

    # Concept assignment mined once from the training pool.
    pooled = np.stack([avg_pool(v) for v in state.visuals])
    vis_index = build_index(train_ids, pooled, modality="visual")
    aud_index = build_index(train_ids, np.stack(state.audios), modality="audio")
    mining = MiningConfig(k=min(mining_k, n - 1), exclude_anchor=True, seed=seed)
    pos_of = {sid: j for j, sid in enumerate(train_ids)}
    concept_of = [pos_of[sample_concept(vis_index, sid, mining)] for sid in train_ids]
    # Audio concepts follow the audio index; kept separate from the visual pick.
    audio_concept_of = [pos_of[sample_concept(aud_index, sid, mining)] for sid in train_ids]

    def build_batch(indices):
        samples = []
        for i in indices:
            vc, ac = concept_of[i], audio_concept_of[i]
            samples.append(
                SamplePositives(
                    visual=(state.visual_of(i), state.visual_of(i) + view_v[i], state.visual_of(vc)),
                    audio=(state.audio_of(i), state.audio_of(i) + view_a[i], state.audio_of(ac)),
                )
            )
        return samples

    def full_loss() -> float:
        return multi_positive_loss(build_batch(range(n)), cfg, (state.pv, state.pa)).total

    initial_loss = full_loss()
    initial_alignment = _alignment_reports(state, range(n))

    step_rng = np.random.default_rng([seed, 0x57])
    bsz = n if batch_size is None else min(batch_size, n)
    step_losses = []
    for step in range(steps):
        indices = list(step_rng.choice(n, size=bsz, replace=False)) if bsz < n else list(range(n))
        report = multi_positive_loss(
            build_batch(indices), cfg, (state.pv, state.pa), with_gradients=True
        )
        if not np.isfinite(report.total):
            err = AvlocError(f"loss diverged to {report.total} at step {step}")
            err.trace = step_losses
            raise err
        step_losses.append(float(report.total))
        g = report.gradients
        for b, i in enumerate(indices):
            vc, ac = concept_of[i], audio_concept_of[i]
            state.dv[i] -= lr * (g.visual[b, 0] + g.visual[b, 1])
            state.dv[vc] -= lr * g.visual[b, 2]
            state.da[i] -= lr * (g.audio[b, 0] + g.audio[b, 1])
            state.da[ac] -= lr * g.audio[b, 2]
        state.pv = ProjectionParams(
            state.pv.weight - lr * g.pv_weight, state.pv.bias - lr * g.pv_bias
        )
        state.pa = ProjectionParams(
            state.pa.weight - lr * g.pa_weight, state.pa.bias - lr * g.pa_bias
        )

    final_loss = full_loss()
    final_alignment = _alignment_reports(state, range(n))

    heldout_result = None
    held_samples = [
        s for s in manifest_samples(manifest)
        if s.positive and s.group_id in heldout_scenes
    ]
    if held_samples:
        heldout_result = interactive_iou(held_samples, variant=eval_variant, cfg=metric_cfg)

    return ToyTrainResult(
        step_losses=step_losses,
        initial_loss=initial_loss,
        final_loss=final_loss,
        initial_alignment=initial_alignment,
        final_alignment=final_alignment,
        heldout=heldout_result,
        heldout_scenes=sorted(heldout_scenes),
        projections=(state.pv, state.pa),
        config={
            "steps": steps,
            "lr": lr,
            "seed": seed,
            "batch_size": bsz,
            "heldout_fraction": heldout_fraction,
            "view_noise": view_noise,
            "mining_k": mining_k,
            "eval_variant": eval_variant,
            "loss": cfg.to_dict(),
            "metrics": metric_cfg.to_dict(),
        },
    )
