"""Synthetic desk-scale benchmark: scenes of several sounding sources with
planted feature directions.

Each scene plants one embedding direction per source category inside a box
region of the visual feature map; the matching audio embedding is the same
direction plus seeded noise. Category directions (and the background
direction) are mutually orthogonal, so with zero noise the correspondence
map is exactly 1 inside a source's box and 0 elsewhere. Images are replaced
by geometric feature maps: the property under test is interactive
localization, not rendering.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .manifest import Manifest, ManifestEntry, write_manifest
from .tensorio import save_tensor


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Geometry and noise of the generated scenes."""

    resolution: tuple = (16, 16)
    sources_per_scene: int = 2
    channels: int = 8
    num_categories: int = 6
    noise: float = 0.0
    box_min: int = 3
    box_max: int = 6
    overlap_iou_cap: float = 0.0
    max_attempts: int = 500
    seed: int = 0

    def __post_init__(self):
        h, w = self.resolution
        if h < 4 or w < 4:
            raise ValidationError(f"resolution too small: {self.resolution}")
        if not 2 <= self.sources_per_scene <= 5:
            raise ValidationError(f"sources_per_scene must be 2..5, got {self.sources_per_scene}")
        if self.num_categories > self.channels - 1:
            raise ValidationError("need num_categories <= channels - 1 for orthogonal directions")
        if self.num_categories < self.sources_per_scene:
            raise ValidationError("need at least as many categories as sources per scene")
        if not 1 <= self.box_min <= self.box_max <= min(h, w):
            raise ValidationError(f"bad box size range [{self.box_min}, {self.box_max}]")
        if self.noise < 0:
            raise ValidationError("noise must be >= 0")

    def to_dict(self) -> dict:
        return {
            "resolution": list(self.resolution),
            "sources_per_scene": self.sources_per_scene,
            "channels": self.channels,
            "num_categories": self.num_categories,
            "noise": self.noise,
            "box_min": self.box_min,
            "box_max": self.box_max,
            "overlap_iou_cap": self.overlap_iou_cap,
            "max_attempts": self.max_attempts,
            "seed": self.seed,
        }


def category_directions(spec: SyntheticSceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """(num_categories, c) orthonormal category directions plus a background direction."""
    rng = np.random.default_rng([spec.seed, 0xD1])
    gauss = rng.normal(size=(spec.channels, spec.channels))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))  # fix the sign convention, keeps determinism
    return q[:, : spec.num_categories].T.copy(), q[:, spec.num_categories].copy()


def _box_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = max(0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union else 0.0


def _sample_boxes(spec: SyntheticSceneSpec, rng: np.random.Generator) -> list:
    # Rejection-resample whole scene layouts: a bad first box can make the
    # remaining sources unplaceable, so per-box retries are not enough.
    h, w = spec.resolution
    for _ in range(spec.max_attempts):
        boxes: list = []
        for _ in range(spec.sources_per_scene):
            placed = False
            for _ in range(50):
                bw = int(rng.integers(spec.box_min, spec.box_max + 1))
                bh = int(rng.integers(spec.box_min, spec.box_max + 1))
                x0 = int(rng.integers(0, w - bw + 1))
                y0 = int(rng.integers(0, h - bh + 1))
                box = (x0, y0, x0 + bw, y0 + bh)
                if all(_box_iou(box, other) <= spec.overlap_iou_cap for other in boxes):
                    boxes.append(box)
                    placed = True
                    break
            if not placed:
                break
        if len(boxes) == spec.sources_per_scene:
            return boxes
    raise ValidationError(
        f"could not place {spec.sources_per_scene} boxes within "
        f"{spec.max_attempts} attempts (overlap cap {spec.overlap_iou_cap})"
    )


@dataclass
class SceneRecord:
    scene_id: str
    categories: list
    boxes: list
    visual: np.ndarray
    audios: list
    negative_audios: list


def generate_scene(spec: SyntheticSceneSpec, scene_index: int, negatives: int = 0) -> SceneRecord:
    """One deterministic scene: planted visual map, per-source audio, annotations."""
    rng = np.random.default_rng([spec.seed, 0x5C, scene_index])
    directions, background = category_directions(spec)
    h, w = spec.resolution
    cats = sorted(int(c) for c in rng.choice(spec.num_categories, spec.sources_per_scene, replace=False))
    boxes = _sample_boxes(spec, rng)

    visual = np.tile(background[:, None, None], (1, h, w))
    for cat, (x0, y0, x1, y1) in zip(cats, boxes):
        visual[:, y0:y1, x0:x1] = directions[cat][:, None, None]
    if spec.noise > 0:
        visual = visual + spec.noise * rng.normal(size=visual.shape)

    audios = []
    for cat in cats:
        audio = directions[cat].copy()
        if spec.noise > 0:
            audio = audio + spec.noise * rng.normal(size=spec.channels)
        audios.append(audio)

    negative_audios = []
    unused = [c for c in range(spec.num_categories) if c not in cats]
    for k in range(negatives):
        if not unused:
            raise ValidationError("no unused categories left for negative samples")
        cat = unused[int(rng.integers(0, len(unused)))]
        audio = directions[cat].copy()
        if spec.noise > 0:
            audio = audio + spec.noise * rng.normal(size=spec.channels)
        negative_audios.append((cat, audio))

    return SceneRecord(
        scene_id=f"scene{scene_index:04d}",
        categories=cats,
        boxes=boxes,
        visual=visual,
        audios=audios,
        negative_audios=negative_audios,
    )


def generate_benchmark(
    spec: SyntheticSceneSpec,
    n_scenes: int,
    out_dir,
    negatives_per_scene: int = 0,
) -> Manifest:
    """Write n_scenes scenes plus a manifest under out_dir; fully seeded."""
    if n_scenes < 1:
        raise ValidationError("need at least one scene")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, w = spec.resolution
    entries = []
    for idx in range(n_scenes):
        scene = generate_scene(spec, idx, negatives_per_scene)
        visual_rel = f"{scene.scene_id}_visual.avt"
        save_tensor(out / visual_rel, scene.visual)
        for k, (cat, box, audio) in enumerate(zip(scene.categories, scene.boxes, scene.audios)):
            audio_rel = f"{scene.scene_id}_src{k}_audio.avt"
            mask_rel = f"{scene.scene_id}_src{k}_mask.avt"
            save_tensor(out / audio_rel, audio)
            mask = np.zeros((h, w))
            x0, y0, x1, y1 = box
            mask[y0:y1, x0:x1] = 1.0
            save_tensor(out / mask_rel, mask)
            entries.append(
                ManifestEntry(
                    sample_id=f"{scene.scene_id}_src{k}",
                    visual_path=visual_rel,
                    audio_path=audio_rel,
                    boxes=(box,),
                    mask_path=mask_rel,
                    resolution=(h, w),
                    category=f"cat{cat:02d}",
                    group_id=scene.scene_id,
                    positive=True,
                )
            )
        for k, (cat, audio) in enumerate(scene.negative_audios):
            audio_rel = f"{scene.scene_id}_neg{k}_audio.avt"
            save_tensor(out / audio_rel, audio)
            entries.append(
                ManifestEntry(
                    sample_id=f"{scene.scene_id}_neg{k}",
                    visual_path=visual_rel,
                    audio_path=audio_rel,
                    category=f"cat{cat:02d}",
                    group_id=scene.scene_id,
                    positive=False,
                )
            )
    manifest = Manifest(dataset=f"synthetic-{spec.sources_per_scene}src", entries=entries, base_dir=out)
    write_manifest(manifest, out / "manifest.json")
    return manifest
