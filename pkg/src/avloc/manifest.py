"""Dataset manifests: the JSON schema tying sample ids to heatmap or feature
files, annotations, categories, and interactive groups.

Entries reference either a precomputed heatmap or a (visual, audio) feature
pair; in the latter case the heatmap is the audio-visual correspondence map
computed on load. Paths are relative to the manifest file.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .correspondence import correspondence_map
from .errors import ManifestError
from .metrics import EvalSample, GroundTruth
from .tensorio import load_tensor

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    heatmap_path: str | None = None
    visual_path: str | None = None
    audio_path: str | None = None
    boxes: tuple = ()
    mask_path: str | None = None
    resolution: tuple | None = None
    category: str | None = None
    group_id: str | None = None
    positive: bool = True

    @classmethod
    def from_dict(cls, raw: dict, index: int) -> "ManifestEntry":
        if "id" not in raw:
            raise ManifestError(f"entry {index}: missing id")
        features = raw.get("features") or {}
        entry = cls(
            sample_id=str(raw["id"]),
            heatmap_path=raw.get("heatmap"),
            visual_path=features.get("visual"),
            audio_path=features.get("audio"),
            boxes=tuple(tuple(int(v) for v in box) for box in raw.get("boxes", [])),
            mask_path=raw.get("mask"),
            resolution=tuple(raw["resolution"]) if raw.get("resolution") else None,
            category=raw.get("category"),
            group_id=raw.get("group"),
            positive=bool(raw.get("positive", True)),
        )
        has_heatmap = entry.heatmap_path is not None
        has_features = entry.visual_path is not None and entry.audio_path is not None
        if not has_heatmap and not has_features:
            raise ManifestError(f"entry {entry.sample_id!r}: needs a heatmap or visual+audio features")
        if entry.positive and not entry.boxes and entry.mask_path is None:
            raise ManifestError(f"entry {entry.sample_id!r}: positive entry without annotation")
        if entry.boxes and entry.resolution is None:
            raise ManifestError(f"entry {entry.sample_id!r}: boxes need an explicit resolution")
        return entry

    def to_dict(self) -> dict:
        out: dict = {"id": self.sample_id, "positive": self.positive}
        if self.heatmap_path:
            out["heatmap"] = self.heatmap_path
        if self.visual_path and self.audio_path:
            out["features"] = {"visual": self.visual_path, "audio": self.audio_path}
        if self.boxes:
            out["boxes"] = [list(b) for b in self.boxes]
        if self.mask_path:
            out["mask"] = self.mask_path
        if self.resolution:
            out["resolution"] = list(self.resolution)
        if self.category is not None:
            out["category"] = self.category
        if self.group_id is not None:
            out["group"] = self.group_id
        return out


@dataclass
class Manifest:
    dataset: str
    entries: list
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate sample ids in manifest")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "dataset": self.dataset,
            "entries": [e.to_dict() for e in self.entries],
        }


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ManifestError(f"unsupported manifest schema_version {version!r}")
    entries = [ManifestEntry.from_dict(e, i) for i, e in enumerate(raw.get("entries", []))]
    if not entries:
        raise ManifestError(f"manifest {path} has no entries")
    return Manifest(dataset=str(raw.get("dataset", "unnamed")), entries=entries, base_dir=path.parent)


def write_manifest(manifest: Manifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n")


def _resolve(base: Path, rel: str) -> Path:
    p = base / rel
    if not p.exists():
        raise ManifestError(f"referenced file missing: {p}")
    return p


def entry_heatmap(manifest: Manifest, entry: ManifestEntry):
    """Load or compute the heatmap for one entry."""
    if entry.heatmap_path is not None:
        return load_tensor(_resolve(manifest.base_dir, entry.heatmap_path))
    visual = load_tensor(_resolve(manifest.base_dir, entry.visual_path))
    audio = load_tensor(_resolve(manifest.base_dir, entry.audio_path))
    return correspondence_map(visual, audio)


def entry_ground_truth(manifest: Manifest, entry: ManifestEntry) -> GroundTruth | None:
    if not entry.boxes and entry.mask_path is None:
        return None
    mask = None
    resolution = entry.resolution
    if entry.mask_path is not None:
        mask = load_tensor(_resolve(manifest.base_dir, entry.mask_path))
        if mask.ndim != 2:
            raise ManifestError(f"entry {entry.sample_id!r}: mask tensor must be rank 2")
        if resolution is None:
            resolution = mask.shape
    return GroundTruth(resolution=tuple(resolution), boxes=entry.boxes, mask=mask)


def manifest_samples(manifest: Manifest) -> list:
    """Materialize every manifest entry as an EvalSample."""
    samples = []
    for entry in manifest.entries:
        samples.append(
            EvalSample(
                sample_id=entry.sample_id,
                heatmap=entry_heatmap(manifest, entry),
                gt=entry_ground_truth(manifest, entry),
                group_id=entry.group_id,
                positive=entry.positive,
            )
        )
    return samples
