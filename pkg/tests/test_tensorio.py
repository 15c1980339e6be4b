import json
import struct

import numpy as np
import pytest

from avloc.correspondence import correspondence_map, init_projection
from avloc.errors import ManifestError, TensorFormatError, ValidationError
from avloc.manifest import Manifest, ManifestEntry, load_manifest, manifest_samples, write_manifest
from avloc.tensorio import (
    MAGIC,
    load_pool,
    load_projection,
    load_tensor,
    save_pool,
    save_projection,
    save_tensor,
)


def float32_random(rng, shape):
    # float32-representable payload so the round trip is bitwise.
    return rng.normal(size=shape).astype(np.float32).astype(np.float64)


# ---------------------------------------------------------------- round trips

@pytest.mark.parametrize("shape", [(5,), (3, 7), (8, 4, 4)])
def test_round_trip_bitwise(tmp_path, shape):
    rng = np.random.default_rng(80)
    tensor = float32_random(rng, shape)
    path = tmp_path / "t.avt"
    save_tensor(path, tensor)
    loaded = load_tensor(path)
    assert loaded.shape == shape
    np.testing.assert_array_equal(loaded, tensor)


def test_round_trip_file_bytes_stable(tmp_path):
    rng = np.random.default_rng(81)
    tensor = float32_random(rng, (4, 4))
    p1, p2 = tmp_path / "a.avt", tmp_path / "b.avt"
    save_tensor(p1, tensor)
    save_tensor(p2, load_tensor(p1))
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------- error codes

def _valid_blob():
    return MAGIC + struct.pack("<II", 1, 1) + struct.pack("<I", 2) + struct.pack("<2f", 1.0, 2.0)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.avt"
    path.write_bytes(b"WRONG-MAGIC-1234" + _valid_blob()[16:])
    with pytest.raises(TensorFormatError) as err:
        load_tensor(path)
    assert err.value.code == "magic"


def test_bad_version(tmp_path):
    blob = bytearray(_valid_blob())
    blob[16] = 9
    path = tmp_path / "v.avt"
    path.write_bytes(bytes(blob))
    with pytest.raises(TensorFormatError) as err:
        load_tensor(path)
    assert err.value.code == "version"


def test_rank_out_of_range(tmp_path):
    blob = MAGIC + struct.pack("<II", 1, 7) + struct.pack("<I", 2)
    path = tmp_path / "r.avt"
    path.write_bytes(blob)
    with pytest.raises(TensorFormatError) as err:
        load_tensor(path)
    assert err.value.code == "rank"


def test_dim_overflow(tmp_path):
    blob = MAGIC + struct.pack("<II", 1, 2) + struct.pack("<2I", 1 << 20, 1 << 20)
    path = tmp_path / "d.avt"
    path.write_bytes(blob)
    with pytest.raises(TensorFormatError) as err:
        load_tensor(path)
    assert err.value.code == "dims"


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.avt"
    path.write_bytes(_valid_blob()[:-4])
    with pytest.raises(TensorFormatError) as err:
        load_tensor(path)
    assert err.value.code == "truncated"


def test_trailing_bytes(tmp_path):
    path = tmp_path / "x.avt"
    path.write_bytes(_valid_blob() + b"\x00\x00")
    with pytest.raises(TensorFormatError) as err:
        load_tensor(path)
    assert err.value.code == "length"


def test_missing_file():
    with pytest.raises(TensorFormatError) as err:
        load_tensor("/definitely/not/here.avt")
    assert err.value.code == "io"


def test_save_rejects_non_finite(tmp_path):
    with pytest.raises(ValidationError):
        save_tensor(tmp_path / "nan.avt", np.array([1.0, np.inf]))


# ---------------------------------------------------------------- pools / projections

def test_pool_round_trip(tmp_path):
    rng = np.random.default_rng(82)
    ids = [f"id{k}" for k in range(7)]
    vectors = float32_random(rng, (7, 5))
    save_pool(tmp_path / "pool", ids, vectors, "audio")
    got_ids, got_vectors, modality = load_pool(tmp_path / "pool")
    assert got_ids == ids
    assert modality == "audio"
    np.testing.assert_array_equal(got_vectors, vectors)


def test_pool_sidecar_mismatch(tmp_path):
    rng = np.random.default_rng(83)
    save_pool(tmp_path / "pool", ["a", "b"], float32_random(rng, (2, 3)), "visual")
    sidecar = tmp_path / "pool.json"
    data = json.loads(sidecar.read_text())
    data["ids"] = ["a"]
    sidecar.write_text(json.dumps(data))
    with pytest.raises(TensorFormatError) as err:
        load_pool(tmp_path / "pool")
    assert err.value.code == "sidecar"


def test_projection_round_trip(tmp_path):
    rng = np.random.default_rng(84)
    params = init_projection(6, rng=rng)
    # Store float32-representable values for a bitwise check.
    from avloc.correspondence import ProjectionParams

    params = ProjectionParams(
        params.weight.astype(np.float32).astype(np.float64),
        params.bias.astype(np.float32).astype(np.float64),
    )
    save_projection(tmp_path / "proj", params)
    loaded = load_projection(tmp_path / "proj")
    np.testing.assert_array_equal(loaded.weight, params.weight)
    np.testing.assert_array_equal(loaded.bias, params.bias)


# ---------------------------------------------------------------- manifests

def _write_benchmarkish_manifest(tmp_path):
    rng = np.random.default_rng(85)
    visual = float32_random(rng, (4, 8, 8))
    audio = float32_random(rng, (4,))
    heat = float32_random(rng, (8, 8))
    save_tensor(tmp_path / "v.avt", visual)
    save_tensor(tmp_path / "a.avt", audio)
    save_tensor(tmp_path / "h.avt", heat)
    entries = [
        ManifestEntry(
            sample_id="feat",
            visual_path="v.avt",
            audio_path="a.avt",
            boxes=((0, 0, 4, 4),),
            resolution=(8, 8),
            group_id="g0",
        ),
        ManifestEntry(
            sample_id="heat",
            heatmap_path="h.avt",
            boxes=((2, 2, 6, 6),),
            resolution=(8, 8),
            group_id="g0",
        ),
    ]
    manifest = Manifest(dataset="unit", entries=entries, base_dir=tmp_path)
    write_manifest(manifest, tmp_path / "manifest.json")
    return visual, audio, heat


def test_manifest_round_trip_and_heatmaps(tmp_path):
    visual, audio, heat = _write_benchmarkish_manifest(tmp_path)
    manifest = load_manifest(tmp_path / "manifest.json")
    assert manifest.dataset == "unit"
    samples = manifest_samples(manifest)
    assert [s.sample_id for s in samples] == ["feat", "heat"]
    np.testing.assert_allclose(samples[0].heatmap, correspondence_map(visual, audio), atol=1e-12)
    np.testing.assert_array_equal(samples[1].heatmap, heat)
    assert samples[0].group_id == "g0"


def test_manifest_rejects_duplicates(tmp_path):
    entry = ManifestEntry(sample_id="x", heatmap_path="h.avt", boxes=((0, 0, 1, 1),), resolution=(4, 4))
    with pytest.raises(ManifestError):
        Manifest(dataset="d", entries=[entry, entry])


def test_manifest_schema_validation(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"schema_version": 99, "entries": [{"id": "a"}]}))
    with pytest.raises(ManifestError):
        load_manifest(path)
    path.write_text("not json")
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_manifest_entry_validation():
    with pytest.raises(ManifestError):
        ManifestEntry.from_dict({"id": "a"}, 0)  # no heatmap or features
    with pytest.raises(ManifestError):
        ManifestEntry.from_dict(
            {"id": "a", "heatmap": "h.avt", "boxes": [[0, 0, 1, 1]]}, 0
        )  # boxes without resolution


def test_manifest_missing_referenced_file(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(
        json.dumps(
            {
                "schema_version": 1,
                "dataset": "d",
                "entries": [
                    {
                        "id": "a",
                        "heatmap": "missing.avt",
                        "boxes": [[0, 0, 1, 1]],
                        "resolution": [4, 4],
                    }
                ],
            }
        )
    )
    manifest = load_manifest(path)
    with pytest.raises(ManifestError):
        manifest_samples(manifest)
