import numpy as np
import pytest

from avloc.errors import ValidationError
from avloc.retrieval import (
    RetrievalPool,
    alignment_magnitude,
    compose,
    compositional_retrieve,
    recall_at_k,
    retrieve,
)


def sort_oracle_recall(queries, candidates, ks):
    """Per-query explicit sort on (-cosine, index)."""
    qn = queries / np.linalg.norm(queries, axis=1, keepdims=True)
    cn = candidates / np.linalg.norm(candidates, axis=1, keepdims=True)
    n = qn.shape[0]
    hits = {k: 0 for k in ks}
    for i in range(n):
        sims = [(-float(cn[j] @ qn[i]), j) for j in range(n)]
        sims.sort()
        rank = [j for _, j in sims].index(i)
        for k in ks:
            hits[k] += rank < k
    return {k: hits[k] / n for k in ks}


def random_pool(seed, n=100, d=16):
    rng = np.random.default_rng(seed)
    return RetrievalPool(rng.normal(size=(n, d)), rng.normal(size=(n, d)))


# ---------------------------------------------------------------- recall

def test_recall_identical_pairs_orthogonal_across():
    pool = RetrievalPool(np.eye(6), np.eye(6))
    for direction in ("audio_to_image", "image_to_audio"):
        recalls = recall_at_k(pool, direction, [1])
        assert recalls[1] == 1.0


def test_recall_pool_of_one():
    pool = RetrievalPool(np.array([[1.0, 2.0]]), np.array([[2.0, 1.0]]))
    assert recall_at_k(pool, "audio_to_image", [1])[1] == 1.0


def test_recall_matches_sort_oracle():
    pool = random_pool(60)
    ks = [1, 5, 10]
    got = recall_at_k(pool, "audio_to_image", ks)
    expected = sort_oracle_recall(pool.audio, pool.visual, ks)
    assert got == expected
    got = recall_at_k(pool, "image_to_audio", ks)
    expected = sort_oracle_recall(pool.visual, pool.audio, ks)
    assert got == expected


def test_recall_monotone_in_k():
    pool = random_pool(61, n=40)
    recalls = recall_at_k(pool, "audio_to_image", [1, 2, 5, 10, 20, 40])
    values = list(recalls.values())
    assert values == sorted(values)
    assert recalls[40] == 1.0


def test_recall_invariant_under_shared_orthogonal_transform():
    pool = random_pool(62, n=50, d=12)
    rng = np.random.default_rng(63)
    q, _ = np.linalg.qr(rng.normal(size=(12, 12)))
    rotated = RetrievalPool(pool.visual @ q.T, pool.audio @ q.T)
    ks = [1, 5, 10]
    assert recall_at_k(pool, "audio_to_image", ks) == recall_at_k(rotated, "audio_to_image", ks)
    assert recall_at_k(pool, "image_to_audio", ks) == recall_at_k(rotated, "image_to_audio", ks)


def test_recall_validation():
    pool = random_pool(64, n=10)
    with pytest.raises(ValidationError):
        recall_at_k(pool, "audio_to_image", [11])
    with pytest.raises(ValidationError):
        recall_at_k(pool, "sideways", [1])
    with pytest.raises(ValidationError):
        RetrievalPool(np.ones((0, 3)), np.ones((0, 3)))


# ---------------------------------------------------------------- compose

def test_compose_lambda_one_is_visual():
    v = np.array([0.0, 1.0, 0.0])
    a = np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(compose(v, a, 1.0).vector, v, atol=1e-12)


def test_compose_lambda_zero_is_audio():
    v = np.array([0.0, 1.0])
    a = np.array([1.0, 0.0])
    np.testing.assert_allclose(compose(v, a, 0.0).vector, a, atol=1e-12)


def test_compose_midpoint_of_orthogonal_units():
    v = np.array([1.0, 0.0])
    a = np.array([0.0, 1.0])
    mixed = compose(v, a, 0.5)
    expected = 1.0 / np.sqrt(2.0)
    assert mixed.unit @ v == pytest.approx(expected, abs=1e-12)
    assert mixed.unit @ a == pytest.approx(expected, abs=1e-12)
    assert np.linalg.norm(mixed.unit) == pytest.approx(1.0, abs=1e-12)


def test_compose_normalizes_inputs_by_default():
    v = np.array([10.0, 0.0])
    a = np.array([0.0, 0.1])
    balanced = compose(v, a, 0.5).vector
    np.testing.assert_allclose(balanced, [0.5, 0.5], atol=1e-12)
    raw = compose(v, a, 0.5, normalize_inputs=False).vector
    np.testing.assert_allclose(raw, [5.0, 0.05], atol=1e-12)


def test_compose_dim_mismatch():
    with pytest.raises(ValidationError):
        compose(np.ones(3), np.ones(4), 0.5)


# ---------------------------------------------------------------- compositional retrieval

def test_compositional_endpoints_bitwise_match_single_modality():
    pool = random_pool(65, n=30, d=8)
    rng = np.random.default_rng(66)
    v = rng.normal(size=8)
    a = rng.normal(size=8)
    v_only = retrieve(pool, v / np.linalg.norm(v), 30, candidates="visual")
    a_only = retrieve(pool, a / np.linalg.norm(a), 30, candidates="visual")
    assert compositional_retrieve(pool, v, a, 1.0, 30) == v_only
    assert compositional_retrieve(pool, v, a, 0.0, 30) == a_only


def test_compositional_planted_dual_match_wins():
    # Candidate 2 matches both components; it must rank first at lambda = 0.5.
    visual = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [1.0 / np.sqrt(2), 1.0 / np.sqrt(2), 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    pool = RetrievalPool(visual, visual)
    v = np.array([1.0, 0.0, 0.0, 0.0])
    a = np.array([0.0, 1.0, 0.0, 0.0])
    ranked = compositional_retrieve(pool, v, a, 0.5, 4)
    assert ranked[0] == 2
    assert set(ranked[1:3]) == {0, 1}


# ---------------------------------------------------------------- alignment / magnitude

def test_alignment_identical_pairs():
    rng = np.random.default_rng(67)
    m = rng.normal(size=(10, 5))
    report = alignment_magnitude(RetrievalPool(m, m.copy()))
    assert report.alignment == pytest.approx(1.0, abs=1e-12)
    assert report.magnitude_mean == pytest.approx(0.0, abs=1e-9)
    assert report.magnitude_std == pytest.approx(0.0, abs=1e-9)


def test_alignment_antipodal_pairs():
    rng = np.random.default_rng(68)
    m = rng.normal(size=(8, 4))
    report = alignment_magnitude(RetrievalPool(m, -m))
    assert report.alignment == pytest.approx(-1.0, abs=1e-12)
    assert report.magnitude_mean == pytest.approx(2.0, abs=1e-9)
    assert report.magnitude_std == pytest.approx(0.0, abs=1e-9)


def test_alignment_matches_loop_oracle():
    rng = np.random.default_rng(69)
    pool = RetrievalPool(rng.normal(size=(50, 8)), rng.normal(size=(50, 8)))
    report = alignment_magnitude(pool)
    cosines = []
    gaps = []
    for i in range(50):
        v = pool.visual[i] / np.linalg.norm(pool.visual[i])
        a = pool.audio[i] / np.linalg.norm(pool.audio[i])
        cosines.append(float(v @ a))
        gaps.append(float(np.linalg.norm(v - a)))
    assert report.alignment == pytest.approx(np.mean(cosines), abs=1e-12)
    assert report.magnitude_mean == pytest.approx(np.mean(gaps), abs=1e-12)
    assert report.magnitude_std == pytest.approx(np.std(gaps), abs=1e-12)


def test_law_of_cosines_ties_diagnostics_together():
    rng = np.random.default_rng(70)
    pool = RetrievalPool(rng.normal(size=(40, 6)), rng.normal(size=(40, 6)))
    v = pool.visual / np.linalg.norm(pool.visual, axis=1, keepdims=True)
    a = pool.audio / np.linalg.norm(pool.audio, axis=1, keepdims=True)
    for i in range(40):
        gap_sq = float(np.linalg.norm(v[i] - a[i]) ** 2)
        cos = float(v[i] @ a[i])
        assert gap_sq == pytest.approx(2.0 - 2.0 * cos, abs=1e-9)


def test_alignment_rejects_zero_rows():
    bad = np.ones((3, 4))
    bad[1] = 0.0
    with pytest.raises(ValidationError):
        alignment_magnitude(RetrievalPool(bad, np.ones((3, 4))))
