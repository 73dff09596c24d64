import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delightcap import sphere
from delightcap.data_engine.env import (EmptyEnvironmentError, EnvironmentMap, classify_hdri_frequency,
                                        frequency_class, normalize_exposure, procedural_hdri, rotate_env,
                                        sample_hdri, sample_hdri_index, sampling_weights, with_scores)


def brute_force_score(pixels):
    """Band-limited energy via an explicit per-texel loop over the nine basis functions."""
    h, w = pixels.shape[:2]
    lum = pixels.mean(2)
    coeff = np.zeros(9)
    total = 0.0
    for r in range(h):
        t0, t1 = np.pi * r / h, np.pi * (r + 1) / h
        dw = (np.cos(t0) - np.cos(t1)) * 2 * np.pi / w
        for c in range(w):
            d = sphere.direction(np.pi * (r + 0.5) / h, 2 * np.pi * (c + 0.5) / w)
            coeff += sphere.sh_basis(d) * lum[r, c] * dw
            total += lum[r, c] ** 2 * dw
    return 1 - (coeff ** 2).sum() / total


def test_constant_map_scores_zero():
    assert classify_hdri_frequency(EnvironmentMap(np.full((16, 32, 3), 2.5))) == pytest.approx(0, abs=1e-12)


def test_low_order_map_scores_near_zero():
    d = sphere.equirect_directions(32)
    px = 1.0 + 0.3 * d[..., 1:2] + 0.2 * d[..., 0:1]
    assert classify_hdri_frequency(EnvironmentMap(np.repeat(px, 3, 2))) <= 0.01


def test_single_bright_texel_matches_brute_force_oracle():
    px = np.zeros((12, 24, 3))
    px[3, 7] = 50.0
    score = classify_hdri_frequency(EnvironmentMap(px))
    assert score == pytest.approx(brute_force_score(px), abs=1e-12)
    assert score > 0.5


def test_empty_environment_raises():
    with pytest.raises(EmptyEnvironmentError, match="empty environment"):
        classify_hdri_frequency(EnvironmentMap(np.zeros((4, 8, 3))))


def test_environment_validation():
    with pytest.raises(ValueError):
        EnvironmentMap(np.ones((4, 7, 3)))
    with pytest.raises(ValueError):
        EnvironmentMap(-np.ones((4, 8, 3)))
    with pytest.raises(ValueError):
        EnvironmentMap(np.full((4, 8, 3), np.nan))


def test_frequency_classes():
    assert [frequency_class(s) for s in (0.0, 0.19, 0.2, 0.5, 0.6, 1.0)] == [0, 0, 1, 1, 2, 2]


def test_procedural_kinds_order_by_frequency():
    rng = np.random.default_rng(0)
    scores = {k: classify_hdri_frequency(procedural_hdri(rng, 32, k)) for k in ("overcast", "studio", "sun")}
    assert scores["overcast"] < scores["studio"] < scores["sun"]


def test_exposure_normalisation():
    env = procedural_hdri(np.random.default_rng(1), 16, "sun", exposure=None)
    norm = normalize_exposure(env, 1.0)
    assert norm.total_energy().mean() / (4 * np.pi) == pytest.approx(1.0)


# -- sampling --------------------------------------------------------------------

def _pool(scores):
    out = [EnvironmentMap(np.ones((4, 8, 3)), f"m{i}", s) for i, s in enumerate(scores)]
    return out


def test_pool_of_one_always_returns_it():
    pool = _pool([0.3])
    rng = np.random.default_rng(0)
    assert all(sample_hdri(pool, rng) is pool[0] for _ in range(20))


def test_empty_pool_raises():
    with pytest.raises(ValueError):
        sample_hdri([], np.random.default_rng(0))


def test_beta_zero_is_uniform():
    pool = _pool([0.0, 0.5, 1.0, 0.2])
    rng = np.random.default_rng(5)
    n = 10_000
    counts = np.bincount([sample_hdri_index(pool, rng, beta=0.0) for _ in range(n)], minlength=4)
    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.abs(counts - n / 4).max() < 3 * sigma


def test_beta_four_gives_one_to_five_ratio():
    pool = _pool([0.0, 1.0])
    rng = np.random.default_rng(6)
    n = 10_000
    hits = sum(sample_hdri_index(pool, rng, beta=4.0) for _ in range(n))
    p = 5 / 6
    assert abs(hits - n * p) < 3 * np.sqrt(n * p * (1 - p))
    np.testing.assert_allclose(sampling_weights(pool, 4.0), [1 / 6, 5 / 6])


def test_sampling_requires_scores():
    with pytest.raises(ValueError):
        sampling_weights([EnvironmentMap(np.ones((4, 8, 3)))], 1.0)
    assert with_scores([EnvironmentMap(np.ones((4, 8, 3)))])[0].score == pytest.approx(0, abs=1e-12)


# -- rotation --------------------------------------------------------------------

def test_rotation_identities():
    env = procedural_hdri(np.random.default_rng(2), 16, "studio")
    np.testing.assert_array_equal(rotate_env(env, 0.0).pixels, env.pixels)
    np.testing.assert_allclose(rotate_env(env, 2 * np.pi).pixels, env.pixels, atol=1e-6)
    twice = rotate_env(rotate_env(env, np.pi), np.pi)
    np.testing.assert_allclose(twice.pixels, rotate_env(env, 2 * np.pi).pixels, atol=1e-5)
    with pytest.raises(ValueError):
        rotate_env(env, np.inf)


def test_rotation_moves_content_toward_increasing_phi():
    px = np.zeros((4, 8, 3))
    px[1, 2] = 1.0
    out = rotate_env(EnvironmentMap(px), 2 * np.pi / 8).pixels
    assert out[1, 3, 0] == 1.0


@given(st.floats(-10, 10))
def test_rotation_preserves_energy(yaw):
    env = procedural_hdri(np.random.default_rng(3), 16, "sun")
    np.testing.assert_allclose(rotate_env(env, yaw).total_energy(), env.total_energy(), rtol=1e-3)


@given(st.integers(-64, 64))
def test_score_exactly_invariant_for_texel_aligned_yaw(k):
    env = procedural_hdri(np.random.default_rng(4), 16, "sun")
    yaw = 2 * np.pi * k / 32
    assert classify_hdri_frequency(rotate_env(env, yaw)) == pytest.approx(classify_hdri_frequency(env), abs=1e-9)


@given(st.floats(-7, 7))
def test_score_invariant_for_smooth_maps_at_any_yaw(yaw):
    env = procedural_hdri(np.random.default_rng(5), 32, "overcast")
    assert abs(classify_hdri_frequency(rotate_env(env, yaw)) - classify_hdri_frequency(env)) <= 1e-3


def test_downsample_preserves_energy():
    env = procedural_hdri(np.random.default_rng(6), 32, "studio")
    np.testing.assert_allclose(env.downsample(8).total_energy(), env.total_energy(), rtol=1e-12)
