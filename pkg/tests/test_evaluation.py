import math
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from delightcap.evaluation import (PSNR_CAP, ColorTransform, ExternalScorer, evaluate_method, fit_color_transform,
                                   gaussian_window, masked_mse, psnr_masked, read_table, ssim_masked, write_table)


def normal_equations(pred, gt, mask):
    """Independent oracle: solve [p 1]^T [p 1] x = [p 1]^T g per channel."""
    m = mask > 0.5
    out = []
    for c in range(pred.shape[2]):
        a = np.stack([pred[..., c][m], np.ones(m.sum())], 1)
        out.append(np.linalg.solve(a.T @ a, a.T @ gt[..., c][m]))
    out = np.array(out)
    return out[:, 0], out[:, 1]


def brute_ssim(a, b, mask, size=11, sigma=1.5):
    """Explicit per-window SSIM, only at windows fully inside the mask."""
    g = gaussian_window(size, sigma)
    w2 = np.outer(g, g)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    h, w = mask.shape
    for c in range(a.shape[2]):
        for i in range(h - size + 1):
            for j in range(w - size + 1):
                if not mask[i:i + size, j:j + size].all():
                    continue
                x, y = a[i:i + size, j:j + size, c], b[i:i + size, j:j + size, c]
                mx, my = (w2 * x).sum(), (w2 * y).sum()
                vx = (w2 * (x - mx) ** 2).sum()
                vy = (w2 * (y - my) ** 2).sum()
                cxy = (w2 * (x - mx) * (y - my)).sum()
                vals.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def blob_mask(h, w, rng):
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0.4, 0.6, 2) * (h, w)
    return ((yy - cy) / (0.4 * h)) ** 2 + ((xx - cx) / (0.4 * w)) ** 2 < 1


# -- color alignment -------------------------------------------------------------

def test_identity_alignment():
    gt = np.random.default_rng(0).random((8, 8, 3))
    tf = fit_color_transform(gt, gt, np.ones((8, 8)))
    np.testing.assert_allclose(tf.scale, 1, atol=1e-12)
    np.testing.assert_allclose(tf.bias, 0, atol=1e-12)


def test_affine_corruption_is_inverted_exactly():
    gt = np.random.default_rng(1).random((8, 8, 3))
    tf = fit_color_transform(2 * gt + 0.1, gt, np.ones((8, 8)))
    np.testing.assert_allclose(tf.scale, 0.5, atol=1e-10)
    np.testing.assert_allclose(tf.bias, -0.05, atol=1e-10)


@pytest.mark.filterwarnings("ignore:channel")
@given(st.integers(0, 10_000))
def test_alignment_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    pred, gt = rng.random((12, 10, 3)), rng.random((12, 10, 3))
    mask = rng.random((12, 10)) > 0.3
    tf = fit_color_transform(pred, gt, mask)
    s, b = normal_equations(pred, gt, mask.astype(float))
    np.testing.assert_allclose(tf.scale, s, atol=1e-8)
    np.testing.assert_allclose(tf.bias, b, atol=1e-8)
    # optimality: alignment never increases the masked error
    assert masked_mse(tf.apply(pred), gt, mask) <= masked_mse(pred, gt, mask) + 1e-15


def test_constant_prediction_channel_warns():
    gt = np.random.default_rng(2).random((6, 6, 3))
    pred = gt.copy()
    pred[..., 1] = 0.4
    with pytest.warns(RuntimeWarning, match="constant prediction"):
        tf = fit_color_transform(pred, gt, np.ones((6, 6)))
    assert tf.scale[1] == 1.0
    assert tf.bias[1] == pytest.approx(gt[..., 1].mean() - 0.4)


def test_negative_scale_is_flagged():
    gt = np.random.default_rng(3).random((6, 6, 3))
    with pytest.warns(RuntimeWarning, match="negative scale"):
        tf = fit_color_transform(1 - gt, gt, np.ones((6, 6)))
    assert (tf.scale < 0).all() and tf.warnings


@pytest.mark.filterwarnings("ignore:channel")
@given(st.lists(st.floats(0.1, 5), min_size=3, max_size=3), st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.booleans())
def test_metrics_are_invariant_to_channel_affine_maps(scales, biases, flip):
    rng = np.random.default_rng(4)
    gt = rng.random((24, 24, 3))
    pred = gt + 0.05 * rng.standard_normal(gt.shape)
    mask = blob_mask(24, 24, rng)
    mask[4:20, 4:20] = True
    s = np.array(scales) * (-1 if flip else 1)
    base, _ = evaluate_method([pred], [gt], [mask])
    moved = ColorTransform(s, np.array(biases)).apply(pred)
    other, _ = evaluate_method([moved], [gt], [mask])
    assert abs(base[0].psnr - other[0].psnr) <= 1e-6
    assert abs(base[0].ssim - other[0].ssim) <= 1e-6


# -- PSNR ------------------------------------------------------------------------

def test_psnr_reference_values():
    a = np.zeros((4, 4, 3))
    m = np.ones((4, 4))
    assert psnr_masked(a, a, m) == math.inf
    assert psnr_masked(a, a + 0.1, m) == pytest.approx(20.0)
    assert psnr_masked(a, a + 1.0, m) == pytest.approx(0.0)
    with pytest.raises(ValueError, match="empty mask"):
        psnr_masked(a, a, np.zeros((4, 4)))


def test_metrics_ignore_pixels_outside_mask():
    rng = np.random.default_rng(5)
    gt, pred = rng.random((24, 24, 3)), rng.random((24, 24, 3))
    mask = np.zeros((24, 24), bool)
    mask[2:20, 3:22] = True
    other = pred.copy()
    other[~mask] = 7.0
    assert psnr_masked(pred, gt, mask) == psnr_masked(other, gt, mask)
    assert ssim_masked(pred, gt, mask) == ssim_masked(other, gt, mask)


# -- SSIM ------------------------------------------------------------------------

def test_ssim_identity_and_inversion():
    a = np.random.default_rng(6).random((20, 20, 3))
    m = np.ones((20, 20))
    assert ssim_masked(a, a, m) == pytest.approx(1.0)
    assert ssim_masked(a, 1 - a, m) < 1.0


@pytest.mark.parametrize("seed", range(4))
def test_ssim_matches_brute_force_windows(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((26, 24, 3))
    b = np.clip(a + 0.2 * rng.standard_normal(a.shape), 0, 1)
    mask = blob_mask(26, 24, rng)
    assert ssim_masked(a, b, mask) == pytest.approx(brute_ssim(a, b, mask), abs=1e-6)


def test_ssim_full_mask_matches_reference_library():
    rng = np.random.default_rng(7)
    a = rng.random((32, 32, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    ref = structural_similarity(a, b, channel_axis=-1, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False, data_range=1.0)
    assert ssim_masked(a, b, np.ones((32, 32))) == pytest.approx(ref, abs=1e-6)


def test_ssim_requires_a_full_window():
    with pytest.raises(ValueError, match="no valid SSIM window"):
        ssim_masked(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)), np.ones((8, 8)))
    m = np.zeros((20, 20))
    m[:5] = 1
    with pytest.raises(ValueError, match="no valid SSIM window"):
        ssim_masked(np.zeros((20, 20, 3)), np.zeros((20, 20, 3)), m)


# -- method evaluation -----------------------------------------------------------

def test_perfect_predictions_cap_psnr():
    gt = [np.random.default_rng(i).random((16, 16, 3)) for i in range(3)]
    recs, summary = evaluate_method(gt, gt, [np.ones((16, 16))] * 3)
    assert all(r.psnr == math.inf for r in recs)
    assert summary["method"]["psnr"] == PSNR_CAP
    assert summary["method"]["ssim"] == pytest.approx(1.0)


def test_random_affine_predictions_align_to_60db():
    rng = np.random.default_rng(8)
    gts = [rng.random((16, 16, 3)) for _ in range(5)]
    preds = [g * rng.uniform(0.3, 3, 3) + rng.uniform(-0.5, 0.5, 3) for g in gts]
    recs, _ = evaluate_method(preds, gts, [np.ones((16, 16))] * 5)
    assert min(r.psnr for r in recs) >= 60


def test_noise_ordering_is_preserved(tmp_path):
    rng = np.random.default_rng(9)
    gts = [rng.random((20, 20, 3)) for _ in range(4)]
    masks = [np.ones((20, 20))] * 4
    out = {}
    for name, sigma in (("clean", 0.02), ("noisy", 0.08)):
        preds = [g + sigma * rng.standard_normal(g.shape) for g in gts]
        _, summary = evaluate_method(preds, gts, masks, name, out_dir=tmp_path / name)
        out[name] = summary[name]
    assert out["clean"]["psnr"] > out["noisy"]["psnr"]
    assert out["clean"]["ssim"] > out["noisy"]["ssim"]
    assert (tmp_path / "clean" / "metrics.tsv").exists()
    assert len(list((tmp_path / "noisy" / "grids").glob("*.png"))) == 4


def test_length_mismatch_rejected():
    with pytest.raises(ValueError, match="length mismatch"):
        evaluate_method([np.zeros((4, 4, 3))], [], [])


def test_table_roundtrip(tmp_path):
    gt = [np.random.default_rng(i).random((16, 16, 3)) for i in range(2)]
    preds = [gt[0] + 0.05 * np.random.default_rng(5).standard_normal(gt[0].shape), gt[1]]
    recs, _ = evaluate_method(preds, gt, [np.ones((16, 16))] * 2, "m", ["a", "b"])
    write_table(tmp_path / "t.tsv", recs)
    back = read_table(tmp_path / "t.tsv")
    assert [r.subject for r in back] == ["a", "b"]
    assert back[1].psnr == PSNR_CAP
    assert back[0].psnr == pytest.approx(recs[0].psnr, abs=1e-4)
    assert back[0].perceptual is None


def test_external_scorer_contract(tmp_path):
    script = tmp_path / "score.py"
    script.write_text("import sys\nfrom delightcap.io import read_pfm\n"
                      "p, g = read_pfm(sys.argv[1]), read_pfm(sys.argv[2])\n"
                      "print(float(abs(p - g).mean()))\n")
    scorer = ExternalScorer([sys.executable, str(script)])
    gt = np.random.default_rng(0).random((16, 16, 3))
    recs, summary = evaluate_method([gt + 0.1], [gt], [np.ones((16, 16))], perceptual=scorer)
    assert recs[0].perceptual == pytest.approx(0.0, abs=1e-5)
    bad = ExternalScorer([sys.executable, "-c", "import sys; sys.exit(3)"])
    with pytest.raises(RuntimeError, match="scorer failed"):
        bad(gt, gt, np.ones((16, 16)))
