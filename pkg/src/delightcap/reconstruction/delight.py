"""Per-view delighting: align, predict, enhance, warp back."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..data_engine.align import DegenerateLandmarksError, align_face, warp, warp_mask
from ..nets.enhancer import enhance
from ..nets.model import resize, to_image, to_tensor
from ..nets.train import predict

MIN_VIEWS = 3


class TooFewViewsError(ValueError):
    pass


@dataclass
class DelitView:
    name: str
    albedo: np.ndarray   # (H, W, 3) in the original camera frame
    valid: np.ndarray    # (H, W) bool


def _aligned_inputs(view, size):
    if view.landmarks is None:
        raise DegenerateLandmarksError("view has no landmarks")
    aligned, tf = align_face(view.image, view.landmarks, size)
    mask = warp_mask(view.mask, tf, (size, size))
    if not mask.any():
        raise DegenerateLandmarksError("aligned skin mask is empty")
    return np.clip(aligned, 0, None), mask, tf


def _canonical_albedo(model, enhancer, images, masks, source):
    size = model.cfg.image_size
    # one image per forward pass keeps results independent of how views are grouped
    pred = predict(model, images, masks, source, batch=1)
    if enhancer is None:
        return pred
    out = []
    for img, p, m in zip(images, pred, masks):
        e = enhance(enhancer, img, p, m)
        out.append(to_image(resize(to_tensor(e), size))[0])
    return np.stack(out)


def delight_views(views, model, enhancer=None, source="rendered", batch=True, min_views=MIN_VIEWS):
    """Delit albedo of every view, expressed in that view's own pixel frame.

    Views whose landmarks cannot be aligned are dropped with a warning.  Pixels
    outside the (warped-back) skin mask are flagged invalid.
    """
    size = model.cfg.image_size
    kept, images, masks, tfs = [], [], [], []
    for v in views:
        try:
            img, m, tf = _aligned_inputs(v, size)
        except DegenerateLandmarksError as exc:
            warnings.warn(f"view {v.name} dropped: {exc}", RuntimeWarning, stacklevel=2)
            continue
        kept.append(v)
        images.append(img)
        masks.append(m)
        tfs.append(tf)
    if len(kept) < min_views:
        raise TooFewViewsError(f"only {len(kept)} views could be aligned; at least {min_views} required")
    if batch:
        canon = _canonical_albedo(model, enhancer, np.stack(images), np.stack(masks), source)
    else:
        canon = np.concatenate([_canonical_albedo(model, enhancer, img[None], m[None], source)
                                for img, m in zip(images, masks)])
    out = []
    for v, alb, m, tf in zip(kept, canon, masks, tfs):
        shape = (v.camera.height, v.camera.width)
        inv = tf.inverse()
        back = np.clip(warp(alb * m[..., None], inv, shape), 0, None)
        valid = warp_mask(m, inv, shape) & (np.asarray(v.mask) > 0.5)
        out.append(DelitView(v.name, back * valid[..., None], valid))
    return out
