"""Detail enhancement: a skip-connected encoder-decoder that refines albedo
predictions using the input photo, trained on degraded ground truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy import ndimage

from ..config import substream_seed
from ..io import append_jsonl
from .losses import DelightLoss
from .model import resize, to_image, to_tensor


@dataclass
class DegradationSpec:
    noise_max: float = 0.05
    blur_max: float = 3.0

    def __post_init__(self):
        if self.noise_max < 0 or self.blur_max < 0:
            raise ValueError("degradation ranges must be nonnegative")

    def draw(self, rng):
        return {"blur_sigma": float(rng.uniform(0, self.blur_max)),
                "noise_sigma": float(rng.uniform(0, self.noise_max))}


def degrade_with(albedo, blur_sigma, noise_sigma, rng):
    out = np.asarray(albedo, dtype=np.float64)
    if blur_sigma > 0:
        out = ndimage.gaussian_filter(out, (blur_sigma, blur_sigma, 0), mode="reflect")
    if noise_sigma > 0:
        out = out + rng.normal(0.0, noise_sigma, out.shape)
    return np.clip(out, 0, None)


def degrade(albedo, spec, rng):
    """Gaussian blur then additive Gaussian noise with sigmas drawn from ``spec``."""
    draw = spec.draw(rng)
    return degrade_with(albedo, draw["blur_sigma"], draw["noise_sigma"], rng), draw


@dataclass
class EnhancerConfig:
    size: int = 768
    channels: int = 16
    levels: int = 4
    zero_final: bool = True
    final_bias: float = 0.5
    noise_max: float = 0.05
    blur_max: float = 3.0
    steps: int = 500
    batch: int = 8
    lr: float = 1e-4
    l1_weight: float = 1.0
    perc_weight: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.size % (2 ** (self.levels - 1)):
            raise ValueError(f"working size {self.size} must be divisible by {2 ** (self.levels - 1)}")

    @property
    def degradation(self):
        return DegradationSpec(self.noise_max, self.blur_max)


def _block(cin, cout):
    return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1), nn.GELU(),
                         nn.Conv2d(cout, cout, 3, padding=1), nn.GELU())


class EnhancerNet(nn.Module):
    """UNet over the concatenation (photo, albedo estimate): 6 channels in, 3 out."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        chans = [cfg.channels * 2 ** i for i in range(cfg.levels)]
        self.down = nn.ModuleList()
        cin = 6
        for c in chans:
            self.down.append(_block(cin, c))
            cin = c
        self.up = nn.ModuleList(_block(chans[i + 1] + chans[i], chans[i]) for i in reversed(range(cfg.levels - 1)))
        self.final = nn.Conv2d(chans[0], 3, 1)
        nn.init.constant_(self.final.bias, cfg.final_bias)
        if cfg.zero_final:
            nn.init.zeros_(self.final.weight)

    def forward(self, image, albedo):
        if image.shape != albedo.shape:
            raise ValueError(f"shape mismatch: image {tuple(image.shape)} vs albedo {tuple(albedo.shape)}")
        x = torch.cat([image, albedo], 1)
        skips = []
        for i, blk in enumerate(self.down):
            if i:
                x = F.avg_pool2d(x, 2)
            x = blk(x)
            skips.append(x)
        for blk, skip in zip(self.up, reversed(skips[:-1])):
            x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            x = blk(torch.cat([x, skip], 1))
        return torch.clamp(self.final(x), min=0.0)


def build_enhancer(cfg):
    torch.manual_seed(substream_seed(cfg.seed, "enhancer-init") % (1 << 63))
    return EnhancerNet(cfg)


def _prep(images, size):
    return resize(to_tensor(images), size)


def enhance(model, image, albedo, mask=None):
    """Refine albedo estimates; inputs are resized to the working resolution first.

    numpy (B, H, W, 3) or (H, W, 3) -> (B, S, S, 3) at working size S.
    """
    image = np.asarray(image)
    albedo = np.asarray(albedo)
    if image.shape != albedo.shape:
        raise ValueError(f"shape mismatch: image {image.shape} vs albedo {albedo.shape}")
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64)[..., None]
        image, albedo = image * m, albedo * m
    size = model.cfg.size
    model.eval()
    with torch.no_grad():
        return to_image(model(_prep(image, size), _prep(albedo, size)))


def _check_rendered(pairs):
    bad = [p for p in pairs if p.source != "rendered"]
    if bad:
        raise ValueError(f"enhancer trains on rendered pairs only; got a {bad[0].source!r} pair")


def make_enhancer_batch(pairs, idx, spec, rng, size):
    imgs, degs, tgts, masks = [], [], [], []
    for j in idx:
        p = pairs[j]
        m = p.mask.astype(np.float64)[..., None]
        deg, _ = degrade(p.albedo, spec, rng)
        imgs.append(p.image * m)
        degs.append(deg * m)
        tgts.append(p.albedo)
        masks.append(p.mask.astype(np.float32))
    mask = torch.as_tensor(np.stack(masks))[:, None]
    mask = (resize(mask, size) > 0.999).float()
    return _prep(np.stack(imgs), size), _prep(np.stack(degs), size), _prep(np.stack(tgts), size), mask


def train_enhancer(pairs, cfg, log_path=None, model=None):
    """Train to recover ground-truth albedo from (photo, degraded albedo)."""
    _check_rendered(pairs)
    if not pairs:
        raise ValueError("no rendered pairs to train on")
    model = model or build_enhancer(cfg)
    loss_fn = DelightLoss(cfg.l1_weight, cfg.perc_weight)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(substream_seed(cfg.seed, "degrade"))
    spec = cfg.degradation
    history = []
    for step in range(cfg.steps):
        model.train()
        idx = rng.integers(len(pairs), size=cfg.batch)
        img, deg, tgt, mask = make_enhancer_batch(pairs, idx, spec, rng, cfg.size)
        pred = model(img, deg)
        total, l1, perc = loss_fn(pred, tgt, mask)
        opt.zero_grad()
        total.backward()
        opt.step()
        rec = {"step": step, "regime": "detail", "source": "rendered", "loss_total": total.item(),
               "loss_l1": l1.item(), "loss_perc": perc.item()}
        history.append(rec)
        if log_path is not None:
            append_jsonl(log_path, rec)
    model.eval()
    return model, history


def enhancer_state(model):
    return {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


def load_enhancer_state(cfg, params):
    model = EnhancerNet(cfg)
    model.load_state_dict({k: torch.as_tensor(v) for k, v in params.items()}, strict=True)
    model.eval()
    return model
