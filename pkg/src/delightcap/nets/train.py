"""Training loops and regimes for the base delighting network."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from ..config import substream_seed
from ..io import append_jsonl
from .losses import DelightLoss
from .model import SOURCES, DelightNet, ModelConfig, to_image, to_tensor

log = logging.getLogger(__name__)

REGIMES = ("mixed_dlm", "mixed_no_dlm", "olat_only", "rendered_only", "finetune")


@dataclass
class TrainConfig:
    regime: str = "mixed_dlm"
    steps: int = 200
    batch: int = 8
    lr_encoder: float = 1e-5
    lr_decoder: float = 1e-4
    l1_weight: float = 1.0
    perc_weight: float = 0.5
    p_olat: float = 0.5
    finetune_split: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if not 0 <= self.p_olat <= 1:
            raise ValueError("p_olat must be a probability")

    @property
    def source_probs(self):
        return {"olat": self.p_olat, "rendered": 1.0 - self.p_olat}


@dataclass
class TrainResult:
    model: DelightNet
    log: list = field(default_factory=list)
    phase_eval: list = field(default_factory=list)


def regime_model_config(model_cfg, regime):
    """Only ``mixed_dlm`` carries source tokens; every other regime uses K = 0."""
    return model_cfg if regime == "mixed_dlm" else replace(model_cfg, n_tokens=0)


def build_model(model_cfg, seed=0):
    torch.manual_seed(substream_seed(seed, "init") % (1 << 63))
    return DelightNet(model_cfg)


class PairTensors:
    """Pairs of one source stacked as tensors."""

    def __init__(self, pairs):
        self.image = to_tensor(np.stack([p.image for p in pairs]))
        self.albedo = to_tensor(np.stack([p.albedo for p in pairs]))
        self.mask = torch.as_tensor(np.stack([p.mask for p in pairs]), dtype=torch.float32)[:, None]

    def __len__(self):
        return len(self.image)


def split_sources(pairs):
    out = {s: [p for p in pairs if p.source == s] for s in SOURCES}
    return {s: PairTensors(v) for s, v in out.items() if v}


def phase_plan(cfg):
    """[(n_steps, source probabilities)] per training phase."""
    if cfg.regime in ("mixed_dlm", "mixed_no_dlm"):
        return [(cfg.steps, cfg.source_probs)]
    if cfg.regime == "olat_only":
        return [(cfg.steps, {"olat": 1.0, "rendered": 0.0})]
    if cfg.regime == "rendered_only":
        return [(cfg.steps, {"olat": 0.0, "rendered": 1.0})]
    first = int(round(cfg.steps * cfg.finetune_split))
    return [(first, {"olat": 1.0, "rendered": 0.0}), (cfg.steps - first, {"olat": 0.0, "rendered": 1.0})]


def evaluate_loss(model, pairs, source, loss_fn, batch=8):
    """Mean total loss of ``model`` on ``pairs`` under ``source`` tokens."""
    data = PairTensors(pairs)
    model.eval()
    vals = []
    with torch.no_grad():
        for s in range(0, len(data), batch):
            sl = slice(s, s + batch)
            pred = model(data.image[sl], data.mask[sl], source)
            for i in range(pred.shape[0]):
                vals.append(float(loss_fn(pred[i:i + 1], data.albedo[sl][i:i + 1], data.mask[sl][i:i + 1])[0]))
    return float(np.mean(vals))


def train(pairs, model_cfg, cfg, log_path=None, eval_pairs=None, model=None, loss_fn=None):
    """Train a base network on ``pairs`` under ``cfg.regime``.

    The finetune regime trains on OLAT pairs and then on rendered pairs; when
    ``eval_pairs`` are given their loss is recorded at the end of every phase.
    """
    model_cfg = regime_model_config(model_cfg, cfg.regime)
    data = split_sources(pairs)
    plan = phase_plan(cfg)
    for _, probs in plan:
        for s, p in probs.items():
            if p > 0 and s not in data:
                raise ValueError(f"regime {cfg.regime} needs {s} pairs but the dataset has none")
    if model is None:
        model = build_model(model_cfg, cfg.seed)
    loss_fn = loss_fn or DelightLoss(cfg.l1_weight, cfg.perc_weight)
    enc, dec = model.param_groups()
    opt = torch.optim.Adam([{"params": enc, "lr": cfg.lr_encoder}, {"params": dec, "lr": cfg.lr_decoder}])
    rng = np.random.default_rng(substream_seed(cfg.seed, "train"))
    result = TrainResult(model)
    step = 0
    for phase, (n_steps, probs) in enumerate(plan):
        p_olat = probs["olat"]
        for _ in range(n_steps):
            model.train()
            srcs = ["olat" if rng.random() < p_olat else "rendered" for _ in range(cfg.batch)]
            imgs, albs, masks = [], [], []
            for s in srcs:
                j = int(rng.integers(len(data[s])))
                imgs.append(data[s].image[j])
                albs.append(data[s].albedo[j])
                masks.append(data[s].mask[j])
            img, alb, msk = torch.stack(imgs), torch.stack(albs), torch.stack(masks)
            pred = model(img, msk, srcs)
            total, l1, perc = loss_fn(pred, alb, msk)
            opt.zero_grad()
            total.backward()
            opt.step()
            rec = {"step": step, "phase": phase, "regime": cfg.regime, "source": ",".join(srcs),
                   "loss_total": total.item(), "loss_l1": l1.item(), "loss_perc": perc.item()}
            result.log.append(rec)
            if log_path is not None:
                append_jsonl(log_path, rec)
            step += 1
        if eval_pairs is not None:
            src = "rendered" if model.n_tokens else "olat"
            result.phase_eval.append({"phase": phase, "loss": evaluate_loss(model, eval_pairs, src, loss_fn)})
        log.debug("phase %d done at step %d", phase, step)
    model.eval()
    return result


def predict(model, images, masks, source="rendered", batch=8):
    """Numpy (B, H, W, 3) images and (B, H, W) masks -> predicted albedo (B, H, W, 3)."""
    images = np.asarray(images)
    masks = np.asarray(masks, dtype=np.float32)
    if images.ndim == 3:
        images, masks = images[None], masks[None]
    model.eval()
    outs = []
    with torch.no_grad():
        for s in range(0, len(images), batch):
            x = to_tensor(images[s:s + batch])
            m = torch.as_tensor(masks[s:s + batch])[:, None]
            outs.append(to_image(model(x, m, source)))
    return np.concatenate(outs)


def model_state(model):
    return {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


def load_model_state(model_cfg, params):
    model = DelightNet(model_cfg)
    state = {k: torch.as_tensor(v) for k, v in params.items()}
    model.load_state_dict(state, strict=True)
    model.eval()
    return model


def default_toy_config(**kw):
    """Small network used by tests and demos (64 px, 64 tokens of width 64)."""
    base = dict(image_size=64, patch=8, dim=64, depth=4, heads=4, n_tokens=4)
    base.update(kw)
    return ModelConfig(**base)
