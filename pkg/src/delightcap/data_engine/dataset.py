"""Training-pair generation from the two synthetic sources.

On-disk layout written by :func:`generate_dataset`::

    <out>/manifest.jsonl   one record per pair:
                           {index, source, subject, hdri_id, hdri_score,
                            yaw, seed, paths: {image, albedo, mask}}
    <out>/hdris.jsonl      {hdri_id, split, score, class}
    <out>/pairs/NNNNN_{image,albedo,mask}.pfm

Paths inside the manifest are relative to the manifest's directory.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import ConfigError, substream, substream_seed
from ..geometry import Camera
from ..io import read_jsonl, read_pfm, write_jsonl, write_pfm
from .align import align_face, warp, warp_mask
from .assets import head_asset
from .env import frequency_class, procedural_hdri, rotate_env, sample_hdri_index, with_scores
from .olat import capture_olat, relight_olat
from .render import render_scan

SOURCES = ("olat", "rendered")


@dataclass
class DataConfig:
    seed: int = 0
    split: str = "train"
    n_olat: int = 16
    n_rendered: int = 16
    n_olat_subjects: int = 4
    n_olat_views: int = 3
    n_scan_subjects: int = 4
    n_lights: int = 64
    hdri_seed: int = 0
    hdri_height: int = 32
    n_hdri_train: int = 18
    n_hdri_eval: int = 6
    train_hdris: list | None = None
    eval_hdris: list | None = None
    beta: float = 4.0
    freq_boundaries: list = field(default_factory=lambda: [0.2, 0.6])
    render_size: int = 96
    size: int = 64
    tex_res: int = 128
    focal: float = 110.0
    distance: float = 4.2
    cam_yaw_deg: float = 30.0
    cam_pitch_deg: float = 10.0
    olat_view_yaw_deg: float = 25.0
    jitter_px: float = 0.6
    exponent: float = 48.0

    def __post_init__(self):
        if self.split not in ("train", "eval"):
            raise ValueError(f"split must be 'train' or 'eval', got {self.split!r}")
        if self.size <= 0 or self.render_size <= 0:
            raise ValueError("image sizes must be positive")


@dataclass
class TrainingPair:
    image: np.ndarray
    albedo: np.ndarray
    mask: np.ndarray
    source: str
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        self.mask = np.asarray(self.mask) > 0.5
        for name in ("image", "albedo"):
            arr = getattr(self, name)
            if not np.isfinite(arr).all() or (arr < 0).any():
                raise ValueError(f"{name} must be finite and nonnegative")


def hdri_pool(cfg):
    """Procedural HDRI pool with ids and split assignment, scores precomputed."""
    rng = substream(cfg.hdri_seed, "hdri-pool")
    n = cfg.n_hdri_train + cfg.n_hdri_eval
    kinds = ("overcast", "sun", "studio")
    pool = [procedural_hdri(rng, cfg.hdri_height, kinds[i % 3], name=f"hdri_{i:03d}") for i in range(n)]
    with_scores(pool)
    ids = [e.name for e in pool]
    train = list(cfg.train_hdris) if cfg.train_hdris is not None else ids[: cfg.n_hdri_train]
    evals = list(cfg.eval_hdris) if cfg.eval_hdris is not None else ids[cfg.n_hdri_train:]
    overlap = sorted(set(train) & set(evals))
    if overlap:
        raise ConfigError(f"HDRI split overlap: {overlap[0]} is in both train and eval", key="eval_hdris")
    unknown = sorted((set(train) | set(evals)) - set(ids))
    if unknown:
        raise ConfigError(f"unknown HDRI id {unknown[0]}", key="train_hdris")
    by_id = {e.name: e for e in pool}
    return [by_id[i] for i in train], [by_id[i] for i in evals]


def _orbit_camera(cfg, yaw_deg, pitch_deg):
    yaw, pitch = np.radians(yaw_deg), np.radians(pitch_deg)
    eye = cfg.distance * np.array([np.sin(yaw) * np.cos(pitch), np.sin(pitch), np.cos(yaw) * np.cos(pitch)])
    return Camera.look_at(eye, [0, 0, 0], cfg.render_size, cfg.render_size, cfg.focal)


class _Sources:
    """Lazily built subject assets and OLAT captures."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._scan = {}
        self._olat = {}

    def scan_asset(self, i):
        if i not in self._scan:
            rng = substream(self.cfg.seed, "scan-asset", self.cfg.split, i)
            self._scan[i] = head_asset(rng, self.cfg.tex_res, name=f"scan_{self.cfg.split}_{i}")
        return self._scan[i]

    def olat_capture(self, subject, view):
        key = (subject, view)
        if key not in self._olat:
            cfg = self.cfg
            rng = substream(cfg.seed, "olat-asset", cfg.split, subject)
            asset = head_asset(rng, cfg.tex_res, name=f"olat_{cfg.split}_{subject}")
            yaws = np.linspace(-cfg.olat_view_yaw_deg, cfg.olat_view_yaw_deg, cfg.n_olat_views) \
                if cfg.n_olat_views > 1 else [0.0]
            cam = _orbit_camera(cfg, yaws[view], 0.0)
            crng = substream(cfg.seed, "olat-capture", cfg.split, subject, view)
            self._olat[key] = capture_olat(asset, cam, cfg.n_lights, crng, cfg.jitter_px,
                                           exponent=cfg.exponent, name=asset.name)
        return self._olat[key]


def _align_pair(cfg, image, albedo, mask, landmarks):
    aligned, tf = align_face(image, landmarks, cfg.size)
    alb = warp(albedo, tf, (cfg.size, cfg.size))
    m = warp_mask(mask, tf, (cfg.size, cfg.size))
    return np.clip(aligned, 0, None), np.clip(alb, 0, None), m


def make_pair(cfg, index, source, pool, sources):
    """Deterministically build pair ``index`` of ``source`` from its own seed."""
    seed = substream_seed(cfg.seed, "pair", cfg.split, source, index)
    rng = np.random.default_rng(seed)
    h = sample_hdri_index(pool, rng, cfg.beta)
    yaw = float(rng.uniform(0, 2 * np.pi))
    env = rotate_env(pool[h], yaw)
    if source == "olat":
        subject = int(rng.integers(cfg.n_olat_subjects))
        view = int(rng.integers(cfg.n_olat_views))
        cap = sources.olat_capture(subject, view)
        image = relight_olat(cap, env)
        albedo = cap.albedo_proxy()
        mask, landmarks = cap.mask, cap.landmarks
        subject_id = f"{cap.name}/view{view}"
    else:
        subject = int(rng.integers(cfg.n_scan_subjects))
        asset = sources.scan_asset(subject)
        cam = _orbit_camera(cfg, rng.uniform(-1, 1) * cfg.cam_yaw_deg, rng.uniform(-1, 1) * cfg.cam_pitch_deg)
        image, albedo, mask = render_scan(asset, env, cam, cfg.exponent)
        landmarks, _ = cam.project(asset.landmarks)
        subject_id = asset.name
    image, albedo, mask = _align_pair(cfg, image, albedo, mask, landmarks)
    meta = {
        "index": index, "source": source, "subject": subject_id,
        "hdri_id": pool[h].name, "hdri_score": round(float(pool[h].score), 6),
        "yaw": round(yaw, 9), "seed": seed,
    }
    return TrainingPair(image, albedo, mask, source, seed, meta)


def generate_pairs(cfg):
    """All pairs of ``cfg`` in index order (OLAT first, then rendered)."""
    train, evals = hdri_pool(cfg)
    pool = train if cfg.split == "train" else evals
    sources = _Sources(cfg)
    index = 0
    for source, count in (("olat", cfg.n_olat), ("rendered", cfg.n_rendered)):
        for _ in range(count):
            yield make_pair(cfg, index, source, pool, sources)
            index += 1


def generate_dataset(cfg, out_dir):
    """Write every pair of ``cfg`` below ``out_dir``; returns the manifest records."""
    out = Path(out_dir)
    (out / "pairs").mkdir(parents=True, exist_ok=True)
    train, evals = hdri_pool(cfg)
    write_jsonl(out / "hdris.jsonl", [
        {"hdri_id": e.name, "split": split, "score": round(float(e.score), 6),
         "class": frequency_class(e.score, cfg.freq_boundaries)}
        for split, group in (("train", train), ("eval", evals)) for e in group
    ])
    records = []
    for pair in generate_pairs(cfg):
        stem = f"pairs/{pair.meta['index']:05d}"
        paths = {"image": f"{stem}_image.pfm", "albedo": f"{stem}_albedo.pfm", "mask": f"{stem}_mask.pfm"}
        write_pfm(out / paths["image"], pair.image)
        write_pfm(out / paths["albedo"], pair.albedo)
        write_pfm(out / paths["mask"], pair.mask.astype(np.float32))
        records.append({**pair.meta, "paths": paths})
    write_jsonl(out / "manifest.jsonl", records)
    return records


def load_pairs(manifest, sources=None):
    """Read the pairs listed in a manifest file (optionally only some sources)."""
    manifest = Path(manifest)
    root = manifest.parent
    pairs = []
    for rec in read_jsonl(manifest):
        if rec.get("source") not in SOURCES:
            raise ValueError(f"{manifest}: record {rec.get('index')} has bad source {rec.get('source')!r}")
        if sources is not None and rec["source"] not in sources:
            continue
        p = rec["paths"]
        pairs.append(TrainingPair(read_pfm(root / p["image"]), read_pfm(root / p["albedo"]),
                                  read_pfm(root / p["mask"]), rec["source"], rec["seed"], rec))
    return pairs
