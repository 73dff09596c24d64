"""End-to-end appearance capture from a scene bundle."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..io import write_pfm, write_preview
from .delight import delight_views
from .frames import select_frames
from .fusion import DEFAULT_GAMMA, fuse_to_uv
from .lighting import fit_sh_lighting, observe_views, write_sh
from .refine import RefineConfig, refine_albedo


@dataclass
class ReconConfig:
    n_views: int = 16
    resolution: int = 1024
    gamma: float = DEFAULT_GAMMA
    depth_eps: float = 1e-3
    source: str = "rendered"
    refine: RefineConfig = field(default_factory=RefineConfig)


@dataclass
class ReconResult:
    fused: object
    lighting: object
    refined: object
    views_used: list
    report: dict


def reconstruct(bundle, cfg=None, model=None, enhancer=None):
    """Select views, delight them (or use stored albedo), fuse, fit SH, refine.

    Without a ``model`` every view must carry a ground-truth albedo image,
    which isolates geometry, fusion and solver from network quality.
    """
    cfg = cfg or ReconConfig()
    t0 = time.perf_counter()
    views = bundle.views
    v = min(cfg.n_views, len(views))
    picked = sorted(select_frames([x.image for x in views], v))
    views = [views[i] for i in picked]
    if model is not None:
        delit = delight_views(views, model, enhancer, cfg.source)
        by_name = {d.name: d for d in delit}
        views = [x for x in views if x.name in by_name]
        albedos = [by_name[x.name].albedo for x in views]
        masks = [by_name[x.name].valid for x in views]
    else:
        missing = [x.name for x in views if x.albedo is None]
        if missing:
            raise ValueError(f"view {missing[0]}: no albedo image and no delighting model given")
        albedos = [x.albedo for x in views]
        masks = [np.asarray(x.mask) > 0.5 for x in views]
    mesh = bundle.mesh
    eps = cfg.depth_eps * mesh.scale
    fused = fuse_to_uv(albedos, masks, mesh, [x.camera for x in views], cfg.resolution, cfg.gamma, eps)
    obs = observe_views(mesh, views)
    lighting = fit_sh_lighting(views, fused, mesh, obs)
    refined = refine_albedo(fused, lighting, mesh, views, cfg.refine, obs)
    report = {
        "views": [x.name for x in views],
        "n_views": len(views),
        "resolution": cfg.resolution,
        "valid_texels": int(fused.valid.sum()),
        "sh_residual": [float(r) for r in lighting.residual],
        "refine_objective": refined.objective,
        "refine_iters": refined.iters,
        "refine_history": refined.history,
        "delighting": "model" if model is not None else "stored albedo",
        "config": asdict(cfg),
        "seconds": round(time.perf_counter() - t0, 3),
    }
    return ReconResult(fused, lighting, refined.texture, [x.name for x in views], report)


def write_result(out_dir, result, previews=True):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pfm(out / "albedo_uv.pfm", result.refined.texels)
    write_pfm(out / "fused_uv.pfm", result.fused.texels)
    write_pfm(out / "valid_uv.pfm", result.fused.valid.astype(np.float32))
    write_sh(out / "sh.txt", result.lighting)
    report = {k: v for k, v in result.report.items() if k != "seconds"}
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if previews:
        write_preview(out / "albedo_uv.png", result.refined.texels)
    return out
