"""Synthetic training-pair engine: OLAT relighting and direct scan rendering."""
from .align import CANONICAL_TEMPLATE, Similarity, align_face, fit_similarity, warp, warp_mask
from .assets import ScanAsset, head_asset, plane_asset, sphere_asset
from .dataset import DataConfig, TrainingPair, generate_dataset, generate_pairs, hdri_pool, load_pairs
from .env import (EnvironmentMap, classify_hdri_frequency, frequency_class, procedural_hdri,
                  rotate_env, sample_hdri, sampling_weights)
from .olat import OLATSubjectCapture, capture_olat, relight_olat, voronoi_solid_angles
from .render import render_albedo, render_scan, render_sh

__all__ = [
    "CANONICAL_TEMPLATE", "Similarity", "align_face", "fit_similarity", "warp", "warp_mask",
    "ScanAsset", "head_asset", "plane_asset", "sphere_asset",
    "DataConfig", "TrainingPair", "generate_dataset", "generate_pairs", "hdri_pool", "load_pairs",
    "EnvironmentMap", "classify_hdri_frequency", "frequency_class", "procedural_hdri",
    "rotate_env", "sample_hdri", "sampling_weights",
    "OLATSubjectCapture", "capture_olat", "relight_olat", "voronoi_solid_angles",
    "render_albedo", "render_scan", "render_sh",
]
