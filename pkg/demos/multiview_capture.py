"""Multi-view albedo capture on a synthetic head with known lighting.

Each view stores its true albedo, so this isolates the geometry side:
UV fusion, the SH lighting fit and the regularised refinement.

Run: python demos/multiview_capture.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from delightcap.data_engine import head_asset
from delightcap.evaluation import psnr_masked
from delightcap.reconstruction import (ReconConfig, orbit_cameras, random_sh, read_bundle,
                                       reconstruct, synthetic_bundle, write_bundle, write_result)

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/capture")

rng = np.random.default_rng(0)
head = head_asset(rng, tex_res=128)
light = random_sh(rng)
cams = orbit_cameras(12, size=128, yaw_deg=60, pitch_deg=20)
bundle = synthetic_bundle(head, cams, lighting=light)

# round trip through the on-disk bundle format
write_bundle(out / "bundle", bundle)
bundle = read_bundle(out / "bundle")
print(len(bundle.views), "views,", len(bundle.mesh.faces), "triangles")

res = reconstruct(bundle, ReconConfig(n_views=8, resolution=128))
print("views used:", res.views_used)
print("valid texels:", res.report["valid_texels"], "of", 128 * 128)

# lighting recovered from the photos vs the one used to render them
err = np.abs(res.lighting.coeffs - light).max() / np.abs(light).max()
print("SH max relative error:", f"{err:.2e}")

skin = res.fused.valid & (head.skin_tex > 0.5)
print("fused   PSNR", round(psnr_masked(res.fused.texels, head.albedo_tex, skin), 2), "dB")
print("refined PSNR", round(psnr_masked(res.refined.texels, head.albedo_tex, skin), 2), "dB")
h = res.report["refine_history"]
print("refinement objective", f"{h[0]:.4e} -> {h[-1]:.4e} in {res.report['refine_iters']} iterations")

write_result(out / "result", res)
print("wrote", out / "result")
