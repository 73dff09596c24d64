"""Train a toy delighting network with per-source tokens and switch styles at inference.

The OLAT pairs carry blurred targets with baked-in specular; the rendered pairs
carry sharp, diffuse-only targets. Tokens learn which style to produce.
A few minutes on one CPU.

Run: python demos/style_tokens.py [steps]
"""
import sys
import time
import warnings

import numpy as np

from delightcap.data_engine import DataConfig, generate_pairs
from delightcap.evaluation import evaluate_method
from delightcap.nets import TrainConfig, default_toy_config, predict, train

# early in training the aligned fit can flip a channel; that is expected here
warnings.filterwarnings("ignore", message="channel")

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 1500

cfg = DataConfig(n_olat=48, n_rendered=48, n_olat_subjects=6, n_scan_subjects=6, jitter_px=1.0)
t = time.perf_counter()
pairs = list(generate_pairs(cfg))
print(f"{len(pairs)} pairs in {time.perf_counter() - t:.1f}s")
olat = [p for p in pairs if p.source == "olat"]
rend = [p for p in pairs if p.source == "rendered"]
print("olat target mean", np.mean([p.albedo[p.mask].mean() for p in olat]).round(3),
      "rendered target mean", np.mean([p.albedo[p.mask].mean() for p in rend]).round(3))

# toy-scale learning rates; the defaults assume a pretrained encoder
tc = TrainConfig(regime="mixed_dlm", steps=steps, lr_encoder=5e-4, lr_decoder=1e-3)
t = time.perf_counter()
res = train(pairs, default_toy_config(), tc)
print(f"trained {steps} steps in {time.perf_counter() - t:.0f}s, final loss {res.log[-1]['loss_total']:.4f}")

# same inputs, two different source tags
images = np.stack([p.image for p in rend[:16]])
masks = np.stack([p.mask for p in rend[:16]])
gts = [p.albedo for p in rend[:16]]
for source in ("rendered", "olat"):
    pred = predict(res.model, images, masks, source)
    recs, _ = evaluate_method(list(pred), gts, list(masks), method=source)
    print(f"tokens={source:8s} mean psnr vs rendered-style targets {np.mean([r.psnr for r in recs]):.2f} dB, "
          f"mean brightness {pred[masks].mean():.3f}")
