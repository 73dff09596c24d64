"""Relight a synthetic OLAT capture under a few procedural environments.

Run: python demos/olat_relighting.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from delightcap.data_engine import (EnvironmentMap, capture_olat, classify_hdri_frequency,
                                    frequency_class, head_asset, procedural_hdri, relight_olat,
                                    rotate_env, sampling_weights)
from delightcap.geometry import Camera
from delightcap.io import write_preview

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/olat")
out.mkdir(parents=True, exist_ok=True)

# a bumped-ellipsoid head seen by one camera, lit by 64 lights on a sphere
head = head_asset(np.random.default_rng(0), tex_res=64)
cam = Camera.look_at([0, 0, 4.2], [0, 0, 0], 96, 96, 110.0)
cap = capture_olat(head, cam, n_lights=64, rng=np.random.default_rng(1))
print("olat frames:", cap.frames.shape)

# environments of increasing frequency content
rng = np.random.default_rng(2)
envs = [procedural_hdri(rng, 32, kind) for kind in ("overcast", "studio", "sun")]
for env in envs:
    env.score = classify_hdri_frequency(env)
    print(f"{env.name:9s} score {env.score:.3f} class {frequency_class(env.score)}")

# high-frequency maps get drawn more often
print("sampling probabilities:", np.round(sampling_weights(envs, beta=4.0), 3))

for kind, env in zip(("overcast", "studio", "sun"), envs):
    write_preview(out / f"relit_{kind}.png", relight_olat(cap, env))

# relighting is linear in the environment
a, b = envs[0], envs[2]
lhs = relight_olat(cap, EnvironmentMap(a.pixels + b.pixels))
rhs = relight_olat(cap, a) + relight_olat(cap, b)
print("additivity error:", np.abs(lhs - rhs).max())

# a uniform environment gives back the albedo proxy, up to a scalar
proxy = cap.albedo_proxy()
uni = relight_olat(cap, EnvironmentMap(np.ones((32, 64, 3))))
k = (uni * proxy).sum() / (proxy * proxy).sum()
print("uniform env vs proxy:", np.abs(uni - k * proxy).max(), "scale", round(float(k), 4))
write_preview(out / "albedo_proxy.png", proxy)

# spinning the sun around the head
for i, yaw in enumerate(np.linspace(0, 2 * np.pi, 4, endpoint=False)):
    write_preview(out / f"sun_yaw{i}.png", relight_olat(cap, rotate_env(envs[2], yaw)))
print("wrote previews to", out)
