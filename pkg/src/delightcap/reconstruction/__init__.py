"""Multi-view appearance capture: frame selection, delighting, UV fusion,
SH lighting fit and regularised albedo refinement."""
from .delight import DelitView, TooFewViewsError, delight_views
from .frames import select_frames, sharpness
from .fusion import FusionError, UVTexture, fill_invalid, fuse_to_uv, texel_surface
from .lighting import RankDeficientError, SHLighting, fit_sh_lighting, read_sh, write_sh
from .pipeline import ReconConfig, ReconResult, reconstruct, write_result
from .refine import NumericalError, RefineConfig, RefineProblem, refine_albedo
from .scene import BundleError, CameraView, SceneBundle, read_bundle, write_bundle
from .synthetic import orbit_cameras, random_sh, synthetic_bundle
