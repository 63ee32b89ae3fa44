"""Temporally consistent anisotropic spherical Gaussian compression of
HDR environment map sequences.

The pipeline: load equirectangular HDRI frames, resample them onto a
solid-angle-weighted sphere grid, and fit a fixed-count ASG mixture per
frame with Adam on a composite objective (weighted-L1 reconstruction,
SH-irradiance agreement, and a drift penalty tying each frame's lobes
to the previous frame's).  Fitted sequences round-trip through a JSON
params format and can be reconstructed, scored, and visualized from the
``asgfit`` command-line tool.
"""

from .asg import MixtureParams, RealizedMixture, evaluate, realize
from .geometry import Frame, SampleGrid, build_frame
from .hdr_io import EnvMap, load_env, load_params, resample, save_env, save_params
from .losses import LossBreakdown, LossWeights, total_loss
from .optimizer import FitConfig, fit_frame, fit_sequence, init_mixture, jitter_metric
from .sh import irradiance, project, sh_basis

__version__ = "0.1.0"

__all__ = [
    "EnvMap", "FitConfig", "Frame", "LossBreakdown", "LossWeights",
    "MixtureParams", "RealizedMixture", "SampleGrid", "build_frame",
    "evaluate", "fit_frame", "fit_sequence", "init_mixture", "irradiance",
    "jitter_metric", "load_env", "load_params", "project", "realize",
    "resample", "save_env", "save_params", "sh_basis", "total_loss",
    "__version__",
]
