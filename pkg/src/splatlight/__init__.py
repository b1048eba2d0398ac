"""Relightable Gaussian splatting with spherical-harmonics light decomposition."""

from .bsh import energy_integral, eval_full, partial_eval, sym_index
from .formats import (
    load_manifest,
    load_model,
    make_synthetic_dataset,
    read_pfm,
    save_model,
    write_pfm,
    write_png,
)
from .optimize import GradientSet, TrainingConfig, backward, loss_plus, loss_rec, loss_s, tone_map, train
from .rasterize import Camera, project, rasterize, render
from .relight import ComponentMask, RelightCache, relight_colors, relight_primitive, relight_scene
from .scene import (
    DirectionalLight,
    EnvironmentLight,
    GaussianScene,
    LightSample,
    PointLight,
    light_samples,
    make_random_scene,
    sample_env_directions,
)
from .sh import eval_sh_basis, eval_sh_function, integrate_over_sphere, project_function

__version__ = "0.1.0"
