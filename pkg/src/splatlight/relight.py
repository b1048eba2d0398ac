"""Turn intrinsic appearance plus light samples into per-primitive SH colors.

For every light sample t arriving at a primitive from wi_t with radiance
L_t, the outgoing color function accumulates

    a_t * (rho + s_{wi_t}(wo)) * L_t + b_t * L_t

where a_t clamps the direct-transport reconstruction at zero, b_t the
per-channel indirect transport, and s_{wi_t} is the partial evaluation of
the bidirectional scattering function. View-independent pieces are folded
into the DC coefficient with weight 2*sqrt(pi) so plain SH reconstruction
returns them as constants; the result is directly consumable by the
splatting rasterizer.

Clamping happens per light term, before multiplying by radiance, so the
output stays exactly linear in each light's radiance and additive across
lights.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import bsh, sh
from .scene import (
    DirectionalLight,
    EnvironmentLight,
    GaussianPrimitive,
    GaussianScene,
    PointLight,
    light_sample_batch,
)


@dataclass(frozen=True)
class ComponentMask:
    """Enables the intrinsic components; disabled ones are treated as zero."""

    diffuse: bool = True
    directional: bool = True
    direct: bool = True
    indirect: bool = True

    def __post_init__(self):
        if not (self.diffuse or self.directional or self.direct or self.indirect):
            raise ValueError("at least one component must be enabled")


FULL = ComponentMask()
# The intrinsic decomposition views. Diffuse and directional scattering only
# reach the camera through direct transport, so those views keep `direct` on;
# the direct-transport view shows all directly lit scattering.
DIFFUSE_VIEW = ComponentMask(diffuse=True, directional=False, direct=True, indirect=False)
DIRECTIONAL_VIEW = ComponentMask(diffuse=False, directional=True, direct=True, indirect=False)
DIRECT_VIEW = ComponentMask(diffuse=True, directional=True, direct=True, indirect=False)
INDIRECT_VIEW = ComponentMask(diffuse=False, directional=False, direct=False, indirect=True)

COMPONENT_VIEWS = {
    "diffuse": DIFFUSE_VIEW,
    "directional": DIRECTIONAL_VIEW,
    "direct": DIRECT_VIEW,
    "indirect": INDIRECT_VIEW,
}


@dataclass
class RelitColor:
    """SH coefficients of the outgoing color, one 25-vector per channel."""

    sh_rgb: np.ndarray  # (3, 25)


def relight_colors(scene: GaussianScene, lights, mask: ComponentMask = FULL) -> np.ndarray:
    """(n, 3, 25) outgoing-color coefficients for every primitive.

    Accumulates all samples of all lights; an empty light list yields zeros.
    """
    n = len(scene)
    coeffs = np.zeros((n, 3, sh.N_BASES), dtype=np.float64)
    for light in lights:
        wi, radiance = light_sample_batch(light, scene.positions)
        _accumulate(coeffs, scene, wi, radiance, mask)
    return coeffs


def _accumulate(coeffs, scene, wi, radiance, mask):
    """Add one light's samples into (n, 3, 25) coefficient storage.

    wi, radiance broadcast to (m, n, 3) over m samples and n primitives.
    """
    n = len(scene)
    m = wi.shape[0]
    rho = scene.albedos() if mask.diffuse else np.zeros((n, 3))
    for t in range(m):
        wi_t = np.broadcast_to(wi[t], (n, 3))
        rad_t = radiance[t]  # (n, 3) or (1, 3)
        basis = sh.eval_sh_basis(wi_t)  # (n, 25)

        if mask.direct:
            a = np.maximum(np.einsum("ni,ni->n", scene.t_dir, basis), 0.0)
        else:
            a = np.zeros(n)
        if mask.indirect:
            b = np.maximum(np.einsum("nci,ni->nc", scene.t_ind, basis), 0.0)
        else:
            b = np.zeros((n, 3))

        # View-independent contributions land on the DC coefficient.
        coeffs[:, :, 0] += sh.DC_INTEGRAL * (a[:, None] * rho + b) * rad_t
        if mask.directional and mask.direct:
            if wi[t].shape[0] == 1:
                # Shared direction: let the packed coefficients broadcast
                # against a single 325-vector instead of n copies.
                partial = bsh.partial_eval(scene.s, wi[t][0])
            else:
                partial = bsh.partial_eval(scene.s, wi_t[:, None, :])
            coeffs += (a[:, None] * rad_t)[:, :, None] * partial


def relight_scene(scene: GaussianScene, lights, mask: ComponentMask = FULL,
                  cache: "RelightCache | None" = None) -> list[RelitColor]:
    """Per-primitive relit colors; with a cache, repeated lighting is free."""
    if cache is not None:
        colors = cache.colors(scene, lights, mask)
    else:
        colors = relight_colors(scene, lights, mask)
    return [RelitColor(sh_rgb=colors[i]) for i in range(len(scene))]


def relight_primitive(prim: GaussianPrimitive, samples, mask: ComponentMask = FULL) -> RelitColor:
    """Single-primitive form over explicit LightSample lists."""
    if not samples:
        raise ValueError("samples must be non-empty")
    coeffs = np.zeros((1, 3, sh.N_BASES), dtype=np.float64)
    wi = np.stack([np.asarray(s.wi, dtype=np.float64) for s in samples])[:, None, :]
    radiance = np.stack([np.asarray(s.radiance, dtype=np.float64) for s in samples])[:, None, :]
    shell = GaussianScene(
        positions=prim.position[None], rotations=prim.rotation[None],
        log_scales=prim.log_scale[None],
        opacity_logits=np.array([prim.opacity_logit]),
        albedo_logits=prim.albedo_logit[None],
        t_dir=prim.t_dir[None], t_ind=prim.t_ind[None], s=prim.s[None],
    )
    _accumulate(coeffs, shell, wi, radiance, mask)
    return RelitColor(sh_rgb=coeffs[0])


class RelightCache:
    """Single-entry cache keyed by a lighting-state fingerprint.

    Rendering with unchanged scene, lights, and mask reuses the stored
    colors, so view-only changes skip all relight work. `evaluations`
    counts actual relight computations, `hits` the reuses.
    """

    def __init__(self):
        self._key = None
        self._colors = None
        self.evaluations = 0
        self.hits = 0

    def colors(self, scene: GaussianScene, lights, mask: ComponentMask) -> np.ndarray:
        key = lighting_fingerprint(scene, lights, mask)
        if key == self._key:
            self.hits += 1
            return self._colors
        colors = relight_colors(scene, lights, mask)
        self.evaluations += 1
        self._key = key
        self._colors = colors
        return colors


def lighting_fingerprint(scene: GaussianScene, lights, mask: ComponentMask) -> str:
    """Digest of everything the relight result depends on, except the view."""
    h = hashlib.sha256()
    h.update(f"scene:{id(scene)}:{scene.version}:{len(scene)}".encode())
    h.update(f"mask:{mask.diffuse}{mask.directional}{mask.direct}{mask.indirect}".encode())
    for light in lights:
        if isinstance(light, DirectionalLight):
            h.update(b"dir")
            h.update(np.ascontiguousarray(light.direction).tobytes())
            h.update(np.ascontiguousarray(light.radiance).tobytes())
        elif isinstance(light, PointLight):
            h.update(b"point")
            h.update(np.ascontiguousarray(light.position).tobytes())
            h.update(np.ascontiguousarray(light.intensity).tobytes())
        elif isinstance(light, EnvironmentLight):
            h.update(b"env")
            h.update(str(light.sample_count).encode())
            h.update(np.ascontiguousarray(light.image).tobytes())
        else:
            raise TypeError(f"unknown light source type: {type(light)!r}")
    return h.hexdigest()
