"""Gaussian primitive scene model and light sources.

The scene is a struct-of-arrays over n primitives. Geometry (position,
rotation, log-scale) is loaded from initialization and frozen during
training; opacity and the appearance fields are the trainable set. Each
primitive carries 1,089 scalars total:

    position 3 + rotation 4 + log_scale 3 + opacity_logit 1
    + albedo_logit 3 + t_dir 25 + t_ind 75 + s 975 = 1,089
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bsh, sh

PARAMS_PER_PRIMITIVE = 1089
TRAINABLE_FIELDS = ("opacity_logits", "albedo_logits", "t_dir", "t_ind", "s")


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from (..., 4) quaternions in (w, x, y, z) order."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


@dataclass
class GaussianScene:
    """All primitives of one model, arrays indexed by primitive."""

    positions: np.ndarray       # (n, 3)
    rotations: np.ndarray       # (n, 4) unit quaternions (w, x, y, z)
    log_scales: np.ndarray      # (n, 3) per-axis std-dev, log space
    opacity_logits: np.ndarray  # (n,)
    albedo_logits: np.ndarray   # (n, 3)
    t_dir: np.ndarray           # (n, 25) direct transport SH
    t_ind: np.ndarray           # (n, 3, 25) indirect transport SH, per channel
    s: np.ndarray               # (n, 3, 325) packed bidirectional SH
    version: int = 0            # bumped on mutation; relight caches key on it

    def __post_init__(self):
        n = len(self.positions)
        shapes = {
            "positions": (n, 3), "rotations": (n, 4), "log_scales": (n, 3),
            "opacity_logits": (n,), "albedo_logits": (n, 3),
            "t_dir": (n, sh.N_BASES), "t_ind": (n, 3, sh.N_BASES),
            "s": (n, 3, bsh.N_PAIRS),
        }
        for name, want in shapes.items():
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != want:
                raise ValueError(f"{name}: expected shape {want}, got {arr.shape}")
            setattr(self, name, arr)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def parameter_count(self) -> int:
        return PARAMS_PER_PRIMITIVE * len(self)

    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def albedos(self) -> np.ndarray:
        return sigmoid(self.albedo_logits)

    def covariances(self) -> np.ndarray:
        """(n, 3, 3) world-space covariances R diag(exp(ls))^2 R^T."""
        rot = quaternion_to_matrix(self.rotations)
        scale_sq = np.exp(2.0 * self.log_scales)
        return np.einsum("nij,nj,nkj->nik", rot, scale_sq, rot)

    def touch(self) -> None:
        """Mark the scene mutated (invalidates relight caches)."""
        self.version += 1

    def normalize_rotations(self) -> None:
        self.rotations /= np.linalg.norm(self.rotations, axis=-1, keepdims=True)

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            positions=self.positions.copy(), rotations=self.rotations.copy(),
            log_scales=self.log_scales.copy(),
            opacity_logits=self.opacity_logits.copy(),
            albedo_logits=self.albedo_logits.copy(),
            t_dir=self.t_dir.copy(), t_ind=self.t_ind.copy(), s=self.s.copy(),
            version=self.version,
        )

    def primitive(self, i: int) -> "GaussianPrimitive":
        return GaussianPrimitive(
            position=self.positions[i], rotation=self.rotations[i],
            log_scale=self.log_scales[i],
            opacity_logit=float(self.opacity_logits[i]),
            albedo_logit=self.albedo_logits[i], t_dir=self.t_dir[i],
            t_ind=self.t_ind[i], s=self.s[i],
        )

    def to_rows(self) -> np.ndarray:
        """(n, 1089) parameter matrix in the serialization field order."""
        n = len(self)
        return np.concatenate([
            self.positions, self.rotations, self.log_scales,
            self.opacity_logits[:, None], self.albedo_logits,
            self.t_dir, self.t_ind.reshape(n, 75), self.s.reshape(n, 975),
        ], axis=1)

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "GaussianScene":
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != PARAMS_PER_PRIMITIVE:
            raise ValueError(f"expected (n, {PARAMS_PER_PRIMITIVE}) rows, got {rows.shape}")
        n = rows.shape[0]
        o = 0
        def take(k):
            nonlocal o
            part = rows[:, o:o + k]
            o += k
            return part
        return cls(
            positions=take(3), rotations=take(4), log_scales=take(3),
            opacity_logits=take(1)[:, 0], albedo_logits=take(3),
            t_dir=take(25), t_ind=take(75).reshape(n, 3, 25),
            s=take(975).reshape(n, 3, 325),
        )


@dataclass
class GaussianPrimitive:
    """Single-primitive view, sharing the scene's storage."""

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    albedo_logit: np.ndarray
    t_dir: np.ndarray
    t_ind: np.ndarray
    s: np.ndarray

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    @property
    def albedo(self) -> np.ndarray:
        return sigmoid(self.albedo_logit)


# --- light sources -----------------------------------------------------------

@dataclass(frozen=True)
class DirectionalLight:
    """Infinitely distant emitter; direction points from the scene toward it."""
    direction: np.ndarray
    radiance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "direction", sh.normalize(self.direction))
        object.__setattr__(self, "radiance", _check_radiance(self.radiance))


@dataclass(frozen=True)
class PointLight:
    """Point emitter with inverse-square falloff from its center intensity."""
    position: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "intensity", _check_radiance(self.intensity))


@dataclass(frozen=True)
class EnvironmentLight:
    """Equirectangular radiance map sampled at fixed Fibonacci directions.

    Samples are treated as directional (no falloff); the equal-area solid
    angle weight 4*pi/sample_count makes a constant map of value v deliver
    total radiance 4*pi*v.
    """
    image: np.ndarray           # (h, w, 3) linear radiance
    sample_count: int = 128
    name: str = ""

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError("environment image must be (h, w, 3)")
        object.__setattr__(self, "image", img)
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


def _check_radiance(value) -> np.ndarray:
    value = np.asarray(value, dtype=np.float64)
    if value.shape != (3,):
        raise ValueError("radiance must be an RGB triple")
    if np.any(value < 0):
        raise ValueError("radiance must be non-negative")
    return value


@dataclass(frozen=True)
class LightSample:
    """One (direction toward the light, arriving radiance) pair."""
    wi: np.ndarray
    radiance: np.ndarray


def fibonacci_sphere(n: int) -> np.ndarray:
    """n deterministic near-uniform unit directions (golden-angle spiral)."""
    if n < 1:
        raise ValueError("need at least one direction")
    k = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * k + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * (np.pi * (3.0 - np.sqrt(5.0)))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def fibonacci_hemisphere(n: int, up_axis: int = 1, phase: float = 0.0) -> np.ndarray:
    """n points covering the up_axis > 0 hemisphere evenly.

    `phase` offsets the spiral azimuth, which gives disjoint point sets for
    train/holdout light placement.
    """
    if n < 1:
        raise ValueError("need at least one direction")
    k = np.arange(n, dtype=np.float64)
    up = (k + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - up * up))
    phi = k * (np.pi * (3.0 - np.sqrt(5.0))) + phase
    flat = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    out = np.empty((n, 3), dtype=np.float64)
    axes = [a for a in range(3) if a != up_axis]
    out[:, axes[0]] = flat[:, 0]
    out[:, axes[1]] = flat[:, 1]
    out[:, up_axis] = up
    return out


def sample_env_directions(n: int) -> np.ndarray:
    """Fixed environment sampling directions; identical across calls."""
    return fibonacci_sphere(n)


def light_samples(light, position: np.ndarray) -> list[LightSample]:
    """Expand a light source into per-Gaussian (direction, radiance) samples."""
    wi, rad = light_sample_batch(light, np.asarray(position, dtype=np.float64)[None, :])
    return [LightSample(wi=wi[t, 0], radiance=rad[t, 0]) for t in range(wi.shape[0])]


def light_sample_batch(light, positions: np.ndarray):
    """Vectorized sampling for n primitives at once.

    Returns (wi, radiance) with shapes broadcastable to (m, n, 3) where m is
    the light's sample count.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if isinstance(light, DirectionalLight):
        return light.direction[None, None, :], light.radiance[None, None, :]
    if isinstance(light, PointLight):
        delta = light.position[None, :] - positions
        dist_sq = np.sum(delta * delta, axis=-1)
        if np.any(dist_sq == 0.0):
            raise ValueError("point light coincides with a Gaussian center")
        wi = delta / np.sqrt(dist_sq)[:, None]
        radiance = light.intensity[None, :] / dist_sq[:, None]
        return wi[None, :, :], radiance[None, :, :]
    if isinstance(light, EnvironmentLight):
        from .formats import env_lookup
        dirs = sample_env_directions(light.sample_count)
        weight = 4.0 * np.pi / light.sample_count
        radiance = env_lookup(light.image, dirs) * weight
        return dirs[:, None, :], radiance[:, None, :]
    raise TypeError(f"unknown light source type: {type(light)!r}")


def _nonnegative_sh(rng, shape, dc_low, dc_high, band_scale, floor_frac=0.3):
    """Random SH vectors whose reconstruction stays strictly positive.

    Draws a dominant positive DC term plus decaying higher bands, then
    rescales each vector's band content so the minimum over a dense
    direction set keeps at least floor_frac of the constant part.
    """
    band = np.repeat(np.arange(5), np.arange(5) * 2 + 1).astype(np.float64)
    falloff = 0.35 ** band
    coeffs = rng.normal(scale=band_scale, size=shape + (25,)) * falloff
    coeffs[..., 0] = rng.uniform(dc_low, dc_high, size=shape)
    probe = sh.eval_sh_basis(fibonacci_sphere(512))          # (512, 25)
    const = coeffs[..., 0] * probe[0, 0]
    band_min = (coeffs[..., 1:] @ probe[:, 1:].T).min(axis=-1)
    allowed = (1.0 - floor_frac) * const
    scale = np.where(band_min < -allowed, allowed / np.maximum(-band_min, 1e-30), 1.0)
    coeffs[..., 1:] *= scale[..., None]
    return coeffs


def make_random_scene(n: int, seed: int = 0, radius: float = 1.0) -> GaussianScene:
    """Random but physically valid scene for tests, benches, and demos.

    The appearance satisfies the training priors exactly: transport and
    scattering reconstructions are non-negative everywhere and the
    scattering function's outgoing energy stays below 1 for every incoming
    direction, so the regularization losses vanish at this scene.
    """
    rng = np.random.default_rng(seed)
    positions = rng.normal(scale=0.45 * radius, size=(n, 3))
    rotations = rng.normal(size=(n, 4))
    rotations /= np.linalg.norm(rotations, axis=-1, keepdims=True)
    log_scales = rng.uniform(np.log(0.05 * radius), np.log(0.12 * radius), size=(n, 3))
    opacity_logits = rng.uniform(0.5, 2.5, size=n)
    albedo_logits = rng.uniform(-0.8, 0.8, size=(n, 3))

    t_dir = _nonnegative_sh(rng, (n,), 1.2, 2.4, 0.25)
    t_ind = _nonnegative_sh(rng, (n, 3), 0.05, 0.25, 0.03)

    # Scattering as a sum of two separable lobes outer(v, v) + outer(u, u)
    # of non-negative functions: pointwise non-negative and reciprocal by
    # construction, with outgoing energy f(wi) * integral(f) < 1.
    v = _nonnegative_sh(rng, (n, 3), 0.30, 0.42, 0.08)
    u = _nonnegative_sh(rng, (n, 3), 0.10, 0.20, 0.05)
    s = (v[..., bsh._PAIR_I] * v[..., bsh._PAIR_J]
         + u[..., bsh._PAIR_I] * u[..., bsh._PAIR_J])

    return GaussianScene(
        positions=positions, rotations=rotations, log_scales=log_scales,
        opacity_logits=opacity_logits, albedo_logits=albedo_logits,
        t_dir=t_dir, t_ind=t_ind, s=s,
    )
