"""Fitting appearance parameters to OLAT images.

The total objective is

    L = L_rec + lambda_s * L_s + lambda_plus * L_plus

with L_rec the L1 + weighted D-SSIM of tone-mapped renders against
tone-mapped references, L_s a soft energy-conservation penalty on the
scattering function, and L_plus a penalty on negative transport/scattering
evaluations (whose forward clamps would otherwise block gradients).

Gradients are exact reverse-mode derivatives, hand-chained through the
tone map, the compositor, the per-view SH reconstruction, and the relight
accumulation. The whole relight-to-pixel chain is linear in the appearance
coefficients, so the chain rule reduces to reweighted basis products.
Clamp convention: max(u, 0) passes gradient through at u == 0 exactly.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from . import bsh, sh, ssim as ssim_mod
from .relight import ComponentMask, FULL
from .rasterize import Camera, project_scene, rasterize, rasterize_backward
from .scene import GaussianScene, light_sample_batch, sigmoid

GAMMA_EXP = 1.0 / 2.2


# --- tone mapping and image metrics -------------------------------------------

def tone_map(img: np.ndarray) -> np.ndarray:
    """Smooth Reinhard-then-gamma: x -> (x / (1 + x))^(1/2.2), range [0, 1)."""
    img = np.asarray(img, dtype=np.float64)
    if np.any(img < 0):
        raise ValueError("tone_map expects non-negative radiance")
    return (img / (1.0 + img)) ** GAMMA_EXP


def tone_map_derivative(img: np.ndarray) -> np.ndarray:
    """d tone_map / d x; defined as 0 at x == 0 (the true limit is +inf)."""
    img = np.asarray(img, dtype=np.float64)
    u = img / (1.0 + img)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = GAMMA_EXP * u ** (GAMMA_EXP - 1.0) / (1.0 + img) ** 2
    return np.where(img > 0.0, d, 0.0)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    if mse == 0.0:
        return 99.0
    return float(10.0 * np.log10(peak * peak / mse))


def loss_rec(render_img: np.ndarray, ref_img: np.ndarray, lambda_dssim: float):
    """(l1, dssim) of the tone-mapped pair. Raises on dimension mismatch."""
    if render_img.shape != ref_img.shape:
        raise ValueError(f"image shapes differ: {render_img.shape} vs {ref_img.shape}")
    gx = tone_map(render_img)
    gy = tone_map(ref_img)
    l1 = float(np.mean(np.abs(gx - gy)))
    ssim_val, _ = ssim_mod.ssim(gx, gy)
    return l1, 0.5 * (1.0 - ssim_val)


def _loss_rec_grad(render_img: np.ndarray, ref_img: np.ndarray, lambda_dssim: float):
    """(l1, dssim, dL_rec/d render_img) with the D-SSIM weight applied."""
    gx = tone_map(render_img)
    gy = tone_map(ref_img)
    l1 = float(np.mean(np.abs(gx - gy)))
    ssim_val, cache = ssim_mod.ssim(gx, gy)
    grad_gamma = np.sign(gx - gy) / gx.size
    if lambda_dssim != 0.0:
        grad_gamma = grad_gamma - 0.5 * lambda_dssim * ssim_mod.ssim_grad(cache)
    grad = grad_gamma * tone_map_derivative(render_img)
    return l1, 0.5 * (1.0 - ssim_val), grad


# --- regularizers ---------------------------------------------------------------

def loss_s(scene: GaussianScene, wi_list) -> float:
    """Energy-conservation penalty, summed over the given incoming directions."""
    total = 0.0
    for wi in wi_list:
        total += _loss_s_single(scene, wi)[0]
    return total


def _expand_dir(scene, wi):
    wi = np.asarray(wi, dtype=np.float64)
    if wi.ndim == 1:
        wi = np.broadcast_to(wi, (len(scene), 3))
    return wi


def _loss_s_single(scene, wi, want_grad=False):
    wi = _expand_dir(scene, wi)
    basis = sh.eval_sh_basis(wi)                              # (n, 25)
    energy = sh.DC_INTEGRAL * np.einsum("nci,ni->nc", scene.s[:, :, : sh.N_BASES], basis)
    excess = np.maximum(energy - 1.0, 0.0)
    value = float(np.mean(excess ** 2))                      # mean over prims and channels
    if not want_grad:
        return value, None
    grad_s = np.zeros_like(scene.s)
    scale = sh.DC_INTEGRAL * 2.0 / excess.size
    grad_s[:, :, : sh.N_BASES] = (scale * excess)[:, :, None] * basis[:, None, :]
    return value, grad_s


def loss_plus(scene: GaussianScene, wi, wo) -> float:
    """Penalty on negative transport/scattering values at one direction pair."""
    return _loss_plus_single(scene, wi, wo)[0]


def _loss_plus_single(scene, wi, wo, want_grad=False):
    n = len(scene)
    wi = _expand_dir(scene, wi)
    wo = _expand_dir(scene, wo)
    basis_i = sh.eval_sh_basis(wi)

    u = np.einsum("ni,ni->n", scene.t_dir, basis_i)
    v = np.einsum("nci,ni->nc", scene.t_ind, basis_i)
    weights = bsh.pair_weights(wi, wo)                       # (n, 325)
    w = np.einsum("ncp,np->nc", scene.s, weights)

    u_neg = np.minimum(u, 0.0)
    v_neg = np.minimum(v, 0.0)
    w_neg = np.minimum(w, 0.0)
    value = float(np.mean(u_neg ** 2 + (v_neg ** 2).sum(axis=1) + (w_neg ** 2).sum(axis=1)))
    if not want_grad:
        return value, None

    grad_t_dir = (2.0 * u_neg / n)[:, None] * basis_i
    grad_t_ind = (2.0 * v_neg / n)[:, :, None] * basis_i[:, None, :]
    grad_s = (2.0 * w_neg / n)[:, :, None] * weights[:, None, :]
    return value, (grad_t_dir, grad_t_ind, grad_s)


# --- configuration and gradient containers --------------------------------------

@dataclass
class TrainingConfig:
    lambda_dssim: float = 0.2
    lambda_s: float = 0.01
    lambda_plus: float = 1.0
    learning_rate: float = 0.005
    iterations: int = 1600
    t_ind_activation_fraction: float = 0.3
    rng_seed: int = 0
    batch_size: int = 8
    eval_interval: int = 200
    tile_size: int = 64

    def __post_init__(self):
        if min(self.lambda_dssim, self.lambda_s, self.lambda_plus) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 <= self.t_ind_activation_fraction <= 1.0:
            raise ValueError("t_ind_activation_fraction must be in [0, 1]")

    @property
    def t_ind_activation_step(self) -> int:
        return int(round((1.0 - self.t_ind_activation_fraction) * self.iterations))


@dataclass
class GradientSet:
    """Partials of the total loss w.r.t. every trainable field."""

    opacity_logits: np.ndarray
    albedo_logits: np.ndarray
    t_dir: np.ndarray
    t_ind: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, scene: GaussianScene) -> "GradientSet":
        return cls(
            opacity_logits=np.zeros_like(scene.opacity_logits),
            albedo_logits=np.zeros_like(scene.albedo_logits),
            t_dir=np.zeros_like(scene.t_dir),
            t_ind=np.zeros_like(scene.t_ind),
            s=np.zeros_like(scene.s),
        )

    def check_finite(self, context: str = "") -> None:
        for name in ("opacity_logits", "albedo_logits", "t_dir", "t_ind", "s"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise FloatingPointError(
                    f"non-finite gradient in {name} at primitive {bad[0]} {context}")


@dataclass
class TrainingFrame:
    """One OLAT observation: a light, a camera, and the HDR reference."""

    light: object
    camera: Camera
    image: np.ndarray


# --- forward/backward through one frame ------------------------------------------

def _relight_training_forward(scene, light, t_ind_active):
    """Relit coefficients plus the intermediates the backward pass needs."""
    n = len(scene)
    wi, radiance = light_sample_batch(light, scene.positions)
    rho = scene.albedos()
    coeffs = np.zeros((n, 3, sh.N_BASES))
    samples = []
    for t in range(wi.shape[0]):
        wi_t = np.ascontiguousarray(np.broadcast_to(wi[t], (n, 3)))
        rad_t = np.ascontiguousarray(np.broadcast_to(radiance[t], (n, 3)))
        basis = sh.eval_sh_basis(wi_t)
        u = np.einsum("ni,ni->n", scene.t_dir, basis)
        a = np.maximum(u, 0.0)
        mask_a = u >= 0.0
        if t_ind_active:
            v = np.einsum("nci,ni->nc", scene.t_ind, basis)
            b = np.maximum(v, 0.0)
            mask_b = v >= 0.0
        else:
            b = np.zeros((n, 3))
            mask_b = np.zeros((n, 3), dtype=bool)
        partial = bsh.partial_eval(scene.s, wi_t[:, None, :])
        coeffs[:, :, 0] += sh.DC_INTEGRAL * (a[:, None] * rho + b) * rad_t
        coeffs += (a[:, None] * rad_t)[:, :, None] * partial
        samples.append((wi_t, rad_t, basis, a, mask_a, b, mask_b, partial))
    return coeffs, rho, samples


def _relight_training_backward(grads, scene, rho, samples, grad_coeffs, t_ind_active):
    grad_dc = grad_coeffs[:, :, 0]
    grad_rho = np.zeros_like(rho)
    for wi_t, rad_t, basis, a, mask_a, b, mask_b, partial in samples:
        grad_a = sh.DC_INTEGRAL * np.einsum("nc,nc,nc->n", grad_dc, rho, rad_t)
        grad_a += np.einsum("ncj,nc,ncj->n", grad_coeffs, rad_t, partial)
        grads.t_dir += (grad_a * mask_a)[:, None] * basis
        grad_rho += sh.DC_INTEGRAL * grad_dc * a[:, None] * rad_t
        if t_ind_active:
            grad_b = sh.DC_INTEGRAL * grad_dc * rad_t
            grads.t_ind += (grad_b * mask_b)[:, :, None] * basis[:, None, :]
        grad_partial = (a[:, None] * rad_t)[:, :, None] * grad_coeffs
        grads.s += bsh.partial_eval_adjoint(grad_partial, wi_t[:, None, :])
    grads.albedo_logits += grad_rho * rho * (1.0 - rho)


def _frame_loss_and_grads(scene, frame, config, t_ind_active, grads=None):
    """L_rec terms for one frame; accumulates into `grads` when given."""
    coeffs, rho, samples = _relight_training_forward(scene, frame.light, t_ind_active)
    splats = project_scene(scene, coeffs, frame.camera)
    want_grad = grads is not None
    if want_grad:
        image, records = rasterize(splats, frame.camera, tile_size=config.tile_size,
                                   capture=True)
    else:
        image = rasterize(splats, frame.camera, tile_size=config.tile_size)
    l1, dssim, *rest = (
        _loss_rec_grad(image, frame.image, config.lambda_dssim) if want_grad
        else loss_rec(image, frame.image, config.lambda_dssim)
    )
    if not want_grad:
        return l1, dssim

    grad_image = rest[0]
    grad_rgb, grad_opacity = rasterize_backward(splats, records, grad_image)

    n = len(scene)
    grad_coeffs = np.zeros((n, 3, sh.N_BASES))
    if len(splats):
        src = splats.source_index
        contrib = (grad_rgb * splats.color_mask)[:, :, None] * splats.view_basis[:, None, :]
        np.add.at(grad_coeffs, src, contrib)
        opac = scene.opacities()[src]
        np.add.at(grads.opacity_logits, src, grad_opacity * opac * (1.0 - opac))

    _relight_training_backward(grads, scene, rho, samples, grad_coeffs, t_ind_active)
    return l1, dssim


def _regularizer_dirs(scene, frame):
    """Per-primitive training (wi, wo) pairs associated with one frame."""
    wi, _ = light_sample_batch(frame.light, scene.positions)
    wo = scene.positions - frame.camera.center
    wo = wo / np.linalg.norm(wo, axis=-1, keepdims=True)
    pairs = []
    for t in range(wi.shape[0]):
        pairs.append((np.ascontiguousarray(np.broadcast_to(wi[t], (len(scene), 3))), wo))
    return pairs


def _radical_inverse(index: int, base: int) -> float:
    inv = 0.0
    digit = 1.0 / base
    while index > 0:
        inv += (index % base) * digit
        index //= base
        digit /= base
    return inv


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1.0
    return q


def step_random_pair(config: TrainingConfig, step: int):
    """The per-step random (wi, wo) regularizer pair, deterministic in step.

    Randomized low-discrepancy sequence: radical-inverse z plus golden-ratio
    azimuth under seed-derived random rotations. Every direction is
    marginally uniform, consecutive steps sweep the sphere evenly, and the
    pair is a pure function of (rng_seed, step) as the gradient oracle
    requires.
    """
    rng = np.random.default_rng([config.rng_seed, 0])
    rot_i = _random_rotation(rng)
    rot_o = _random_rotation(rng)

    def point(index, base, ratio):
        z = 2.0 * _radical_inverse(index, base) - 1.0
        phi = 2.0 * np.pi * ((index * ratio) % 1.0)
        r = np.sqrt(max(0.0, 1.0 - z * z))
        return np.array([r * np.cos(phi), r * np.sin(phi), z])

    golden = 0.6180339887498949
    silver = 0.41421356237309515
    wi = rot_i @ point(step + 1, 2, golden)
    wo = rot_o @ point(step + 1, 3, silver)
    return wi, wo


def _losses_and_grads(scene, batch, config, step, want_grads):
    t_ind_active = step >= config.t_ind_activation_step
    grads = GradientSet.zeros(scene) if want_grads else None

    l1_total = 0.0
    dssim_total = 0.0
    pairs = []
    for frame in batch:
        l1, dssim = _frame_loss_and_grads(scene, frame, config, t_ind_active, grads)
        l1_total += l1
        dssim_total += dssim
        pairs.extend(_regularizer_dirs(scene, frame))
    l1_total /= len(batch)
    dssim_total /= len(batch)
    if want_grads:
        # Frame gradients were accumulated unscaled; apply the batch mean.
        for name in ("opacity_logits", "albedo_logits", "t_dir", "t_ind", "s"):
            getattr(grads, name)[...] /= len(batch)

    wi_rand, wo_rand = step_random_pair(config, step)
    pairs.append((wi_rand, wo_rand))

    ls_total = 0.0
    lplus_total = 0.0
    frame_weight = 1.0 / len(batch)
    for k, (wi, wo) in enumerate(pairs):
        weight = frame_weight if k < len(pairs) - 1 else 1.0
        ls_val, ls_grad = _loss_s_single(scene, wi, want_grad=want_grads)
        lp_val, lp_grads = _loss_plus_single(scene, wi, wo, want_grad=want_grads)
        ls_total += weight * ls_val
        lplus_total += weight * lp_val
        if want_grads:
            grads.s += (config.lambda_s * weight) * ls_grad
            gd, gi, gs = lp_grads
            grads.t_dir += (config.lambda_plus * weight) * gd
            grads.t_ind += (config.lambda_plus * weight) * gi
            grads.s += (config.lambda_plus * weight) * gs

    if want_grads and not t_ind_active:
        grads.t_ind[...] = 0.0

    terms = {
        "l1": l1_total,
        "dssim": dssim_total,
        "loss_s": ls_total,
        "loss_plus": lplus_total,
    }
    terms["total"] = (l1_total + config.lambda_dssim * dssim_total
                      + config.lambda_s * ls_total + config.lambda_plus * lplus_total)
    return terms, grads


def total_loss(scene: GaussianScene, batch, config: TrainingConfig, step: int) -> dict:
    """All loss terms at this step, no gradients. Deterministic in step."""
    terms, _ = _losses_and_grads(scene, batch, config, step, want_grads=False)
    return terms


def backward(scene: GaussianScene, batch, config: TrainingConfig, step: int) -> GradientSet:
    """Exact gradients of the total loss w.r.t. the trainable fields."""
    terms, grads = _losses_and_grads(scene, batch, config, step, want_grads=True)
    grads.check_finite(context=f"(step {step})")
    return grads


# --- Adam ------------------------------------------------------------------------

class Adam:
    """Plain Adam over the named trainable arrays of a scene."""

    def __init__(self, scene: GaussianScene, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(getattr(scene, k)) for k in
                  ("opacity_logits", "albedo_logits", "t_dir", "t_ind", "s")}
        self.v = {k: np.zeros_like(v) for k, v in self.m.items()}

    def step(self, scene: GaussianScene, grads: GradientSet) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name in self.m:
            g = getattr(grads, name)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            getattr(scene, name)[...] -= self.lr * update


# --- training loop ----------------------------------------------------------------

def train(dataset, scene: GaussianScene, config: TrainingConfig,
          log_path=None, on_step=None):
    """Fit the scene to the dataset's train partition.

    Returns (fitted scene copy, list of per-step metric records). Records
    are JSON-serializable dicts: step, total, l1, dssim, loss_s, loss_plus,
    psnr (null between evaluations), ms. With log_path they are also
    streamed as JSON lines.
    """
    frames = _load_frames(dataset, "train")
    if not frames:
        raise ValueError("dataset has no training frames")
    holdout = _load_frames(dataset, "holdout")

    scene = scene.copy()
    optimizer = Adam(scene, lr=config.learning_rate)
    batch_rng = np.random.default_rng([config.rng_seed, 1])
    records = []
    log_fh = open(log_path, "w") if log_path is not None else None
    try:
        for step in range(config.iterations):
            started = time.perf_counter()
            size = min(config.batch_size, len(frames))
            chosen = batch_rng.choice(len(frames), size=size, replace=False)
            batch = [frames[i] for i in chosen]

            terms, grads = _losses_and_grads(scene, batch, config, step, want_grads=True)
            grads.check_finite(context=f"(step {step})")
            if not np.isfinite(terms["total"]):
                raise FloatingPointError(f"non-finite loss at step {step}: {terms}")
            optimizer.step(scene, grads)
            scene.normalize_rotations()
            scene.touch()

            value = None
            last = step == config.iterations - 1
            if holdout and (last or (config.eval_interval > 0
                                     and (step + 1) % config.eval_interval == 0)):
                t_ind_active = step >= config.t_ind_activation_step
                value = holdout_psnr(scene, holdout,
                                     FULL if t_ind_active else ComponentMask(indirect=False))
            record = {
                "step": step,
                "total": terms["total"], "l1": terms["l1"], "dssim": terms["dssim"],
                "loss_s": terms["loss_s"], "loss_plus": terms["loss_plus"],
                "psnr": value,
                "ms": (time.perf_counter() - started) * 1e3,
            }
            records.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
            if on_step is not None:
                on_step(step, scene, record)
    finally:
        if log_fh is not None:
            log_fh.close()
    return scene, records


def holdout_psnr(scene: GaussianScene, frames, mask: ComponentMask = FULL,
                 tile_size: int = 64) -> float:
    """Mean tone-mapped PSNR of the scene against held-out frames."""
    from .rasterize import render
    values = []
    for frame in frames:
        img = render(scene, [frame.light], frame.camera, mask, tile_size=tile_size)
        values.append(psnr(tone_map(img), tone_map(frame.image)))
    return float(np.mean(values))


def _load_frames(dataset, partition: str) -> list:
    from .formats import read_pfm
    frames = []
    for f in dataset.frames_in(partition):
        if f.light == "all-on":
            continue
        frames.append(TrainingFrame(
            light=dataset.light_object(f.light),
            camera=dataset.camera_object(f.camera),
            image=read_pfm(dataset.image_path(f)),
        ))
    return frames
