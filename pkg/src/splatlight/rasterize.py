"""Perspective projection and tile-based alpha compositing of Gaussians.

Projection follows the EWA splatting recipe: the world covariance is pushed
through the world-to-camera rotation and the perspective Jacobian at the
primitive center, then a 0.3 px^2 low-pass term is added to the diagonal.
Compositing walks primitives in global depth order per pixel:

    I(p) = sum_i T_i alpha_i C_i,   T_i = prod_{j<i} (1 - alpha_j)

with alpha_i = o_i * exp(-0.5 d^T Sigma'^-1 d) clipped to ALPHA_MAX,
contributions skipped below ALPHA_MIN, and the pixel terminated once its
transmittance drops under T_MIN. Primitive color is the SH reconstruction
at the per-primitive view direction, clamped at zero per channel.

Tiles only restrict which primitives are *candidates* for a pixel; every
primitive whose alpha could reach ALPHA_MIN anywhere lies inside its
bounding rectangle, so the output is independent of tile size, bit for bit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import sh
from .relight import ComponentMask, FULL, RelightCache, RelitColor, relight_colors
from .scene import GaussianPrimitive, GaussianScene, quaternion_to_matrix

LOW_PASS = 0.3        # px^2 added to the projected covariance diagonal
ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4
NEAR_PLANE = 0.01
DEFAULT_TILE = 16

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:  # pure-numpy fallback keeps identical semantics
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap

# alpha = o * exp(-q/2) >= ALPHA_MIN requires q <= 2*ln(255*o) <= 2*ln(255),
# i.e. a Mahalanobis radius of at most 3.33; 3.5 leaves margin.
_BOUND_SIGMAS = 3.5


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: x_cam = R x_world + t, image plane at +z."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray     # (3, 3) world-to-camera rotation
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @property
    def center(self) -> np.ndarray:
        """Camera position in world space."""
        return -self.rotation.T @ self.translation

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0), fx=None, fy=None,
                width=256, height=256, fov_deg=50.0):
        """Camera at `eye` looking toward `target`; +z points into the scene."""
        eye = np.asarray(eye, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        forward = sh.normalize(target - eye)
        up = np.asarray(up, dtype=np.float64)
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-9:
            # View direction parallel to up; pick any perpendicular.
            up = np.array([1.0, 0.0, 0.0]) if abs(forward[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
            right = np.cross(forward, up)
        right = sh.normalize(right)
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])
        if fx is None:
            fx = 0.5 * width / np.tan(np.deg2rad(fov_deg) / 2.0)
        if fy is None:
            fy = fx
        return cls(fx=float(fx), fy=float(fy), cx=width / 2.0, cy=height / 2.0,
                   width=int(width), height=int(height),
                   rotation=rot, translation=-rot @ eye)


@dataclass
class ProjectedGaussian:
    """Screen-space footprint of one primitive."""

    mean2d: np.ndarray
    cov2d: np.ndarray       # symmetric 2x2, low-pass included
    depth: float
    opacity: float
    color: RelitColor
    view_dir: np.ndarray


@dataclass
class ProjectedSplats:
    """Struct-of-arrays over the visible primitives, sorted by depth."""

    means2d: np.ndarray    # (m, 2)
    covs2d: np.ndarray     # (m, 2, 2)
    depths: np.ndarray     # (m,)
    opacities: np.ndarray  # (m,)
    rgb: np.ndarray        # (m, 3) clamped colors at the view direction
    radii: np.ndarray      # (m,) conservative pixel-space bound
    source_index: np.ndarray  # (m,) index into the original scene
    color_mask: np.ndarray    # (m, 3) True where the pre-clamp value was >= 0
    view_basis: np.ndarray    # (m, 25) SH basis at each view direction
    skipped_singular: int = 0

    def __len__(self):
        return len(self.depths)


def project(prim: GaussianPrimitive, color: RelitColor, cam: Camera):
    """Project a single primitive; returns ProjectedGaussian or None if culled."""
    shell = GaussianScene(
        positions=prim.position[None], rotations=prim.rotation[None],
        log_scales=prim.log_scale[None],
        opacity_logits=np.array([prim.opacity_logit]),
        albedo_logits=prim.albedo_logit[None],
        t_dir=prim.t_dir[None], t_ind=prim.t_ind[None], s=prim.s[None],
    )
    splats = project_scene(shell, color.sh_rgb[None], cam)
    if len(splats) == 0:
        return None
    return ProjectedGaussian(
        mean2d=splats.means2d[0], cov2d=splats.covs2d[0],
        depth=float(splats.depths[0]), opacity=float(splats.opacities[0]),
        color=color, view_dir=sh.normalize(prim.position - cam.center),
    )


def project_scene(scene: GaussianScene, colors: np.ndarray, cam: Camera) -> ProjectedSplats:
    """Project every primitive, cull behind the near plane, sort by depth.

    colors: (n, 3, 25) relit coefficients. Ties in depth break by primitive
    index so renders are bit-reproducible.
    """
    n = len(scene)
    cam_pts = scene.positions @ cam.rotation.T + cam.translation
    z = cam_pts[:, 2]
    keep = z > NEAR_PLANE
    idx = np.nonzero(keep)[0]
    if len(idx) == 0:
        return _empty_splats()
    pts = cam_pts[idx]
    x, y, zk = pts[:, 0], pts[:, 1], pts[:, 2]

    means2d = np.stack([cam.fx * x / zk + cam.cx, cam.fy * y / zk + cam.cy], axis=-1)

    inv_z = 1.0 / zk
    jac = np.zeros((len(idx), 2, 3))
    jac[:, 0, 0] = cam.fx * inv_z
    jac[:, 0, 2] = -cam.fx * x * inv_z * inv_z
    jac[:, 1, 1] = cam.fy * inv_z
    jac[:, 1, 2] = -cam.fy * y * inv_z * inv_z

    cov3d = scene.covariances()[idx]
    jw = jac @ cam.rotation
    covs2d = jw @ cov3d @ np.swapaxes(jw, 1, 2)
    covs2d[:, 0, 0] += LOW_PASS
    covs2d[:, 1, 1] += LOW_PASS
    covs2d = 0.5 * (covs2d + np.swapaxes(covs2d, 1, 2))

    view_dirs = scene.positions[idx] - cam.center
    view_dirs /= np.linalg.norm(view_dirs, axis=-1, keepdims=True)
    view_basis = sh.eval_sh_basis(view_dirs)
    raw_rgb = np.einsum("ncj,nj->nc", colors[idx], view_basis)
    color_mask = raw_rgb >= 0.0
    rgb = np.maximum(raw_rgb, 0.0)

    # Conservative footprint radius from the largest eigenvalue.
    trace = covs2d[:, 0, 0] + covs2d[:, 1, 1]
    det = covs2d[:, 0, 0] * covs2d[:, 1, 1] - covs2d[:, 0, 1] ** 2
    mid = 0.5 * trace
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radii = np.ceil(_BOUND_SIGMAS * np.sqrt(lam_max)) + 1.0

    order = np.lexsort((idx, z[idx]))
    return ProjectedSplats(
        means2d=means2d[order], covs2d=covs2d[order], depths=z[idx][order],
        opacities=scene.opacities()[idx][order], rgb=rgb[order],
        radii=radii[order], source_index=idx[order],
        color_mask=color_mask[order], view_basis=view_basis[order],
    )


def _empty_splats() -> ProjectedSplats:
    return ProjectedSplats(
        means2d=np.zeros((0, 2)), covs2d=np.zeros((0, 2, 2)),
        depths=np.zeros(0), opacities=np.zeros(0), rgb=np.zeros((0, 3)),
        radii=np.zeros(0), source_index=np.zeros(0, dtype=np.int64),
        color_mask=np.zeros((0, 3), dtype=bool), view_basis=np.zeros((0, 25)),
    )


def _tile_candidates(splats: ProjectedSplats, x0, x1, y0, y1) -> np.ndarray:
    mx, my = splats.means2d[:, 0], splats.means2d[:, 1]
    r = splats.radii
    hit = (mx + r >= x0) & (mx - r <= x1 - 1) & (my + r >= y0) & (my - r <= y1 - 1)
    return np.nonzero(hit)[0]


@_njit(cache=True)
def _composite_kernel(height, width, tile_size, means2d, conics, opacities, rgb,
                      radii, image):
    """Scalar compositing over tiles; primitives arrive depth-sorted.

    conics holds (a, b, c) of each inverse 2D covariance. Per-pixel rules
    mirror the numpy path exactly: alpha clip, alpha skip, transmittance
    termination.
    """
    n = means2d.shape[0]
    for ty0 in range(0, height, tile_size):
        ty1 = min(ty0 + tile_size, height)
        for tx0 in range(0, width, tile_size):
            tx1 = min(tx0 + tile_size, width)
            th = ty1 - ty0
            tw = tx1 - tx0
            trans = np.ones((th, tw))
            acc = np.zeros((th, tw, 3))
            alive = th * tw
            for k in range(n):
                if alive == 0:
                    break
                mx = means2d[k, 0]
                my = means2d[k, 1]
                r = radii[k]
                if mx + r < tx0 or mx - r > tx1 - 1 or my + r < ty0 or my - r > ty1 - 1:
                    continue
                x0 = max(tx0, int(np.floor(mx - r)))
                x1 = min(tx1, int(np.ceil(mx + r)) + 1)
                y0 = max(ty0, int(np.floor(my - r)))
                y1 = min(ty1, int(np.ceil(my + r)) + 1)
                ca = conics[k, 0]
                cb = conics[k, 1]
                cc = conics[k, 2]
                op = opacities[k]
                for py in range(y0, y1):
                    dy = py - my
                    for px in range(x0, x1):
                        t = trans[py - ty0, px - tx0]
                        if t < T_MIN:
                            continue
                        dx = px - mx
                        q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
                        alpha = op * np.exp(-0.5 * q)
                        if alpha < ALPHA_MIN:
                            continue
                        if alpha > ALPHA_MAX:
                            alpha = ALPHA_MAX
                        w = t * alpha
                        acc[py - ty0, px - tx0, 0] += w * rgb[k, 0]
                        acc[py - ty0, px - tx0, 1] += w * rgb[k, 1]
                        acc[py - ty0, px - tx0, 2] += w * rgb[k, 2]
                        t_new = t * (1.0 - alpha)
                        trans[py - ty0, px - tx0] = t_new
                        if t_new < T_MIN:
                            alive -= 1
            image[ty0:ty1, tx0:tx1] = acc


def rasterize(splats: ProjectedSplats, cam: Camera, tile_size: int = DEFAULT_TILE,
              capture: bool = False):
    """Composite depth-sorted splats into an HDR image.

    With capture=True also returns the per-tile compositing record needed
    for the analytic backward pass (that path stays in numpy; the plain
    render path runs a compiled kernel when numba is available).
    """
    h, w = cam.height, cam.width
    image = np.zeros((h, w, 3), dtype=np.float64)
    records = [] if capture else None

    covs = splats.covs2d
    dets = covs[:, 0, 0] * covs[:, 1, 1] - covs[:, 0, 1] * covs[:, 1, 0]
    invertible = (dets > 0) & np.isfinite(dets)
    skipped = int((~invertible).sum())
    if skipped:
        logging.getLogger(__name__).warning(
            "skipping %d primitives with non-invertible screen covariance", skipped)
    safe_dets = np.where(invertible, dets, 1.0)
    # Conic (a, b, c): the quadratic form a dx^2 + 2 b dx dy + c dy^2.
    conics = np.stack([covs[:, 1, 1], -covs[:, 0, 1], covs[:, 0, 0]],
                      axis=-1) / safe_dets[:, None]

    if not capture and _HAVE_NUMBA:
        keep = np.nonzero(invertible)[0]
        _composite_kernel(h, w, tile_size,
                          np.ascontiguousarray(splats.means2d[keep]),
                          np.ascontiguousarray(conics[keep]),
                          np.ascontiguousarray(splats.opacities[keep]),
                          np.ascontiguousarray(splats.rgb[keep]),
                          np.ascontiguousarray(splats.radii[keep]), image)
        splats.skipped_singular = skipped
        return image

    inv_covs = np.empty((len(splats), 2, 2))
    inv_covs[:, 0, 0] = conics[:, 0]
    inv_covs[:, 0, 1] = conics[:, 1]
    inv_covs[:, 1, 0] = conics[:, 1]
    inv_covs[:, 1, 1] = conics[:, 2]

    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)

    for ty0 in range(0, h, tile_size):
        ty1 = min(ty0 + tile_size, h)
        for tx0 in range(0, w, tile_size):
            tx1 = min(tx0 + tile_size, w)
            cand = _tile_candidates(splats, tx0, tx1, ty0, ty1)
            cand = cand[invertible[cand]]
            if len(cand) == 0:
                continue
            trans = np.ones((ty1 - ty0, tx1 - tx0))
            tile_img = np.zeros((ty1 - ty0, tx1 - tx0, 3))
            entries = [] if capture else None
            trans_max = 1.0

            for k in cand:
                # Candidates come depth-sorted: once every pixel of the tile
                # is terminated, later primitives cannot contribute.
                if trans_max < T_MIN:
                    break
                # Work only inside the primitive's bounding rectangle; the
                # radius bound guarantees alpha < ALPHA_MIN outside it, so
                # skipping those pixels leaves the output bit-identical.
                mx, my = splats.means2d[k]
                r = splats.radii[k]
                x0 = max(tx0, int(np.floor(mx - r)))
                x1 = min(tx1, int(np.ceil(mx + r)) + 1)
                y0 = max(ty0, int(np.floor(my - r)))
                y1 = min(ty1, int(np.ceil(my + r)) + 1)
                if x0 >= x1 or y0 >= y1:
                    continue
                # Shrink further to the rows and columns that still carry
                # transmittance; terminated pixels can contribute nothing.
                t_alive = trans[y0 - ty0:y1 - ty0, x0 - tx0:x1 - tx0] >= T_MIN
                rows_alive = t_alive.any(axis=1)
                if not rows_alive.any():
                    continue
                cols_alive = t_alive.any(axis=0)
                y0s = y0 + int(np.argmax(rows_alive))
                y1s = y1 - int(np.argmax(rows_alive[::-1]))
                x0s = x0 + int(np.argmax(cols_alive))
                x1s = x1 - int(np.argmax(cols_alive[::-1]))
                x0, x1, y0, y1 = x0s, x1s, y0s, y1s

                dx = cols[x0:x1] - mx
                dy = rows[y0:y1] - my
                ic = inv_covs[k]
                q = (ic[0, 0] * dx * dx)[None, :] \
                    + (2.0 * ic[0, 1] * dx)[None, :] * dy[:, None] \
                    + (ic[1, 1] * dy * dy)[:, None]
                g = np.exp(-0.5 * q)
                alpha = np.minimum(splats.opacities[k] * g, ALPHA_MAX)
                t_view = trans[y0 - ty0:y1 - ty0, x0 - tx0:x1 - tx0]
                live = (alpha >= ALPHA_MIN) & (t_view >= T_MIN)
                if not np.any(live):
                    continue
                alpha_eff = np.where(live, alpha, 0.0)
                weight = t_view * alpha_eff
                tile_img[y0 - ty0:y1 - ty0, x0 - tx0:x1 - tx0] += \
                    weight[:, :, None] * splats.rgb[k]
                if capture:
                    dalpha_dopacity = np.where(live & (alpha < ALPHA_MAX), g, 0.0)
                    entries.append((k, (y0, y1, x0, x1), alpha_eff,
                                    t_view.copy(), dalpha_dopacity))
                t_view *= 1.0 - alpha_eff
                trans_max = float(trans.max())

            image[ty0:ty1, tx0:tx1] = tile_img
            if capture and entries:
                records.append(((ty0, ty1, tx0, tx1), entries))

    splats.skipped_singular = skipped
    if capture:
        return image, records
    return image


def rasterize_backward(splats: ProjectedSplats, records, grad_image: np.ndarray):
    """Gradients of sum(grad_image * image) w.r.t. splat colors and opacities.

    Returns (grad_rgb (m, 3), grad_opacity (m,)) indexed like `splats`.
    Uses the captured forward record: for entry k at a pixel,
    d I / d alpha_k = T_k C_k - S_k / (1 - alpha_k) with S_k the radiance
    accumulated behind k.
    """
    m = len(splats)
    grad_rgb = np.zeros((m, 3))
    grad_opacity = np.zeros(m)
    for (ty0, ty1, tx0, tx1), entries in records:
        gpix = grad_image[ty0:ty1, tx0:tx1]
        behind = np.zeros_like(gpix)
        for k, (y0, y1, x0, x1), alpha, trans, dalpha_dop in reversed(entries):
            g_view = gpix[y0 - ty0:y1 - ty0, x0 - tx0:x1 - tx0]
            b_view = behind[y0 - ty0:y1 - ty0, x0 - tx0:x1 - tx0]
            weight = trans * alpha
            grad_rgb[k] += np.einsum("yx,yxc->c", weight, g_view)
            # d(weighted radiance)/d alpha at this pixel, per channel summed.
            front = (g_view @ splats.rgb[k]) * trans
            occl = np.einsum("yxc,yxc->yx", g_view, b_view) / (1.0 - alpha)
            grad_opacity[k] += np.sum((front - occl) * dalpha_dop)
            b_view += weight[:, :, None] * splats.rgb[k]
    return grad_rgb, grad_opacity


def render(scene: GaussianScene, lights, cam: Camera, mask: ComponentMask = FULL,
           cache: RelightCache | None = None, tile_size: int = DEFAULT_TILE) -> np.ndarray:
    """Relight, project, and rasterize; returns a (h, w, 3) HDR image."""
    if cache is not None:
        colors = cache.colors(scene, lights, mask)
    else:
        colors = relight_colors(scene, lights, mask)
    splats = project_scene(scene, colors, cam)
    return rasterize(splats, cam, tile_size=tile_size)
