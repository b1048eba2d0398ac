"""SSIM with an 11x11 Gaussian window (sigma 1.5) and its analytic gradient.

Local statistics use zero-padded correlation, so the adjoint of every
windowed average is the same correlation again (the kernel is symmetric).
That keeps the gradient a handful of correlations rather than a special
boundary case.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def _window_1d() -> np.ndarray:
    half = (WINDOW_SIZE - 1) / 2.0
    t = np.arange(WINDOW_SIZE) - half
    w = np.exp(-(t * t) / (2.0 * WINDOW_SIGMA ** 2))
    return w / w.sum()


_W1D = _window_1d()


def _blur(img: np.ndarray) -> np.ndarray:
    """Separable windowed mean over the two leading (spatial) axes."""
    out = correlate1d(img, _W1D, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, _W1D, axis=1, mode="constant", cval=0.0)


def ssim(x: np.ndarray, y: np.ndarray):
    """Mean SSIM between two (h, w, 3) images plus a cache for the gradient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    mu_x = _blur(x)
    mu_y = _blur(y)
    sigma_x = _blur(x * x) - mu_x * mu_x
    sigma_y = _blur(y * y) - mu_y * mu_y
    sigma_xy = _blur(x * y) - mu_x * mu_y

    a1 = 2.0 * mu_x * mu_y + C1
    a2 = 2.0 * sigma_xy + C2
    b1 = mu_x * mu_x + mu_y * mu_y + C1
    b2 = sigma_x + sigma_y + C2
    smap = (a1 * a2) / (b1 * b2)
    cache = (x, y, mu_x, mu_y, a1, a2, b1, b2, smap)
    return float(smap.mean()), cache


def ssim_grad(cache) -> np.ndarray:
    """d(mean SSIM)/dx as an image; x is the first argument given to ssim."""
    x, y, mu_x, mu_y, a1, a2, b1, b2, smap = cache
    inv = 1.0 / (b1 * b2)
    # Partials w.r.t. the local statistics (mu_x, sigma_x^2, sigma_xy).
    d_mu = 2.0 * (mu_y * a2 - mu_x * smap * b2) * inv
    d_sx = -smap / b2
    d_sxy = 2.0 * a1 * inv

    # Chain through sigma_x^2 = m2x - mu_x^2, sigma_xy = mxy - mu_x mu_y.
    d_mu_total = d_mu - 2.0 * mu_x * d_sx - mu_y * d_sxy
    grad = _blur(d_mu_total) + 2.0 * x * _blur(d_sx) + y * _blur(d_sxy)
    return grad / smap.size
