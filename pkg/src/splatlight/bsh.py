"""Bidirectional spherical harmonics with packed symmetric coefficients.

A two-direction scattering function is expanded over products of the 25
real SH bases, s(wi, wo) = sum_ij c_ij y_i(wi) y_j(wo). Reciprocity is
enforced structurally by storing c_ij = c_ji once: each RGB channel keeps
the 325 upper-triangle entries (i <= j, row-major), so swapping wi and wo
can never change the value.
"""
from __future__ import annotations

import numpy as np

from . import sh

N_PAIRS = 325  # 25 * 26 / 2

# Index tables for the packed layout: pair p stores (I[p], J[p]) with I <= J.
_PAIR_I = np.empty(N_PAIRS, dtype=np.int64)
_PAIR_J = np.empty(N_PAIRS, dtype=np.int64)
_p = 0
for _i in range(sh.N_BASES):
    for _j in range(_i, sh.N_BASES):
        _PAIR_I[_p] = _i
        _PAIR_J[_p] = _j
        _p += 1
del _p, _i, _j

# One-hot accumulators: H_J[p, J[p]] = 1 and H_I[p, I[p]] = 1, as float for
# matmul. OFFDIAG masks the mirrored contribution so diagonals count once.
_H_I = np.zeros((N_PAIRS, sh.N_BASES))
_H_J = np.zeros((N_PAIRS, sh.N_BASES))
_H_I[np.arange(N_PAIRS), _PAIR_I] = 1.0
_H_J[np.arange(N_PAIRS), _PAIR_J] = 1.0
_OFFDIAG = (_PAIR_I != _PAIR_J).astype(np.float64)

# Dense (i, j) -> packed index lookup.
_SYM_INDEX = np.empty((sh.N_BASES, sh.N_BASES), dtype=np.int64)
for _pk in range(N_PAIRS):
    _SYM_INDEX[_PAIR_I[_pk], _PAIR_J[_pk]] = _pk
    _SYM_INDEX[_PAIR_J[_pk], _PAIR_I[_pk]] = _pk
del _pk


def sym_index(i: int, j: int) -> int:
    """Packed storage index of the unordered basis pair {i, j}, 0-based."""
    if not (0 <= i < sh.N_BASES and 0 <= j < sh.N_BASES):
        raise ValueError(f"basis indices out of range: ({i}, {j})")
    return int(_SYM_INDEX[i, j])


def zeros(channels: int = 3) -> np.ndarray:
    """Fresh all-zero packed coefficient block of shape (channels, 325)."""
    return np.zeros((channels, N_PAIRS), dtype=np.float64)


def _check_packed(packed: np.ndarray) -> np.ndarray:
    packed = np.asarray(packed, dtype=np.float64)
    if packed.shape[-1] != N_PAIRS:
        raise ValueError(f"expected {N_PAIRS} packed coefficients, got {packed.shape[-1]}")
    return packed


def partial_eval(packed: np.ndarray, wi: np.ndarray) -> np.ndarray:
    """Contract the incoming direction, leaving an SH vector over wo.

    packed: (..., 325), wi: broadcast-compatible (..., 3). Returns
    (..., 25) coefficients c_j = sum_i c_ij y_i(wi) such that reconstructing
    at wo reproduces the full two-direction evaluation.

    Works on whole scenes: e.g. packed (n, 3, 325) with wi (n, 1, 3) or (3,).
    """
    packed = _check_packed(packed)
    y = sh.eval_sh_basis(wi)
    y_i = y[..., _PAIR_I]
    y_j = y[..., _PAIR_J]
    return (packed * y_i) @ _H_J + (packed * (_OFFDIAG * y_j)) @ _H_I


def partial_eval_adjoint(grad_out: np.ndarray, wi: np.ndarray) -> np.ndarray:
    """Pull an upstream (..., 25) gradient back to packed coefficients."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    y = sh.eval_sh_basis(wi)
    y_i = y[..., _PAIR_I]
    y_j = y[..., _PAIR_J]
    return (grad_out @ _H_J.T) * y_i + (grad_out @ _H_I.T) * (_OFFDIAG * y_j)


def eval_full(packed: np.ndarray, wi: np.ndarray, wo: np.ndarray) -> np.ndarray:
    """Evaluate the scattering function at a direction pair.

    Returns one value per leading/channel axis of `packed`, e.g. (3,) RGB
    for a (3, 325) block.
    """
    part = partial_eval(packed, wi)
    y_o = sh.eval_sh_basis(wo)
    return np.einsum("...j,...j->...", part, y_o)


def pair_weights(wi: np.ndarray, wo: np.ndarray) -> np.ndarray:
    """(..., 325) weights w_p with eval_full(packed, wi, wo) = packed . w.

    The same vector is the gradient of the evaluation w.r.t. the packed
    coefficients.
    """
    y_i = sh.eval_sh_basis(wi)
    y_o = sh.eval_sh_basis(wo)
    return (y_i[..., _PAIR_I] * y_o[..., _PAIR_J]
            + _OFFDIAG * y_i[..., _PAIR_J] * y_o[..., _PAIR_I])


def partial_dc(packed: np.ndarray, wi: np.ndarray) -> np.ndarray:
    """DC coefficient of the partial evaluation, without the other 24.

    The pairs (0, j) occupy the first 25 packed slots, so the constant-basis
    coefficient of s_wi is just their dot with the basis at wi.
    """
    packed = _check_packed(packed)
    y = sh.eval_sh_basis(wi)
    return np.einsum("...i,...i->...", packed[..., : sh.N_BASES], y)


def energy_integral(packed: np.ndarray, wi: np.ndarray) -> np.ndarray:
    """Analytic sphere integral over wo of the partially evaluated function.

    Matches integrate_over_sphere(partial_eval(...)) bit for bit; hot loops
    that only need the integral use partial_dc instead.
    """
    return sh.integrate_over_sphere(partial_eval(packed, wi))


def unpack_dense(packed: np.ndarray) -> np.ndarray:
    """Expand packed coefficients to the full symmetric (..., 25, 25) matrix."""
    packed = _check_packed(packed)
    return packed[..., _SYM_INDEX]


def pack_symmetric(dense: np.ndarray) -> np.ndarray:
    """Pack a symmetric (..., 25, 25) matrix; asymmetric input raises."""
    dense = np.asarray(dense, dtype=np.float64)
    if dense.shape[-2:] != (sh.N_BASES, sh.N_BASES):
        raise ValueError("expected trailing (25, 25) matrix")
    if not np.allclose(dense, np.swapaxes(dense, -1, -2), atol=1e-12):
        raise ValueError("matrix is not symmetric")
    return dense[..., _PAIR_I, _PAIR_J]
