"""Bidirectional SH storage and evaluation tests."""
import numpy as np
import pytest

from splatlight import bsh, sh

from oracles import jittered_sphere, mc_sphere_integral, naive_bsh_eval


def random_packed(rng, channels=3, scale=1.0):
    return rng.normal(scale=scale, size=(channels, bsh.N_PAIRS))


def test_sym_index_first_pair():
    assert bsh.sym_index(0, 0) == 0


def test_sym_index_symmetric():
    for i in range(25):
        for j in range(25):
            assert bsh.sym_index(i, j) == bsh.sym_index(j, i)


def test_sym_index_bijective():
    image = {bsh.sym_index(i, j) for i in range(25) for j in range(i, 25)}
    assert image == set(range(325))


def test_sym_index_out_of_range():
    with pytest.raises(ValueError):
        bsh.sym_index(25, 0)
    with pytest.raises(ValueError):
        bsh.sym_index(0, -1)


def test_eval_full_zero():
    rng = np.random.default_rng(0)
    wi, wo = sh.sample_uniform_sphere(2, rng)
    np.testing.assert_array_equal(bsh.eval_full(bsh.zeros(), wi, wo), np.zeros(3))


def test_eval_full_constant_pair():
    packed = bsh.zeros()
    packed[:, bsh.sym_index(0, 0)] = 1.0
    rng = np.random.default_rng(1)
    for _ in range(5):
        wi, wo = sh.sample_uniform_sphere(2, rng)
        value = bsh.eval_full(packed, wi, wo)
        np.testing.assert_allclose(value, 1.0 / (4.0 * np.pi), rtol=1e-12)


def test_eval_full_matches_naive_double_loop():
    rng = np.random.default_rng(2)
    for _ in range(50):
        packed = random_packed(rng)
        wi, wo = sh.sample_uniform_sphere(2, rng)
        fast = bsh.eval_full(packed, wi, wo)
        slow = np.array([naive_bsh_eval(packed[c], wi, wo) for c in range(3)])
        np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=1e-12)


def test_partial_eval_zero():
    rng = np.random.default_rng(3)
    wi = sh.sample_uniform_sphere(1, rng)[0]
    np.testing.assert_array_equal(bsh.partial_eval(bsh.zeros(), wi), np.zeros((3, 25)))


def test_partial_eval_consistent_with_full():
    rng = np.random.default_rng(4)
    for _ in range(20):
        packed = random_packed(rng)
        wi = sh.sample_uniform_sphere(1, rng)[0]
        part = bsh.partial_eval(packed, wi)
        for wo in sh.sample_uniform_sphere(5, rng):
            recon = np.einsum("cj,j->c", part, sh.eval_sh_basis(wo))
            np.testing.assert_allclose(recon, bsh.eval_full(packed, wi, wo),
                                       rtol=1e-9, atol=1e-12)


def test_reciprocity():
    rng = np.random.default_rng(5)
    for _ in range(200):
        packed = random_packed(rng)
        wi, wo = sh.sample_uniform_sphere(2, rng)
        forward = bsh.eval_full(packed, wi, wo)
        backward = bsh.eval_full(packed, wo, wi)
        np.testing.assert_allclose(forward, backward, rtol=1e-9, atol=1e-12)


def test_linearity_in_coefficients():
    rng = np.random.default_rng(6)
    p1 = random_packed(rng)
    p2 = random_packed(rng)
    wi, wo = sh.sample_uniform_sphere(2, rng)
    lhs = bsh.eval_full(1.5 * p1 - 0.5 * p2, wi, wo)
    rhs = 1.5 * bsh.eval_full(p1, wi, wo) - 0.5 * bsh.eval_full(p2, wi, wo)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-11)


def test_energy_integral_zero():
    rng = np.random.default_rng(7)
    wi = sh.sample_uniform_sphere(1, rng)[0]
    np.testing.assert_array_equal(bsh.energy_integral(bsh.zeros(), wi), np.zeros(3))


def test_energy_integral_constant_pair():
    packed = bsh.zeros()
    packed[:, bsh.sym_index(0, 0)] = 1.0
    rng = np.random.default_rng(8)
    wi = sh.sample_uniform_sphere(1, rng)[0]
    np.testing.assert_allclose(bsh.energy_integral(packed, wi), 1.0, rtol=1e-12)


def test_energy_integral_matches_monte_carlo():
    rng = np.random.default_rng(9)
    packed = random_packed(rng, scale=0.3)
    packed[:, bsh.sym_index(0, 0)] += 2.0
    wi = sh.sample_uniform_sphere(1, rng)[0]
    analytic = bsh.energy_integral(packed, wi)
    assert np.all(np.abs(analytic) > 0.5)
    dirs = jittered_sphere(400, 500, np.random.default_rng(10))
    part = bsh.partial_eval(packed, wi)
    basis = sh.eval_sh_basis(dirs)
    for c in range(3):
        mc = mc_sphere_integral(basis @ part[c])
        assert mc == pytest.approx(analytic[c], rel=0.02)


def test_energy_integral_equals_integrate_of_partial():
    rng = np.random.default_rng(11)
    packed = random_packed(rng)
    wi = sh.sample_uniform_sphere(1, rng)[0]
    part = bsh.partial_eval(packed, wi)
    np.testing.assert_array_equal(bsh.energy_integral(packed, wi),
                                  sh.integrate_over_sphere(part))


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(12)
    packed = random_packed(rng)
    dense = bsh.unpack_dense(packed)
    np.testing.assert_array_equal(np.swapaxes(dense, -1, -2), dense)
    np.testing.assert_array_equal(bsh.pack_symmetric(dense), packed)


def test_partial_eval_adjoint_is_transpose():
    # <A(g), x> must equal <g, A^T(x)> for the linear partial evaluation.
    rng = np.random.default_rng(13)
    packed = random_packed(rng)
    wi = sh.sample_uniform_sphere(1, rng)[0]
    grad_out = rng.normal(size=(3, 25))
    lhs = np.sum(bsh.partial_eval(packed, wi) * grad_out)
    rhs = np.sum(packed * bsh.partial_eval_adjoint(grad_out, wi))
    assert lhs == pytest.approx(rhs, rel=1e-12)
