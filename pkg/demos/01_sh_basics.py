"""Spherical harmonics in five minutes.

Projects a couple of sphere functions onto the 25-term basis and shows
what reconstruction and the analytic sphere integral give back.
"""
import numpy as np

from splatlight import sh

rng = np.random.default_rng(0)

print("The basis has", sh.N_BASES, "functions; the constant one is")
print("  y_0 =", sh.eval_sh_basis((0.0, 0.0, 1.0))[0], "= 1 / (2 sqrt(pi))")

# A constant function projects onto the DC coefficient alone.
coeffs = sh.project_function(lambda d: np.full(len(d), 0.8), 50_000, seed=1)
print("\nProjecting f = 0.8:")
print("  DC coefficient:", coeffs[0], "(expected", 0.8 * sh.DC_INTEGRAL, ")")
print("  largest other coefficient:", np.abs(coeffs[1:]).max())

# A clamped cosine lobe is the classic smooth test function.
lobe = sh.project_function(lambda d: np.maximum(d[:, 2], 0.0), 100_000, seed=2)
for direction in [(0.0, 0.0, 1.0), (0.0, 0.0, -1.0), (1.0, 0.0, 0.0)]:
    value = sh.eval_sh_function(lobe, direction)
    truth = max(direction[2], 0.0)
    print(f"  clamped cosine at {direction}: reconstructed {value:+.4f}, true {truth:+.4f}")

print("\nSphere integral of the lobe:")
print("  analytic from coefficients:", sh.integrate_over_sphere(lobe))
print("  exact value pi          :", np.pi)

# Orthonormality, the property everything else rests on.
dirs = sh.sample_uniform_sphere(200_000, rng)
basis = sh.eval_sh_basis(dirs)
gram = (4 * np.pi / len(dirs)) * basis.T @ basis
print("\nMonte Carlo Gram matrix deviation from identity:",
      np.abs(gram - np.eye(25)).max())
