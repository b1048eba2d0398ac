"""Bidirectional SH: a scattering function of two directions.

Shows the packed symmetric storage, reciprocity by construction, and why
partial evaluation makes view changes cheap.
"""
import numpy as np

from splatlight import bsh, sh

rng = np.random.default_rng(3)

print("A full 25x25 coefficient matrix would cost", 25 * 25, "scalars;")
print("symmetric storage needs", bsh.N_PAIRS, "and buys reciprocity for free.")

packed = rng.normal(scale=0.2, size=(3, bsh.N_PAIRS))
packed[:, bsh.sym_index(0, 0)] += 0.5

wi, wo = sh.sample_uniform_sphere(2, rng)
print("\ns(wi, wo) =", bsh.eval_full(packed, wi, wo))
print("s(wo, wi) =", bsh.eval_full(packed, wo, wi), " (identical, by storage)")

# Partial evaluation: contract the light direction once, then any number of
# view directions are plain SH reconstructions.
partial = bsh.partial_eval(packed, wi)
print("\nAfter fixing wi, the function over wo is an SH vector per channel:",
      partial.shape)
for view in sh.sample_uniform_sphere(3, rng):
    fast = np.einsum("cj,j->c", partial, sh.eval_sh_basis(view))
    slow = bsh.eval_full(packed, wi, view)
    print(f"  view {np.round(view, 2)}: partial route {fast[0]:+.5f}, "
          f"direct {slow[0]:+.5f}")

print("\nOutgoing energy for this wi (analytic):",
      bsh.energy_integral(packed, wi))
print("Energy conservation wants each channel <= 1; the training penalty")
print("pushes any excess back down.")
