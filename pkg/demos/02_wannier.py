"""
Wannier function and hoppings of the ground band
================================================

Fix a smooth gauge, synthesize the Wannier function on a real-space grid and
read off the tight-binding hoppings, with and without a weak magnetic field.
"""

import numpy as np

from mbl.bloch import cosine_potential, fix_gauge, solve_bands
from mbl.lattice import enumerate_sites, make_lattice
from mbl.phase import FieldSpec
from mbl.wannier import hoppings_from_band, magnetic_gramian, magnetic_hoppings, synthesize_wannier, wannier_overlaps

lat = make_lattice((2 * np.pi, 0.0), (0.0, 2 * np.pi))
pot = cosine_potential(1.0)
bs = fix_gauge(solve_bands(pot, lat, 32, 2, 8))

w = synthesize_wannier(bs)
print(f"norm {w.norm():.8f}, decay rate {w.decay_rate:.3f} per unit length (fit residual {w.fit_residual:.3f})")

# translates are orthonormal
ov = wannier_overlaps(w, [(0, 0), (1, 0), (1, 1), (2, 0)])
print("overlaps with translates:", np.round(np.abs(ov), 12))

# hoppings are the Fourier coefficients of the band
h = hoppings_from_band(bs.band(0), lat)
for g in [(0, 0), (1, 0), (1, 1), (2, 0)]:
    print(f"h{g} = {h[g].real:+.6e}")

# a weak field makes the translates slightly non-orthogonal; Loewdin restores them
fld = FieldSpec(0.02)
sites = enumerate_sites(lat, 5 * 2 * np.pi)
gram = magnetic_gramian(w, sites, 0.01, 0.0, fld)
off = np.max(np.abs(gram.G - np.diag(np.diag(gram.G))))
print(f"max off-diagonal Gramian entry at eps=0.01: {off:.3e}")
hm = magnetic_hoppings(w, gram, pot, lat, 0.01, fld)
print(f"magnetic h(1,0) = {hm[(1, 0)]:.6e}")
