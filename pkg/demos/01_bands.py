"""
Bloch bands of a square cosine potential
========================================

Solve the fiber problem on a grid of quasi-momenta, look at the two lowest
bands and classify whether the ground band is isolated.
"""

import numpy as np

from mbl.bloch import classify_hypothesis, cosine_potential, free_potential, ground_state_bound_check, solve_bands
from mbl.lattice import make_lattice

lat = make_lattice((2 * np.pi, 0.0), (0.0, 2 * np.pi))

# V(x) = 2 cos x1 + 2 cos x2, plane waves with |G| <= 8 dual vectors
pot = cosine_potential(1.0)
bs = solve_bands(pot, lat, 32, 4, 8)
l0, l1 = bs.band(0), bs.band(1)
print(f"band 0 spans [{l0.min():.6f}, {l0.max():.6f}]")
print(f"band 1 spans [{l1.min():.6f}, {l1.max():.6f}]")
print("classification:", classify_hypothesis(bs).value)

# without a potential the bands are folded parabolas and cross
free = solve_bands(free_potential(), lat, 16, 4, 2, vectors=False)
print("free classification:", classify_hypothesis(free).value)

# the ground band grows at least quadratically away from its minimum
c, holds, margin = ground_state_bound_check(pot, lat, bs, 8)
print(f"quadratic lower bound constant C = {c:.3e}, holds: {holds}")
