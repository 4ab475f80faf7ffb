"""
Landau levels of a lattice in a weak field
==========================================

For the nearest-neighbour model on the square lattice the bottom of the
spectrum at small flux clusters around harmonic-oscillator levels.
"""

import numpy as np

from mbl.effective import Torus, build_effective_matrix, landau_prediction, landau_spacing, quasi_bloch
from mbl.lattice import make_lattice
from mbl.phase import FieldSpec
from mbl.spectral import detect_islands, landau_cluster_check
from mbl.wannier import harper_hoppings

lat = make_lattice((1.0, 0.0), (0.0, 1.0))
h = harper_hoppings()
hd = quasi_bloch(h, lat, 64).harmonic
print(f"band minimum {hd.min_value:.6f} at theta = {hd.theta_min}, effective mass parameter m = {hd.m:.6f}")

for q in (32, 64, 128):
    eps = 2 * np.pi / q
    pred = landau_prediction(hd, 1.0, eps, 2)
    spacing = landau_spacing(hd, 1.0, eps)
    spec = build_effective_matrix(h, lat, FieldSpec(1.0), eps, 0.0, Torus(q)).spectrum()
    rep = detect_islands(spec, 0.25 * spacing, (-np.inf, pred[-1] + 0.5 * spacing))
    dev = landau_cluster_check(rep, pred, spacing)
    print(f"flux 2pi/{q}: island centers {np.round(rep.centers[:3], 6)}, deviation/spacing {np.round(dev, 4)}")
