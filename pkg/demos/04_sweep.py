"""
Island widths and gaps over a parameter sweep
=============================================

Sweep the field strength at constant field (torus) and the strength of a
slowly varying field perturbation (disk), then fit power laws.
"""

import numpy as np

from mbl.lattice import make_lattice
from mbl.phase import FieldSpec
from mbl.spectral import SweepSettings, scaling_sweep
from mbl.wannier import harper_hoppings

lat = make_lattice((1.0, 0.0), (0.0, 1.0))
h = harper_hoppings()

# constant field: gaps stay open while islands shrink extremely fast
res = scaling_sweep(h, lat, FieldSpec(10 * np.pi), [0.02, 0.01, 0.005], [])
for c in res.cells:
    print(f"{c.label}: min gap {c.min_gap / c.spacing:.3f} spacing, max width {c.max_width:.2e}")
print("width exponent in eps:", round(res.fits["width_kappa0"].exponent, 2))

# a zero-centred field profile scaled by kappa broadens the islands
profile = ({"k": (10.0, 0.0), "amp": 1.0}, {"k": (0.0, 10.0), "amp": 1.0}, {"k": (0.0, 0.0), "amp": -2.0})
res = scaling_sweep(h, lat, FieldSpec(5 * np.pi, profile), [], [0.25, 0.5, 1.0], SweepSettings(kappa_epsilon=0.01))
for c in res.cells:
    print(f"{c.label}: {c.status}, max width {c.max_width:.3e}, Hausdorff {c.hausdorff:.3e}")
for name in ("width_kappa", "hausdorff"):
    f = res.fits[name]
    print(f"{f.law}: exponent {f.exponent:.3f}")
