import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mbl.bloch import cosine_potential, fix_gauge, solve_bands  # noqa: E402
from mbl.lattice import make_lattice  # noqa: E402
from mbl.wannier import synthesize_wannier  # noqa: E402

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def lat2pi():
    return make_lattice((TWO_PI, 0.0), (0.0, TWO_PI))


@pytest.fixture(scope="session")
def unit_lattice():
    return make_lattice((1.0, 0.0), (0.0, 1.0))


@pytest.fixture(scope="session")
def cosine_bands(lat2pi):
    """``V = 2 cos x1 + 2 cos x2``, gauge fixed, 32 x 32 grid, cutoff 8."""
    return fix_gauge(solve_bands(cosine_potential(1.0), lat2pi, 32, 4, 8))


@pytest.fixture(scope="session")
def cosine_wannier(cosine_bands):
    return synthesize_wannier(cosine_bands)
