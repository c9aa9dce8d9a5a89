"""Pytest configuration and fixtures for tpms_etr tests."""

import numpy as np
import pytest

from tpms_etr.config import get_settings
from tpms_etr.models.tpms import Box, NodalField, SolidType, TpmsKind
from tpms_etr.nodal import RodField
from tpms_etr.spline import ExtendedField, TrivariateSpline


@pytest.fixture(autouse=True)
def clear_settings_cache():
    """Rebuild settings for every test so monkeypatched variables take effect."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def p_nodal():
    """Schwarz P nodal field with unit frequencies."""
    return NodalField(kind=TpmsKind.P)


@pytest.fixture
def p_rod(p_nodal):
    """Rod form of the Schwarz P field."""
    return RodField(p_nodal, SolidType.ROD)


@pytest.fixture
def unit_box():
    """The unit cube [0, 1]^3."""
    return Box.cube(1.0)


@pytest.fixture
def random_spline(rng):
    """Cubic 6x6x6 spline with random coefficients in [-1, 1]."""
    return TrivariateSpline.uniform((6, 6, 6), (3, 3, 3), rng.uniform(-1.0, 1.0, (6, 6, 6)))


@pytest.fixture
def random_field(random_spline):
    """Half-unit reflective extension of the random spline."""
    return ExtendedField(random_spline)


class QuadraticField:
    """Scalar field |x - center|^2, a sphere family centred in the box."""

    def __init__(self, center=(0.5, 0.5, 0.5)):
        self.center = np.asarray(center, dtype=np.float64)

    def __call__(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.sum((pts - self.center) ** 2, axis=1)

    def evaluate_grid(self, xs, ys, zs):
        cx, cy, cz = self.center
        return ((xs[:, None, None] - cx) ** 2 + (ys[None, :, None] - cy) ** 2
                + (zs[None, None, :] - cz) ** 2)


class LinearField:
    """Scalar field x, whose sublevel sets are slabs."""

    def __call__(self, points):
        return np.asarray(points, dtype=np.float64).reshape(-1, 3)[:, 0]

    def evaluate_grid(self, xs, ys, zs):
        return np.broadcast_to(xs[:, None, None], (len(xs), len(ys), len(zs))).copy()


@pytest.fixture
def sphere_field():
    """Squared distance to the centre of the unit cube."""
    return QuadraticField()


@pytest.fixture
def slab_field():
    """The coordinate x."""
    return LinearField()
