import numpy as np
import pytest

from anisolab.maps import ChartAtlas, TorusMap, TrigPoly

CAT = [[2, 1], [1, 1]]


def shear_pair():
    """Perturbation g = (sin(2 pi (x+y)), 0); composed with the cat map the
    Jacobian determinant stays exactly 1 for every strength."""
    return (TrigPoly([((1, 1), 0.0, 1.0)]), TrigPoly.zero())


def skew_pair():
    """Non-conservative perturbation g = (sin(2 pi x), cos(2 pi y))."""
    return (TrigPoly([((1, 0), 0.0, 1.0)]), TrigPoly([((0, 1), 1.0, 0.0)]))


@pytest.fixture(scope="session")
def cat_map():
    return TorusMap(CAT)


@pytest.fixture(scope="session")
def shear_map():
    return TorusMap(CAT, shear_pair(), 0.05)


@pytest.fixture(scope="session")
def skew_map():
    return TorusMap(CAT, skew_pair(), 0.03)


@pytest.fixture(scope="session")
def cat_report(cat_map):
    return cat_map.hyperbolicity_constants()


@pytest.fixture(scope="session")
def shear_report(shear_map):
    return shear_map.hyperbolicity_constants()


@pytest.fixture(scope="session")
def skew_report(skew_map):
    return skew_map.hyperbolicity_constants()


@pytest.fixture(scope="session")
def cat_atlas(cat_map, cat_report):
    return ChartAtlas.build(cat_map, cat_report)


@pytest.fixture(scope="session")
def skew_atlas(skew_map, skew_report):
    return ChartAtlas.build(skew_map, skew_report)


@pytest.fixture(scope="session")
def shear_atlas(shear_map, shear_report):
    return ChartAtlas.build(shear_map, shear_report)


def grid_points(n):
    xs = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])
