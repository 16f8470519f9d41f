"""Torus maps: evaluation, inversion, differentials, hyperbolicity, distance."""

import json
import math

import numpy as np
import pytest

from anisolab.errors import InvalidParams, NoConvergence, NotAnosov
from anisolab.maps import ChartAtlas, TorusMap, TrigPoly, map_distance

from conftest import CAT, grid_points, shear_pair, skew_pair


def torus_diff(a, b):
    return np.max(np.abs((a - b + 0.5) % 1.0 - 0.5))


# ---- evaluation ------------------------------------------------------------


def test_eval_cat_midpoint(cat_map):
    out = cat_map([[0.5, 0.5]])
    assert np.allclose(out, [[0.5, 0.0]], atol=1e-15)


def test_eval_fixed_origin(shear_map):
    assert np.allclose(shear_map([[0.0, 0.0]]), [[0.0, 0.0]], atol=1e-15)


def test_eval_periodicity(shear_map):
    rng = np.random.default_rng(11)
    x = rng.random((200, 2))
    shifted = shear_map.lift(x + np.array([1.0, 1.0]))
    assert torus_diff(shear_map(x), shifted % 1.0) < 1e-12


def test_rejects_non_unimodular():
    with pytest.raises(InvalidParams):
        TorusMap([[2, 0], [0, 1]])
    with pytest.raises(InvalidParams):
        TorusMap([[2.5, 1], [1, 1]])


# ---- inversion -------------------------------------------------------------


def test_invert_linear_exact(cat_map):
    out = cat_map.invert([[0.3, 0.7]])
    assert np.allclose(out, [[0.6, 0.1]], atol=1e-15)


def test_invert_roundtrip_perturbed(shear_map, skew_map):
    rng = np.random.default_rng(5)
    x = rng.random((1000, 2))
    for tm in (shear_map, skew_map):
        y = tm(x)
        assert torus_diff(tm.invert(y), x) < 1e-10


def test_invert_fails_past_threshold():
    # g = (sin(2 pi x), 0) folds the torus once the strength passes 1/(2 pi);
    # by strength 0.25 Newton stalls somewhere on a 32x32 grid.
    strong = TorusMap(CAT, (TrigPoly([((1, 0), 0.0, 1.0)]), TrigPoly.zero()), 0.25)
    pts = grid_points(32)
    with pytest.raises(NoConvergence):
        strong.invert(strong(pts))
    mild = TorusMap(CAT, (TrigPoly([((1, 0), 0.0, 1.0)]), TrigPoly.zero()), 0.1)
    assert torus_diff(mild.invert(mild(pts)), pts) < 1e-10


# ---- differentials ---------------------------------------------------------


def test_differential_linear_is_constant(cat_map):
    rng = np.random.default_rng(3)
    D = cat_map.differential(rng.random((50, 2)))
    assert np.allclose(D, np.array(CAT, dtype=float), atol=0)


def test_differential_matches_finite_differences(skew_map):
    rng = np.random.default_rng(17)
    pts = rng.random((40, 2))
    D = skew_map.differential(pts)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (skew_map.lift(pts + e) - skew_map.lift(pts - e)) / (2 * h)
        assert np.max(np.abs(D[:, :, j] - fd)) < 1e-8


def test_area_preserving_family_det_one():
    rng = np.random.default_rng(23)
    pts = rng.random((200, 2))
    for t in (0.02, 0.05, 0.11):
        tm = TorusMap(CAT, shear_pair(), t)
        D = tm.differential(pts)
        det = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
        assert np.max(np.abs(det - 1.0)) < 1e-12


def test_det_jet_gradient_and_hessian(skew_map):
    rng = np.random.default_rng(29)
    pts = rng.random((15, 2))
    det, grad, hess = skew_map.det_jet(pts, order=2)
    h = 1e-5

    def logdet(q):
        d, _, _ = skew_map.det_jet(q, order=0)
        return np.log(d)

    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (logdet(pts + e) - logdet(pts - e)) / (2 * h)
        assert np.max(np.abs(grad[:, k] - fd)) < 1e-7
        fd2 = (logdet(pts + e) - 2 * logdet(pts) + logdet(pts - e)) / h**2
        assert np.max(np.abs(hess[:, k, k] - fd2)) < 1e-4
    e0 = np.array([h, 0.0])
    e1 = np.array([0.0, h])
    fd_mixed = (
        logdet(pts + e0 + e1) - logdet(pts + e0 - e1) - logdet(pts - e0 + e1) + logdet(pts - e0 - e1)
    ) / (4 * h**2)
    assert np.max(np.abs(hess[:, 0, 1] - fd_mixed)) < 1e-4


# ---- hyperbolicity ---------------------------------------------------------


def test_cat_constants_match_eigenvalues(cat_report):
    lam = (3 + math.sqrt(5)) / 2
    nu = (3 - math.sqrt(5)) / 2
    assert abs(cat_report.lam - lam) < 1e-6
    assert abs(cat_report.nu - nu) < 1e-6
    assert cat_report.kappa > 0
    assert cat_report.valid


def test_constants_degrade_with_strength():
    lams, nus = [], []
    for t in (0.0, 0.02, 0.04, 0.06):
        rep = TorusMap(CAT, shear_pair(), t).hyperbolicity_constants(grid_n=24, iters=30)
        lams.append(rep.lam)
        nus.append(rep.nu)
    assert all(a >= b - 1e-9 for a, b in zip(lams, lams[1:]))
    assert all(a <= b + 1e-9 for a, b in zip(nus, nus[1:]))


def test_constants_continuous_in_strength():
    r1 = TorusMap(CAT, shear_pair(), 0.05).hyperbolicity_constants(grid_n=24, iters=30)
    r2 = TorusMap(CAT, shear_pair(), 0.051).hyperbolicity_constants(grid_n=24, iters=30)
    assert abs(r1.lam - r2.lam) < 0.05
    assert abs(r1.nu - r2.nu) < 0.05


def test_parabolic_matrix_not_anosov():
    with pytest.raises(NotAnosov):
        TorusMap([[1, 1], [0, 1]]).hyperbolicity_constants()


def test_rotation_matrix_not_anosov():
    with pytest.raises(NotAnosov):
        TorusMap([[0, -1], [1, 0]]).hyperbolicity_constants()


def test_cone_invariance_on_grid(shear_map, shear_report):
    R = shear_map.stable_rotation()
    pts = grid_points(24)
    D = shear_map.differential(pts)
    M = np.einsum("ij,njk,kl->nil", R.T, D, R)
    k = shear_report.kappa
    for sgn in (1.0, -1.0):
        rhs = np.broadcast_to(np.array([1.0, sgn * k]), (len(pts), 2)).copy()
        v = np.linalg.solve(M, rhs[:, :, None])[:, :, 0]
        slopes = np.abs(v[:, 1] / v[:, 0])
        assert np.max(slopes) < k


# ---- distances -------------------------------------------------------------


def test_distance_to_self_is_zero(shear_map):
    assert map_distance(shear_map, shear_map, order=4) == 0.0


def test_distance_linear_in_strength(cat_map):
    ts = (0.01, 0.02, 0.04)
    ds = [map_distance(TorusMap(CAT, shear_pair(), t), cat_map, order=3) for t in ts]
    assert abs(ds[1] - 2 * ds[0]) < 1e-12
    assert abs(ds[2] - 4 * ds[0]) < 1e-12


def test_distance_symmetric(cat_map, skew_map):
    assert map_distance(cat_map, skew_map, 4) == map_distance(skew_map, cat_map, 4)


def test_distance_triangle_inequality(cat_map, shear_map, skew_map):
    triples = [
        (cat_map, shear_map, skew_map),
        (shear_map, cat_map, skew_map),
        (skew_map, shear_map, cat_map),
    ]
    for a, b, c in triples:
        assert map_distance(a, c, 3) <= map_distance(a, b, 3) + map_distance(b, c, 3) + 1e-12


# ---- serialization ---------------------------------------------------------


def test_json_roundtrip_bit_exact(skew_map):
    text = skew_map.to_json()
    back = TorusMap.from_json(text)
    assert back.to_json() == text
    assert np.array_equal(back.linear, skew_map.linear)
    for p, q in zip(back.pert, skew_map.pert):
        assert np.array_equal(p.modes, q.modes)
        assert np.array_equal(p.coef_cos, q.coef_cos)
        assert np.array_equal(p.coef_sin, q.coef_sin)
    assert back.strength == skew_map.strength


def test_json_awkward_coefficients():
    g = (TrigPoly([((3, -2), 0.1 + 1e-17, -math.pi)]), TrigPoly([((0, 1), 1 / 3, 2**-40)]))
    tm = TorusMap([[1, 1], [1, 2]], g, 0.017)
    back = TorusMap.from_json(tm.to_json())
    assert back.to_json() == tm.to_json()


def test_json_malformed_rejected():
    with pytest.raises(InvalidParams):
        TorusMap.from_json(json.dumps({"not_linear": []}))


# ---- charts ----------------------------------------------------------------


def test_atlas_isometry_and_cover(cat_map, cat_atlas):
    diag = cat_atlas.verify(cat_map, delta=0.05, bigA=3)
    assert diag["rotation_defect"] < 1e-12
    assert diag["max_cone_slope"] < cat_atlas.kappa


def test_atlas_apertures_in_range(shear_atlas):
    k = shear_atlas.kappa
    assert np.all(shear_atlas.apertures > k)
    assert np.all(shear_atlas.apertures < 2 * k)


def test_chart_roundtrip(shear_atlas):
    rng = np.random.default_rng(31)
    pts = rng.random((100, 2))
    for i in range(shear_atlas.n_charts):
        z = shear_atlas.to_chart(i, pts)
        assert torus_diff(shear_atlas.from_chart(i, z), pts) < 1e-12


def test_nearest_chart_within_half_radius(shear_atlas):
    rng = np.random.default_rng(37)
    for pt in rng.random((50, 2)):
        i = shear_atlas.nearest_chart(pt)
        z = shear_atlas.to_chart(i, pt)
        assert np.max(np.abs(z)) < shear_atlas.radius / 2.0


def test_atlas_rejects_oversized_domain(cat_map, cat_atlas):
    with pytest.raises(InvalidParams):
        cat_atlas.verify(cat_map, delta=0.2, bigA=3)
