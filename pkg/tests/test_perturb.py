import json

import numpy as np
import pytest

from anisolab.errors import (
    ContourHitsSpectrum,
    DomainViolation,
    InvalidParams,
    NoConvergence,
    StepUnderflow,
)
from anisolab.maps import TorusMap, TrigPoly, map_distance
from anisolab.norms import NormParams, ly_experiment
from anisolab.perturb import (
    Contour,
    PerturbationFamily,
    RandomIterate,
    RandomKernel,
    WeightedScale,
    delta_size,
    galerkin_random,
    mapdist_experiment,
    projector,
    projector_rank,
    random_ly_experiment,
    resolvent_expansion_validate,
    response,
    stability_experiment,
    taylor_q,
    transfer_random,
)
from anisolab.transfer import TrigObservable, apply_transfer, galerkin, srb

from conftest import CAT, shear_pair, skew_pair


def rand_observable(rng, n_modes, n_terms):
    terms = []
    for _ in range(n_terms):
        k = tuple(int(v) for v in rng.integers(-n_modes, n_modes + 1, 2))
        terms.append((k, float(rng.normal()), float(rng.normal())))
    return TrigObservable.from_real_terms(terms, n_obs=n_modes)


def skew_scaled(amp):
    return (TrigPoly([((1, 0), 0.0, amp)]), TrigPoly([((0, 1), amp, 0.0)]))


@pytest.fixture(scope="module")
def three_map_kernel_parts(cat_map):
    maps = (
        cat_map,
        TorusMap(CAT, skew_pair(), 0.03),
        TorusMap(CAT, shear_pair(), 0.05),
    )

    def build(a):
        g1 = TrigObservable.from_real_terms([((0, 0), 1.0, 0.0), ((1, 1), 0.0, a)])
        g2 = TrigObservable.from_real_terms([((0, 0), 1.0, 0.0), ((1, 1), 0.0, -a)])
        g3 = TrigObservable.mode((0, 0))
        return RandomKernel((0.3, 0.3, 0.4), maps, (g1, g2, g3))

    return build


@pytest.fixture(scope="module")
def gentle_family(cat_map):
    direction = (TrigPoly([((1, 0), 0.0, 0.15)]), TrigPoly([((0, 1), 0.12, 0.0)]))
    return PerturbationFamily(cat_map, (direction,), order=3)


# ---- kernels ---------------------------------------------------------------------


def test_kernel_validation(cat_map):
    one = TrigObservable.mode((0, 0))
    with pytest.raises(InvalidParams):
        RandomKernel((0.5, 0.6), (cat_map, cat_map), (one, one))
    with pytest.raises(InvalidParams):
        RandomKernel((-0.2, 1.2), (cat_map, cat_map), (one, one))
    with pytest.raises(InvalidParams):
        RandomKernel((1.0,), (cat_map, cat_map), (one,))
    with pytest.raises(InvalidParams):
        RandomKernel(tuple([1.0 / 6] * 6), tuple([cat_map] * 6), tuple([one] * 6))
    dip = TrigObservable.from_real_terms([((0, 0), 1.0, 0.0), ((1, 0), 1.5, 0.0)])
    with pytest.raises(InvalidParams):
        RandomKernel((1.0,), (cat_map,), (dip,))
    off = TrigObservable.from_real_terms([((0, 0), 1.0, 0.0), ((1, 1), 0.0, 0.3)])
    with pytest.raises(InvalidParams):
        RandomKernel((1.0,), (cat_map,), (off,))


def test_kernel_residual_completion(cat_map, shear_map):
    g1 = TrigObservable.from_real_terms([((0, 0), 1.0, 0.0), ((1, 1), 0.4, 0.0)])
    kern = RandomKernel.complete([(0.5, cat_map, g1)], shear_map)
    assert len(kern) == 2
    assert kern.weights == (0.5, 0.5)
    tail = kern.densities[1]
    pts = np.random.default_rng(1).random((50, 2))
    total = 0.5 * g1(pts) + 0.5 * tail(pts)
    assert np.max(np.abs(total - 1.0)) < 1e-12

    greedy = TrigObservable.from_real_terms([((0, 0), 1.0, 0.0), ((1, 1), 0.0, 0.9)])
    with pytest.raises(InvalidParams):
        RandomKernel.complete([(0.7, cat_map, greedy)], shear_map)
    with pytest.raises(InvalidParams):
        RandomKernel.complete([(1.0, cat_map, g1)], shear_map)


def test_delta_size(cat_map):
    kd = RandomKernel.deterministic(cat_map)
    assert delta_size(kd, cat_map, 1, 0.5, 3) == 0.0

    other = TorusMap(CAT, skew_scaled(0.3), 0.05)
    kt = RandomKernel.deterministic(other)
    assert delta_size(kt, cat_map, 1, 0.5, 3) == pytest.approx(
        map_distance(other, cat_map, order=4), rel=1e-12)

    vals = [
        delta_size(
            RandomKernel.deterministic(TorusMap(CAT, skew_scaled(0.3), t)),
            cat_map, 1, 0.5, 3)
        for t in (0.1, 0.05, 0.025)
    ]
    assert vals[0] / vals[1] == pytest.approx(2.0, rel=1e-10)
    assert vals[1] / vals[2] == pytest.approx(2.0, rel=1e-10)


# ---- averaged operator -----------------------------------------------------------


def test_averaged_matrix_matches_plain(cat_map):
    kd = RandomKernel.deterministic(cat_map)
    plain = galerkin(cat_map, 8).matrix
    avg = galerkin_random(kd, 8).matrix
    assert np.max(np.abs(plain - avg)) < 1e-13


def test_averaged_operator_pointwise(cat_map):
    kd = RandomKernel.deterministic(cat_map)
    h = TrigObservable.from_real_terms([((1, 0), 0.3, 0.1), ((2, 1), 0.0, -0.2)])
    pts = np.random.default_rng(0).random((40, 2))
    assert np.max(np.abs(transfer_random(kd, h)(pts)
                         - apply_transfer(cat_map, h)(pts))) < 1e-12
    twice = apply_transfer(cat_map, apply_transfer(cat_map, h))
    assert np.max(np.abs(RandomIterate(kd, h, 2)(pts) - twice(pts))) < 1e-12


def test_averaged_constant_image(cat_map, shear_map):
    g1 = TrigObservable.from_real_terms([((0, 0), 1.0, 0.0), ((1, 1), 0.4, 0.0)])
    kern = RandomKernel.complete([(0.5, cat_map, g1)], shear_map)
    one = TrigObservable.mode((0, 0))
    ev = transfer_random(kern, one)
    pts = np.random.default_rng(5).random((30, 2))
    direct = (0.5 * g1(cat_map.invert(pts))
              + 0.5 * kern.densities[1](shear_map.invert(pts)))
    assert np.max(np.abs(ev(pts) - direct)) < 1e-12

    xs = np.arange(64) / 64
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel()])
    assert float(np.mean(ev(grid))) == pytest.approx(1.0, abs=1e-10)

    op = galerkin_random(kern, 6)
    row0 = op.matrix[op.index((0, 0))].copy()
    row0[op.index((0, 0))] -= 1.0
    assert np.max(np.abs(row0)) < 1e-10


def test_averaged_operator_propagates_newton_failure(cat_map):
    folded = TorusMap(CAT, skew_scaled(1.0), 0.1)
    kern = RandomKernel((1.0,), (folded,), (TrigObservable.mode((0, 0)),))
    pts = np.random.default_rng(2).random((20, 2))
    with pytest.raises(NoConvergence):
        transfer_random(kern, TrigObservable.mode((1, 0)))(pts)


# ---- contour projectors ----------------------------------------------------------


def test_contour_validation():
    with pytest.raises(InvalidParams):
        Contour(1.0 + 0.0j, 0.5, 8)
    with pytest.raises(InvalidParams):
        Contour(1.0 + 0.0j, -0.5)


def test_projector_onto_constants(cat_map):
    op = galerkin(cat_map, 16)
    pi = projector(op, Contour(1.0 + 0.0j, 0.5, 64))
    e00 = np.zeros_like(pi)
    i0 = op.index((0, 0))
    e00[i0, i0] = 1.0
    assert projector_rank(pi) == 1
    assert np.max(np.abs(pi - e00)) < 1e-8
    assert np.max(np.abs(pi @ pi - pi)) < 1e-8


def test_projector_zero_cluster(cat_map):
    op = galerkin(cat_map, 16)
    pi = projector(op, Contour(0.0 + 0.0j, 0.5, 64))
    assert projector_rank(pi) == op.dim - 1
    assert np.max(np.abs(pi @ pi - pi)) < 1e-8


def test_projector_node_doubling(cat_map):
    op = galerkin(cat_map, 16)
    pi64 = projector(op, Contour(1.0 + 0.0j, 0.5, 64))
    pi128 = projector(op, Contour(1.0 + 0.0j, 0.5, 128))
    assert np.max(np.abs(pi128 - pi64)) < 1e-10


def test_projector_rejects_contour_through_spectrum(cat_map):
    op = galerkin(cat_map, 16)
    with pytest.raises(ContourHitsSpectrum):
        projector(op, Contour(0.5 + 0.0j, 0.5, 64))


# ---- operator distance -----------------------------------------------------------


def test_mapdist_zero_for_identical_maps(cat_map, cat_atlas):
    params = NormParams(p=1, q=0.5, r=3, n_leaves=10, n_testfn=4, n_vf=2, seed=7)
    h = TrigObservable.from_real_terms([((1, 0), 0.5, 0.0), ((1, 1), 0.0, 0.3)])
    rep = mapdist_experiment(cat_map, TorusMap(CAT), [h], params, cat_atlas)
    assert rep.distance == 0.0
    assert rep.rows[0][1] == 0.0
    assert rep.c_fit == 0.0


def test_mapdist_constant_stable_in_distance(cat_map, cat_atlas):
    rng = np.random.default_rng(11)
    corpus = [rand_observable(rng, 2, 4) for _ in range(3)]
    params = NormParams(p=1, q=0.5, r=3, n_leaves=10, n_testfn=4, n_vf=2, seed=7)
    fits = {}
    for t in (1e-1, 1e-2, 1e-3):
        other = TorusMap(CAT, skew_scaled(0.3), t)
        fits[t] = mapdist_experiment(cat_map, other, corpus, params, cat_atlas).c_fit
    assert fits[1e-2] == pytest.approx(0.00016881174475334037, rel=1e-6)
    spread = (max(fits.values()) - min(fits.values())) / min(fits.values())
    assert spread < 0.30


def test_mapdist_corpus_bounded(cat_map, cat_atlas):
    rng = np.random.default_rng(29)
    corpus = [rand_observable(rng, 2, 3) for _ in range(20)]
    params = NormParams(p=1, q=0.5, r=3, n_leaves=6, n_testfn=3, n_vf=1, seed=7)
    other = TorusMap(CAT, skew_scaled(0.3), 1e-2)
    rep = mapdist_experiment(cat_map, other, corpus, params, cat_atlas)
    ratios = [r[3] for r in rep.rows]
    assert np.all(np.isfinite(ratios))
    assert rep.c_fit == max(ratios)
    assert rep.c_fit < 1e3


# ---- averaged growth rates -------------------------------------------------------


def test_random_ly_reduces_to_deterministic(cat_map, cat_atlas, cat_report):
    h = TrigObservable.from_real_terms(
        [((1, 0), 0.6, 0.0), ((1, 1), 0.0, 0.4), ((2, -1), 0.3, 0.2)])
    params = NormParams(p=0, q=0.5, r=2, n_leaves=20, n_testfn=4, n_vf=2, seed=13)
    kd = RandomKernel.deterministic(cat_map)
    rand = random_ly_experiment(kd, params, 3, 1.1, h, cat_atlas)
    plain = ly_experiment(cat_map, h, params, 3, cat_atlas, cat_report)
    for (n, value), row in zip(rand.rows, plain.rows):
        assert n == row["n"]
        assert value == pytest.approx(row["estimate"], abs=1e-9)
    assert rand.rows[0][1] == pytest.approx(0.012252392744022744, rel=1e-9)
    assert rand.rate == pytest.approx(0.6139843326341774, rel=1e-6)
    assert rand.within_target


def test_random_ly_three_maps_bounded(three_map_kernel_parts, cat_atlas):
    h = TrigObservable.from_real_terms(
        [((1, 0), 0.6, 0.0), ((1, 1), 0.0, 0.4), ((2, -1), 0.3, 0.2)])
    params = NormParams(p=0, q=0.5, r=2, n_leaves=20, n_testfn=4, n_vf=2, seed=13)
    rep = random_ly_experiment(
        three_map_kernel_parts(0.08), params, 3, 1.1, h, cat_atlas)
    assert rep.rate == pytest.approx(0.6222475659423317, rel=1e-6)
    assert rep.rate <= 1.1


def test_random_ly_density_scaling_leaves_rate(three_map_kernel_parts, cat_atlas):
    # raising every |g_i|_{C^q} tenfold moves the constant, not the rate
    h = TrigObservable.from_real_terms(
        [((1, 0), 0.6, 0.0), ((1, 1), 0.0, 0.4), ((2, -1), 0.3, 0.2)])
    params = NormParams(p=0, q=0.5, r=2, n_leaves=20, n_testfn=4, n_vf=2, seed=13)
    rep = random_ly_experiment(
        three_map_kernel_parts(0.8), params, 3, 1.1, h, cat_atlas)
    assert rep.rate == pytest.approx(0.6125241707767013, rel=1e-6)
    assert rep.rate <= 1.1


def test_random_ly_guards(cat_map, cat_atlas):
    kd = RandomKernel.deterministic(cat_map)
    h = TrigObservable.mode((1, 0))
    weak = NormParams(p=0, q=0.5, r=2, n_leaves=4, n_testfn=2, n_vf=1, seed=0)
    strong = NormParams(p=1, q=0.5, r=3, n_leaves=4, n_testfn=2, n_vf=1, seed=0)
    with pytest.raises(InvalidParams):
        random_ly_experiment(kd, weak, 6, 1.1, h, cat_atlas)
    with pytest.raises(InvalidParams):
        random_ly_experiment(kd, strong, 3, 1.1, h, cat_atlas)


# ---- spectral stability ----------------------------------------------------------


def stability_ladder(cat_map):
    unit = map_distance(TorusMap(CAT, skew_scaled(0.3), 1.0), cat_map, order=4)
    return [
        RandomKernel.deterministic(TorusMap(CAT, skew_scaled(0.3), d / unit))
        for d in (1e-1, 1e-2, 1e-3, 1e-4)
    ]


def test_stability_ladder(cat_map):
    rep = stability_experiment(cat_map, stability_ladder(cat_map), 1, 0.5, 0.8,
                               n_modes=10)
    assert rep.eta == pytest.approx(0.5362883044560034, rel=1e-9)
    assert rep.rank_base == 1
    assert [r[1] for r in rep.rows] == [1, 1, 1, 1]
    assert rep.eps0 == pytest.approx(0.1)
    sizes = [r[0] for r in rep.rows]
    assert sizes == pytest.approx([1e-1, 1e-2, 1e-3, 1e-4], rel=1e-9)
    assert rep.rows[1][2] == pytest.approx(9.454603775697521e-05, rel=1e-6)
    assert rep.exponent == pytest.approx(1.0, abs=0.05)
    assert rep.exponent >= rep.eta - 0.2
    assert rep.k2 == pytest.approx(3.052680769084085, rel=1e-6)
    assert 0.0 < rep.k2 < 50.0


def test_stability_zero_perturbation(cat_map):
    kd = RandomKernel.deterministic(cat_map)
    rep = stability_experiment(cat_map, [kd], 1, 0.5, 0.8, n_modes=8)
    size, rank, dist = rep.rows[0]
    assert size == 0.0
    assert rank == rep.rank_base == 1
    assert dist == 0.0
    assert rep.eps0 == 0.0
    assert np.isnan(rep.exponent)


def test_stability_rho_validation(cat_map):
    kd = RandomKernel.deterministic(cat_map)
    with pytest.raises(InvalidParams):
        stability_experiment(cat_map, [kd], 1, 0.5, 0.5, n_modes=8)
    with pytest.raises(InvalidParams):
        stability_experiment(cat_map, [kd], 1, 0.5, 1.0, n_modes=8)


# ---- smooth families and Taylor coefficients -------------------------------------


def test_family_construction(cat_map, skew_map):
    direction = (TrigPoly([((0, 1), 0.0, 0.5)]), TrigPoly([((1, 1), 0.4, 0.0)]))
    fam = PerturbationFamily(skew_map, (direction,), order=3)
    assert map_distance(fam.map_at(0.0), skew_map, order=2) < 1e-12
    moved = fam.map_at(0.02)
    assert map_distance(moved, skew_map, order=0) > 0.0

    with pytest.raises(InvalidParams):
        PerturbationFamily(cat_map, (direction,), order=1)
    with pytest.raises(InvalidParams):
        PerturbationFamily(cat_map, (), order=2)
    with pytest.raises(InvalidParams):
        PerturbationFamily(cat_map, (direction,), order=2, t_max=1.5)
    with pytest.raises(NoConvergence):
        PerturbationFamily(cat_map, (skew_scaled(2.0),), order=2, t_max=0.5)


def test_taylor_q1_closed_vs_finite_difference(gentle_family):
    q1 = taylor_q(gentle_family, 1, 8)
    q1_fd = taylor_q(gentle_family, 1, 8, method="fd")
    assert np.max(np.abs(q1 - q1_fd)) < 1e-6


def test_taylor_integral_annihilation(gentle_family):
    q1 = taylor_q(gentle_family, 1, 8)
    q2 = taylor_q(gentle_family, 2, 8)
    mid = (q1.shape[0] - 1) // 2
    assert np.max(np.abs(q1[mid])) <= 1e-10
    assert np.max(np.abs(q2[mid])) <= 1e-10
    rng = np.random.default_rng(3)
    hv = rng.normal(size=q1.shape[0]) + 1j * rng.normal(size=q1.shape[0])
    assert abs((q1 @ hv)[mid]) <= 1e-10
    assert abs((q2 @ hv)[mid]) <= 1e-10


def test_taylor_norm_bounded(gentle_family):
    assert np.linalg.norm(taylor_q(gentle_family, 1, 8), 2) < 1e3
    assert np.linalg.norm(taylor_q(gentle_family, 2, 8), 2) < 1e3


def test_taylor_step_underflow(gentle_family):
    with pytest.raises(StepUnderflow):
        taylor_q(gentle_family, 2, 8, rich_tol=0.0)


def test_taylor_guards(gentle_family):
    with pytest.raises(InvalidParams):
        taylor_q(gentle_family, 0, 8)
    with pytest.raises(InvalidParams):
        taylor_q(gentle_family, 3, 8)
    with pytest.raises(InvalidParams):
        taylor_q(gentle_family, 2, 8, method="closed")
    with pytest.raises(InvalidParams):
        taylor_q(gentle_family, 1, 8, method="secant")


# ---- synthetic scales and the resolvent expansion ---------------------------------


def test_scale_construction():
    for order in (1, 2, 3):
        scale = WeightedScale.build(order=order, seed=order)
        assert scale.eta == pytest.approx(0.5)
        assert len(scale.qops) == order - 1
        assert len(scale.weights) == order + 1
    with pytest.raises(InvalidParams):
        WeightedScale.build(dim=3)
    with pytest.raises(InvalidParams):
        WeightedScale.build(alpha=5.0, m_rate=4.0)
    with pytest.raises(InvalidParams):
        WeightedScale.build(order=0)


def test_scale_norm_is_weighted_sup():
    scale = WeightedScale.build(order=2, seed=0)
    mat = np.diag(np.ones(scale.dim))
    # identity from B^1 to B^0 contracts by the weight ratio
    assert scale.norm_between(mat, 1, 0) == pytest.approx(1.0)
    assert scale.norm_between(mat, 0, 1) == pytest.approx(
        (scale.m_rate / scale.alpha) ** (scale.dim - 1))


def test_resolvent_slope_order_two():
    scale = WeightedScale.build(order=2, seed=0)
    rep = resolvent_expansion_validate(
        scale, 2.0, 2, np.geomspace(1e-3, 1e-1, 9))
    assert rep.expected_slope == pytest.approx(1.5)
    assert rep.slope == pytest.approx(1.5069723570258895, rel=1e-9)
    assert abs(rep.slope - rep.expected_slope) <= 0.3


def test_resolvent_slope_order_one():
    scale = WeightedScale.build(order=1, seed=0)
    rep = resolvent_expansion_validate(
        scale, 2.0, 1, np.geomspace(1e-3, 1e-1, 9))
    assert rep.expected_slope == pytest.approx(0.5)
    assert rep.slope == pytest.approx(0.5014991481232678, rel=1e-9)
    assert abs(rep.slope - rep.expected_slope) <= 0.3


def test_resolvent_domain_checks():
    scale = WeightedScale.build(order=2, seed=0)
    with pytest.raises(DomainViolation):
        resolvent_expansion_validate(scale, 0.05, 2, [1e-2])
    with pytest.raises(DomainViolation):
        resolvent_expansion_validate(scale, 1.02, 2, [1e-2])
    with pytest.raises(InvalidParams):
        resolvent_expansion_validate(scale, 2.0, 1, [1e-2])
    with pytest.raises(InvalidParams):
        resolvent_expansion_validate(scale, 2.0, 2, [0.0, 1e-2])


def test_leading_eigenvalue_derivatives_stabilize():
    # derivative estimates of the eigenvalue continuing 1 settle under
    # step halving, to the order the scale's smoothness licenses
    scale = WeightedScale.build(order=3, seed=4)

    def lead(t):
        w = np.linalg.eigvals(scale.l_at(t))
        return float(w[np.argmin(np.abs(w - 1.0))].real)

    for deriv in (1, 2):
        prev = None
        drifts = []
        for h in (4e-2, 2e-2, 1e-2):
            if deriv == 1:
                est = (lead(h) - lead(-h)) / (2 * h)
            else:
                est = (lead(h) - 2 * lead(0.0) + lead(-h)) / h**2
            if prev is not None:
                drifts.append(abs(est - prev) / abs(est))
            prev = est
        assert max(drifts) < 0.05


# ---- linear response --------------------------------------------------------------


def test_response_matches_finite_differences(skew_map):
    direction = (TrigPoly([((0, 1), 0.0, 0.5)]), TrigPoly([((1, 1), 0.4, 0.0)]))
    fam = PerturbationFamily(skew_map, (direction,), order=3)
    f = TrigObservable.from_real_terms([((1, 0), 1.0, 0.0)])
    resp = response(fam, f, 8)
    assert resp == pytest.approx(-0.006915047327401867, rel=1e-6)

    mu = {}
    for t in (1e-3, -1e-3):
        dens = srb(galerkin(fam.map_at(t), 8), n_positivity=10).density
        mu[t] = float(f.pairing(dens))
    fd = (mu[1e-3] - mu[-1e-3]) / 2e-3
    assert abs(resp - fd) / abs(fd) <= 1e-2


def test_response_to_constant_is_zero(skew_map):
    direction = (TrigPoly([((0, 1), 0.0, 0.5)]), TrigPoly([((1, 1), 0.4, 0.0)]))
    fam = PerturbationFamily(skew_map, (direction,), order=3)
    assert abs(response(fam, TrigObservable.mode((0, 0)), 8)) <= 1e-12


def test_response_area_preserving_is_zero(cat_map):
    fam = PerturbationFamily(cat_map, (shear_pair(),), order=2)
    f = TrigObservable.from_real_terms([((1, 0), 1.0, 0.0)])
    assert abs(response(fam, f, 8)) <= 1e-8


# ---- serialization ----------------------------------------------------------------


def test_reports_serialize(cat_map, gentle_family):
    kd = RandomKernel.deterministic(cat_map)
    scale = WeightedScale.build(order=2, seed=0)
    rep = resolvent_expansion_validate(scale, 2.0, 2, [1e-2, 1e-1])
    blobs = [
        kd.to_json_dict(),
        gentle_family.to_json_dict(),
        scale.to_json_dict(),
        rep.to_json_dict(),
    ]
    for blob in blobs:
        assert json.loads(json.dumps(blob)) == blob
