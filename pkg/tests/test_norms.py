"""Anisotropic leaf norms: C^q calculus, witness estimation, the two-norm
inequality experiments, and mollified unstable-leaf densities."""

import dataclasses
import json

import numpy as np
import pytest

from anisolab import norms
from anisolab._util import ChebFun, gauss_legendre
from anisolab.errors import InvalidParams, NotTransverse
from anisolab.norms import (
    JetDifference,
    NormParams,
    TestFunction,
    cq_norm,
    ly_experiment,
    norm_pq,
    unstable_graph,
    unstable_leaf_density,
)
from anisolab.transfer import TransferIterate, TrigObservable


def rand_observable(rng, n):
    coef = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
    for _ in range(6):
        i, j = rng.integers(-n, n + 1, size=2)
        amp = rng.normal() + 1j * rng.normal()
        coef[n + i, n + j] += amp
        coef[n - i, n - j] += np.conj(amp)
    return TrigObservable(coef, real=True)


@pytest.fixture(scope="module")
def obs_corpus():
    # One stream feeds both the invariant checks (12 draws on a 5-mode box)
    # and the smooth-norm corpus (50 draws on a 4-mode box).
    rng = np.random.default_rng(77)
    small = [rand_observable(rng, 5) for _ in range(12)]
    wide = [rand_observable(rng, 4) for _ in range(50)]
    return small, wide


# ---- cq_norm calculus -----------------------------------------------------------


def test_cq_norm_constant():
    c = ChebFun(np.array([2.5]), -0.3, 0.3)
    assert cq_norm(c, 1.5) == pytest.approx(2.5, abs=1e-12)


def test_cq_norm_sine_lipschitz():
    f = ChebFun.fit(lambda u: np.sin(2 * np.pi * u), -0.5, 0.5, 40)
    assert cq_norm(f, 1.0) == pytest.approx(2 * np.pi, abs=1e-6)
    assert cq_norm(f, 0.0) == pytest.approx(1.0, abs=1e-4)


def test_cq_norm_sine_hoelder_half():
    # sup + sampled Hoelder(1/2) quotient; the exact quotient sup is
    # 2*sqrt(pi) at separation 1/pi, the sampler gets most of it.
    f = ChebFun.fit(lambda u: np.sin(2 * np.pi * u), -0.5, 0.5, 40)
    v = cq_norm(f, 0.5)
    assert 1.0 < v <= 1 + 2 * np.sqrt(np.pi) + 1e-9
    assert v == pytest.approx(4.017350983075193, rel=1e-9)


def test_cq_norm_product_inequality():
    rng = np.random.default_rng(303)
    a, b = -0.05, 0.05
    worst = {0.5: 0.0, 1.0: 0.0, 1.5: 0.0, 2.0: 0.0}
    for _ in range(100):
        def rand_poly():
            n = rng.integers(1, 4)
            ks = rng.integers(1, 60, size=n)
            amps = rng.normal(size=n)
            phs = rng.uniform(0, 2 * np.pi, size=n)
            c0 = rng.normal()
            return lambda u: c0 + sum(
                A * np.sin(2 * np.pi * k * u + p)
                for A, k, p in zip(amps, ks, phs))
        fa, fb = rand_poly(), rand_poly()
        prod = ChebFun.fit(lambda u: fa(u) * fb(u), a, b, 180)
        fa, fb = ChebFun.fit(fa, a, b, 90), ChebFun.fit(fb, a, b, 90)
        for q in worst:
            ratio = cq_norm(prod, q) / (cq_norm(fa, q) * cq_norm(fb, q))
            worst[q] = max(worst[q], ratio)
    assert all(r <= 1.0 + 1e-12 for r in worst.values()), worst


# ---- parameter and test-function validation -------------------------------------


def test_params_validation():
    with pytest.raises(InvalidParams):
        NormParams(p=1, q=2.0, r=3)
    with pytest.raises(InvalidParams):
        NormParams(p=1, q=0.5, r=3, n_leaves=0)
    with pytest.raises(InvalidParams):
        NormParams(p=1, q=-0.5, r=3)
    lowered = NormParams(p=1, q=0.5, r=3).lowered()
    assert (lowered.p, lowered.q) == (0, 1.5)
    with pytest.raises(InvalidParams):
        lowered.lowered()


def test_params_budget():
    params = NormParams(p=0, q=0.5, r=2, n_leaves=7, n_testfn=3)
    assert params.budget == 21


def test_testfn_normalized_unit_ball():
    for q_exp, omega in [(0.5, 0.0), (1.5, 40.0), (2.5, 7.0)]:
        phi = TestFunction.build(-0.05, 0.05, 0.01, 0.03, 0.4, omega, 0.3,
                                 q_exp)
        assert cq_norm(phi, q_exp, interval=(-0.05, 0.05)) <= 1 + 1e-9


def test_testfn_vanishes_outside_support():
    phi = TestFunction.build(-0.05, 0.05, 0.0, 0.03, 0.5, 0.0, 0.0, 1.0)
    lo, hi = phi.support()
    assert (lo, hi) == (-0.03, 0.03)
    u = np.array([-0.049, -0.031, 0.031, 0.049])
    assert np.all(phi(u) == 0.0)
    assert phi(0.0) > 0.0


def test_testfn_rejects_boundary_touching_support():
    with pytest.raises(InvalidParams):
        TestFunction.build(-0.05, 0.05, 0.04, 0.02, 0.5, 0.0, 0.0, 1.0)


# ---- norm_pq --------------------------------------------------------------------


def test_flat_leaf_supremum_of_one(cat_atlas):
    # h == 1 at (p,q) = (0,0): the supremum is the full leaf length 2*delta,
    # approached by wide plateau test functions.
    one = TrigObservable.mode((0, 0))
    params = NormParams(p=0, q=0.0, r=2, n_leaves=125, n_testfn=8, n_vf=3,
                        seed=5)
    est = norm_pq(one, params, cat_atlas)
    assert est.budget == 1000
    assert abs(est.value - 0.1) / 0.1 < 0.02
    assert est.value == pytest.approx(0.098996263760656, rel=1e-9)
    assert est.witness["testfn"]["plateau_frac"] >= 0.9


def test_stable_frequency_decay(cat_atlas):
    # Modes along the contracting direction: the integral against a C^q
    # test class decays like |k|^{-q}; integer stable approximants are the
    # Fibonacci pairs.
    fib = [(1, -2), (2, -3), (3, -5), (5, -8), (8, -13), (13, -21), (21, -34)]
    params = NormParams(p=0, q=0.5, r=2, n_leaves=60, n_testfn=6, n_vf=3,
                        seed=11)
    vals = [norm_pq(TrigObservable.mode(k), params, cat_atlas).value
            for k in fib]
    mags = [np.hypot(*k) for k in fib]
    slope = np.polyfit(np.log(mags), np.log(vals), 1)[0]
    assert slope == pytest.approx(-0.5644331624082937, abs=1e-9)
    assert -0.7 < slope < -0.3


def test_unstable_frequency_bounded(cat_atlas):
    # Same magnitudes along the expanding direction: no decay at p = 0.
    unst = [(2, 1), (3, 2), (5, 3), (8, 5), (13, 8), (21, 13)]
    params = NormParams(p=0, q=0.5, r=2, n_leaves=60, n_testfn=6, n_vf=3,
                        seed=11)
    vals = [norm_pq(TrigObservable.mode(k), params, cat_atlas).value
            for k in unst]
    assert max(vals) / min(vals) < 1.05
    assert min(vals) > 0.01


def test_norm_invariants(cat_atlas, obs_corpus):
    small_obs, _ = obs_corpus
    base = NormParams(p=1, q=0.5, r=3, n_leaves=30, n_testfn=5, n_vf=2, seed=3)
    raised_q = dataclasses.replace(base, q=0.8)
    doubled = dataclasses.replace(base, n_leaves=60)
    for h in small_obs:
        est = norm_pq(h, base, cat_atlas)
        # smaller test class at larger q
        assert norm_pq(h, raised_q, cat_atlas).value <= est.value * (1 + 1e-9)
        # the (p-1, q+1) witness family embeds in the (p, q) one
        assert norm_pq(h, base.lowered(), cat_atlas).value <= est.value * (1 + 1e-9)
        # exact scale covariance
        sc = norm_pq(h.scaled(-2.5), base, cat_atlas)
        assert sc.value == pytest.approx(2.5 * est.value, rel=1e-9)
        # larger budget with the same seed prefix never loses witnesses
        assert norm_pq(h, doubled, cat_atlas).value >= est.value - 1e-12


def test_jet_depth_two(cat_atlas, obs_corpus):
    small_obs, _ = obs_corpus
    deep = NormParams(p=2, q=0.5, r=4, n_leaves=30, n_testfn=5, n_vf=2, seed=3)
    h = small_obs[0]
    est = norm_pq(h, deep, cat_atlas)
    assert est.value > 0
    assert norm_pq(h, deep.lowered(), cat_atlas).value <= est.value * (1 + 1e-9)


def test_bounded_by_smooth_norm(cat_atlas, obs_corpus):
    _, wide_obs = obs_corpus
    base = NormParams(p=1, q=0.5, r=3, n_leaves=30, n_testfn=5, n_vf=2, seed=3)
    ratios = [norm_pq(h, base, cat_atlas).value / cq_norm(h, 3.0)
              for h in wide_obs]
    assert max(ratios) < 1e-5
    assert min(ratios) > 0


def test_estimate_json_round_trip(cat_atlas):
    params = NormParams(p=1, q=0.5, r=3, n_leaves=10, n_testfn=3, n_vf=1,
                        seed=2)
    est = norm_pq(TrigObservable.mode((1, 0)), params, cat_atlas)
    blob = json.loads(json.dumps(est.to_json_dict()))
    assert blob["value"] == est.value
    assert blob["budget"] == 30
    assert blob["witness"]["testfn"]["width"] > 0
    assert blob["history"][0][1] > 0


# ---- Lasota-Yorke experiments ---------------------------------------------------


def test_transfer_orbit_matches_mode_pushforward(cat_map, cat_atlas):
    # Dual route: on the linear map the operator permutes Fourier modes, so
    # the norm of L^n e_k through inverse-orbit evaluation must equal the
    # norm of the pushed mode computed directly.
    ainv_t = np.linalg.inv(np.array([[2, 1], [1, 1]], dtype=float)).T
    params = NormParams(p=0, q=0.5, r=2, n_leaves=30, n_testfn=5, n_vf=2,
                        seed=4)
    h10 = TrigObservable.mode((1, 0))
    k = np.array([1.0, 0.0])
    for n in range(4):
        via_orbit = norm_pq(TransferIterate(cat_map, h10, n), params,
                            cat_atlas)
        mode = tuple(int(v) for v in np.rint(k))
        via_mode = norm_pq(TrigObservable.mode(mode), params, cat_atlas)
        assert via_orbit.value == pytest.approx(via_mode.value, abs=1e-10)
        k = ainv_t @ k
    assert via_orbit.value < 0.006


def test_ly_weak_norm_bounded(cat_map, cat_atlas, cat_report):
    params = NormParams(p=0, q=0.5, r=2, n_leaves=40, n_testfn=6, n_vf=3,
                        seed=9)
    ly = ly_experiment(cat_map, TrigObservable.mode((1, 0)), params, 6,
                       cat_atlas, cat_report)
    ests = ly.estimates()
    assert len(ests) == 7
    assert np.max(ests) / ests[0] <= 3.0
    assert np.max(ests) / ests[0] <= 1.0 + 1e-9


def test_ly_area_preserving_constant(shear_map, cat_atlas, shear_report):
    # det DT == 1, so the operator fixes h == 1 and every row of the table
    # is the same estimate.
    params = NormParams(p=0, q=0.5, r=2, n_leaves=40, n_testfn=6, n_vf=3,
                        seed=9)
    ly = ly_experiment(shear_map, TrigObservable.mode((0, 0)), params, 4,
                       cat_atlas, shear_report)
    ests = ly.estimates()
    assert np.max(ests) - np.min(ests) <= 1e-10


def test_ly_strong_norm_contraction(cat_map, cat_atlas, cat_report):
    params = NormParams(p=1, q=0.5, r=3, n_leaves=40, n_testfn=6, n_vf=3,
                        seed=9)
    ly = ly_experiment(cat_map, TrigObservable.mode((1, 0)), params, 6,
                       cat_atlas, cat_report)
    lam, nu = (3 + np.sqrt(5)) / 2, (3 - np.sqrt(5)) / 2
    rho = max(lam ** -1, nu ** 0.5)
    assert ly.rho == pytest.approx(rho, abs=1e-12)
    assert ly.a_fit > 0 and ly.b_fit >= 0
    assert ly.residual_rate <= rho + 0.1
    assert ly.residual_rate == pytest.approx(0.608759397674631, rel=1e-9)
    blob = json.loads(json.dumps(ly.to_json_dict()))
    assert blob["rho"] == pytest.approx(rho)
    assert len(blob["rows"]) == 7


def test_ly_depth_guard(cat_map, cat_atlas, cat_report):
    params = NormParams(p=0, q=0.5, r=2, n_leaves=5, n_testfn=2, n_vf=1,
                        seed=0)
    h = TrigObservable.mode((1, 0))
    with pytest.raises(InvalidParams):
        ly_experiment(cat_map, h, params, 7, cat_atlas, cat_report)
    with pytest.raises(InvalidParams):
        ly_experiment(cat_map, h, params, 0, cat_atlas, cat_report)


# ---- unstable-leaf densities ----------------------------------------------------


@pytest.fixture(scope="module")
def ridge_density(cat_atlas):
    zeta = unstable_graph(cat_atlas, 0, 0.0, 0.25)
    f = TestFunction(-0.25, 0.25, 0.0, 0.2, 0.5, 0.0, 0.0, q_exp=0.0)
    return zeta, f


def test_density_pairing_mass(ridge_density):
    zeta, f = ridge_density
    x, w = gauss_legendre(300, -0.2, 0.2)
    mass = float(w @ f(x))
    dens = unstable_leaf_density(zeta, f, 1e-3)
    pair = dens.pairing(lambda pts: np.ones(len(pts)))
    assert abs(pair - mass) < 1e-6


def test_density_pairing_against_line_integral(cat_atlas):
    zeta = unstable_graph(cat_atlas, 0, 0.0, 0.25,
                          lambda v: 0.05 * np.sin(3.0 * v))
    f = TestFunction(-0.25, 0.25, 0.0, 0.2, 0.5, 0.0, 0.0, q_exp=0.0)
    dens = unstable_leaf_density(zeta, f, 1e-3)
    direct = dens.pairing(lambda pts: np.cos(2 * np.pi * pts[:, 0]))
    v, wv = gauss_legendre(300, -0.25, 0.25)
    pts = zeta.torus_points(v)
    line = float(wv @ (f(v) * np.cos(2 * np.pi * pts[:, 0])))
    assert direct == pytest.approx(line, abs=1e-5)


def test_density_c0_blowup_with_bounded_norm(cat_atlas, ridge_density):
    zeta, f = ridge_density
    params = NormParams(p=0, q=0.5, r=2, n_leaves=60, n_testfn=6, n_vf=3,
                        seed=21)
    eps_list = [2.0 ** (-j) for j in range(4, 11)]
    sups, ests = [], []
    for eps in eps_list:
        dens = unstable_leaf_density(zeta, f, eps)
        sups.append(dens.ridge_sup())
        ests.append(norm_pq(dens, params, cat_atlas, quad_n=768).value)
    c0_slope = np.polyfit(np.log(eps_list), np.log(sups), 1)[0]
    assert c0_slope == pytest.approx(-1.0, abs=0.1)
    assert max(ests) / min(ests) < 2.0


def test_density_cauchy_sequence(cat_atlas, ridge_density):
    # Differences of consecutive mollification scales shrink in the leaf
    # norm even as the C^0 size explodes: the scale ladder is Cauchy.
    zeta, f = ridge_density
    params = NormParams(p=0, q=0.5, r=2, n_leaves=60, n_testfn=6, n_vf=3,
                        seed=21)
    diffs = []
    for j in range(4, 10):
        a = unstable_leaf_density(zeta, f, 2.0 ** (-j))
        b = unstable_leaf_density(zeta, f, 2.0 ** (-j - 1))
        est = norm_pq(JetDifference(a, b), params, cat_atlas, quad_n=768,
                      anchor_stride=15)
        diffs.append(est.value)
    assert all(later < earlier for earlier, later in zip(diffs, diffs[1:]))
    frozen = [0.040428, 0.036986, 0.026674, 0.019198, 0.013639, 0.0095677]
    assert diffs == pytest.approx(frozen, rel=1e-4)


def test_density_rejects_cone_tangency(cat_atlas):
    with pytest.raises(NotTransverse):
        unstable_graph(cat_atlas, 0, 0.0, 0.1, lambda v: 4.0 * v)
