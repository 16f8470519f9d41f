"""Statistical functionals of the invariant measure.

The central-limit variance through the deflated-resolvent formula, a
Monte-Carlo estimate over random orbit ensembles for cross-validation,
and the variance along perturbation families with smoothness
diagnostics.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from ._util import rng_stream
from .errors import InvalidParams, SolveFailure
from .transfer import TrigObservable, galerkin, srb

_BATCHES = 100


def _product(a, b):
    """Pointwise product of two trigonometric series, exact: the
    coefficient tables convolve and the box widens accordingly."""
    coeffs = scipy.signal.convolve2d(a.coeffs, b.coeffs)
    return TrigObservable(coeffs, real=a.real and b.real)


def _fit_box(obs, n_modes):
    """Pad or project onto the |k|_inf <= n_modes box."""
    if obs.n_obs <= n_modes:
        return obs.pad(n_modes)
    w = obs.n_obs - n_modes
    return TrigObservable(obs.coeffs[w:-w, w:-w].copy(), real=obs.real)


def clt_variance(op, density, f):
    """Variance of normalized Birkhoff sums by the resolvent formula.

    Centers f against the invariant density, then evaluates
    sigma^2 = -mu(fbar^2) + 2 <(Id - L~)^{-1}(fbar rho), fbar> with L~
    the Galerkin matrix deflated at its leading eigenvector, so the
    solve runs on the zero-integral subspace.
    """
    mean = complex(f.pairing(density))
    fbar = f.plus(TrigObservable.mode((0, 0)).scaled(-mean))
    quad = complex(_product(fbar, fbar).pairing(density))

    h_vec = density.pad(op.n_modes).as_vector()
    source = _fit_box(_product(fbar, density), op.n_modes).as_vector()
    dim = op.dim
    e0 = np.zeros(dim)
    e0[op.index((0, 0))] = 1.0
    system = np.eye(dim, dtype=complex) - (op.matrix - np.outer(h_vec, e0))
    cond = float(np.linalg.cond(system))
    if cond > 1e12:
        raise SolveFailure(
            "deflated transfer matrix is numerically singular", cond=cond)
    x = np.linalg.solve(system, source)
    resid = float(np.linalg.norm(system @ x - source))
    if resid > 1e-10 * max(1.0, float(np.linalg.norm(source))):
        raise SolveFailure("variance solve did not converge", residual=resid)
    kicked = TrigObservable.from_vector(x, op.n_modes, real=None)
    sigma2 = -quad + 2.0 * complex(kicked.pairing(fbar))
    return float(np.real(sigma2))


def green_kubo_partial_sums(op, density, f, n_stop):
    """Truncations -mu(fbar^2) + 2 sum_{n<=n*} mu(fbar o T^n fbar) of the
    autocorrelation series, one value per n* in 0..n_stop."""
    mean = complex(f.pairing(density))
    fbar = f.plus(TrigObservable.mode((0, 0)).scaled(-mean))
    quad = complex(_product(fbar, fbar).pairing(density))
    vec = _fit_box(_product(fbar, density), op.n_modes).as_vector()
    fpad = _fit_box(fbar, op.n_modes)
    out = []
    acc = -np.real(quad)
    for _ in range(n_stop + 1):
        corr = complex(TrigObservable.from_vector(vec, op.n_modes).pairing(fpad))
        acc += 2.0 * np.real(corr)
        out.append(float(acc))
        vec = op.matrix @ vec
    return out


@dataclass
class MonteCarloVariance:
    """Empirical Birkhoff-sum variance with a batch-means error bar."""

    sigma2: float
    se: float
    n_orbits: int
    orbit_len: int
    burn_in: int
    seed: int

    def to_json_dict(self):
        return {
            "sigma2": self.sigma2, "se": self.se, "n_orbits": self.n_orbits,
            "orbit_len": self.orbit_len, "burn_in": self.burn_in,
            "seed": self.seed,
        }


def clt_variance_mc(tmap, f, n_orbits, orbit_len, seed, burn_in=100):
    """Monte-Carlo variance of (1/sqrt n) sum f(T^k x) over random starts.

    Centers f at the global post-burn-in sample mean; the standard error
    comes from batch means over the independent orbits.
    """
    if orbit_len < 1000:
        raise InvalidParams(f"orbit length must be >= 1000, got {orbit_len}")
    if n_orbits < _BATCHES:
        raise InvalidParams(f"need at least {_BATCHES} orbits for batch means")
    rng = rng_stream(seed, 0x3C)
    x = rng.random((n_orbits, 2))
    for _ in range(burn_in):
        x = tmap(x)
    sums = np.zeros(n_orbits)
    total = 0.0
    for _ in range(orbit_len):
        vals = np.real(f(x))
        sums += vals
        total += float(np.sum(vals))
        x = tmap(x)
    mean = total / (n_orbits * orbit_len)
    scaled = (sums - orbit_len * mean) / np.sqrt(orbit_len)
    sigma2 = float(np.mean(scaled**2))
    batches = scaled[: (n_orbits // _BATCHES) * _BATCHES]
    batches = batches.reshape(_BATCHES, -1)
    per_batch = np.mean(batches**2, axis=1)
    se = float(np.std(per_batch, ddof=1) / np.sqrt(_BATCHES))
    return MonteCarloVariance(
        sigma2=sigma2, se=se, n_orbits=n_orbits, orbit_len=orbit_len,
        burn_in=burn_in, seed=seed)


@dataclass
class VarianceReport:
    """Side-by-side variance estimates: resolvent formula against the
    orbit ensemble, with the truncated-series diagnostics."""

    sigma2_formula: float
    sigma2_mc: float
    mc_se: float
    observable_id: str
    map_id: str
    truncation_n: int
    truncation_gap: float

    def __post_init__(self):
        if self.sigma2_formula < -1e-8:
            raise InvalidParams(
                f"variance formula returned {self.sigma2_formula}, below -1e-8")
        if self.mc_se <= 0:
            raise InvalidParams("monte-carlo standard error must be positive")

    @property
    def combined_se(self):
        return self.mc_se

    @property
    def agrees(self):
        return abs(self.sigma2_formula - self.sigma2_mc) <= 3 * self.combined_se

    def to_json_dict(self):
        return {
            "sigma2_formula": self.sigma2_formula,
            "sigma2_mc": self.sigma2_mc, "mc_se": self.mc_se,
            "observable_id": self.observable_id, "map_id": self.map_id,
            "truncation_n": self.truncation_n,
            "truncation_gap": self.truncation_gap,
        }


def variance_report(tmap, f, n_modes, n_orbits, orbit_len, seed,
                    observable_id="f", truncation_n=50):
    """Run both variance routes on one map and observable and package
    the comparison."""
    op = galerkin(tmap, n_modes)
    dens = srb(op, n_positivity=8).density
    formula = clt_variance(op, dens, f)
    partial = green_kubo_partial_sums(op, dens, f, truncation_n)
    mc = clt_variance_mc(tmap, f, n_orbits, orbit_len, seed)
    return VarianceReport(
        sigma2_formula=formula, sigma2_mc=mc.sigma2, mc_se=mc.se,
        observable_id=observable_id, map_id=tmap.to_json(),
        truncation_n=truncation_n,
        truncation_gap=abs(partial[-1] - formula))


@dataclass
class VarianceCurve:
    """Variance along a family with derivative-stability diagnostics."""

    rows: list
    deriv_rows: list
    rel_changes: dict
    stable: bool

    def to_json_dict(self):
        return {
            "rows": [list(r) for r in self.rows],
            "deriv_rows": [list(r) for r in self.deriv_rows],
            "rel_changes": {str(k): v for k, v in self.rel_changes.items()},
            "stable": bool(self.stable),
        }


def variance_curve(family, f, t_grid, n_modes, deriv_tol=0.05):
    """sigma^2(t) along the family, re-centered at every t, with central
    divided-difference derivative estimates at 0 checked for stability
    under step halving."""
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise InvalidParams("variance curve needs at least one parameter value")
    h = max(abs(t) for t in t_grid)
    if h == 0.0:
        raise InvalidParams("the parameter grid must reach away from 0")
    if h > family.t_max:
        raise InvalidParams(
            f"grid reaches {h}, beyond the family's verified range {family.t_max}")
    n_deriv = min(family.order - 1, 2)
    needed = {0.0}
    for step in (h, h / 2, h / 4):
        needed.update((step, -step))

    cache = {}

    def sigma_at(t):
        if t not in cache:
            op = galerkin(family.map_at(t), n_modes)
            dens = srb(op, n_positivity=8).density
            cache[t] = clt_variance(op, dens, f)
        return cache[t]

    rows = [(t, sigma_at(t)) for t in t_grid]
    for t in sorted(needed):
        sigma_at(t)

    deriv_rows = []
    estimates = {}
    for order in range(1, n_deriv + 1):
        for step in (h, h / 2, h / 4):
            if order == 1:
                est = (sigma_at(step) - sigma_at(-step)) / (2 * step)
            else:
                est = (sigma_at(step) - 2 * sigma_at(0.0) + sigma_at(-step)) / step**2
            deriv_rows.append((order, step, est))
            estimates[(order, step)] = est
    rel_changes = {}
    for order in range(1, n_deriv + 1):
        coarse = estimates[(order, h / 2)]
        fine = estimates[(order, h / 4)]
        denom = max(abs(fine), abs(coarse))
        rel_changes[order] = abs(fine - coarse) / denom if denom > 1e-12 else 0.0
    stable = all(v < deriv_tol for v in rel_changes.values())
    return VarianceCurve(rows=rows, deriv_rows=deriv_rows,
                         rel_changes=rel_changes, stable=stable)
