"""Perturbations of the transfer operator.

Random-kernel averages and their size, operator-distance experiments,
contour spectral projectors with a stability sweep, Taylor coefficients
of smooth map families, the resolvent expansion on synthetic weighted
scales, and the linear response of the invariant density.
"""

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._util import rng_stream
from .errors import (
    ContourHitsSpectrum,
    DomainViolation,
    InvalidParams,
    SolveFailure,
    StepUnderflow,
)
from .maps import TorusMap, map_distance
from .norms import JetDifference, cq_norm, norm_pq
from .transfer import GalerkinOperator, TransferIterate, TrigObservable, galerkin

_KERNEL_GRID = 48


def _unit_grid(n):
    xs = np.arange(n) / n
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


# ---- random kernels -------------------------------------------------------------


class RandomKernel:
    """Finite-sample random walk: from x, apply T_i with probability
    w_i g_i(x).  The densities must average to one at every point."""

    def __init__(self, weights, maps, densities, grid_n=_KERNEL_GRID):
        self.weights = tuple(float(w) for w in weights)
        self.maps = tuple(maps)
        self.densities = tuple(densities)
        m = len(self.weights)
        if not (1 <= m <= 5):
            raise InvalidParams(f"kernel needs 1 to 5 maps, got {m}")
        if len(self.maps) != m or len(self.densities) != m:
            raise InvalidParams("weights, maps and densities must align")
        if any(w < 0 for w in self.weights):
            raise InvalidParams("kernel weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise InvalidParams(
                f"kernel weights must sum to 1, got {sum(self.weights):.12g}")
        pts = _unit_grid(grid_n)
        total = np.zeros(pts.shape[0])
        for w, g in zip(self.weights, self.densities):
            vals = np.asarray(g(pts), dtype=float)
            low = float(np.min(vals))
            if low < -1e-12:
                raise InvalidParams(
                    f"kernel density dips to {low:.3g}, must be nonnegative")
            total += w * vals
        defect = float(np.max(np.abs(total - 1.0)))
        if defect > 1e-10:
            raise InvalidParams(
                f"kernel densities average to 1 +- {defect:.3g}, "
                "must normalize to 1e-10")

    def __len__(self):
        return len(self.weights)

    def __iter__(self):
        return iter(zip(self.weights, self.maps, self.densities))

    @classmethod
    def deterministic(cls, tmap):
        return cls((1.0,), (tmap,), (TrigObservable.mode((0, 0)),))

    @classmethod
    def complete(cls, head, tail_map):
        """Close a partial sample: the last density is the residual
        (1 - sum w_i g_i) / w_m, rejected if it goes negative."""
        w_tail = 1.0 - sum(w for w, _, _ in head)
        if w_tail <= 0:
            raise InvalidParams(
                f"head weights leave no mass for the tail ({w_tail:.3g})")
        residual = TrigObservable.mode((0, 0))
        for w, _, g in head:
            residual = residual.plus(g.scaled(-w))
        weights = tuple(w for w, _, _ in head) + (w_tail,)
        maps = tuple(t for _, t, _ in head) + (tail_map,)
        densities = tuple(g for _, _, g in head) + (residual.scaled(1.0 / w_tail),)
        return cls(weights, maps, densities)

    def to_json_dict(self):
        return {
            "weights": list(self.weights),
            "maps": [json.loads(t.to_json()) for t in self.maps],
            "density_boxes": [g.n_obs for g in self.densities],
        }


def delta_size(kernel, base, p, q, r):
    """Size of the perturbation: the weighted sum of density smoothness
    times map distance, sum_i w_i |g_i|_{C^{p+q}} d_{C^{r+1}}(T_i, base)."""
    total = 0.0
    for w, tmap, g in kernel:
        if w == 0.0:
            continue
        total += w * cq_norm(g, p + q) * map_distance(tmap, base, order=r + 1)
    return total


# ---- operator distance ----------------------------------------------------------


@dataclass
class MapDistReport:
    """Operator-difference norms against map distance over a corpus."""

    distance: float
    rows: list
    c_fit: float

    def to_json_dict(self):
        return {
            "distance": self.distance,
            "rows": [list(r) for r in self.rows],
            "c_fit": self.c_fit,
        }


def mapdist_experiment(tmap, other, corpus, params, atlas, quad_n=96):
    """Ratios est|(L_T - L_Ttilde) h|_{p-1,q+1} / (d(T, Ttilde) |h|_{p,q})
    over a corpus of observables; the max is a fitted operator-Lipschitz
    constant."""
    dist = map_distance(tmap, other, order=params.r + 1)
    low = params.lowered()
    rows = []
    worst = 0.0
    for idx, h in enumerate(corpus):
        diff = JetDifference(
            TransferIterate(tmap, h, 1), TransferIterate(other, h, 1))
        num = norm_pq(diff, low, atlas, quad_n=quad_n).value
        den = dist * norm_pq(h, params, atlas, quad_n=quad_n).value
        ratio = num / den if den > 0 else 0.0
        worst = max(worst, ratio)
        rows.append((idx, num, den, ratio))
    return MapDistReport(distance=dist, rows=rows, c_fit=worst)


# ---- averaged transfer operator --------------------------------------------------


def transfer_random(kernel, h):
    """Pointwise evaluator of the averaged operator
    (L_K h)(x) = sum_i w_i g_i(T_i^{-1} x) (L_{T_i} h)(x)."""

    def evaluate(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(pts.shape[0])
        for w, tmap, g in kernel:
            y = tmap.invert(pts)
            det, _, _ = tmap.det_jet(y)
            out += w * np.asarray(g(y), dtype=float) * h(y) / det
        return out

    return evaluate


class RandomIterate:
    """(L_K^n h) evaluated by recursing over the m^n inverse branches."""

    def __init__(self, kernel, h, n):
        if n < 0:
            raise InvalidParams("iterate count must be nonnegative")
        self.kernel = kernel
        self.h = h
        self.n = int(n)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self._eval(pts, self.n)

    def _eval(self, pts, n):
        if n == 0:
            return np.asarray(self.h(pts), dtype=float)
        out = np.zeros(pts.shape[0])
        for w, tmap, g in self.kernel:
            y = tmap.invert(pts)
            det, _, _ = tmap.det_jet(y)
            out += w * np.asarray(g(y), dtype=float) * self._eval(y, n - 1) / det
        return out


def galerkin_random(kernel, n_modes, oversample=4, snap=1e-13):
    """Averaged Galerkin matrix: sum_i w_i <e_k, g_i(T_i^{-1}.) L_{T_i} e_k'>,
    assembled per map on the shared oversampled grid."""
    if n_modes < 2 or n_modes > 64:
        raise InvalidParams(f"mode cutoff must be in [2, 64], got {n_modes}")
    grid = max(oversample * n_modes, 64)
    side = 2 * n_modes + 1
    dim = side * side
    pts = _unit_grid(grid)
    ks = np.arange(-n_modes, n_modes + 1)
    fft_rows = ks % grid
    matrix = np.zeros((dim, dim), dtype=complex)
    for w, tmap, g in kernel:
        if w == 0.0:
            continue
        y = tmap.invert(pts)
        det, _, _ = tmap.det_jet(y)
        weight = w * np.asarray(g(y), dtype=float) / det
        t1 = np.exp(2j * np.pi * np.outer(y[:, 0], ks))
        t2 = np.exp(2j * np.pi * np.outer(y[:, 1], ks)) * weight[:, None]
        for a in range(side):
            block = t1[:, a : a + 1] * t2
            spec = np.fft.fft2(block.reshape(grid, grid, side), axes=(0, 1)) / grid**2
            sub = spec[np.ix_(fft_rows, fft_rows)]
            matrix[:, a * side : (a + 1) * side] += sub.reshape(dim, side)
    matrix[np.abs(matrix) < snap] = 0.0
    op = GalerkinOperator(
        n_modes=n_modes,
        matrix=matrix,
        map_json=json.dumps(kernel.to_json_dict()),
        oversample=oversample,
        snap=snap,
    )
    row0 = matrix[op.index((0, 0))].copy()
    row0[op.index((0, 0))] -= 1.0
    defect = float(np.max(np.abs(row0)))
    if defect > 1e-10:
        raise SolveFailure(
            "averaged matrix violates integral preservation", row0_defect=defect)
    return op


@dataclass
class RandomLyReport:
    """Weak-norm growth of the averaged operator iterates."""

    rows: list
    rate: float
    m_target: float

    @property
    def within_target(self):
        return self.rate <= self.m_target

    def to_json_dict(self):
        return {
            "rows": [list(r) for r in self.rows],
            "rate": self.rate,
            "m_target": self.m_target,
            "within_target": bool(self.within_target),
        }


def random_ly_experiment(kernel, params, n_max, m_target, h, atlas, quad_n=96):
    """Estimate |L_K^n h|_{0,q} for n = 0..n_max and fit the growth rate:
    bounded families stay under a configured target rate."""
    if not (1 <= n_max <= 5):
        raise InvalidParams("averaged iterates are limited to n in [1, 5]")
    if params.p != 0:
        raise InvalidParams("growth experiment runs the weak norm, need p = 0")
    rows = []
    for n in range(n_max + 1):
        est = norm_pq(RandomIterate(kernel, h, n), params, atlas, quad_n=quad_n)
        rows.append((n, est.value))
    ns = np.array([r[0] for r in rows], dtype=float)
    es = np.array([r[1] for r in rows])
    live = es > 0
    if np.count_nonzero(live) >= 2:
        rate = float(np.exp(np.polyfit(ns[live], np.log(es[live]), 1)[0]))
    else:
        rate = 0.0
    return RandomLyReport(rows=rows, rate=rate, m_target=float(m_target))


# ---- contour projectors ----------------------------------------------------------


@dataclass(frozen=True)
class Contour:
    """Circle for resolvent integrals, discretized by the trapezoid rule."""

    center: complex
    radius: float
    m_nodes: int = 64

    def __post_init__(self):
        if self.m_nodes < 16:
            raise InvalidParams(f"contour needs >= 16 nodes, got {self.m_nodes}")
        if self.radius <= 0:
            raise InvalidParams("contour radius must be positive")

    def nodes(self):
        theta = 2 * np.pi * np.arange(self.m_nodes) / self.m_nodes
        return complex(self.center) + self.radius * np.exp(1j * theta)

    def integrate(self, values):
        """(1/2 pi i) contour integral of a node-sampled integrand."""
        theta = 2 * np.pi * np.arange(self.m_nodes) / self.m_nodes
        phases = np.exp(1j * theta)
        acc = sum(ph * v for ph, v in zip(phases, values))
        return acc * (self.radius / self.m_nodes)


def _as_matrix(op):
    return op.matrix if isinstance(op, GalerkinOperator) else np.asarray(op, dtype=complex)


def projector(op, contour, spectrum_gap=1e-6):
    """Spectral projector (1/2 pi i) contour-integral of (z - L)^{-1}."""
    M = _as_matrix(op)
    eigs = np.linalg.eigvals(M)
    closest = float(np.min(np.abs(np.abs(eigs - contour.center) - contour.radius)))
    if closest < spectrum_gap:
        raise ContourHitsSpectrum(
            "an eigenvalue sits on the integration circle", distance=closest)
    eye = np.eye(M.shape[0], dtype=complex)
    resolvents = [np.linalg.solve(z * eye - M, eye) for z in contour.nodes()]
    return contour.integrate(resolvents)


def projector_rank(pi, tol=1e-6):
    return int(np.count_nonzero(scipy.linalg.svdvals(pi) > tol))


# ---- spectral stability sweep -----------------------------------------------------


@dataclass
class StabilityReport:
    """Projector ranks and distances along a shrinking perturbation ladder."""

    rho: float
    eta: float
    rank_base: int
    rows: list
    exponent: float
    eps0: float
    k2: float

    def to_json_dict(self):
        return {
            "rho": self.rho,
            "eta": self.eta,
            "rank_base": self.rank_base,
            "rows": [list(r) for r in self.rows],
            "exponent": self.exponent,
            "eps0": self.eps0,
            "k2": self.k2,
        }


def stability_experiment(base, kernels, p, q, rho, report=None, n_modes=12,
                         r=None, peripheral_radius=0.5, m_nodes=64, n_decay=20):
    """Sweep kernels with shrinking size: compare each averaged projector
    around the fixed point with the unperturbed one, fit the distance
    exponent, and bound the decay outside the peripheral disc."""
    if report is None:
        report = base.hyperbolicity_constants()
    if r is None:
        r = int(np.ceil(p + q)) + 1
    weak_rate = max(report.lam ** -p, report.nu ** q)
    if not (weak_rate < rho < 1.0):
        raise InvalidParams(
            f"need a spectral shell: rho in ({weak_rate:.4g}, 1), got {rho}")
    eta = 1.0 - np.log(rho) / np.log(weak_rate)
    g0 = galerkin(base, n_modes)
    loop = Contour(1.0 + 0.0j, peripheral_radius, m_nodes)
    pi0 = projector(g0, loop)
    rank0 = projector_rank(pi0)
    rows = []
    k2 = 0.0
    for kernel in kernels:
        size = delta_size(kernel, base, p, q, r)
        gk = galerkin_random(kernel, n_modes)
        pik = projector(gk, loop)
        rank_k = projector_rank(pik)
        dist = float(np.linalg.norm(pik - pi0, 2))
        rows.append((size, rank_k, dist))
        tail = projector(gk, Contour(0.0 + 0.0j, rho, m_nodes))
        power = np.asarray(gk.matrix, dtype=complex)
        mats = np.eye(power.shape[0], dtype=complex)
        for n in range(1, n_decay + 1):
            mats = power @ mats
            k2 = max(k2, float(np.linalg.norm(mats @ tail, 2)) / rho ** n)
    fit_rows = [(s, d) for s, _, d in rows if s > 1e-15 and d > 1e-15]
    if len(fit_rows) >= 2:
        ls = np.log([s for s, _ in fit_rows])
        ld = np.log([d for _, d in fit_rows])
        exponent = float(np.polyfit(ls, ld, 1)[0])
    else:
        exponent = float("nan")
    eps0 = 0.0
    for size, rank_k, _ in sorted(rows):
        if rank_k != rank0:
            break
        eps0 = max(eps0, size)
    return StabilityReport(
        rho=float(rho), eta=float(eta), rank_base=rank0, rows=rows,
        exponent=exponent, eps0=eps0, k2=k2)


# ---- smooth families and Taylor coefficients -------------------------------------


@dataclass
class PerturbationFamily:
    """Curve of maps t -> A x + g0(x) + t g1(x) (+ t^2 g2(x) ...) with a
    verified hyperbolic range."""

    base: TorusMap
    directions: tuple
    order: int
    t_max: float = 0.05
    verify: dataclasses.InitVar[bool] = True

    def __post_init__(self, verify):
        self.directions = tuple(tuple(pair) for pair in self.directions)
        if self.order < 2:
            raise InvalidParams("family smoothness order must be >= 2")
        if not (0 < self.t_max <= 1.0):
            raise InvalidParams("hyperbolic range t_max must be in (0, 1]")
        if not self.directions:
            raise InvalidParams("family needs at least one direction field")
        if verify:
            if map_distance(self.map_at(0.0), self.base, order=2) > 1e-12:
                raise InvalidParams("family does not pass through its base map")
            for t in (self.t_max, -self.t_max):
                self.map_at(t).hyperbolicity_constants()

    def map_at(self, t):
        comps = []
        for axis in range(2):
            comp = self.base.pert[axis].scaled(self.base.strength)
            for m, pair in enumerate(self.directions, start=1):
                comp = comp.plus(pair[axis].scaled(t ** m))
            comps.append(comp)
        return TorusMap(self.base.linear, tuple(comps), 1.0)

    def to_json_dict(self):
        return {
            "base": json.loads(self.base.to_json()),
            "order": self.order,
            "t_max": self.t_max,
            "directions": [
                [pair[0].terms_json(), pair[1].terms_json()]
                for pair in self.directions
            ],
        }


def _q1_closed_form(family, n_modes, oversample=4, snap=1e-13):
    # Differentiating (L_t h)(x) = h(S_t x) / |det DT_t(S_t x)| at t = 0 with
    # dS_t/dt = -(DT)^{-1} u(S_t x) for the direction field u gives, after the
    # change of variables x = T y,
    #   (Q_1 e_k)(T y) |det DT(y)| = -e_k(y) [2 pi i k . v(y) + div v(y)]
    # with v = (DT)^{-1} u; div v expands through the log-determinant gradient.
    base = family.map_at(0.0)
    u1, u2 = family.directions[0]
    grid = max(oversample * n_modes, 64)
    side = 2 * n_modes + 1
    dim = side * side
    pts = _unit_grid(grid)
    y = base.invert(pts)
    dt = base.differential(y)
    det, grad_logdet, _ = base.det_jet(y, order=1)
    u = np.column_stack([np.asarray(u1(y), dtype=float), np.asarray(u2(y), dtype=float)])
    v = np.einsum("nij,nj->ni", np.linalg.inv(dt), u)
    # trace((DT)^{-1} Du): entries of Du from the direction's exact partials
    du = np.empty((y.shape[0], 2, 2))
    for i, comp in enumerate((u1, u2)):
        du[:, i, 0] = comp.partial((1, 0))(y)
        du[:, i, 1] = comp.partial((0, 1))(y)
    div_v = (np.einsum("nij,nji->n", np.linalg.inv(dt), du)
             - np.einsum("ni,ni->n", grad_logdet, v))
    ks = np.arange(-n_modes, n_modes + 1)
    fft_rows = ks % grid
    base_w = -div_v / det
    p1 = -2j * np.pi * v[:, 0] / det
    p2 = -2j * np.pi * v[:, 1] / det
    t1 = np.exp(2j * np.pi * np.outer(y[:, 0], ks))
    t2 = np.exp(2j * np.pi * np.outer(y[:, 1], ks))
    matrix = np.empty((dim, dim), dtype=complex)
    for a in range(side):
        k1 = ks[a]
        w_col = base_w + k1 * p1
        block = t1[:, a : a + 1] * (t2 * w_col[:, None] + t2 * (ks[None, :] * p2[:, None]))
        spec = np.fft.fft2(block.reshape(grid, grid, side), axes=(0, 1)) / grid**2
        sub = spec[np.ix_(fft_rows, fft_rows)]
        matrix[:, a * side : (a + 1) * side] = sub.reshape(dim, side)
    matrix[np.abs(matrix) < snap] = 0.0
    mid = (dim - 1) // 2
    defect = float(np.max(np.abs(matrix[mid])))
    if defect > 1e-10:
        raise SolveFailure(
            "first Taylor coefficient must annihilate the integral",
            row0_defect=defect)
    return matrix


def _fd_stencil(family, k, t, n_modes):
    """Central k-th derivative of the Galerkin family over step t, over k!."""
    if k == 1:
        offsets = [(0.5, t), (-0.5, -t)]
    elif k == 2:
        offsets = [(1.0, t), (-2.0, 0.0), (1.0, -t)]
    elif k == 3:
        offsets = [(0.5, 2 * t), (-1.0, t), (1.0, -t), (-0.5, -2 * t)]
    else:
        raise InvalidParams("finite-difference coefficients stop at order 3")
    acc = None
    for coef, off in offsets:
        # snap-free assembly: zeroed entries would poison the cancellation
        g = galerkin(family.map_at(off), n_modes, snap=0.0).matrix
        acc = coef * g if acc is None else acc + coef * g
    fact = float(np.prod(np.arange(1, k + 1)))
    return acc / (t ** k) / fact


def _richardson_fd(family, k, n_modes, t0, rich_tol, min_step):
    # Neville tableau over halved steps; central stencils have even error
    # expansions, so each level cancels another t^2 power.
    t = min(t0, family.t_max)
    prev_row = [_fd_stencil(family, k, t, n_modes)]
    while t / 2 >= min_step:
        t /= 2
        row = [_fd_stencil(family, k, t, n_modes)]
        for j, above in enumerate(prev_row, start=1):
            fac = 4.0 ** j
            row.append((fac * row[j - 1] - above) / (fac - 1.0))
        if len(row) >= 2:
            scale = max(float(np.max(np.abs(row[-1]))), 1e-30)
            drift = float(np.max(np.abs(row[-1] - row[-2])))
            if drift <= rich_tol * scale:
                return row[-1]
        prev_row = row
    raise StepUnderflow(
        "difference steps fell below the floor without stabilizing",
        floor=min_step)


def taylor_q(family, k, n_modes, method="auto", t0=0.05, rich_tol=1e-9,
             min_step=1e-6):
    """Galerkin matrix of the k-th Taylor coefficient of t -> L_{T_t}.

    k = 1 uses the exact closed form; k >= 2 uses Richardson-extrapolated
    central differences with step halving.  ``method`` forces one route
    ("closed" or "fd") when both apply."""
    if not (1 <= k <= family.order - 1):
        raise InvalidParams(
            f"coefficient index must be in [1, {family.order - 1}], got {k}")
    if method not in ("auto", "closed", "fd"):
        raise InvalidParams(f"unknown differentiation method {method!r}")
    if method == "closed" and k != 1:
        raise InvalidParams("the closed form covers the first coefficient only")
    if k == 1 and method != "fd":
        return _q1_closed_form(family, n_modes)
    return _richardson_fd(family, k, n_modes, t0, rich_tol, min_step)


# ---- synthetic weighted scales -----------------------------------------------------


def _weighted_norm(mat, w_out, w_in):
    """Operator norm between weighted max-norms: plain induced inf-norm of
    the similarity-scaled matrix."""
    scaled = mat * np.outer(w_out, 1.0 / w_in)
    return float(np.max(np.sum(np.abs(scaled), axis=1)))


@dataclass
class WeightedScale:
    """Finite model of a nested Banach scale: a weighted shift whose tail
    contracts through the weights while the flat norm sees expansion."""

    dim: int
    order: int
    m_rate: float
    alpha: float
    rho: float
    t_piv: float
    seed: int
    l0: np.ndarray = field(repr=False)
    weights: list = field(repr=False)
    qops: list = field(repr=False)
    noise: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, dim=12, order=2, m_rate=4.0, alpha=0.25, rho=1.0,
              t_piv=1e-3, seed=0, check=True):
        if dim < 4:
            raise InvalidParams("scale needs dimension >= 4")
        if not (0 < alpha < m_rate):
            raise InvalidParams("need contraction alpha < growth M")
        if order < 1:
            raise InvalidParams("scale order must be >= 1")
        l0 = np.zeros((dim, dim))
        l0[0, 0] = 1.0
        for k in range(1, dim):
            l0[k - 1, k] = m_rate
        ratio = m_rate / alpha
        strong = ratio ** np.arange(dim)
        weights = [np.ones(dim)] + [strong] * order
        qops = []
        for j in range(1, order):
            rng = rng_stream(seed, j)
            q = np.triu(rng.standard_normal((dim, dim)))
            worst = max(
                _weighted_norm(q, weights[i - j], weights[i])
                for i in range(j, order + 1))
            qops.append(q / worst)
        rng = rng_stream(seed, 0x7F)
        noise = np.triu(rng.standard_normal((dim, dim)))
        noise = noise / _weighted_norm(noise, weights[0], weights[order])
        scale = cls(dim=dim, order=order, m_rate=m_rate, alpha=alpha,
                    rho=rho, t_piv=t_piv, seed=seed, l0=l0, weights=weights,
                    qops=qops, noise=noise)
        if check:
            scale._verify_assumptions()
        return scale

    @property
    def eta(self):
        return float(np.log(self.rho / self.alpha) / np.log(self.m_rate / self.alpha))

    def sigma(self, t):
        t = abs(t)
        if t <= self.t_piv:
            return t
        return self.t_piv ** (1.0 - self.eta) * t ** self.eta

    def l_at(self, t):
        out = self.l0.copy()
        for j, q in enumerate(self.qops, start=1):
            out = out + (t ** j) * q
        out = out + (t ** (self.order - 1)) * self.sigma(t) * self.noise
        return out

    def norm_between(self, mat, level_in, level_out):
        return _weighted_norm(mat, self.weights[level_out], self.weights[level_in])

    def _verify_assumptions(self, n_pows=10, t_samples=20, c_cap=8.0):
        # growth on the flat norm, two-norm contraction on the strong one,
        # coefficient bounds, and the remainder ladder, on sampled t
        for j, q in enumerate(self.qops, start=1):
            for i in range(j, self.order + 1):
                if self.norm_between(q, i, i - j) > c_cap:
                    raise SolveFailure("coefficient operator escapes its bound")
        ts = np.linspace(-0.1, 0.1, t_samples)
        for t in ts:
            lt = self.l_at(t)
            power = np.eye(self.dim)
            for n in range(1, n_pows + 1):
                power = lt @ power
                flat = self.norm_between(power, 0, 0)
                if flat > c_cap * self.m_rate ** n:
                    raise SolveFailure("flat-norm growth exceeds its rate")
                for col in range(self.dim):
                    lhs = float(
                        np.max(np.abs(power[:, col]) * self.weights[1]))
                    bound = (self.alpha ** n * self.weights[1][col]
                             + self.m_rate ** n)
                    if lhs > c_cap * bound:
                        raise SolveFailure(
                            "strong norm violates the two-term inequality")
            for j in range(1, self.order + 1):
                delta = lt - self.l0
                for m, q in enumerate(self.qops[: j - 1], start=1):
                    delta = delta - (t ** m) * q
                for i in range(j, self.order + 1):
                    if (self.norm_between(delta, i, i - j)
                            > c_cap * abs(t) ** j + 1e-14):
                        raise SolveFailure("remainder ladder escapes t^j")

    def to_json_dict(self):
        return {
            "dim": self.dim, "order": self.order, "m_rate": self.m_rate,
            "alpha": self.alpha, "rho": self.rho, "t_piv": self.t_piv,
            "seed": self.seed, "eta": self.eta,
        }


@dataclass
class ResolventReport:
    """Log-log fit of the resolvent expansion remainder against t."""

    z: complex
    s: int
    eta: float
    expected_slope: float
    t_grid: list
    remainders: list
    slope: float

    def to_json_dict(self):
        return {
            "z": [self.z.real, self.z.imag],
            "s": self.s,
            "eta": self.eta,
            "expected_slope": self.expected_slope,
            "t_grid": list(self.t_grid),
            "remainders": list(self.remainders),
            "slope": self.slope,
        }


def _compositions(k):
    """All tuples of positive integers summing to k (k = 0: the empty one)."""
    if k == 0:
        return [()]
    out = []
    for first in range(1, k + 1):
        for rest in _compositions(k - first):
            out.append((first,) + rest)
    return out


def resolvent_expansion_validate(scale, z, s, t_grid, delta=0.1):
    """Measure |(z - L_t)^{-1} - R_s(t)| from the strong space to the flat
    one and fit its t-slope; the expansion R_s stacks resolvent-coefficient
    words of every order below s."""
    if s != scale.order:
        raise InvalidParams(
            f"expansion order {s} must match the scale order {scale.order}")
    z = complex(z)
    eigs = np.linalg.eigvals(scale.l0)
    if abs(z) < scale.rho - 1e-12 or float(np.min(np.abs(eigs - z))) < delta:
        raise DomainViolation(
            "expansion point must stay outside the spectrum shell",
            z=z, delta=delta)
    eye = np.eye(scale.dim)
    r0 = np.linalg.solve(z * eye - scale.l0, eye)
    remainders = []
    for t in t_grid:
        if t <= 0:
            raise InvalidParams("t grid must be positive")
        rs = np.zeros_like(r0)
        for k in range(s):
            for word in _compositions(k):
                term = r0.copy()
                for ell in word:
                    term = term @ scale.qops[ell - 1] @ r0
                rs = rs + (t ** k) * term
        rt = np.linalg.solve(z * eye - scale.l_at(t), eye)
        remainders.append(scale.norm_between(rt - rs, s, 0))
    slope = float(np.polyfit(np.log(t_grid), np.log(remainders), 1)[0])
    return ResolventReport(
        z=z, s=s, eta=scale.eta, expected_slope=s - 1 + scale.eta,
        t_grid=list(t_grid), remainders=remainders, slope=slope)


# ---- linear response ---------------------------------------------------------------


def response(family, f, n_modes, contour=None, spectrum_gap=1e-6):
    """Derivative at t = 0 of the invariant-density average of f along the
    family, through the contour form of the projector derivative."""
    from .transfer import srb

    g0 = galerkin(family.map_at(0.0), n_modes)
    # light positivity screen: only the coefficient vector matters here
    h0 = srb(g0, n_positivity=8).density.as_vector()
    q1 = taylor_q(family, 1, n_modes)
    if contour is None:
        contour = Contour(1.0 + 0.0j, 0.5, 64)
    M = g0.matrix
    eigs = np.linalg.eigvals(M)
    closest = float(np.min(np.abs(np.abs(eigs - contour.center) - contour.radius)))
    if closest < spectrum_gap:
        raise ContourHitsSpectrum(
            "an eigenvalue sits on the integration circle", distance=closest)
    eye = np.eye(M.shape[0], dtype=complex)
    kicked = []
    for zed in contour.nodes():
        inner = np.linalg.solve(zed * eye - M, h0)
        kicked.append(np.linalg.solve(zed * eye - M, q1 @ inner))
    h_prime = contour.integrate(kicked)
    bump = TrigObservable.from_vector(h_prime, n_modes, real=None)
    value = bump.pairing(f.pad(n_modes) if f.n_obs < n_modes else f)
    return float(np.real(value))
