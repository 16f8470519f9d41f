"""Stable-leaf machinery.

Admissible graphs over the straightened chart axis, the inverse-image graph
transform, covers of pulled-back leaves with partitions of unity, quadrature
along leaves, a smooth mollifier, and the splitting of a vector field into
components along and transverse to a pushed-forward leaf.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from ._util import (
    SMOOTHSTEP8,
    ChebFun,
    cheb_from_values,
    cheb_nodes,
    gauss_legendre,
    wrap01,
    wrap_half,
)
from .errors import (
    ExpansionTooWeak,
    InvalidParams,
    NoConvergence,
    SingularFrame,
)


@dataclass(eq=False)
class AdmissibleGraph:
    """Curve written as v = chi(u) over the straightened stable axis of one
    chart.

    ``radius`` is the half-width of the interval carrying ``chi``.  The
    central part of half-width ``gamma * delta`` is the leaf proper; the
    inverse-image transform needs working room out to half-width
    ``gamma * big_a * delta``.
    """

    atlas: object = field(repr=False)
    chart: int = 0
    center_u: float = 0.0
    radius: float = 0.0
    chi: ChebFun = field(default=None, repr=False)
    delta: float = 0.05
    big_a: float = 3.0
    gamma: float = 1.0
    smooth_order: int = 4
    slope_sup: float = field(init=False, default=0.0)
    smooth_sup: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.radius <= 0.0:
            raise InvalidParams("graph radius must be positive")
        lo, hi = self.center_u - self.radius, self.center_u + self.radius
        if abs(self.chi.a - lo) > 1e-9 or abs(self.chi.b - hi) > 1e-9:
            raise InvalidParams("chi must be defined on the graph interval")
        self.slope_sup = self.chi.deriv_max(1, 257)
        self.smooth_sup = self.chi.c_norm(self.smooth_order, 257)

    @property
    def leaf_radius(self):
        return self.gamma * self.delta

    @property
    def full_radius(self):
        return self.gamma * self.big_a * self.delta

    def interval(self):
        return self.center_u - self.radius, self.center_u + self.radius

    def leaf_interval(self):
        r = min(self.leaf_radius, self.radius)
        return self.center_u - r, self.center_u + r

    def chart_points(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return np.column_stack([u, self.chi(u)])

    def torus_points(self, u):
        return self.atlas.from_chart(self.chart, self.chart_points(u))

    def leaf_part(self):
        """The same curve restricted to its leaf interval."""
        if self.radius <= self.leaf_radius + 1e-15:
            return self
        lo, hi = self.leaf_interval()
        deg = len(self.chi.coef) - 1
        chi = cheb_from_values(self.chi(cheb_nodes(lo, hi, deg)), lo, hi)
        return AdmissibleGraph(
            self.atlas, self.chart, self.center_u, self.leaf_radius, chi,
            self.delta, self.big_a, self.gamma, self.smooth_order,
        )

    def admissibility(self, smooth_bound=10.0, samples=257):
        """Diagnostics for the cone, smoothness and chart-box conditions."""
        lo, hi = self.interval()
        aperture = float(self.atlas.apertures[self.chart])
        box = 2.0 * self.atlas.radius / 3.0
        range_sup = self.chi.deriv_max(0, samples)
        return {
            "slope_sup": self.slope_sup,
            "aperture": aperture,
            "smooth_sup": self.smooth_sup,
            "smooth_bound": float(smooth_bound),
            "range_sup": range_sup,
            "reach": max(abs(lo), abs(hi)),
            "box": box,
            "ok": bool(
                self.slope_sup <= aperture
                and self.smooth_sup <= smooth_bound
                and range_sup < box
                and max(abs(lo), abs(hi)) < box
            ),
        }

    def require_admissible(self, smooth_bound=10.0, samples=257):
        diag = self.admissibility(smooth_bound, samples)
        if not diag["ok"]:
            raise InvalidParams(f"graph is not admissible: {diag}")
        return diag

    def to_json_dict(self):
        return {
            "chart": int(self.chart),
            "center": float(self.center_u),
            "radius": float(self.radius),
            "delta": float(self.delta),
            "big_a": float(self.big_a),
            "gamma": float(self.gamma),
            "coefficients": [float(c) for c in self.chi.coef],
        }


def flat_graph(atlas, chart, center_u, radius, v_offset=0.0, delta=0.05,
               big_a=3.0, gamma=1.0):
    """Straight horizontal graph v = v_offset."""
    chi = ChebFun(np.array([float(v_offset)]), center_u - radius, center_u + radius)
    return AdmissibleGraph(atlas, chart, float(center_u), float(radius), chi,
                           delta, big_a, gamma)


def fit_graph(atlas, chart, center_u, radius, fn, degree=16, delta=0.05,
              big_a=3.0, gamma=1.0):
    """Graph with chi interpolated from a callable."""
    lo, hi = center_u - radius, center_u + radius
    chi = ChebFun.fit(fn, lo, hi, degree)
    return AdmissibleGraph(atlas, chart, float(center_u), float(radius), chi,
                           delta, big_a, gamma)


def random_admissible_graph(atlas, rng, delta=0.05, big_a=3.0, gamma=1.0,
                            degree=6, chart=None, smooth_bound=10.0):
    """Random graph rescaled until the admissibility margins hold."""
    if chart is None:
        chart = int(rng.integers(atlas.n_charts))
    radius = gamma * big_a * delta
    center_u = float(0.2 * radius * (2.0 * rng.random() - 1.0))
    lo, hi = center_u - radius, center_u + radius
    coef = rng.standard_normal(degree + 1) * 0.25 ** np.arange(degree + 1)
    coef[0] = 0.1 * (2.0 * rng.random() - 1.0)
    chi = ChebFun(coef, lo, hi)
    aperture = float(atlas.apertures[chart])
    wiggle = ChebFun(np.concatenate([[0.0], coef[1:]]), lo, hi)
    scale = min(
        1.0,
        0.75 * aperture / max(wiggle.deriv_max(1), 1e-30),
        0.8 * smooth_bound / max(wiggle.c_norm(4), 1e-30),
        0.2 / max(wiggle.deriv_max(0), 1e-30),
    )
    coef = np.concatenate([[coef[0]], scale * coef[1:]])
    graph = AdmissibleGraph(atlas, chart, center_u, radius,
                            ChebFun(coef, lo, hi), delta, big_a, gamma)
    graph.require_admissible(smooth_bound)
    return graph


class _PreimageCurve:
    """Dense model of the n-fold inverse image of a graph, with a continuous
    lift, straightened coordinates and exact tangents."""

    def __init__(self, tmap, graph, n, n_dense=1201, du_target=0.01,
                 n_dense_cap=300000):
        self.tmap = tmap
        self.graph = graph
        self.n = int(n)
        self.rotation = graph.atlas.rotation
        while True:
            span = self._build(n_dense)
            if span / (n_dense - 1) <= du_target or n_dense >= n_dense_cap:
                break
            n_dense = min(n_dense_cap, int(span / du_target) + 2)
        if span / (n_dense - 1) > du_target:
            raise NoConvergence(
                "inverse image too long to resolve", span=span, n=self.n)

    def _build(self, n_dense):
        s = np.linspace(*self.graph.interval(), n_dense)
        pts, tang = self._pull(s)
        steps = wrap_half(np.diff(pts, axis=0))
        lift = pts[0] + np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])
        self.mid = lift[n_dense // 2].copy()
        straight = (lift - self.mid) @ self.rotation
        u = straight[:, 0]
        du = tang @ self.rotation[:, 0]
        d = np.diff(u)
        if not (np.all(d > 0.0) or np.all(d < 0.0)):
            raise ExpansionTooWeak(
                "inverse image is not a monotone graph over the stable axis")
        self.s = s
        self.lift = lift
        self.u = u
        self.expansion_min = float(np.min(np.abs(du)))
        if u[0] < u[-1]:
            self._ui, self._si = u, s
        else:
            self._ui, self._si = u[::-1], s[::-1]
        return float(abs(u[-1] - u[0]))

    def _pull(self, s):
        g = self.graph
        pts = g.torus_points(s)
        tang = np.column_stack([np.ones_like(s), g.chi(s, 1)]) @ self.rotation.T
        for _ in range(self.n):
            pts = self.tmap.invert(pts)
            tang = np.linalg.solve(self.tmap.differential(pts), tang[:, :, None])[:, :, 0]
        return pts, tang

    @property
    def u_window(self):
        return float(self._ui[0]), float(self._ui[-1])

    def eval(self, s):
        """Lift points, straightened coordinates and straightened tangents at
        arbitrary parameters."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        pts, tang = self._pull(s)
        approx = np.column_stack([
            np.interp(s, self.s, self.lift[:, 0]),
            np.interp(s, self.s, self.lift[:, 1]),
        ])
        lift = approx + wrap_half(pts - approx)
        straight = (lift - self.mid) @ self.rotation
        return lift, straight, tang @ self.rotation

    def s_of_u(self, u, newton=4):
        """Invert the straightened horizontal coordinate."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        s = np.interp(u, self._ui, self._si)
        for _ in range(newton):
            _, st, dst = self.eval(s)
            s = s - (st[:, 0] - u) / dst[:, 0]
        _, st, _ = self.eval(s)
        defect = float(np.max(np.abs(st[:, 0] - u)))
        if defect > 1e-9:
            raise NoConvergence("could not locate leaf parameters",
                                defect=defect)
        return s


@dataclass(eq=False)
class RampBump:
    """Plateau bump built from two complementary smoothstep ramps.

    ``rise``/``fall`` are (start, width) pairs or None for a one-sided bump.
    Consecutive bumps sharing a ramp sum to one exactly.
    """

    rise: tuple = None
    fall: tuple = None

    def __call__(self, u, k=0):
        u = np.asarray(u, dtype=float)
        if self.rise is None:
            up = np.ones_like(u) if k == 0 else np.zeros_like(u)
        else:
            a, w = self.rise
            up = SMOOTHSTEP8((u - a) / w, k) / w ** k
        if self.fall is None:
            down = np.zeros_like(u)
        else:
            a, w = self.fall
            down = SMOOTHSTEP8((u - a) / w, k) / w ** k
        return up - down

    def support(self):
        lo = -math.inf if self.rise is None else self.rise[0]
        hi = math.inf if self.fall is None else self.fall[0] + self.fall[1]
        return lo, hi

    def c_norm_bound(self, order, samples=512):
        """Upper bound for the C^order norm from the ramp profile."""
        t = np.linspace(0.0, 1.0, samples)
        out = 1.0
        w = min(self.rise[1] if self.rise else math.inf,
                self.fall[1] if self.fall else math.inf)
        if not math.isfinite(w):
            return out
        for k in range(1, order + 1):
            out = max(out, float(np.max(np.abs(SMOOTHSTEP8(t, k)))) / w ** k)
        return out

    def to_json_dict(self):
        return {
            "rise": None if self.rise is None else [float(x) for x in self.rise],
            "fall": None if self.fall is None else [float(x) for x in self.fall],
        }


@dataclass(eq=False)
class LeafCover:
    """Cover of the n-fold inverse image of a leaf by admissible graphs with
    a subordinate partition of unity along the curve."""

    source: AdmissibleGraph = field(repr=False)
    n: int = 1
    gamma: float = 1.0
    leaves: list = field(default_factory=list, repr=False)
    bumps: list = field(default_factory=list, repr=False)
    u_offsets: list = field(default_factory=list, repr=False)
    centers_u: np.ndarray = field(default=None, repr=False)
    leaf_window: tuple = (0.0, 0.0)
    full_window: tuple = (0.0, 0.0)
    expansion_min: float = 0.0
    overlap_count: int = 0
    curve: _PreimageCurve = field(default=None, repr=False)

    @property
    def n_leaves(self):
        return len(self.leaves)

    def source_leaf_params(self, m=200):
        lo, hi = self.source.leaf_interval()
        return np.linspace(lo, hi, m)

    def partition_at_params(self, s):
        """Bump values along the curve: matrix of shape (n_leaves, len(s))."""
        _, st, _ = self.curve.eval(s)
        u = st[:, 0]
        return np.vstack([b(u) for b in self.bumps])

    def partition_defect(self, m=200):
        rows = self.partition_at_params(self.source_leaf_params(m))
        return float(np.max(np.abs(rows.sum(axis=0) - 1.0)))

    def covering_margin(self, m=400):
        """Smallest slack with which the leaf intervals cover the curve."""
        _, st, _ = self.curve.eval(self.source_leaf_params(m))
        u = st[:, 0]
        r = self.gamma * self.source.delta
        slack = r - np.abs(u[None, :] - self.centers_u[:, None])
        return float(np.min(np.max(slack, axis=0)))

    def to_json_dict(self):
        return {
            "n": int(self.n),
            "gamma": float(self.gamma),
            "source": self.source.to_json_dict(),
            "leaves": [g.to_json_dict() for g in self.leaves],
            "bumps": [b.to_json_dict() for b in self.bumps],
            "u_offsets": [float(x) for x in self.u_offsets],
            "overlap_count": int(self.overlap_count),
            "expansion_min": float(self.expansion_min),
        }


def leaf_cover(tmap, graph, n, gamma=1.0, report=None, spacing_frac=0.95,
               degree=16, n_dense=1201, smooth_bound=10.0, c_overlap=2):
    """Cover the n-fold inverse image of the leaf of ``graph`` by admissible
    graphs at dilation ``gamma``, with a partition of unity."""
    if n < 1:
        raise InvalidParams("iterate count must be at least 1")
    graph.require_admissible(smooth_bound)
    if graph.radius < graph.full_radius - 1e-12:
        raise InvalidParams("input graph must carry its full working interval")
    if report is None:
        report = tmap.hyperbolicity_constants()
    gamma_max = report.covering_gamma_max(graph.big_a)
    if not 1.0 - 1e-12 <= gamma <= gamma_max + 1e-12:
        raise InvalidParams(
            f"gamma must lie in [1, {gamma_max:.6g}], got {gamma:g}")

    curve = _PreimageCurve(tmap, graph, n, n_dense)
    bound = report.base_expansion_bound(n)
    if curve.expansion_min < bound:
        raise ExpansionTooWeak(
            "measured stable-axis expansion below the admissible bound",
            measured=curve.expansion_min, bound=bound)

    atlas = graph.atlas
    leaf_r = gamma * graph.delta
    full_r = gamma * graph.big_a * graph.delta
    la, lb = graph.leaf_interval()
    _, st, _ = curve.eval(np.array([la, lb]))
    u_lo, u_hi = sorted(st[:, 0])
    span = u_hi - u_lo
    ell = max(1, math.ceil(span / (2.0 * leaf_r * spacing_frac)))
    step = span / ell
    centers = u_lo + (np.arange(ell) + 0.5) * step
    win_lo, win_hi = curve.u_window
    if centers[0] - full_r < win_lo - 1e-12 or centers[-1] + full_r > win_hi + 1e-12:
        raise ExpansionTooWeak(
            "not enough working room in the inverse image for the output graphs",
            window=(win_lo, win_hi), need=(centers[0] - full_r, centers[-1] + full_r))

    leaves, offsets = [], []
    for c in centers:
        s_c = curve.s_of_u(np.array([c]))
        lift, _, _ = curve.eval(s_c)
        x_c = wrap01(lift[0])
        ci = atlas.nearest_chart(x_c)
        zc = atlas.to_chart(ci, x_c)[0]
        offset = zc[0] - c
        nodes = cheb_nodes(zc[0] - full_r, zc[0] + full_r, degree)
        s_nodes = curve.s_of_u(nodes - offset)
        lift_n, _, _ = curve.eval(s_nodes)
        z = atlas.to_chart(ci, wrap01(lift_n))
        defect = float(np.max(np.abs(z[:, 0] - nodes)))
        if defect > 1e-9:
            raise NoConvergence("chart coordinates drifted along the curve",
                                defect=defect)
        chi = cheb_from_values(z[:, 1], zc[0] - full_r, zc[0] + full_r)
        out = AdmissibleGraph(atlas, ci, float(zc[0]), full_r, chi,
                              graph.delta, graph.big_a, gamma)
        out.require_admissible(smooth_bound)
        leaves.append(out)
        offsets.append(offset)

    if ell == 1:
        bumps = [RampBump(None, None)]
    else:
        width = 0.98 * min(2.0 * leaf_r - step, step)
        starts = 0.5 * (centers[:-1] + centers[1:]) - 0.5 * width
        ramps = [(float(a), float(width)) for a in starts]
        bumps = [RampBump(None, ramps[0])]
        bumps += [RampBump(ramps[j - 1], ramps[j]) for j in range(1, ell - 1)]
        bumps.append(RampBump(ramps[-1], None))

    cover = LeafCover(
        source=graph, n=int(n), gamma=float(gamma), leaves=leaves,
        bumps=bumps, u_offsets=offsets, centers_u=centers,
        leaf_window=(float(u_lo), float(u_hi)),
        full_window=(float(win_lo), float(win_hi)),
        expansion_min=curve.expansion_min, curve=curve,
    )
    samples = cover.source_leaf_params(401)
    _, st, _ = curve.eval(samples)
    inside = np.abs(st[:, 0][None, :] - centers[:, None]) <= leaf_r
    cover.overlap_count = int(np.max(inside.sum(axis=0)))
    if cover.overlap_count > c_overlap:
        raise InvalidParams(
            f"cover overlap {cover.overlap_count} exceeds the configured "
            f"bound {c_overlap}")
    return cover


def graph_transform(tmap, graph, report=None, **kwargs):
    """One-step inverse-image transform: admissible graphs covering the
    inverse image of the leaf of ``graph``."""
    return leaf_cover(tmap, graph, 1, gamma=graph.gamma, report=report,
                      **kwargs).leaves


def leaf_integrate(graph, integrand, quad_n=64, arclength=True, coords="torus"):
    """Gauss-Legendre integral of ``integrand`` along the graph.

    ``integrand`` receives curve points of shape (m, 2), either as torus
    points or, with ``coords="chart"``, as straightened chart points
    (u, chi(u)).  With ``arclength`` the induced length element
    sqrt(1 + chi'^2) is included; without it the integral is taken in the
    graph coordinate.
    """
    if quad_n < 1:
        raise InvalidParams("quadrature order must be positive")
    if coords not in ("torus", "chart"):
        raise InvalidParams(f"unknown coordinate convention {coords!r}")
    x, w = gauss_legendre(int(quad_n), *graph.interval())
    pts = graph.torus_points(x) if coords == "torus" else graph.chart_points(x)
    vals = np.asarray(integrand(pts))
    if arclength:
        vals = vals * np.sqrt(1.0 + graph.chi(x, 1) ** 2)
    out = w @ vals
    return complex(out) if np.iscomplexobj(out) else float(out)


class _BumpKernel:
    """Standard bump exp(-1/(1-u^2)) on (-1, 1) with exact derivatives via a
    polynomial-fraction recurrence."""

    def __init__(self):
        self._nums = [Polynomial([1.0])]

    def _num(self, k):
        d = Polynomial([1.0, 0.0, -1.0])
        u = Polynomial([0.0, 1.0])
        while len(self._nums) <= k:
            j = len(self._nums) - 1
            p = self._nums[-1]
            self._nums.append(p.deriv() * d * d + (4.0 * j * u * d - 2.0 * u) * p)
        return self._nums[k]

    def __call__(self, u, k=0):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        d = 1.0 - ui * ui
        out[inside] = np.exp(-1.0 / d) * self._num(k)(ui) / d ** (2 * k)
        return out


_KERNEL = _BumpKernel()


class Mollified:
    """Convolution of a function on an interval with the scaled bump kernel.

    Derivatives are taken on the kernel, so the input may be rough.  The
    kernel mass is normalized with the same quadrature rule that evaluates
    the convolution, making constants reproduce exactly.
    """

    def __init__(self, fn, eps, quad_n=192):
        if eps <= 0.0:
            raise InvalidParams("mollifier width must be positive")
        self.fn = fn
        self.eps = float(eps)
        x, w = gauss_legendre(int(quad_n), -1.0, 1.0)
        self._x = x
        self._w = w
        self._mass = float(w @ _KERNEL(x))

    def __call__(self, u, k=0):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        args = u[:, None] - self.eps * self._x[None, :]
        vals = np.asarray(self.fn(args.ravel()), dtype=float).reshape(args.shape)
        kern = _KERNEL(self._x, k) * self._w / self._mass
        return vals @ kern / self.eps ** k


def mollify(fn, eps, quad_n=192):
    """Smooth the interval function ``fn`` at width ``eps``."""
    return Mollified(fn, eps, quad_n)


def default_mollifier_width(report, n, q, t, delta=0.05, big_a=3.0):
    """Geometric default width nu^((q+t) n), clamped into the working
    margin of a leaf."""
    raw = report.nu ** ((q + t) * n)
    return float(min(raw, 0.9 * min(delta, (big_a - 1.0) * delta)))


@dataclass(eq=False)
class VectorFieldDecomposition:
    """Splitting v = w_u + w_s along a pushed-forward leaf.

    ``w_s`` is tangent to the image curve, ``w_u`` lies in the forward image
    of the vertical plane field, mollified at width ``eps``.  Components are
    Chebyshev tables in the leaf parameter.
    """

    leaf: AdmissibleGraph = field(repr=False)
    n: int = 1
    eps: float = 0.0
    w_u: tuple = field(default=None, repr=False)
    w_s: tuple = field(default=None, repr=False)
    diag: dict = field(default_factory=dict)

    def w_u_at(self, u):
        return np.column_stack([self.w_u[0](u), self.w_u[1](u)])

    def w_s_at(self, u):
        return np.column_stack([self.w_s[0](u), self.w_s[1](u)])


def _forward_frame(tmap, graph, n, u):
    """Image points, forward differential along the orbit, and the chart-
    straightened differential at graph parameters ``u``."""
    rot = graph.atlas.rotation
    pts = graph.torus_points(u)
    dn = np.broadcast_to(np.eye(2), (len(pts), 2, 2)).copy()
    cur = pts
    for _ in range(n):
        dn = np.einsum("nij,njk->nik", tmap.differential(cur), dn)
        cur = tmap(cur)
    straightened = np.einsum("ji,njk,kl->nil", rot, dn, rot)
    return cur, dn, straightened


def decompose_vector_field(tmap, n, graph, v, eps, r=3, pq=1.5, degree=48,
                           quad_n=192):
    """Split the vector field ``v`` along the image curve T^n(leaf).

    ``v`` maps torus points (m, 2) to vectors (m, 2).  The tangential part
    w_s rides on the image curve; the transverse part w_u follows the
    forward image of the vertical plane field, whose slope is mollified at
    width ``eps`` before the frame is assembled.
    """
    if n < 1:
        raise InvalidParams("iterate count must be at least 1")
    graph.require_admissible()
    margin = graph.radius - min(graph.leaf_radius, graph.radius)
    if margin > 0.0 and eps > margin:
        raise InvalidParams(
            f"mollifier width {eps:g} exceeds the working margin {margin:g}")
    rot = graph.atlas.rotation

    def raw_slope(u):
        _, _, m = _forward_frame(tmap, graph, n, u)
        den = m[:, 1, 1]
        if not np.all(np.isfinite(m)):
            raise SingularFrame("forward differential overflowed")
        if np.min(np.abs(den)) < 1e-280:
            raise SingularFrame("vertical image component underflowed",
                                n=n)
        return m[:, 0, 1] / den

    lo, hi = graph.interval()
    slope_fit = ChebFun.fit(raw_slope, lo, hi, 64)
    smooth_slope = Mollified(slope_fit, eps, quad_n) if eps > 0.0 else None

    la, lb = graph.leaf_interval()
    nodes = cheb_nodes(la, lb, degree)
    y, dn, _ = _forward_frame(tmap, graph, n, nodes)
    tang = np.einsum("nij,nj->ni", dn,
                     np.column_stack([np.ones_like(nodes), graph.chi(nodes, 1)]) @ rot.T)
    tnorm = np.linalg.norm(tang, axis=1)
    if np.min(tnorm) < 1e-280:
        raise SingularFrame("image tangent underflowed", n=n)
    that = tang / tnorm[:, None]
    slope = smooth_slope(nodes) if smooth_slope is not None else raw_slope(nodes)
    ehat = np.column_stack([slope, np.ones_like(slope)]) @ rot.T
    ehat = ehat / np.linalg.norm(ehat, axis=1)[:, None]

    cross = that[:, 0] * ehat[:, 1] - that[:, 1] * ehat[:, 0]
    if np.min(np.abs(cross)) < 1e-8:
        raise SingularFrame("leaf tangent and plane field nearly parallel",
                            min_angle=float(np.min(np.abs(cross))))
    vv = np.asarray(v(y), dtype=float)
    a = (vv[:, 0] * ehat[:, 1] - vv[:, 1] * ehat[:, 0]) / cross
    b = (that[:, 0] * vv[:, 1] - that[:, 1] * vv[:, 0]) / cross
    ws = a[:, None] * that
    wu = b[:, None] * ehat

    w_s = tuple(cheb_from_values(ws[:, i], la, lb) for i in range(2))
    w_u = tuple(cheb_from_values(wu[:, i], la, lb) for i in range(2))

    pullback = np.linalg.solve(dn, wu[:, :, None])[:, :, 0]
    pull = tuple(cheb_from_values(pullback[:, i], la, lb) for i in range(2))
    diag = {
        "ws_c_norm": max(f.c_norm(r) for f in w_s),
        "wu_c_norm": max(f.c_norm(r) for f in w_u),
        "pullback_c_norm": max(f.c_norm(pq) for f in pull),
        "pullback_sup": float(np.max(np.linalg.norm(pullback, axis=1))),
        "frame_angle_min": float(np.min(np.abs(cross))),
        "eps": float(eps),
    }
    return VectorFieldDecomposition(leaf=graph, n=int(n), eps=float(eps),
                                    w_u=w_u, w_s=w_s, diag=diag)
