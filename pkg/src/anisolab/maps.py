"""Maps of the 2-torus of the form x -> A x + t g(x) mod 1.

A is an integer matrix with |det A| = 1 and real eigenvalues off the unit
circle; g is a pair of trigonometric polynomials scaled by the strength t.
The module provides exact differentials of every order, Newton inversion,
verified hyperbolicity constants (expansion, contraction, stable-cone
aperture), affine chart atlases aligned with the stable eigendirection,
and a C^k distance between maps of the same homotopy class.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import TWOPI, wrap01, wrap_half
from .errors import InvalidParams, NoConvergence, NotAnosov


class TrigPoly:
    """Real trigonometric polynomial sum_k c_k cos(2 pi k.x) + s_k sin(2 pi k.x)."""

    def __init__(self, terms):
        # terms: iterable of (mode, coef_cos, coef_sin); mode an integer pair
        modes, ccos, csin = [], [], []
        for mode, c, s in terms:
            k = (int(mode[0]), int(mode[1]))
            modes.append(k)
            ccos.append(float(c))
            csin.append(float(s))
        self.modes = np.array(modes, dtype=int).reshape(-1, 2)
        self.coef_cos = np.array(ccos, dtype=float)
        self.coef_sin = np.array(csin, dtype=float)

    @classmethod
    def zero(cls):
        return cls([])

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.modes.size == 0:
            return np.zeros(pts.shape[0])
        ph = TWOPI * pts @ self.modes.T
        return np.cos(ph) @ self.coef_cos + np.sin(ph) @ self.coef_sin

    def deriv(self, axis):
        """Exact partial derivative along ``axis`` as a new TrigPoly."""
        terms = []
        for (k, c, s) in zip(self.modes, self.coef_cos, self.coef_sin):
            f = TWOPI * k[axis]
            # d/dx (c cos + s sin) = f (-c sin + s cos)
            terms.append((tuple(k), f * s, -f * c))
        return TrigPoly(terms)

    def partial(self, alpha):
        out = self
        for axis, reps in enumerate(alpha):
            for _ in range(int(reps)):
                out = out.deriv(axis)
        return out

    def scaled(self, factor):
        return TrigPoly(
            (tuple(k), factor * c, factor * s)
            for k, c, s in zip(self.modes, self.coef_cos, self.coef_sin)
        )

    def plus(self, other):
        return TrigPoly(
            [(tuple(k), c, s) for k, c, s in zip(self.modes, self.coef_cos, self.coef_sin)]
            + [(tuple(k), c, s) for k, c, s in zip(other.modes, other.coef_cos, other.coef_sin)]
        )

    def sup_grid(self, grid_n=128):
        xs = np.arange(grid_n) / grid_n
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        return float(np.max(np.abs(self(pts))))

    def terms_json(self):
        return [
            {"mode": [int(k[0]), int(k[1])], "coef_cos": float(c), "coef_sin": float(s)}
            for k, c, s in zip(self.modes, self.coef_cos, self.coef_sin)
        ]


@dataclass
class HyperbolicityReport:
    """Certified-by-sampling hyperbolicity constants of a torus map."""

    lam: float          # minimal one-step expansion along unstable directions, > 1
    nu: float           # maximal one-step contraction along stable directions, < 1
    kappa: float        # stable-cone half-aperture with strict invariance
    grid_n: int
    iters: int
    margin: float
    valid: bool = True
    lam_mean: float = 0.0   # worst orbit-averaged expansion rate
    nu_mean: float = 0.0    # worst orbit-averaged contraction rate

    def base_expansion_bound(self, n=1):
        """Lower bound for the stable-axis expansion of the n-step
        inverse-image graph map in aligned charts."""
        k = self.kappa
        return self.nu ** (-n) / ((1.0 + k) ** 2 * math.sqrt(1.0 + 4.0 * k * k))

    def covering_gamma_max(self, bigA):
        """Largest graph-domain dilation factor the covering construction
        licenses a priori for domain-radius multiplier ``bigA``.

        The one-step bound can fall below 1 for strongly perturbed maps
        because ``nu`` is a worst-case single-step factor; the canonical
        dilation 1 stays available regardless, since the cover construction
        re-checks its working room exactly on every run.
        """
        return max(1.0, self.base_expansion_bound(1) * (bigA - 1.0) / float(bigA))


def _cone_strictly_invariant(Minv, k, margin):
    """True when each matrix of the stack maps the symmetric horizontal cone
    of half-aperture ``k`` strictly inside itself.

    Checks the two boundary rays (1, +-k); because the slope of the image ray
    is a Moebius function of the boundary parameter, requiring the two image
    rays to avoid the vertical (first components of equal sign) makes the
    endpoint slopes extremal.
    """
    imgp = np.einsum("nij,j->ni", Minv, np.array([1.0, k]))
    imgm = np.einsum("nij,j->ni", Minv, np.array([1.0, -k]))
    if np.any(imgp[:, 0] * imgm[:, 0] <= 0.0):
        return False
    for img in (imgp, imgm):
        if np.any(np.abs(img[:, 1]) >= (k - margin) * np.abs(img[:, 0])):
            return False
    return True


def _batch_inv2(m):
    """Inverse of a (..., 2, 2) stack, closed form."""
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    c = m[..., 1, 0]
    d = m[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(m)
    out[..., 0, 0] = d / det
    out[..., 0, 1] = -b / det
    out[..., 1, 0] = -c / det
    out[..., 1, 1] = a / det
    return out


class TorusMap:
    """x -> A x + strength * g(x) on the 2-torus."""

    def __init__(self, linear, perturbation=None, strength=0.0):
        A = np.asarray(linear)
        if A.shape != (2, 2):
            raise InvalidParams(f"linear part must be 2x2, got shape {A.shape}")
        if not np.allclose(A, np.round(A)):
            raise InvalidParams("linear part must have integer entries")
        self.linear = np.round(A).astype(int)
        if abs(abs(round(np.linalg.det(self.linear).item())) - 1) != 0:
            raise InvalidParams(
                f"linear part must have |det| = 1, got det = {np.linalg.det(self.linear):g}"
            )
        if perturbation is None:
            perturbation = (TrigPoly.zero(), TrigPoly.zero())
        self.pert = tuple(perturbation)
        self.strength = float(strength)
        self._linear_inv = np.linalg.inv(self.linear.astype(float))
        self._partial_cache = {}

    # ---- basic evaluation ------------------------------------------------

    @property
    def is_linear(self):
        if self.strength == 0.0:
            return True
        return all(p.modes.size == 0 for p in self.pert)

    def lift(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts @ self.linear.T.astype(float)
        if not self.is_linear:
            out = out + self.strength * np.column_stack([self.pert[0](pts), self.pert[1](pts)])
        return out

    def __call__(self, pts):
        return wrap01(self.lift(pts))

    def g_partial(self, comp, alpha):
        key = (comp, tuple(int(a) for a in alpha))
        if key not in self._partial_cache:
            self._partial_cache[key] = self.pert[comp].partial(alpha)
        return self._partial_cache[key]

    def differential(self, pts):
        """DT at each point, shape (n, 2, 2), exact."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        out = np.broadcast_to(self.linear.astype(float), (n, 2, 2)).copy()
        if not self.is_linear:
            for i in range(2):
                for j in range(2):
                    alpha = (1, 0) if j == 0 else (0, 1)
                    out[:, i, j] += self.strength * self.g_partial(i, alpha)(pts)
        return out

    def dt_partial(self, i, j, alpha, pts):
        """partial^alpha of the (i, j) entry of DT, exact."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.is_linear:
            return np.zeros(pts.shape[0])
        base = [1, 0] if j == 0 else [0, 1]
        full = (base[0] + alpha[0], base[1] + alpha[1])
        return self.strength * self.g_partial(i, full)(pts)

    def invert(self, pts, tol=1e-12, max_iter=50):
        """Newton preimage: the unique y with T(y) = x mod 1 near A^{-1}x."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        y = wrap01(pts @ self._linear_inv.T)
        if self.is_linear:
            return y
        for _ in range(max_iter):
            res = wrap_half(self.lift(y) - pts)
            if np.max(np.abs(res)) < tol:
                return wrap01(y)
            step = np.einsum("nij,nj->ni", _batch_inv2(self.differential(y)), res)
            y = y - step
        raise NoConvergence(
            "Newton inversion stalled", residual=float(np.max(np.abs(wrap_half(self.lift(y) - pts))))
        )

    # ---- determinant jets -------------------------------------------------

    def det_jet(self, pts, order=0):
        """|det DT| with gradient and Hessian of log|det DT| as requested.

        Returns (det, grad_logdet, hess_logdet); higher entries are None
        when ``order`` is below their rank.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        D = self.differential(pts)
        det = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
        if np.any(np.abs(det) < 1e-14):
            raise NotAnosov("differential became singular on the sample")
        grad = None
        hess = None
        if order >= 1:
            dd = np.zeros((pts.shape[0], 2))
            for k in range(2):
                a = (1, 0) if k == 0 else (0, 1)
                dd[:, k] = (
                    self.dt_partial(0, 0, a, pts) * D[:, 1, 1]
                    + D[:, 0, 0] * self.dt_partial(1, 1, a, pts)
                    - self.dt_partial(0, 1, a, pts) * D[:, 1, 0]
                    - D[:, 0, 1] * self.dt_partial(1, 0, a, pts)
                )
            grad = dd / det[:, None]
        if order >= 2:
            h = np.zeros((pts.shape[0], 2, 2))
            axes = [(1, 0), (0, 1)]
            for k in range(2):
                for l in range(2):
                    ak, al = axes[k], axes[l]
                    akl = (ak[0] + al[0], ak[1] + al[1])
                    h[:, k, l] = (
                        self.dt_partial(0, 0, akl, pts) * D[:, 1, 1]
                        + self.dt_partial(0, 0, ak, pts) * self.dt_partial(1, 1, al, pts)
                        + self.dt_partial(0, 0, al, pts) * self.dt_partial(1, 1, ak, pts)
                        + D[:, 0, 0] * self.dt_partial(1, 1, akl, pts)
                        - self.dt_partial(0, 1, akl, pts) * D[:, 1, 0]
                        - self.dt_partial(0, 1, ak, pts) * self.dt_partial(1, 0, al, pts)
                        - self.dt_partial(0, 1, al, pts) * self.dt_partial(1, 0, ak, pts)
                        - D[:, 0, 1] * self.dt_partial(1, 0, akl, pts)
                    )
            # hess log|det| = hess det / det - outer(grad det) / det^2
            gd = grad * det[:, None] if grad is not None else None
            hess = h / det[:, None, None] - np.einsum("ni,nj->nij", gd, gd) / det[:, None, None] ** 2
        return np.abs(det), grad, hess

    # ---- hyperbolic structure ----------------------------------------------

    def linear_eigen(self):
        """(lam, nu, e_u, e_s) of the linear part; raises NotAnosov if the
        linear part is not hyperbolic."""
        w, V = np.linalg.eig(self.linear.astype(float))
        if np.any(np.abs(w.imag) > 1e-12):
            raise NotAnosov("linear part has complex eigenvalues")
        w = w.real
        V = V.real
        order = np.argsort(np.abs(w))
        nu, lam = w[order[0]], w[order[1]]
        if abs(abs(lam) - 1.0) < 1e-9 or abs(abs(nu) - 1.0) < 1e-9:
            raise NotAnosov(f"linear part has an eigenvalue on the unit circle: {w}")
        e_s = V[:, order[0]] / np.linalg.norm(V[:, order[0]])
        e_u = V[:, order[1]] / np.linalg.norm(V[:, order[1]])
        return abs(lam), abs(nu), e_u, e_s

    def stable_rotation(self):
        """Rotation whose first column is the stable eigendirection of the
        linear part. Shared by every chart of an atlas."""
        _, _, _, e_s = self.linear_eigen()
        if e_s[0] < 0:
            e_s = -e_s
        return np.array([[e_s[0], -e_s[1]], [e_s[1], e_s[0]]])

    def _direction_fields(self, pts, iters):
        """Approximate unit stable/unstable directions at ``pts`` by cone
        power iteration along orbits, together with the per-orbit geometric
        mean of the one-step rates along those directions."""
        lam0, nu0, e_u0, e_s0 = self.linear_eigen()
        n = pts.shape[0]
        # stable: push a generic vector through DT^{-iters} at the forward orbit
        orbit = [pts]
        for _ in range(iters):
            orbit.append(self(orbit[-1]))
        # Mean rates are harvested inside the same pullback loops, skipping
        # the first ``burn`` applications where the iterated direction has
        # not converged yet.
        burn = min(10, iters // 2)
        ws = np.broadcast_to(e_s0, (n, 2)).copy()
        logs_s = np.zeros(n)
        for m in range(iters - 1, -1, -1):
            Dinv = _batch_inv2(self.differential(orbit[m]))
            ws = np.einsum("nij,nj->ni", Dinv, ws)
            f = np.linalg.norm(ws, axis=1)
            if m < iters - burn:
                logs_s -= np.log(f)
            ws /= f[:, None]
        # unstable: push through DT^{iters} along the backward orbit
        back = [pts]
        for _ in range(iters):
            back.append(self.invert(back[-1]))
        wu = np.broadcast_to(e_u0, (n, 2)).copy()
        logs_u = np.zeros(n)
        for m in range(iters, 0, -1):
            D = self.differential(back[m])
            wu = np.einsum("nij,nj->ni", D, wu)
            f = np.linalg.norm(wu, axis=1)
            if m <= iters - burn:
                logs_u += np.log(f)
            wu /= f[:, None]
        steps = iters - burn
        lam_mean = float(np.min(np.exp(logs_u / steps)))
        nu_mean = float(np.max(np.exp(logs_s / steps)))
        return wu, ws, lam_mean, nu_mean

    def hyperbolicity_constants(
        self, grid_n=40, iters=40, kappa_max=0.2, n_apertures=40, margin=1e-6
    ):
        """Expansion/contraction rates and the stable-cone aperture.

        lam is the minimum expansion of DT on the sampled invariant
        unstable field, nu the maximum contraction on the stable field,
        kappa the largest tested aperture whose cone field is strictly
        DT^{-1}-invariant everywhere on the grid.
        """
        self.linear_eigen()  # raises NotAnosov early for bad linear parts
        xs = (np.arange(grid_n) + 0.5) / grid_n
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        wu, ws, lam_mean, nu_mean = self._direction_fields(pts, iters)
        D = self.differential(pts)
        lam = float(np.min(np.linalg.norm(np.einsum("nij,nj->ni", D, wu), axis=1)))
        nu = float(np.max(np.linalg.norm(np.einsum("nij,nj->ni", D, ws), axis=1)))
        if lam <= 1.0 + 1e-9 or nu >= 1.0 - 1e-9:
            raise NotAnosov(f"no uniform hyperbolicity on the grid: lam={lam:g} nu={nu:g}")

        R = self.stable_rotation()
        Minv = _batch_inv2(np.einsum("ij,njk,kl->nil", R.T, D, R))
        kappa = None
        for j in range(n_apertures, 0, -1):
            k = kappa_max * j / n_apertures
            if _cone_strictly_invariant(Minv, k, margin):
                kappa = k
                break
        if kappa is None:
            raise NotAnosov("no strictly invariant stable cone among tested apertures")
        return HyperbolicityReport(lam=lam, nu=nu, kappa=kappa, grid_n=grid_n,
                                   iters=iters, margin=margin,
                                   lam_mean=lam_mean, nu_mean=nu_mean)

    # ---- serialization ----------------------------------------------------

    def to_json_dict(self):
        return {
            "linear": [[int(v) for v in row] for row in self.linear],
            "perturbation": {
                "components": [p.terms_json() for p in self.pert],
                "strength": self.strength,
            },
        }

    @classmethod
    def from_json_dict(cls, d):
        try:
            linear = d["linear"]
            pert = d.get("perturbation")
        except (KeyError, TypeError) as exc:
            raise InvalidParams(f"malformed map description: {exc}")
        if pert is None:
            return cls(linear)
        comps = []
        for comp in pert.get("components", [[], []]):
            comps.append(
                TrigPoly([(t["mode"], t.get("coef_cos", 0.0), t.get("coef_sin", 0.0)) for t in comp])
            )
        while len(comps) < 2:
            comps.append(TrigPoly.zero())
        return cls(linear, tuple(comps), pert.get("strength", 0.0))

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))


def map_distance(t1, t2, order=4, grid_n=96):
    """C^order distance between lifted maps: sup over a grid of all
    partial derivatives up to ``order`` of the difference of lifts."""
    xs = np.arange(grid_n) / grid_n
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    dA = (t1.linear - t2.linear).astype(float)
    best = 0.0
    # order 0: difference of lifts evaluated on the unit cell
    d0 = pts @ dA.T
    for c in range(2):
        vals = d0[:, c] + t1.strength * t1.pert[c](pts) - t2.strength * t2.pert[c](pts)
        best = max(best, float(np.max(np.abs(vals))))
    for total in range(1, order + 1):
        for a1 in range(total + 1):
            alpha = (a1, total - a1)
            for c in range(2):
                vals = t1.strength * t1.g_partial(c, alpha)(pts) - t2.strength * t2.g_partial(c, alpha)(pts)
                if total == 1:
                    j = 0 if alpha == (1, 0) else 1
                    vals = vals + dA[c, j]
                best = max(best, float(np.max(np.abs(vals))))
    return best


@dataclass
class ChartAtlas:
    """Affine isometric charts psi_i(z) = x_i + R z sharing one rotation.

    The rotation takes the horizontal axis to the stable eigendirection of
    the linear part, so admissible curves are graphs over the first chart
    coordinate in every chart simultaneously.
    """

    rotation: np.ndarray
    centers: np.ndarray
    radius: float
    apertures: np.ndarray
    kappa: float
    grid_side: int = field(default=3)

    @classmethod
    def build(cls, tmap, report, grid_side=3, radius=0.96, aperture_factor=1.5):
        if not (1.0 < aperture_factor < 2.0):
            raise InvalidParams("aperture factor must lie strictly between 1 and 2")
        R = tmap.stable_rotation()
        xs = (np.arange(grid_side) + 0.5) / grid_side
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        centers = np.column_stack([X.ravel(), Y.ravel()])
        apertures = np.full(len(centers), aperture_factor * report.kappa)
        return cls(
            rotation=R,
            centers=centers,
            radius=float(radius),
            apertures=apertures,
            kappa=report.kappa,
            grid_side=grid_side,
        )

    @property
    def n_charts(self):
        return len(self.centers)

    def to_chart(self, i, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return wrap_half(pts - self.centers[i]) @ self.rotation

    def from_chart(self, i, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return wrap01(self.centers[i] + z @ self.rotation.T)

    def nearest_chart(self, pt):
        d = wrap_half(np.asarray(pt, dtype=float) - self.centers)
        return int(np.argmin(np.linalg.norm(d, axis=1)))

    def verify(self, tmap, delta, bigA, samples=25, rng=None):
        """Check the atlas invariants; returns a diagnostics dict."""
        R = self.rotation
        ortho = float(np.max(np.abs(R.T @ R - np.eye(2))))
        if ortho > 1e-12 or abs(np.linalg.det(R) - 1.0) > 1e-12:
            raise InvalidParams("chart rotation is not a proper isometry")
        if bigA * delta >= self.radius / 6.0:
            raise InvalidParams(
                f"domain scale too large for the charts: A*delta = {bigA * delta:g} "
                f">= radius/6 = {self.radius / 6.0:g}"
            )
        # half-radius covering
        g = 48
        xs = (np.arange(g) + 0.5) / g
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        covered = np.zeros(len(pts), dtype=bool)
        for i in range(self.n_charts):
            z = self.to_chart(i, pts)
            covered |= np.max(np.abs(z), axis=1) < self.radius / 2.0
        if not covered.all():
            raise InvalidParams("open half-radius charts fail to cover the torus")
        # cone alignment: DT^{-1} maps the widened chart cone into the kappa cone
        if rng is None:
            rng = np.random.default_rng(7)
        spts = rng.random((samples, 2))
        D = tmap.differential(spts)
        Minv = _batch_inv2(np.einsum("ij,njk,kl->nil", R.T, D, R))
        worst = 0.0
        for c in np.unique(self.apertures):
            for sgn in (1.0, -1.0):
                img = np.einsum("nij,j->ni", Minv, np.array([1.0, sgn * c]))
                if np.any(img[:, 0] == 0.0):
                    worst = math.inf
                    break
                slopes = np.abs(img[:, 1] / img[:, 0])
                worst = max(worst, float(np.max(slopes)))
        if worst >= self.kappa:
            raise InvalidParams(
                f"chart cones not contracted into the kappa cone: slope {worst:g} >= {self.kappa:g}"
            )
        return {"rotation_defect": ortho, "max_cone_slope": worst, "covering_grid": g}
