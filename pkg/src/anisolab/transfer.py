"""Transfer operator machinery: pointwise application with exact jets,
Fourier-Galerkin matrices, spectra, the invariant density at eigenvalue 1,
and correlation sequences with resonance-expansion fits.

The operator is L h = (h / |det DT|) o T^{-1}; on Fourier modes of a linear
automorphism it acts as the permutation e_k -> e_{A^{-T} k}, which is the
exactness anchor for the discretization: for unperturbed maps the assembled
matrix must literally be that permutation (entries 0/1) on the retained box.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._util import TWOPI, SMOOTHSTEP8, rng_stream, wrap_half
from .errors import InvalidParams, NotSimple, SolveFailure


class TrigObservable:
    """Finite Fourier series over the mode box |k|_inf <= N.

    Coefficients live in a dense complex array ``coeffs`` with ``coeffs[a, b]``
    the coefficient of exp(2 pi i (k1 x + k2 y)) for k1 = a - N, k2 = b - N.
    """

    def __init__(self, coeffs, real=None):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim != 2 or coeffs.shape[0] != coeffs.shape[1] or coeffs.shape[0] % 2 != 1:
            raise InvalidParams(f"coefficient table must be odd square, got {coeffs.shape}")
        self.coeffs = coeffs
        if real is None:
            real = self.conj_symmetry_defect() < 1e-12
        self.real = bool(real)

    # ---- constructors ----

    @classmethod
    def zero(cls, n_obs):
        return cls(np.zeros((2 * n_obs + 1, 2 * n_obs + 1)), real=True)

    @classmethod
    def mode(cls, k, n_obs=None):
        """The character e_k(x) = exp(2 pi i k.x)."""
        k1, k2 = int(k[0]), int(k[1])
        if n_obs is None:
            n_obs = max(abs(k1), abs(k2), 1)
        out = cls.zero(n_obs)
        out.coeffs[k1 + n_obs, k2 + n_obs] = 1.0
        out.real = k1 == 0 and k2 == 0
        return out

    @classmethod
    def from_real_terms(cls, terms, n_obs=None):
        """Real series from (mode, coef_cos, coef_sin) triples."""
        terms = [((int(k[0]), int(k[1])), float(a), float(b)) for k, a, b in terms]
        if n_obs is None:
            n_obs = max((max(abs(k[0]), abs(k[1])) for k, _, _ in terms), default=1)
            n_obs = max(n_obs, 1)
        out = cls.zero(n_obs)
        for (k1, k2), a, b in terms:
            out.coeffs[k1 + n_obs, k2 + n_obs] += (a - 1j * b) / 2.0
            out.coeffs[-k1 + n_obs, -k2 + n_obs] += (a + 1j * b) / 2.0
        out.real = True
        return out

    @classmethod
    def from_vector(cls, vec, n_obs, real=None):
        d = 2 * n_obs + 1
        return cls(np.asarray(vec, dtype=complex).reshape(d, d), real=real)

    # ---- structure ----

    @property
    def n_obs(self):
        return self.coeffs.shape[0] // 2

    def as_vector(self):
        return self.coeffs.ravel().copy()

    def conj_symmetry_defect(self):
        return float(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1, ::-1]))))

    def pad(self, n_big):
        if n_big < self.n_obs:
            raise InvalidParams("cannot pad to a smaller box")
        d = 2 * n_big + 1
        out = np.zeros((d, d), dtype=complex)
        s = n_big - self.n_obs
        w = self.coeffs.shape[0]
        out[s : s + w, s : s + w] = self.coeffs
        return TrigObservable(out, real=self.real)

    def mode_table(self):
        n = self.n_obs
        ks = np.arange(-n, n + 1)
        K1, K2 = np.meshgrid(ks, ks, indexing="ij")
        return np.column_stack([K1.ravel(), K2.ravel()])

    # ---- calculus ----

    def __call__(self, pts):
        return self.jet(pts, order=0)[0]

    def jet(self, pts, order=2):
        """Values, gradients, Hessians at ``pts``; exact derivatives."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        K = self.mode_table()
        c = self.coeffs.ravel()
        live = c != 0
        K = K[live]
        c = c[live]
        if len(c) == 0:
            z = np.zeros(pts.shape[0])
            return (
                z,
                np.zeros((pts.shape[0], 2)) if order >= 1 else None,
                np.zeros((pts.shape[0], 2, 2)) if order >= 2 else None,
            )
        E = np.exp(2j * np.pi * (pts @ K.T))
        val = E @ c
        grad = None
        hess = None
        if order >= 1:
            grad = np.stack([E @ (c * 2j * np.pi * K[:, a]) for a in range(2)], axis=1)
        if order >= 2:
            hess = np.empty((pts.shape[0], 2, 2), dtype=complex)
            for a in range(2):
                for b in range(a, 2):
                    hess[:, a, b] = E @ (c * (2j * np.pi) ** 2 * K[:, a] * K[:, b])
                    hess[:, b, a] = hess[:, a, b]
        if self.real:
            val = val.real
            grad = grad.real if grad is not None else None
            hess = hess.real if hess is not None else None
        return val, grad, hess

    def deriv(self, axis):
        K = self.mode_table()[:, axis].reshape(self.coeffs.shape)
        return TrigObservable(self.coeffs * (2j * np.pi) * K, real=self.real)

    def integral(self):
        n = self.n_obs
        c0 = self.coeffs[n, n]
        return c0.real if self.real else c0

    def pairing(self, other):
        """The plain product integral: pairing(f, g) = int f g over the torus."""
        n = max(self.n_obs, other.n_obs)
        a = self.pad(n).coeffs
        b = other.pad(n).coeffs
        out = np.sum(a * b[::-1, ::-1])
        return out.real if self.real and other.real else out

    # ---- arithmetic ----

    def scaled(self, factor):
        real = self.real and (np.imag(factor) == 0)
        return TrigObservable(self.coeffs * factor, real=real)

    def plus(self, other):
        n = max(self.n_obs, other.n_obs)
        return TrigObservable(
            self.pad(n).coeffs + other.pad(n).coeffs, real=self.real and other.real
        )

    def sub_mean(self):
        out = TrigObservable(self.coeffs.copy(), real=self.real)
        n = out.n_obs
        out.coeffs[n, n] = 0.0
        return out


# ---- pointwise transfer with jets ------------------------------------------


def apply_transfer(tmap, h):
    """Pointwise evaluator of L h = (h / |det DT|) o T^{-1}."""

    def evaluate(pts):
        y = tmap.invert(pts)
        det, _, _ = tmap.det_jet(y)
        return h(y) / det

    return evaluate


class TransferIterate:
    """(L^n h)(x) = h(T^{-n}x) * prod_{m=1}^{n} |det DT(T^{-m}x)|^{-1},
    with first and second derivatives propagated exactly through the
    Newton inverse orbit."""

    def __init__(self, tmap, h, n):
        if n < 0:
            raise InvalidParams("iterate count must be nonnegative")
        self.tmap = tmap
        self.h = h
        self.n = int(n)

    def __call__(self, pts):
        return self.jet(pts, order=0)[0]

    def _h_jet(self, pts, order):
        if hasattr(self.h, "jet"):
            return self.h.jet(pts, order=order)
        if order > 0:
            raise InvalidParams("observable without a jet method used with derivatives")
        return self.h(pts), None, None

    def jet(self, pts, order=2):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        npts = pts.shape[0]
        tm = self.tmap
        y = pts
        Dy = np.broadcast_to(np.eye(2), (npts, 2, 2)).copy()
        D2y = np.zeros((npts, 2, 2, 2)) if order >= 2 else None
        S = np.zeros(npts)
        gS = np.zeros((npts, 2)) if order >= 1 else None
        hS = np.zeros((npts, 2, 2)) if order >= 2 else None
        for _ in range(self.n):
            y = tm.invert(y)
            D = tm.differential(y)
            Jinv = np.linalg.inv(D)
            P = np.einsum("nij,njk->nik", Jinv, Dy)
            if order >= 2:
                # second derivatives of the map contracted twice with P
                W = np.zeros((npts, 2, 2, 2))
                if not tm.is_linear:
                    for i in range(2):
                        for j in range(2):
                            for k in range(2):
                                a = (1, 0) if k == 0 else (0, 1)
                                W[:, i, j, k] = tm.dt_partial(i, j, a, y)
                W2 = np.einsum("nijk,nja,nkb->niab", W, P, P)
                D2y = np.einsum("nci,niab->ncab", Jinv, D2y - W2)
            Dy = P
            det, gld, hld = tm.det_jet(y, order=order)
            S += np.log(det)
            if order >= 1:
                gS += np.einsum("nca,nc->na", Dy, gld)
            if order >= 2:
                hS += np.einsum("nca,ncd,ndb->nab", Dy, hld, Dy)
                hS += np.einsum("nc,ncab->nab", gld, D2y)
        hv, hg, hh = self._h_jet(y, order)
        weight = np.exp(-S)
        val = hv * weight
        grad = None
        hess = None
        if order >= 1:
            gu = np.einsum("nca,nc->na", Dy, hg)
            grad = weight[:, None] * (gu - hv[:, None] * gS)
        if order >= 2:
            hu = np.einsum("nca,ncd,ndb->nab", Dy, hh, Dy)
            hu += np.einsum("nc,ncab->nab", hg, D2y)
            cross = np.einsum("na,nb->nab", gu, gS)
            hess = weight[:, None, None] * (
                hu
                - cross
                - np.swapaxes(cross, 1, 2)
                + hv[:, None, None] * (np.einsum("na,nb->nab", gS, gS) - hS)
            )
        return val, grad, hess


# ---- Galerkin discretization -------------------------------------------------


@dataclass
class GalerkinOperator:
    """Dense matrix of <e_k, L e_k'> over the mode box |k|_inf <= N."""

    n_modes: int
    matrix: np.ndarray
    map_json: str
    oversample: int
    snap: float

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def side(self):
        return 2 * self.n_modes + 1

    def index(self, k):
        n = self.n_modes
        return (int(k[0]) + n) * self.side + (int(k[1]) + n)

    def mode_of(self, idx):
        n = self.n_modes
        return (idx // self.side - n, idx % self.side - n)

    def apply_vector(self, vec):
        return self.matrix @ vec

    def apply(self, obs):
        if obs.n_obs > self.n_modes:
            raise InvalidParams("observable box exceeds the operator box")
        v = obs.pad(self.n_modes).as_vector()
        return TrigObservable.from_vector(self.matrix @ v, self.n_modes, real=None)


def galerkin(tmap, n_modes, oversample=4, snap=1e-13):
    """Assemble the transfer matrix on an oversampled grid.

    Each column is L e_k' sampled on a (oversample*N)^2 grid from one shared
    inverse-image pass, projected onto the box by FFT. Entries below ``snap``
    are zeroed: stray quadrature noise at 1e-16 is harmless in norm but
    poisons the eigenvalues of nilpotent (linear-map) matrices.
    """
    if n_modes < 2 or n_modes > 64:
        raise InvalidParams(f"mode cutoff must be in [2, 64], got {n_modes}")
    # the 64-point floor keeps absolute quadrature error below the row-0 gate
    # for small boxes, where a bare factor-4 grid is too coarse
    grid = max(oversample * n_modes, 64)
    if grid < 2 * n_modes + 1:
        raise InvalidParams("oversampling grid too small for unique mode extraction")
    side = 2 * n_modes + 1
    dim = side * side
    xs = np.arange(grid) / grid
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    y = tmap.invert(pts)
    det, _, _ = tmap.det_jet(y)
    w = 1.0 / det
    ks = np.arange(-n_modes, n_modes + 1)
    t1 = np.exp(2j * np.pi * np.outer(y[:, 0], ks))
    t2 = np.exp(2j * np.pi * np.outer(y[:, 1], ks)) * w[:, None]
    fft_rows = ks % grid
    matrix = np.empty((dim, dim), dtype=complex)
    for a in range(side):
        block = t1[:, a : a + 1] * t2
        spec = np.fft.fft2(block.reshape(grid, grid, side), axes=(0, 1)) / grid**2
        sub = spec[np.ix_(fft_rows, fft_rows)]
        matrix[:, a * side : (a + 1) * side] = sub.reshape(dim, side)
    matrix[np.abs(matrix) < snap] = 0.0
    op = GalerkinOperator(
        n_modes=n_modes, matrix=matrix, map_json=tmap.to_json(), oversample=oversample, snap=snap
    )
    row0 = matrix[op.index((0, 0))].copy()
    row0[op.index((0, 0))] -= 1.0
    defect = float(np.max(np.abs(row0)))
    if defect > 1e-10:
        raise SolveFailure(
            "assembled matrix violates integral preservation", row0_defect=defect
        )
    return op


# ---- spectra and the invariant density ---------------------------------------


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    simple: np.ndarray
    ess_radius: float | None = None
    all_eigenvalues: np.ndarray = field(default=None, repr=False)


def spectrum(op, k_top=10, ess_radius=None, gap_tol=1e-6):
    """Top eigenpairs of the Galerkin matrix by modulus, with residuals and
    simplicity flags from eigenvalue gaps."""
    M = op.matrix if isinstance(op, GalerkinOperator) else np.asarray(op)
    w, V = scipy.linalg.eig(M)
    order = np.argsort(-np.abs(w), kind="stable")
    w = w[order]
    V = V[:, order]
    k = min(k_top, len(w))
    resid = np.empty(k)
    simple = np.empty(k, dtype=bool)
    for i in range(k):
        v = V[:, i]
        resid[i] = np.linalg.norm(M @ v - w[i] * v) / np.linalg.norm(v)
        gaps = np.abs(w - w[i])
        gaps[i] = np.inf
        simple[i] = np.min(gaps) > gap_tol
    return SpectralData(
        eigenvalues=w[:k],
        vectors=V[:, :k],
        residuals=resid,
        simple=simple,
        ess_radius=ess_radius,
        all_eigenvalues=w,
    )


def torus_plateau(pts, center, width, plateau_frac):
    """Nonnegative C^inf product plateau on the torus: 1 on the inner box,
    0 outside the outer box, smoothstep ramps between."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.ones(pts.shape[0])
    for axis in range(2):
        u = np.abs(wrap_half(pts[:, axis] - center[axis]))
        w = width[axis]
        inner = plateau_frac * w
        ramp = np.clip((w - u) / max(w - inner, 1e-15), 0.0, 1.0)
        out = out * SMOOTHSTEP8(ramp)
    return out


@dataclass
class SrbResult:
    density: TrigObservable
    eigenvalue: complex
    residual: float
    gap: float
    min_pairing: float
    symmetry_defect: float


def srb(op, n_positivity=100, seed=0, gap_tol=1e-6):
    """Invariant density: the eigenvector at the eigenvalue nearest 1,
    normalized to unit integral, conjugate-symmetrized, and screened for
    positivity against random nonnegative plateau functions."""
    M = op.matrix
    w, V = scipy.linalg.eig(M)
    i0 = int(np.argmin(np.abs(w - 1.0)))
    lam = w[i0]
    if abs(lam - 1.0) > 1e-8:
        raise SolveFailure("no eigenvalue within 1e-8 of 1", nearest=complex(lam))
    gaps = np.abs(w - lam)
    gaps[i0] = np.inf
    gap = float(np.min(gaps))
    if gap <= gap_tol:
        raise NotSimple("leading eigenvalue is not simple", gap=gap)
    v = V[:, i0]
    resid = float(np.linalg.norm(M @ v - lam * v) / np.linalg.norm(v))
    c0 = v[op.index((0, 0))]
    if abs(c0) < 1e-12:
        raise SolveFailure("leading eigenvector has no mass", c0=abs(c0))
    v = v / c0
    mat = v.reshape(op.side, op.side)
    sym = np.conj(mat[::-1, ::-1])
    defect = float(np.max(np.abs(mat - sym)))
    density = TrigObservable((mat + sym) / 2.0, real=True)
    rng = rng_stream(seed, 0x5B)
    worst = np.inf
    for _ in range(n_positivity):
        center = rng.random(2)
        width = 0.05 + 0.2 * rng.random(2)
        frac = 0.3 + 0.5 * rng.random()
        g = 96
        xs = np.arange(g) / g
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        grid_pts = np.column_stack([X.ravel(), Y.ravel()])
        phi = torus_plateau(grid_pts, center, width, frac)
        vals = density(grid_pts)
        worst = min(worst, float(np.mean(vals * phi)))
    return SrbResult(
        density=density,
        eigenvalue=complex(lam),
        residual=resid,
        gap=gap,
        min_pairing=worst,
        symmetry_defect=defect,
    )


# ---- correlations and resonance expansions -----------------------------------


def correlation(tmap, f, g, n_max, n_modes, galerkin_op=None):
    """c_n = int f . g o T^n for n = 0..n_max, via iterated Galerkin
    application of L to f and exact pairing with g."""
    if n_max > 30:
        raise InvalidParams("correlation horizon capped at 30 steps")
    op = galerkin_op if galerkin_op is not None else galerkin(tmap, n_modes)
    if f.n_obs > op.n_modes or g.n_obs > op.n_modes:
        raise InvalidParams("observable modes exceed the Galerkin box")
    u = f.pad(op.n_modes).as_vector()
    gflip = g.pad(op.n_modes).coeffs[::-1, ::-1].ravel()
    both_real = f.real and g.real
    out = []
    for _ in range(n_max + 1):
        c = np.sum(u * gflip)
        out.append(c.real if both_real else c)
        u = op.matrix @ u
    return np.array(out)


def decay_slope(c_seq, n_start, n_stop):
    """Log-linear decay rate of a correlation sequence over [n_start, n_stop].

    Complex resonance pairs make |c_n| dip wherever the oscillation crosses
    zero, so the regression runs on the envelope of adjacent pairs rather
    than the raw moduli.
    """
    c_seq = np.asarray(c_seq)
    ns, env = [], []
    for n in range(n_start, n_stop, 2):
        ns.append(n + 0.5)
        env.append(max(abs(c_seq[n]), abs(c_seq[n + 1])))
    ns = np.array(ns)
    env = np.array(env)
    if np.any(env == 0.0):
        raise InvalidParams("decay slope undefined: exact zeros in the envelope")
    design = np.column_stack([ns, np.ones_like(ns)])
    coef, *_ = np.linalg.lstsq(design, np.log(env), rcond=None)
    return float(coef[0])


def resonance_fit(c_seq, eigenvalues, n_start=5, n_stop=None, cluster_gap=1e-8):
    """Least-squares coefficients a_k for c_n ~ sum_k a_k n^{r_k} lambda_k^n.

    Jordan powers r_k activate only when eigenvalues cluster within
    ``cluster_gap``; the tested families are semisimple so r_k defaults to 0.
    """
    c_seq = np.asarray(c_seq)
    if n_stop is None:
        n_stop = len(c_seq) - 1
    ns = np.arange(n_start, n_stop + 1)
    lams = np.asarray(eigenvalues, dtype=complex)
    used = []
    powers = []
    for lam in lams:
        r = sum(1 for mu in used if abs(mu - lam) < cluster_gap)
        used.append(lam)
        powers.append(r)
    cols = [ns**r * lam**ns for lam, r in zip(used, powers)]
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, c_seq[ns], rcond=None)
    fit = design @ coef
    resid = float(np.linalg.norm(c_seq[ns] - fit))
    return {
        "coefficients": coef,
        "eigenvalues": np.array(used),
        "jordan_orders": np.array(powers),
        "residual": resid,
        "n_range": (int(n_start), int(n_stop)),
    }
