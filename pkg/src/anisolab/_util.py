"""Small shared numerics and I/O helpers."""

import hashlib
import json
import math

import numpy as np
from numpy.polynomial import chebyshev as _cheb

TWOPI = 2.0 * math.pi


def wrap01(x):
    """Reduce coordinates to the fundamental domain [0, 1)."""
    return np.asarray(x, dtype=float) % 1.0


def wrap_half(x):
    """Reduce displacements to the symmetric cell [-1/2, 1/2)."""
    return (np.asarray(x, dtype=float) + 0.5) % 1.0 - 0.5


def rng_stream(seed, *tags):
    """Deterministic generator for witness/orbit substreams.

    The (seed, tags) tuple fully determines the stream, so enlarging a
    budget replays the same leading witnesses and only appends new ones.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFF] + [int(t) & 0xFFFFFFFF for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))


_GL_CACHE = {}


def gauss_legendre(n, a=-1.0, b=1.0):
    """Nodes and weights on [a, b], cached by order."""
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(int(n))
    x, w = _GL_CACHE[n]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def smoothstep_poly(order=8):
    """Polynomial S with S(0)=0, S(1)=1 and derivatives 1..order zero at
    both ends; extending by 0 and 1 gives a C^order ramp."""
    # S'(t) proportional to t^order (1-t)^order, integrated exactly.
    k = int(order)
    c = np.zeros(2 * k + 1)
    for j in range(k + 1):
        c[k + j] = math.comb(k, j) * (-1.0) ** j
    integ = np.concatenate([[0.0], c / np.arange(1, 2 * k + 2)])
    p = np.polynomial.Polynomial(integ)
    return p / p(1.0)


class Smoothstep:
    """C^order ramp on [0, 1] with exact derivatives of every order."""

    def __init__(self, order=8):
        self.order = int(order)
        self._polys = [smoothstep_poly(order)]

    def _poly(self, k):
        while len(self._polys) <= k:
            self._polys.append(self._polys[-1].deriv())
        return self._polys[k]

    def __call__(self, t, k=0):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= 0.0, 0.0, np.where(t >= 1.0, 1.0, self._poly(0)(np.clip(t, 0.0, 1.0))))
        if k == 0:
            return out
        inside = (t > 0.0) & (t < 1.0)
        dv = np.zeros_like(t)
        dv[inside] = self._poly(k)(t[inside])
        return dv


SMOOTHSTEP8 = Smoothstep(8)


def cheb_nodes(a, b, deg):
    """First-kind Chebyshev interpolation points mapped to [a, b]."""
    k = np.arange(deg + 1)
    x = np.cos(np.pi * (k + 0.5) / (deg + 1))
    return 0.5 * (b - a) * (x + 1.0) + a


def cheb_from_values(vals, a, b):
    """ChebFun through the given values at the first-kind points of [a, b]."""
    vals = np.asarray(vals)
    npts = len(vals)
    k = np.arange(npts)
    coef = np.zeros(npts, dtype=vals.dtype)
    for j in range(npts):
        coef[j] = 2.0 / npts * np.sum(vals * np.cos(np.pi * j * (k + 0.5) / npts))
    coef[0] *= 0.5
    return ChebFun(coef, a, b)


def cheb_fit(f, a, b, deg):
    """Chebyshev coefficients of callable f interpolated at deg+1 points
    of the first kind, mapped to [a, b]."""
    return cheb_from_values(np.asarray(f(cheb_nodes(a, b, deg))), a, b).coef


class ChebFun:
    """Chebyshev series on [a, b] with exact derivative evaluation."""

    def __init__(self, coef, a, b):
        self.coef = np.asarray(coef)
        self.a = float(a)
        self.b = float(b)
        self._dcoefs = [self.coef]

    @classmethod
    def fit(cls, f, a, b, deg):
        return cls(cheb_fit(f, a, b, deg), a, b)

    def _scaled(self, x):
        return (2.0 * np.asarray(x, dtype=float) - (self.a + self.b)) / (self.b - self.a)

    def _dcoef(self, k):
        while len(self._dcoefs) <= k:
            self._dcoefs.append(_cheb.chebder(self._dcoefs[-1]))
        return self._dcoefs[k]

    def __call__(self, x, k=0):
        scale = (2.0 / (self.b - self.a)) ** k
        return scale * _cheb.chebval(self._scaled(x), self._dcoef(k))

    def deriv_max(self, k, samples=400):
        xs = np.linspace(self.a, self.b, samples)
        return float(np.max(np.abs(self(xs, k))))

    def hoelder_max(self, k, beta, samples=200):
        """Sampled Hoelder seminorm of the k-th derivative."""
        xs = np.linspace(self.a, self.b, samples)
        vals = self(xs, k)
        num = np.abs(vals[:, None] - vals[None, :])
        den = np.abs(xs[:, None] - xs[None, :]) ** beta
        mask = den > 0.0
        return float(np.max(num[mask] / den[mask]))

    def c_norm(self, q, samples=400):
        """C^q norm: largest derivative sup up to floor(q), plus the
        fractional Hoelder seminorm of the top derivative when q is not
        an integer."""
        m = int(math.floor(q))
        beta = q - m
        out = max(self.deriv_max(k, samples) for k in range(m + 1))
        if beta > 1e-12:
            out += self.hoelder_max(m, beta, min(samples, 200))
        return out


def richardson_diff(f, t0, order, h0, shrink=2.0, levels=3):
    """Central finite-difference derivative with Richardson extrapolation.

    Returns (estimates per level, stabilized flag). ``f`` maps a float to
    an ndarray (or scalar).
    """
    def central(h):
        if order == 1:
            return (f(t0 + h) - f(t0 - h)) / (2.0 * h)
        if order == 2:
            return (f(t0 + h) - 2.0 * f(t0) + f(t0 - h)) / h**2
        if order == 3:
            return (f(t0 + 2 * h) - 2 * f(t0 + h) + 2 * f(t0 - h) - f(t0 - 2 * h)) / (2.0 * h**3)
        raise ValueError(f"difference order {order} not supported")

    table = [np.asarray(central(h0 / shrink**j)) for j in range(levels)]
    extr = list(table)
    fac = shrink**2
    for j in range(1, levels):
        extr = [(fac * extr[i + 1] - extr[i]) / (fac - 1.0) for i in range(len(extr) - 1)]
    est = extr[0]
    prev = table[-1]
    denom = max(float(np.max(np.abs(est))), 1e-30)
    stable = float(np.max(np.abs(est - prev))) / denom
    return est, stable


def config_hash(cfg):
    """Stable hash of a JSON-serializable configuration."""
    payload = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def dump_csv(path, header, rows):
    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def polyline_svg(path, curves, title, meta, width=640, height=420):
    """Minimal deterministic SVG line plot (log/linear axes left to the
    caller: pass already-transformed coordinates)."""
    xs = np.concatenate([np.asarray(c["x"], dtype=float) for c in curves])
    ys = np.concatenate([np.asarray(c["y"], dtype=float) for c in curves])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 - x0 < 1e-300:
        x1 = x0 + 1.0
    if y1 - y0 < 1e-300:
        y1 = y0 + 1.0
    pad = 40

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f"<!-- {meta} -->",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for i, c in enumerate(curves):
        pts = " ".join(
            "%.6g,%.6g" % (sx(float(x)), sy(float(y)))
            for x, y in zip(c["x"], c["y"])
        )
        col = colors[i % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        label = c.get("label", "")
        if label:
            parts.append(
                f'<text x="{width - pad}" y="{pad + 14 * i}" text-anchor="end" '
                f'font-size="11" fill="{col}">{label}</text>'
            )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
