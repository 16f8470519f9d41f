"""Batch front-end: JSON experiment configs in, tables and figures out.

Every subcommand reads one config file, runs the matching experiment and
writes CSV/JSON (optionally SVG) artifacts stamped with the config hash
and the tool version, so runs are reproducible and diffable.  Exit codes:
0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidParams, NumericalFailure
from .leaves import flat_graph, leaf_cover
from .maps import ChartAtlas, TorusMap, TrigPoly
from .norms import NormParams, ly_experiment, norm_pq
from .perturb import (PerturbationFamily, RandomKernel, WeightedScale,
                      mapdist_experiment, random_ly_experiment,
                      resolvent_expansion_validate, response,
                      stability_experiment)
from .stats import variance_report
from .transfer import TrigObservable, galerkin, spectrum, srb, correlation

_FORMATS = ("csv", "json", "svg")
_TOP_KEYS = {
    "map", "map_file", "other_map", "other_map_file", "family", "kernel",
    "kernels", "norm_params", "observable", "observables", "budgets",
    "scale", "seed", "out_dir", "formats",
}


def _require(cond, msg):
    if not cond:
        raise InvalidParams(msg)


def _poly_terms(entries):
    return [(tuple(t["mode"]), float(t.get("coef_cos", 0.0)),
             float(t.get("coef_sin", 0.0))) for t in entries]


class ExperimentConfig:
    """Validated view of one experiment description."""

    def __init__(self, raw, base_dir):
        _require(isinstance(raw, dict), "config root must be a JSON object")
        unknown = sorted(set(raw) - _TOP_KEYS)
        _require(not unknown, f"unknown config keys: {', '.join(unknown)}")
        self.raw = raw
        self.base_dir = Path(base_dir)
        self.seed = int(raw.get("seed", 0))
        self.out_dir = raw.get("out_dir")
        self.formats = tuple(raw.get("formats", ("csv", "json")))
        bad = [f for f in self.formats if f not in _FORMATS]
        _require(not bad, f"unknown output formats: {', '.join(bad)}")
        self.budgets = raw.get("budgets", {})
        _require(isinstance(self.budgets, dict), "budgets must be an object")
        if "norm_params" in raw:
            d = raw["norm_params"]
            _require(isinstance(d, dict), "norm_params must be an object")
            p = d.get("p", 1)
            q = d.get("q", 0.5)
            r = d.get("r", 3)
            _require(p + q < r, "p+q must be < r")
        self.config_hash = hashlib.sha256(
            json.dumps(raw, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def load(cls, path):
        path = Path(path)
        _require(path.exists(), f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidParams(f"config is not valid JSON: {exc}")
        return cls(raw, path.parent)

    def budget(self, key, default):
        return self.budgets.get(key, default)

    def _load_ref(self, ref):
        p = Path(ref)
        if not p.is_absolute():
            p = self.base_dir / p
        _require(p.exists(), f"referenced file not found: {p}")
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidParams(f"referenced file is not valid JSON: {exc}")

    def _map_from(self, key, required):
        inline = self.raw.get(key)
        ref = self.raw.get(key + "_file")
        _require(inline is None or ref is None,
                 f"give either {key} or {key}_file, not both")
        if inline is None and ref is None:
            _require(not required, f"this subcommand needs a '{key}' entry")
            return None
        if ref is not None:
            inline = self._load_ref(ref)
        return TorusMap.from_json_dict(inline)

    def tmap(self):
        return self._map_from("map", required=True)

    def other_map(self):
        return self._map_from("other_map", required=True)

    def norm_params(self):
        _require("norm_params" in self.raw,
                 "this subcommand needs a 'norm_params' entry")
        return NormParams(**self.raw["norm_params"])

    def observable(self):
        _require("observable" in self.raw,
                 "this subcommand needs an 'observable' entry")
        return TrigObservable.from_real_terms(_poly_terms(self.raw["observable"]))

    def observables(self):
        if "observables" in self.raw:
            out = []
            for i, entry in enumerate(self.raw["observables"]):
                name = entry.get("id", f"f{i}")
                out.append((name, TrigObservable.from_real_terms(
                    _poly_terms(entry["terms"]))))
            _require(out, "'observables' must not be empty")
            return out
        return [("f0", self.observable())]

    def family(self):
        _require("family" in self.raw, "this subcommand needs a 'family' entry")
        d = self.raw["family"]
        directions = tuple(
            (TrigPoly(_poly_terms(gx)), TrigPoly(_poly_terms(gy)))
            for gx, gy in d.get("directions", []))
        return PerturbationFamily(self.tmap(), directions,
                                  order=int(d.get("order", 2)),
                                  t_max=float(d.get("t_max", 0.05)))

    def _kernel_from(self, d):
        maps = tuple(TorusMap.from_json_dict(m) for m in d["maps"])
        densities = tuple(TrigObservable.from_real_terms(_poly_terms(g))
                          for g in d["densities"])
        return RandomKernel(tuple(float(w) for w in d["weights"]),
                            maps, densities)

    def kernel(self):
        _require("kernel" in self.raw, "this subcommand needs a 'kernel' entry")
        return self._kernel_from(self.raw["kernel"])

    def kernels(self):
        _require("kernels" in self.raw,
                 "this subcommand needs a 'kernels' entry")
        return [self._kernel_from(d) for d in self.raw["kernels"]]

    def scale(self):
        d = self.raw.get("scale", {})
        return WeightedScale.build(
            dim=int(d.get("dim", 12)), order=int(d.get("order", 2)),
            m_rate=float(d.get("m_rate", 4.0)),
            alpha=float(d.get("alpha", 0.25)), rho=float(d.get("rho", 1.0)),
            seed=int(d.get("seed", 0)))


# ---- artifact emission ------------------------------------------------------


def _cell(value):
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, sort_keys=True)
    if isinstance(value, (np.floating, np.integer)):
        return repr(value.item())
    if isinstance(value, complex):
        return repr(value)
    return repr(value) if isinstance(value, float) else str(value)


class ArtifactWriter:
    """Writes stamped tables, records and figures in the chosen formats."""

    def __init__(self, out_dir, config_hash, formats, seed):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        stale = self.out_dir / "error.json"
        if stale.exists():
            stale.unlink()
        self.formats = formats
        self.stamp = {
            "config_hash": config_hash,
            "tool_version": __version__,
            "seed": seed,
        }
        self.paths = []

    def _write(self, name, text):
        path = self.out_dir / name
        path.write_text(text)
        self.paths.append(path)

    def table(self, name, header, rows):
        if "csv" in self.formats:
            import io
            buf = io.StringIO()
            buf.write(f"# config_hash={self.stamp['config_hash']} "
                      f"tool_version={self.stamp['tool_version']}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
            self._write(name + ".csv", buf.getvalue())
        if "json" in self.formats:
            payload = dict(self.stamp)
            payload["columns"] = list(header)
            payload["rows"] = [[_cell(v) if isinstance(v, (dict, tuple)) else v
                                for v in row] for row in rows]
            self._write(name + ".json",
                        json.dumps(payload, sort_keys=True, indent=1) + "\n")

    def record(self, name, payload):
        body = dict(self.stamp)
        body.update(payload)
        self._write(name + ".json",
                    json.dumps(body, sort_keys=True, indent=1) + "\n")
        if "csv" in self.formats:
            self.table(name, ("key", "value"),
                       sorted((k, v) for k, v in payload.items()))

    def figure(self, name, series, xlabel, ylabel, logx=False, logy=False):
        if "svg" not in self.formats:
            return
        self._write(name + ".svg",
                    _svg_plot(series, xlabel, ylabel, self.stamp, logx, logy))


def _svg_plot(series, xlabel, ylabel, stamp, logx, logy):
    """Hand-rolled line plot: deterministic output, no plotting stack."""
    width, height, pad = 640.0, 420.0, 56.0
    palette = ("#1f6fb2", "#c24f2e", "#3d8a51", "#8456a8", "#a08a28")

    def tx(vals, log):
        vals = np.asarray(vals, dtype=float)
        if log:
            vals = np.where(vals > 0, vals, np.nan)
            return np.log10(vals)
        return vals

    xs = [tx([p[0] for p in pts], logx) for _, pts in series]
    ys = [tx([p[1] for p in pts], logy) for _, pts in series]
    allx = np.concatenate(xs)
    ally = np.concatenate(ys)
    allx = allx[np.isfinite(allx)]
    ally = ally[np.isfinite(ally)]
    if allx.size == 0 or ally.size == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(np.min(allx)), float(np.max(allx))
    y0, y1 = float(np.min(ally)), float(np.max(ally))
    x1 += (x1 == x0) or 0.0
    y1 += (y1 == y0) or 0.0

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" '
        f'height="{height:g}" viewBox="0 0 {width:g} {height:g}">',
        f"<!-- config_hash={stamp['config_hash']} "
        f"tool_version={stamp['tool_version']} -->",
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{pad:g}" y1="{height - pad:g}" x2="{width - pad:g}" '
        f'y2="{height - pad:g}" stroke="#333" stroke-width="1"/>',
        f'<line x1="{pad:g}" y1="{pad:g}" x2="{pad:g}" '
        f'y2="{height - pad:g}" stroke="#333" stroke-width="1"/>',
    ]
    for i, (label, pts) in enumerate(series):
        color = palette[i % len(palette)]
        coords = []
        for xv, yv in zip(xs[i], ys[i]):
            if np.isfinite(xv) and np.isfinite(yv):
                coords.append(f"{px(xv):.3f},{py(yv):.3f}")
        if len(coords) > 1:
            lines.append(f'<polyline points="{" ".join(coords)}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        for c in coords:
            cx, cy = c.split(",")
            lines.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" '
                         f'fill="{color}"/>')
        lines.append(f'<text x="{width - pad:g}" y="{pad + 14 * i:g}" '
                     f'text-anchor="end" font-size="11" fill="{color}">'
                     f"{label}</text>")
    fx = ("log10 " if logx else "") + xlabel
    fy = ("log10 " if logy else "") + ylabel
    lines.append(f'<text x="{width / 2:g}" y="{height - 16:g}" '
                 f'text-anchor="middle" font-size="12">{fx}</text>')
    lines.append(f'<text x="16" y="{height / 2:g}" text-anchor="middle" '
                 f'font-size="12" transform="rotate(-90 16 {height / 2:g})">'
                 f"{fy}</text>")
    for gx in (x0, x1):
        lines.append(f'<text x="{px(gx):.1f}" y="{height - pad + 16:g}" '
                     f'text-anchor="middle" font-size="10">{gx:.4g}</text>')
    for gy in (y0, y1):
        lines.append(f'<text x="{pad - 6:g}" y="{py(gy):.1f}" '
                     f'text-anchor="end" font-size="10">{gy:.4g}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


# ---- subcommands ------------------------------------------------------------


def _atlas_for(tmap):
    report = tmap.hyperbolicity_constants()
    return report, ChartAtlas.build(tmap, report)


def _cmd_constants(cfg, writer, workers):
    rep = cfg.tmap().hyperbolicity_constants()
    writer.record("constants", {
        "lam": rep.lam, "nu": rep.nu, "kappa": rep.kappa,
        "margin": rep.margin, "valid": bool(rep.valid),
        "grid_n": rep.grid_n, "iters": rep.iters,
        "lam_mean": rep.lam_mean, "nu_mean": rep.nu_mean,
    })


def _cmd_leafcover(cfg, writer, workers):
    tmap = cfg.tmap()
    report, atlas = _atlas_for(tmap)
    delta = cfg.budget("delta", 0.05)
    big_a = cfg.budget("big_a", 3.0)
    gamma = cfg.budget("gamma", 1.0)
    graph = flat_graph(atlas, cfg.budget("chart", 0),
                       cfg.budget("center_u", 0.0),
                       cfg.budget("radius", gamma * big_a * delta),
                       delta=delta, big_a=big_a, gamma=gamma)
    rows = []
    for n in range(1, cfg.budget("n_max", 4) + 1):
        cov = leaf_cover(tmap, graph, n, gamma=gamma, report=report)
        rows.append((n, cov.n_leaves, cov.partition_defect(),
                     cov.covering_margin(), cov.expansion_min))
    writer.table("leafcover",
                 ("n", "n_leaves", "partition_defect", "covering_margin",
                  "expansion_min"), rows)
    writer.figure("leafcover", [("leaves", [(r[0], r[1]) for r in rows])],
                  "n", "leaf count", logy=True)


def _cmd_norm(cfg, writer, workers):
    tmap = cfg.tmap()
    _, atlas = _atlas_for(tmap)
    params = cfg.norm_params()
    est = norm_pq(cfg.observable(), params, atlas,
                  quad_n=cfg.budget("quad_n", 128))
    writer.record("norm", {
        "value": est.value, "budget": est.budget,
        "p": params.p, "q": params.q, "witness": est.witness,
    })


def _cmd_ly(cfg, writer, workers):
    tmap = cfg.tmap()
    report, atlas = _atlas_for(tmap)
    params = cfg.norm_params()
    exp = ly_experiment(tmap, cfg.observable(), params,
                        cfg.budget("n_max", 4), atlas, report,
                        quad_n=cfg.budget("quad_n", 96))
    rows = [(r["n"], r["estimate"], r["witness"]) for r in exp.rows]
    writer.table("ly", ("n", "estimate", "witness"), rows)
    writer.record("ly_fit", {
        "p": exp.p, "q": exp.q, "rho": exp.rho, "a_fit": exp.a_fit,
        "b_fit": exp.b_fit, "residual_rate": exp.residual_rate,
        "base_norm": exp.base_norm, "down_norm": exp.down_norm,
    })
    writer.figure("ly", [("estimate", [(r[0], r[1]) for r in rows])],
                  "n", "norm estimate", logy=True)


def _cmd_spectrum(cfg, writer, workers):
    op = galerkin(cfg.tmap(), cfg.budget("n_modes", 8))
    data = spectrum(op, k_top=cfg.budget("k_top", 10))
    rows = [(i, float(ev.real), float(ev.imag), float(abs(ev)),
             float(res), bool(simple))
            for i, (ev, res, simple)
            in enumerate(zip(data.eigenvalues, data.residuals, data.simple))]
    writer.table("eigenvalues",
                 ("rank", "re", "im", "abs", "residual", "simple"), rows)
    writer.figure("eigenvalues",
                  [("spectrum", [(r[1], r[2]) for r in rows])], "re", "im")


def _cmd_srb(cfg, writer, workers):
    op = galerkin(cfg.tmap(), cfg.budget("n_modes", 8))
    res = srb(op, n_positivity=cfg.budget("n_positivity", 100),
              seed=cfg.seed)
    writer.record("srb_diagnostics", {
        "eigenvalue": float(np.real(res.eigenvalue)),
        "residual": res.residual, "gap": res.gap,
        "min_pairing": res.min_pairing,
        "symmetry_defect": res.symmetry_defect,
    })
    n = res.density.n_obs
    rows = []
    for k1 in range(-n, n + 1):
        for k2 in range(-n, n + 1):
            c = res.density.coeffs[k1 + n, k2 + n]
            if abs(c) > 0:
                rows.append((k1, k2, float(c.real), float(c.imag)))
    writer.table("srb_modes", ("k1", "k2", "re", "im"), rows)


def _cmd_correlations(cfg, writer, workers):
    tmap = cfg.tmap()
    obs = cfg.observables()
    f = obs[0][1]
    g = obs[1][1] if len(obs) > 1 else f
    seq = correlation(tmap, f, g, cfg.budget("n_max", 12),
                      cfg.budget("n_modes", 8))
    rows = [(n, float(c)) for n, c in enumerate(seq)]
    writer.table("correlations", ("n", "value"), rows)
    writer.figure("correlations",
                  [("abs", [(n, abs(c) + 1e-18) for n, c in rows])],
                  "n", "|correlation|", logy=True)


def _cmd_mapdist(cfg, writer, workers):
    tmap = cfg.tmap()
    _, atlas = _atlas_for(tmap)
    corpus = [f for _, f in cfg.observables()]
    rep = mapdist_experiment(tmap, cfg.other_map(), corpus,
                             cfg.norm_params(), atlas,
                             quad_n=cfg.budget("quad_n", 96))
    writer.table("mapdist", ("observable", "numerator", "denominator",
                             "ratio"), rep.rows)
    writer.record("mapdist_fit",
                  {"distance": rep.distance, "c_fit": rep.c_fit})


def _cmd_random_ly(cfg, writer, workers):
    kernel = cfg.kernel()
    params = cfg.norm_params()
    base = kernel.maps[0]
    _, atlas = _atlas_for(base)
    rep = random_ly_experiment(kernel, params, cfg.budget("n_max", 4),
                               cfg.budget("m_target", 1.0),
                               cfg.observable(), atlas,
                               quad_n=cfg.budget("quad_n", 96))
    writer.table("random_ly", ("n", "estimate"), rep.rows)
    writer.record("random_ly_fit", {
        "rate": rep.rate, "m_target": rep.m_target,
        "within_target": bool(rep.within_target),
    })
    writer.figure("random_ly", [("estimate", rep.rows)], "n",
                  "averaged norm estimate", logy=True)


def _cmd_stability(cfg, writer, workers):
    params = cfg.norm_params()
    rep = stability_experiment(
        cfg.tmap(), cfg.kernels(), params.p, params.q,
        cfg.budget("rho", 0.8), n_modes=cfg.budget("n_modes", 12))
    writer.table("stability", ("delta_size", "rank", "projector_distance"),
                 rep.rows)
    writer.record("stability_fit", {
        "rho": rep.rho, "eta": rep.eta, "rank_base": rep.rank_base,
        "exponent": rep.exponent, "eps0": rep.eps0, "k2": rep.k2,
    })
    writer.figure("stability",
                  [("projector distance",
                    [(s, d) for s, _, d in rep.rows if s > 0 and d > 0])],
                  "perturbation size", "projector distance",
                  logx=True, logy=True)


def _cmd_resolvent_order(cfg, writer, workers):
    scale = cfg.scale()
    z = cfg.budget("z", 2.0)
    if isinstance(z, list):
        z = complex(z[0], z[1])
    t_grid = cfg.budget("t_grid",
                        list(np.logspace(-3, -1, 9)))
    rep = resolvent_expansion_validate(scale, z, scale.order,
                                       [float(t) for t in t_grid])
    rows = list(zip(rep.t_grid, rep.remainders))
    writer.table("resolvent_order", ("t", "remainder"), rows)
    writer.record("resolvent_fit", {
        "s": rep.s, "eta": rep.eta, "slope": rep.slope,
        "expected_slope": rep.expected_slope,
        "z_re": float(np.real(rep.z)), "z_im": float(np.imag(rep.z)),
    })
    writer.figure("resolvent_order", [("remainder", rows)], "t",
                  "expansion remainder", logx=True, logy=True)


def _cmd_response(cfg, writer, workers):
    family = cfg.family()
    value = response(family, cfg.observable(), cfg.budget("n_modes", 8))
    writer.record("response", {"value": value,
                               "n_modes": cfg.budget("n_modes", 8)})


def _cmd_variance(cfg, writer, workers):
    tmap = cfg.tmap()
    items = cfg.observables()

    def one(item):
        name, f = item
        return variance_report(
            tmap, f, cfg.budget("n_modes", 12),
            cfg.budget("n_orbits", 20000), cfg.budget("orbit_len", 1000),
            cfg.seed, observable_id=name,
            truncation_n=cfg.budget("truncation_n", 50))

    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, items))
    else:
        reports = [one(item) for item in items]
    rows = [(r.observable_id, r.sigma2_formula, r.sigma2_mc, r.mc_se,
             r.truncation_gap, bool(r.agrees)) for r in reports]
    writer.table("variance", ("observable", "sigma2_formula", "sigma2_mc",
                              "mc_se", "truncation_gap", "agrees"), rows)


SUBCOMMANDS = {
    "constants": _cmd_constants,
    "leafcover": _cmd_leafcover,
    "norm": _cmd_norm,
    "ly": _cmd_ly,
    "spectrum": _cmd_spectrum,
    "srb": _cmd_srb,
    "correlations": _cmd_correlations,
    "mapdist": _cmd_mapdist,
    "random-ly": _cmd_random_ly,
    "stability": _cmd_stability,
    "resolvent-order": _cmd_resolvent_order,
    "response": _cmd_response,
    "variance": _cmd_variance,
}


def run(subcommand, config, out_dir, workers=1):
    """Execute one subcommand against a loaded config, writing artifacts
    into out_dir.  Raises instead of exiting; `main` maps errors to codes."""
    _require(subcommand in SUBCOMMANDS, f"unknown subcommand: {subcommand}")
    writer = ArtifactWriter(out_dir, config.config_hash, config.formats,
                            config.seed)
    SUBCOMMANDS[subcommand](config, writer, max(1, int(workers)))
    return writer


def _emit_error(exc, code, out_dir):
    payload = {
        "error": str(exc),
        "type": type(exc).__name__,
        "exit_code": code,
        "tool_version": __version__,
    }
    context = getattr(exc, "context", None)
    if context:
        payload["context"] = {k: repr(v) for k, v in sorted(context.items())}
    text = json.dumps(payload, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text + "\n")
        except OSError:
            pass


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="anisolab",
        description="Transfer-operator experiments on hyperbolic torus maps")
    parser.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    parser.add_argument("--config", required=True,
                        help="path to a JSON experiment config")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides config and "
                             "ANISOLAB_OUT)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--workers", type=int,
                        default=max(1, os.cpu_count() or 1),
                        help="worker threads for independent sub-tasks")
    parser.add_argument("--format", choices=_FORMATS, action="append",
                        default=None, help="output format (repeatable)")
    args = parser.parse_args(argv)

    out_dir = Path(args.out) if args.out is not None else None
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.format:
            cfg.formats = tuple(dict.fromkeys(args.format))
        if out_dir is not None:
            pass
        elif cfg.out_dir is not None:
            out_dir = Path(cfg.out_dir)
            if not out_dir.is_absolute():
                out_dir = cfg.base_dir / out_dir
        else:
            root = os.environ.get("ANISOLAB_OUT", "anisolab-out")
            out_dir = Path(root) / args.subcommand
        run(args.subcommand, cfg, out_dir, workers=args.workers)
        return 0
    except InvalidParams as exc:
        _emit_error(exc, 2, out_dir)
        return 2
    except NumericalFailure as exc:
        _emit_error(exc, 3, out_dir)
        return 3


if __name__ == "__main__":
    sys.exit(main())
