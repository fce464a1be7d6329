"""Experiment orchestration: config -> module calls -> ResultRecord on disk."""

import csv
import io
import json
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .appendix import unboundedness_demo
from .config import ExperimentConfig
from .errors import EmptyRecord, XFieldsError
from .grid import Grid2D, StateField
from .operators import AbsorberSpec, HamiltonianSpec
from .potential import gaussian_well, make_strip_potential
from .propagator import MehlerKernelSpec, validate_kernel
from .resolvent import (certificate_crosscheck, contraction_certificate, decay_scan, mourre_scan,
                        mourre_weight, weighted_mourre_scan)
from .spectral import (commutator_dx, energy_inequality_family, eigenfree_bounds_for, estimate_Ca,
                       fractional_sobolev_family, gamma_form, limiting_absorption_detector,
                       shift_invert_eigen)
from .weights import WeightSpec

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


@dataclass
class ResultRecord:
    experiment: str
    config_hash: str
    config: dict
    rows: list
    constants: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)

    @property
    def exit_code(self):
        return EXIT_FAIL if self.verdicts.get("certificate") == "FAIL" else EXIT_OK

    def as_dict(self):
        return {"experiment": self.experiment, "config_hash": self.config_hash,
                "config": self.config, "constants": self.constants, "verdicts": self.verdicts,
                "meta": self.meta, "timestamps": self.timestamps, "versions": self.versions,
                "rows": self.rows}


# ---------------------------------------------------------------- builders

def build_grid_from(cfg, backend=None):
    g = cfg.grid
    return Grid2D(g["x_min"], g["x_max"], g["y_min"], g["y_max"], g["n_x"], g["n_y"],
                  backend or g["backend"])


def build_potential(cfg):
    p = cfg.potential
    if p["kind"] == "strip":
        return make_strip_potential(p["A0"], p["s_decay"], p["eta0"], p["beta"])
    if p["kind"] == "gaussian_well":
        return gaussian_well(p["depth"], p["width"])
    return None


def build_spec(cfg, grid=None, potential="config"):
    grid = grid or build_grid_from(cfg)
    g = cfg.grid
    absorber = None
    if g["absorber_width"] > 0 and g["absorber_strength"] > 0:
        absorber = AbsorberSpec(g["absorber_width"], g["absorber_strength"])
    pot = build_potential(cfg) if potential == "config" else potential
    return HamiltonianSpec(grid, pot, g["stark"], absorber)


def build_weights(cfg):
    w = cfg.weights
    return WeightSpec(a=w["a"], delta=w["delta"], gamma=w["gamma"], bridge=w["bridge"], edge=w["edge"])


def _lam_grid(cfg, default):
    s = cfg.scan
    if s["lam"] is not None:
        return list(s["lam"])
    if s["lam_min"] is None:
        return list(default)
    if s["lam_spacing"] == "log":
        return np.geomspace(s["lam_min"], s["lam_max"], s["lam_points"]).tolist()
    return np.linspace(s["lam_min"], s["lam_max"], s["lam_points"]).tolist()


def _nu_grid(cfg, default):
    return list(cfg.scan["nu"]) if cfg.scan["nu"] is not None else list(default)


def _eta0(cfg):
    return cfg.weights["eta0"] if cfg.weights["eta0"] is not None else cfg.potential["eta0"]


def _scan_rows(points, solver_key="solver_tol"):
    rows = []
    for p in points:
        r = {k: v for k, v in p.items() if np.isscalar(v) or v is None}
        r["tolerance"] = p.get(solver_key, 1e-8)
        rows.append(r)
    return rows


# ---------------------------------------------------------------- runners

def _run_resolvent_scan(cfg):
    spec = build_spec(cfg)
    lams = _lam_grid(cfg, np.geomspace(20, 200, 8))
    nu = _nu_grid(cfg, [0.5])[0]
    res = decay_scan(spec, cfg.weights["delta"], nu, lams, cfg.weights["theta"], seed=cfg.seed,
                     threads=cfg.threads)
    const = {"fitted_exponent": res.fitted_exponent,
             "ci_low": None if res.confidence is None else res.confidence[0],
             "ci_high": None if res.confidence is None else res.confidence[1],
             "intercept": res.meta.get("intercept")}
    verdicts = {"bound_violations": len(res.bound_violations())}
    return _scan_rows(res.points), const, verdicts, res.meta


def _run_mourre_scan(cfg):
    spec = build_spec(cfg, potential=None)
    R = cfg.scan["R"]
    lams = _lam_grid(cfg, np.linspace(-R, R, 5))
    nus = _nu_grid(cfg, [1e-3, 1e-2, 1e-1])
    res = mourre_scan(spec, R, lams, nus, cfg.weights["beta"], seed=cfg.seed, threads=cfg.threads)
    meta = dict(res.meta)
    meta["ratios"] = {f"{k:.12g}": v for k, v in meta["ratios"].items()}
    return (_scan_rows(res.points), res.constants,
            {"bound_violations": len(res.bound_violations()),
             "uniformity_ratio": res.meta["uniformity_ratio"]}, meta)


def _weighted(cfg, spec):
    R = cfg.scan["R"]
    lams = _lam_grid(cfg, np.linspace(-R, R, 5))
    nus = _nu_grid(cfg, [1e-3, 1e-2, 1e-1])
    return weighted_mourre_scan(spec, cfg.weights["gamma"], _eta0(cfg), cfg.weights["beta"], R, lams,
                                nus, seed=cfg.seed, threads=cfg.threads,
                                check_eta=cfg.scan["check_eta"])


def _jsonable_meta(meta):
    out = {}
    for k, v in meta.items():
        if isinstance(v, dict):
            out[k] = {f"{kk:.12g}" if isinstance(kk, float) else kk: vv for kk, vv in v.items()}
        else:
            out[k] = v
    return out


def _run_weighted_mourre_scan(cfg):
    res = _weighted(cfg, build_spec(cfg, potential=None))
    return (_scan_rows(res.points), res.constants,
            {"bound_violations": len(res.bound_violations()),
             "uniformity_ratio": res.meta["uniformity_ratio"],
             "eta_ratio": res.meta.get("eta_ratio")}, _jsonable_meta(res.meta))


def _run_certificate(cfg):
    pot = make_strip_potential(cfg.potential["A0"], cfg.potential["s_decay"], cfg.potential["eta0"],
                               cfg.potential["beta"])
    spec = build_spec(cfg, potential=pot)
    C, B = cfg.scan["C_R_gamma"], cfg.scan["B_R_gamma"]
    rows = []
    if C is None or B is None:
        res = _weighted(cfg, spec.without_potential())
        C, B = res.constants["C_R_gamma"], res.constants["B_R_gamma"]
        rows = _scan_rows(res.points)
    gamma = cfg.weights["gamma"]
    cert = contraction_certificate(pot, gamma, cfg.scan["R"], C, B, grid=spec.grid)
    if cfg.scan["crosscheck"] and cert.verdict == "PASS":
        nus = _nu_grid(cfg, [1e-3, 1e-2, 1e-1, 1.0])
        R = cfg.scan["R"]
        cc = certificate_crosscheck(spec, cert, _lam_grid(cfg, np.linspace(-R, R, 5)), nus,
                                    seed=cfg.seed, threads=cfg.threads)
        rows += _scan_rows(cc.points)
    const = {k: v for k, v in cert.as_dict().items() if k != "crosscheck"}
    verdicts = {"certificate": cert.verdict}
    if cert.crosscheck is not None:
        verdicts["crosscheck_consistent"] = cert.crosscheck["consistent"]
        const["crosscheck_sup"] = cert.crosscheck["measured_sup"]
    if not rows:
        rows = [{"name": "certificate", "c": cert.c, "residual": 0.0, "tolerance": 0.0}]
    return rows, const, verdicts, {}


def _run_detector(cfg):
    spec = build_spec(cfg)
    R = cfg.scan["R"]
    s = cfg.scan
    window = (s["lam_min"], s["lam_max"]) if s["lam_min"] is not None else (-R, R)
    eta0 = cfg.weights["eta0"] if cfg.weights["eta0"] is not None else 1.0
    W = mourre_weight(cfg.weights["gamma"], eta0, cfg.weights["beta"])
    rep = limiting_absorption_detector(spec, window, s["nu_sweep"], W, W, coarse_nu=s["coarse_nu"],
                                       seed=cfg.seed)
    rows = []
    for c in rep.coarse:
        rows.append({"kind": "coarse", "lam": c["lam"], "nu": c["nu"], "norm": c["norm"],
                     "bound": c["bound"], "residual": c["residual"], "tolerance": 1e-8})
    for cand in rep.candidates:
        for r in cand["rows"]:
            rows.append({"kind": "refined", "lam": r["lam"], "nu": r["nu"], "norm": r["norm"],
                         "bound": r["bound"], "residual": r["residual"], "tolerance": 1e-8})
    flags = []
    for f in rep.flags:
        entry = dict(f)
        if not spec.grid.periodic:
            vals, _ = shift_invert_eigen(spec.with_absorber(None), f["lam"], k=1)
            entry["eigenvalue"] = float(np.real(vals[0]))
            entry["delta_lam"] = abs(entry["eigenvalue"] - f["lam"])
        flags.append(entry)
    const = {"n_flags": len(flags), "n_candidates": len(rep.candidates)}
    meta = dict(rep.meta)
    meta["flags"] = flags
    meta["candidates"] = [{k: v for k, v in c.items() if k != "rows"} for c in rep.candidates]
    return rows, const, {"flags": [f["lam"] for f in flags]}, meta


def gaussian_families(grid):
    """Three independent Gaussian data families for kernel validation."""
    return [
        StateField.from_function(grid, lambda X, Y: np.exp(-(X**2 + Y**2) / 2)),
        StateField.from_function(grid, lambda X, Y: np.exp(-((X - 2) ** 2 + (Y + 1) ** 2) / 3)),
        StateField.from_function(grid, lambda X, Y: np.exp(-((X + 1) ** 2 + (Y - 1.5) ** 2) / 1.5
                                                            + 1j * (0.8 * X - 0.5 * Y))),
    ]


def _run_propagator_validate(cfg):
    grid = build_grid_from(cfg, backend="periodic_spectral")
    t_list = cfg.scan["t_list"]
    steps = cfg.scan["steps_per_unit"]
    fams = gaussian_families(grid)
    rows, per_family = [], []
    for i, f in enumerate(fams):
        v = validate_kernel(t_list, [f], MehlerKernelSpec(), steps_per_unit=steps)
        per_family.append(v.variant)
        for r in v.as_rows():
            r.update({"family": i, "residual": r["rel_error"], "tolerance": 1e-3})
            rows.append(r)
    selected = per_family[0]
    errs = [r["rel_error"] for r in rows if r["variant"] == selected]
    ratios = [r["norm_ratio"] for r in rows if r["variant"] == selected]
    const = {"selected_variant": selected, "max_error": max(errs),
             "max_unitarity_defect": float(max(abs(u - 1) for u in ratios))}
    verdicts = {"families_agree": len(set(per_family)) == 1, "per_family": per_family}
    return rows, const, verdicts, {}


def _run_unboundedness(cfg):
    demo = unboundedness_demo(cfg.scan["n_list"])
    rows = []
    for r in demo["rows"]:
        r = dict(r)
        r["residual"] = abs(r["y_moment"] - (2 * r["n"] + 1) / 2)
        r["tolerance"] = 1e-6
        rows.append(r)
    const = {"slope": demo["slope"]}
    verdicts = {"bound_holds": all(r["value"] >= r["bound"] - 1e-8 for r in rows)}
    return rows, const, verdicts, {}


def _run_diagnostics(cfg):
    weights = build_weights(cfg)
    grid = build_grid_from(cfg, backend="periodic_spectral")
    pot = build_potential(cfg) or make_strip_potential(1.0, 0.7, 0.1)
    rows = []
    f0 = StateField.from_function(grid, lambda X, Y: np.exp(-(X**2 + Y**2) / 2))
    c0 = commutator_dx(HamiltonianSpec(grid), f0)
    c1 = commutator_dx(HamiltonianSpec(grid, pot), f0)
    rows.append({"name": "commutator_V0", "value": c0.relative, "residual": c0.relative,
                 "tolerance": 1e-9})
    rows.append({"name": "commutator_strip", "value": c1.relative, "residual": c1.relative,
                 "tolerance": 1e-6})
    fg = StateField.from_function(grid, lambda X, Y: np.exp(-((X - 6) ** 2 + (Y - 6) ** 2) / 0.5))
    g = gamma_form(fg, pot, weights)
    rows.append({"name": "gamma_form", "value": g.gamma_value.real, "residual": g.relative,
                 "tolerance": 1e-6})
    ca = estimate_Ca(weights)
    rows.append({"name": "C_a", "value": ca, "residual": 0.0, "tolerance": 0.0})
    eb = eigenfree_bounds_for(pot, weights, grid)
    fam = energy_inequality_family(grid, None, weights, n_states=100, seed=cfg.seed)
    rows.append({"name": "energy_inequality_C", "value": fam["C_empirical"], "residual": 0.0,
                 "tolerance": 0.0})
    fs = fractional_sobolev_family(cfg.weights["gamma"], seed=cfg.seed)
    rows.append({"name": "fractional_sobolev_max", "value": fs["max"],
                 "residual": max(0.0, fs["max"] - fs["sharp"]), "tolerance": 0.0})
    const = {**eb.as_dict(), "gamma_value": g.gamma_value.real,
             "fractional_sobolev_sharp": fs["sharp"]}
    verdicts = {"commutator_exact": c0.relative <= 1e-9, "gamma_identity": g.relative <= 1e-6}
    return rows, const, verdicts, {}


RUNNERS = {
    "resolvent-scan": _run_resolvent_scan,
    "mourre-scan": _run_mourre_scan,
    "weighted-mourre-scan": _run_weighted_mourre_scan,
    "certificate": _run_certificate,
    "detector": _run_detector,
    "propagator-validate": _run_propagator_validate,
    "unboundedness-demo": _run_unboundedness,
    "diagnostics": _run_diagnostics,
}


class ExperimentError(XFieldsError):
    """An experiment failed; carries the experiment name and config hash."""


def versions():
    return {"xfields": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_experiment(cfg: ExperimentConfig):
    """Dispatch to the owning module and assemble a :class:`ResultRecord`."""
    started = time.time()
    try:
        rows, const, verdicts, meta = RUNNERS[cfg.experiment](cfg)
    except ExperimentError:
        raise
    except XFieldsError as exc:
        raise ExperimentError(f"{cfg.experiment} (config {cfg.hash()[:12]}): "
                              f"{type(exc).__name__}: {exc}") from exc
    return ResultRecord(cfg.experiment, cfg.hash(), cfg.as_dict(), rows, const, verdicts, meta,
                        {"started": started, "finished": time.time()}, versions())


# ---------------------------------------------------------------- persistence

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, complex):
        return format(v.real, ".17g") + ("+" if v.imag >= 0 else "") + format(v.imag, ".17g") + "j"
    return str(v)


def rows_to_csv(rows):
    """Deterministic CSV text: sorted union of keys, fixed float formatting."""
    keys = sorted({k for r in rows for k in r})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([_fmt(r.get(k)) for k in keys])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def write_record(record, out_dir, plots=True):
    """Write record.json, points.csv and plots/*.svg; returns the written paths."""
    if not record.rows:
        raise EmptyRecord("record has no rows")
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    csv_path = os.path.join(out_dir, "points.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(record.rows))
    paths["csv"] = csv_path
    json_path = os.path.join(out_dir, "record.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(record.as_dict(), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    paths["json"] = json_path
    if plots:
        from .plots import emit_plots
        paths["plots"] = emit_plots(record, os.path.join(out_dir, "plots"))
    return paths
