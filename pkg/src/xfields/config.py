"""Experiment configuration files: TOML with a strict, defaulted schema."""

import hashlib
import json
import re
from dataclasses import dataclass, field

import tomli

from .errors import ParseError, ValidationError

EXPERIMENTS = (
    "resolvent-scan", "mourre-scan", "weighted-mourre-scan", "certificate", "detector",
    "propagator-validate", "unboundedness-demo", "diagnostics",
)


def _num(lo=None, hi=None, lo_open=False, hi_open=False, integer=False):
    def check(name, v):
        ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok_type:
            raise ValidationError(name, f"{name} must be {'an integer' if integer else 'a number'}")
        lo_ok = lo is None or (v > lo if lo_open else v >= lo)
        hi_ok = hi is None or (v < hi if hi_open else v <= hi)
        if not (lo_ok and hi_ok):
            left = "(" if lo_open else "["
            right = ")" if hi_open else "]"
            lo_s = "-inf" if lo is None else f"{lo:g}"
            hi_s = "inf" if hi is None else f"{hi:g}"
            raise ValidationError(name, f"{name} must be in {left}{lo_s}, {hi_s}{right}")
        return int(v) if integer else float(v)
    return check


def _choice(*options):
    def check(name, v):
        if v not in options:
            raise ValidationError(name, f"{name} must be one of {', '.join(map(str, options))}")
        return v
    return check


def _bool(name, v):
    if not isinstance(v, bool):
        raise ValidationError(name, f"{name} must be true or false")
    return v


def _num_list(lo=None, hi=None, min_len=1):
    item = _num(lo, hi)

    def check(name, v):
        if not isinstance(v, list) or len(v) < min_len:
            raise ValidationError(name, f"{name} must be a list with at least {min_len} entries")
        return [item(name, x) for x in v]
    return check


def _int_list(lo, hi):
    item = _num(lo, hi, integer=True)

    def check(name, v):
        if not isinstance(v, list) or not v:
            raise ValidationError(name, f"{name} must be a non-empty list of integers")
        return [item(name, x) for x in v]
    return check


def _optional(check):
    def wrapped(name, v):
        return None if v is None else check(name, v)
    return wrapped


# section -> key -> (validator, default)
SCHEMA = {
    "": {
        "experiment": (_choice(*EXPERIMENTS), None),
        "seed": (_num(0, 2**32 - 1, integer=True), 42),
        "threads": (_num(1, 256, integer=True), 1),
        "output_dir": (lambda n, v: str(v), "out"),
    },
    "grid": {
        "x_min": (_num(), -30.0), "x_max": (_num(), 30.0),
        "y_min": (_num(), -30.0), "y_max": (_num(), 30.0),
        "n_x": (_num(8, 4096, integer=True), 256), "n_y": (_num(8, 4096, integer=True), 256),
        "backend": (_choice("fd_dirichlet", "periodic_spectral"), "fd_dirichlet"),
        "absorber_width": (_num(0, None), 8.0),
        "absorber_strength": (_num(0, None), 4.0),
        "stark": (_bool, True),
    },
    "potential": {
        "kind": (_choice("none", "strip", "gaussian_well"), "none"),
        "A0": (_num(0, None), 1.0),
        "s_decay": (_num(0.5, 0.75, True, True), 0.7),
        "eta0": (_num(0, 1, True, True), 0.1),
        "beta": (_num(), 0.0),
        "depth": (_num(0, None), 2.0),
        "width": (_num(0, None, lo_open=True), 1.0),
    },
    "weights": {
        "gamma": (_num(0, 0.5, True, True), 0.4),
        "delta": (_num(0, 2, lo_open=True), 2.0),
        "theta": (_num(0, 0.5, lo_open=True), 0.5),
        "eta0": (_optional(_num(0, 1, True, True)), None),
        "beta": (_num(), 0.0),
        "a": (_num(1, None, lo_open=True), 4.0),
        "bridge": (_choice("smooth", "septic", "linear_blend"), "smooth"),
        "edge": (_num(0, None, lo_open=True), 0.2),
    },
    "scan": {
        "lam": (_optional(_num_list()), None),
        "lam_min": (_optional(_num()), None),
        "lam_max": (_optional(_num()), None),
        "lam_points": (_num(1, 10_000, integer=True), 8),
        "lam_spacing": (_choice("linear", "log"), "linear"),
        "nu": (_optional(_num_list(1e-3, 1)), None),
        "R": (_num(0, None, lo_open=True), 5.0),
        "nu_sweep": (_num_list(1e-3, 1, min_len=3), [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]),
        "coarse_nu": (_num(1e-3, 1), 0.1),
        "check_eta": (_bool, True),
        "C_R_gamma": (_optional(_num(0, None, lo_open=True)), None),
        "B_R_gamma": (_optional(_num(0, None, lo_open=True)), None),
        "crosscheck": (_bool, False),
        "t_list": (_num_list(0, None), [0.2, 0.5, 1.0]),
        "steps_per_unit": (_num(100, None, integer=True), 400),
        "n_list": (_int_list(0, 60), [0, 5, 10, 20, 40]),
        "plots": (_bool, True),
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 42
    threads: int = 1
    output_dir: str = "out"
    grid: dict = field(default_factory=dict)
    potential: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)

    def as_dict(self):
        return {"experiment": self.experiment, "seed": self.seed, "threads": self.threads,
                "output_dir": self.output_dir, "grid": dict(self.grid),
                "potential": dict(self.potential), "weights": dict(self.weights),
                "scan": dict(self.scan)}

    def hash(self):
        """SHA-256 of the canonical config, excluding where results are written."""
        d = self.as_dict()
        d.pop("output_dir")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _validate_section(section, raw):
    schema = SCHEMA[section]
    out = {}
    for key, value in raw.items():
        if key not in schema:
            where = f"[{section}]" if section else "top level"
            raise ValidationError(key, f"unknown key {key!r} in {where}")
        out[key] = schema[key][0](key, value)
    for key, (_, default) in schema.items():
        out.setdefault(key, default)
    return out


def _cross_checks(cfg):
    g = cfg.grid
    if not (g["x_min"] < g["x_max"] and g["y_min"] < g["y_max"]):
        raise ValidationError("grid", "grid extents must satisfy x_min < x_max and y_min < y_max")
    s = cfg.scan
    if s["lam"] is None and (s["lam_min"] is None) != (s["lam_max"] is None):
        raise ValidationError("lam_min", "lam_min and lam_max must be given together")
    if s["lam_min"] is not None and s["lam_max"] is not None and s["lam_min"] > s["lam_max"]:
        raise ValidationError("lam_min", "lam_min must not exceed lam_max")
    if s["lam_spacing"] == "log" and s["lam_min"] is not None and s["lam_min"] <= 0:
        raise ValidationError("lam_min", "log spacing needs lam_min > 0")


def config_from_dict(data, experiment=None):
    """Validate a parsed mapping into an :class:`ExperimentConfig`."""
    data = dict(data)
    sections = {}
    for name in ("grid", "potential", "weights", "scan"):
        raw = data.pop(name, {})
        if not isinstance(raw, dict):
            raise ValidationError(name, f"[{name}] must be a table")
        sections[name] = _validate_section(name, raw)
    top = _validate_section("", data)
    if experiment is not None:
        if top["experiment"] is not None and top["experiment"] != experiment:
            raise ValidationError("experiment",
                                  f"config is for {top['experiment']!r}, not {experiment!r}")
        top["experiment"] = _choice(*EXPERIMENTS)("experiment", experiment)
    if top["experiment"] is None:
        raise ValidationError("experiment", f"experiment must be one of {', '.join(EXPERIMENTS)}")
    cfg = ExperimentConfig(top["experiment"], top["seed"], top["threads"], top["output_dir"],
                           **sections)
    _cross_checks(cfg)
    return cfg


_POS = re.compile(r"line (\d+), column (\d+)")


def parse_text(text):
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        if line is None:
            m = _POS.search(str(exc))
            line, col = (int(m.group(1)), int(m.group(2))) if m else (0, 0)
        msg = getattr(exc, "msg", str(exc))
        raise ParseError(msg, line, col) from exc


def load_config(path, experiment=None):
    """Read, parse and validate a config file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return config_from_dict(parse_text(text), experiment)
