"""Deterministic SVG figures for result records."""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import EmptyRecord  # noqa: E402

_RC = {"svg.hashsalt": "xfields", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def _check(rows):
    if not rows:
        raise EmptyRecord("nothing to plot")


def decay_plot(rows, fit=None, path="decay.svg"):
    """Log-log norm vs lambda with the fitted line and the time-integral envelope."""
    _check(rows)
    lam = np.array([r["lam"] for r in rows])
    norm = np.array([r["norm"] for r in rows])
    order = np.argsort(lam)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(lam[order], norm[order], "o-", label="measured")
    if "envelope" in rows[0]:
        env = np.array([r["envelope"] for r in rows])
        ax.loglog(lam[order], env[order], "--", label="envelope")
    if fit is not None and fit.get("fitted_exponent") is not None:
        slope, icpt = fit["fitted_exponent"], fit.get("intercept")
        if icpt is None:
            icpt = float(np.mean(np.log(norm) - slope * np.log(lam)))
        ax.loglog(lam[order], np.exp(icpt) * lam[order] ** slope, ":", label=f"slope {slope:.3f}")
    ax.set_xlabel("lambda")
    ax.set_ylabel("weighted resolvent norm")
    ax.legend()
    return _save(fig, path)


def uniformity_plot(rows, path="uniformity.svg"):
    """Norm against 1/nu, one curve per lambda (and per weight tag if present)."""
    _check(rows)
    fig, ax = plt.subplots(figsize=(5, 4))
    keys = sorted({(r.get("tag", ""), r["lam"]) for r in rows})
    for tag, lam in keys:
        sel = sorted((r for r in rows if r.get("tag", "") == tag and r["lam"] == lam),
                     key=lambda r: r["nu"])
        inv = [1 / r["nu"] for r in sel]
        ax.semilogx(inv, [r["norm"] for r in sel], "o-", label=f"{tag} lam={lam:g}".strip())
    ax.set_xlabel("1/nu")
    ax.set_ylabel("weighted resolvent norm")
    ax.legend(fontsize=6)
    return _save(fig, path)


def unboundedness_plot(rows, path="unboundedness.svg"):
    """||L_1 Psi_n||^2 against 2n+1 with the lower-bound line."""
    _check(rows)
    x = np.array([2 * r["n"] + 1 for r in rows], float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(x, [r["value"] for r in rows], "o-", label="computed")
    ax.plot(x, [r["bound"] for r in rows], "--", label="lower bound")
    ax.set_xlabel("2n + 1")
    ax.set_ylabel("squared norm")
    ax.legend()
    return _save(fig, path)


def default_kinds(record):
    if record.experiment == "resolvent-scan":
        return ("decay",)
    if record.experiment in ("mourre-scan", "weighted-mourre-scan", "certificate"):
        return ("uniformity",)
    if record.experiment == "unboundedness-demo":
        return ("unboundedness",)
    return ()


def emit_plots(record, out_dir, kinds=None):
    """Write the requested figures (default: those that apply) and return their paths."""
    if not record.rows:
        raise EmptyRecord("record has no rows")
    kinds = default_kinds(record) if kinds is None else tuple(kinds)
    rows = [r for r in record.rows if "norm" in r and "lam" in r]
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if "decay" in kinds:
        paths.append(decay_plot(rows, record.constants, os.path.join(out_dir, "decay.svg")))
    if "uniformity" in kinds and any("nu" in r for r in rows):
        paths.append(uniformity_plot([r for r in rows if "nu" in r],
                                     os.path.join(out_dir, "uniformity.svg")))
    if "unboundedness" in kinds:
        paths.append(unboundedness_plot(record.rows, os.path.join(out_dir, "unboundedness.svg")))
    return paths
