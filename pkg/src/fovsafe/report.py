"""Run outputs: delimited log, summary, raw plot series, and rendered figures.

All numbers are written with 9 significant digits so a rerun of the same
configuration and seed produces byte-identical files.
"""
from __future__ import annotations

import os

from .scenarios import STATUS_NAMES, summarize

FMT = "%.9g"


def _fmt(x):
    return FMT % x


def csv_header(n_feat):
    cols = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"]
    cols += [f"h{i + 1}" for i in range(n_feat)]
    cols += ["min_h", "err"]
    cols += [f"u{i + 1}" for i in range(6)]
    for i in range(n_feat):
        cols += [f"cpos_f{i + 1}", f"catt_f{i + 1}"]
    cols.append("qp_status")
    return ",".join(cols)


def write_csv(log, path):
    """One row per log record; see csv_header for the column layout."""
    n_feat = log.h.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(csv_header(n_feat) + "\n")
        for k in range(len(log)):
            vals = [log.t[k], *log.p[k], *log.quat[k], *log.h[k],
                    log.min_h[k], log.err[k], *log.u_filt[k], *log.c[k]]
            fh.write(",".join(_fmt(v) for v in vals))
            fh.write("," + STATUS_NAMES[int(log.qp_status[k])] + "\n")


def write_summary(log, path):
    s = summarize(log)
    lines = [
        f"kind = {log.config.kind}",
        f"duration = {_fmt(log.config.duration)}",
        f"dt = {_fmt(log.config.dt)}",
        f"min_h = {_fmt(s.min_h)}",
        f"max_tracking_error = {_fmt(s.max_tracking_error)}",
        f"rms_tracking_error = {_fmt(s.rms_tracking_error)}",
        f"infeasible_steps = {s.infeasible_steps}",
        f"max_c2_used = {_fmt(s.max_c2_used)}",
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return s


def write_plot_data(log, outdir):
    """Two-column series for external plotting: time against min_h and err."""
    os.makedirs(outdir, exist_ok=True)
    for name, series in (("min_h", log.min_h), ("tracking_error", log.err)):
        path = os.path.join(outdir, f"{name}.tsv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for t, y in zip(log.t, series):
                fh.write(f"{_fmt(t)}\t{_fmt(y)}\n")


def render_figures(log, outdir):
    """Render the two run figures to PNG files and return their paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(outdir, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    for i in range(log.h.shape[1]):
        ax.plot(log.t, log.h[:, i], lw=0.8, alpha=0.6, label=f"feature {i + 1}")
    ax.plot(log.t, log.min_h, "k", lw=1.4, label="min")
    ax.axhline(0.0, color="r", ls="--", lw=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("cone margin h")
    ax.legend(fontsize=7, ncol=2)
    path = os.path.join(outdir, "barrier_margin.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    ax.plot(log.t, log.err, lw=1.2)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("tracking error [m]")
    path = os.path.join(outdir, "tracking_error.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)
    return paths
