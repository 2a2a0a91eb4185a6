"""Deterministic figure rendering from delimited simulation outputs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["PlotError", "FigureSpec", "load_spec", "render"]

FIGURE_KINDS = ("series", "snapshot", "scan")

# fixed styling so re-rendering a spec is pixel-stable
RC_PARAMS = {
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "legend.fontsize": 8.5,
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "lines.linewidth": 1.6,
}

METHOD_STYLES = {
    "exact": {"color": "#c62828", "linewidth": 2.2, "zorder": 5},
    "ctmqc": {"color": "#2e7d32", "linewidth": 1.6, "zorder": 4},
    "tsh": {"color": "#1565c0", "linewidth": 1.4, "zorder": 3},
    "ehrenfest": {"color": "#00acc1", "linewidth": 1.4, "zorder": 3},
    "mqc": {"color": "#ef6c00", "linewidth": 1.4, "zorder": 3},
}
FALLBACK_STYLE = {"color": "#757575", "linewidth": 1.2, "zorder": 2}

SERIES_COLUMNS = ("t", "pop1", "pop2", "coherence")
GRID_COLUMNS = ("R", "density", "boDensity1", "boDensity2", "tdpesGI", "mask")
SURFACE_COLUMNS = ("R", "eps1", "eps2")
TRAJECTORY_COLUMNS = ("R", "rho1", "rho2", "eps0")
HISTOGRAM_COLUMNS = ("R", "chi2", "F1", "F2")
SCAN_COLUMNS = ("k0", "T1", "T2", "R1", "R2", "method", "model")


class PlotError(ValueError):
    """Unusable figure description or input file."""


@dataclass
class FigureSpec:
    """One figure: kind, input files, styling and the output path."""

    kind: str
    output: str
    title: str = ""
    inputs: list[dict] = field(default_factory=list)  # series kind
    grid: str | None = None  # snapshot kind
    surfaces: str | None = None
    trajectories: str | None = None
    histogram: str | None = None
    input: str | None = None  # scan kind
    styles: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise PlotError(f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}")
        if not self.output:
            raise PlotError("figure spec needs an 'output' path")
        if self.kind == "series" and not self.inputs:
            raise PlotError("series figure needs a non-empty 'inputs' list")
        if self.kind == "snapshot" and not self.grid and not self.trajectories:
            raise PlotError("snapshot figure needs 'grid' and/or 'trajectories' inputs")
        if self.kind == "scan" and not self.input:
            raise PlotError("scan figure needs an 'input' table")


def load_spec(path: str) -> FigureSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise PlotError(f"spec file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise PlotError(f"{path}: not valid JSON ({exc})") from None
    known = {f for f in FigureSpec.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise PlotError(f"{path}: unknown spec fields {sorted(unknown)}")
    if "kind" not in raw:
        raise PlotError(f"{path}: spec is missing 'kind'")
    spec = FigureSpec(**raw)
    # resolve input paths relative to the spec file
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if p is None or os.path.isabs(p) else os.path.join(base, p)

    spec.grid = resolve(spec.grid)
    spec.surfaces = resolve(spec.surfaces)
    spec.trajectories = resolve(spec.trajectories)
    spec.histogram = resolve(spec.histogram)
    spec.input = resolve(spec.input)
    spec.output = resolve(spec.output)
    for entry in spec.inputs:
        if "path" not in entry:
            raise PlotError(f"{path}: series input entries need a 'path'")
        entry["path"] = resolve(entry["path"])
    return spec


def _read_table(path: str, required: tuple[str, ...], string_columns: tuple[str, ...] = ()):
    """CSV reader: '#' metadata lines skipped, named-column access, checked."""
    if not os.path.exists(path):
        raise PlotError(f"input file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if not line.startswith("#")]
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise PlotError(f"{path}: file is empty")
    names = [cell.strip() for cell in lines[0].split(",")]
    for column in required:
        if column not in names:
            raise PlotError(f"{path}: missing column {column!r}")
    if len(lines) < 2:
        raise PlotError(f"{path}: no data rows")
    cells = [line.split(",") for line in lines[1:]]
    table = {}
    for j, name in enumerate(names):
        column = [row[j].strip() for row in cells]
        if name in string_columns:
            table[name] = np.array(column)
        else:
            try:
                table[name] = np.array([float(value) for value in column])
            except ValueError:
                raise PlotError(f"{path}: column {name!r} is not numeric") from None
    return table


def _style_for(method: str, overrides: dict) -> dict:
    style = dict(METHOD_STYLES.get(method, FALLBACK_STYLE))
    style.update(overrides.get(method, {}))
    return style


def _render_series(spec: FigureSpec, axes):
    ax_pop, ax_coh = axes
    for entry in spec.inputs:
        method = entry.get("method", os.path.basename(os.path.dirname(entry["path"])) or "run")
        table = _read_table(entry["path"], SERIES_COLUMNS)
        style = _style_for(method, spec.styles)
        ax_pop.plot(table["t"], table["pop1"], label=method, **style)
        ax_pop.plot(table["t"], table["pop2"], linestyle="--", **style)
        ax_coh.plot(table["t"], table["coherence"], label=method, **style)
    ax_pop.set_ylabel("BO populations")
    ax_pop.set_ylim(-0.05, 1.05)
    ax_pop.legend(loc="center right")
    ax_coh.set_ylabel("decoherence indicator")
    ax_coh.set_xlabel("time (a.u.)")
    ax_coh.set_ylim(bottom=-0.01)


def _render_snapshot(spec: FigureSpec, axes):
    ax_pot, ax_dens = axes
    xlim = None
    if spec.grid:
        grid = _read_table(spec.grid, GRID_COLUMNS)
        live = grid["density"] > 1e-6 * grid["density"].max()
        if live.any():
            xlim = (grid["R"][live].min() - 5.0, grid["R"][live].max() + 5.0)
        ax_pot.plot(grid["R"], grid["tdpesGI"], color="#c62828", linewidth=2.0,
                    label="gauge-invariant potential", zorder=4)
        ax_dens.plot(grid["R"], grid["density"], color="black", linewidth=1.8, label="|chi|^2")
        ax_dens.plot(grid["R"], grid["boDensity1"], color="#ef6c00", label="state 1")
        ax_dens.plot(grid["R"], grid["boDensity2"], color="#00acc1", label="state 2")
    if spec.surfaces:
        surf = _read_table(spec.surfaces, SURFACE_COLUMNS)
        ax_pot.plot(surf["R"], surf["eps1"], color="black", linewidth=0.9, zorder=2)
        ax_pot.plot(surf["R"], surf["eps2"], color="black", linewidth=0.9, zorder=2,
                    label="BO surfaces")
        pad = 0.35 * (surf["eps2"].max() - surf["eps1"].min() + 1e-12)
        ax_pot.set_ylim(surf["eps1"].min() - pad, surf["eps2"].max() + pad)
    if spec.trajectories:
        traj = _read_table(spec.trajectories, TRAJECTORY_COLUMNS)
        ax_pot.plot(traj["R"], traj["eps0"], "o", color="#1565c0", markersize=3.0,
                    alpha=0.8, linestyle="none", label="trajectories", zorder=5)
        if xlim is None and len(traj["R"]):
            xlim = (traj["R"].min() - 5.0, traj["R"].max() + 5.0)
    if spec.histogram:
        hist = _read_table(spec.histogram, HISTOGRAM_COLUMNS)
        live = hist["chi2"] > 0
        ax_dens.plot(hist["R"][live], hist["F1"][live], "o", color="#ef6c00",
                     markersize=3.0, linestyle="none")
        ax_dens.plot(hist["R"][live], hist["F2"][live], "o", color="#00acc1",
                     markersize=3.0, linestyle="none")
    if xlim is not None:
        ax_pot.set_xlim(*xlim)
        ax_dens.set_xlim(*xlim)
    ax_pot.set_ylabel("energy (hartree)")
    ax_pot.legend(loc="upper right")
    ax_dens.set_ylabel("density (1/bohr)")
    ax_dens.set_xlabel("R (bohr)")
    ax_dens.legend(loc="upper right")


def _render_scan(spec: FigureSpec, axes):
    table = _read_table(spec.input, SCAN_COLUMNS, string_columns=("method", "model"))
    channels = ("T1", "T2", "R1", "R2")
    methods = list(dict.fromkeys(table["method"]))
    for ax, channel in zip(axes.ravel(), channels):
        for method in methods:
            rows = table["method"] == method
            order = np.argsort(table["k0"][rows])
            style = _style_for(method, spec.styles)
            if method == "exact":
                ax.plot(table["k0"][rows][order], table[channel][rows][order],
                        label=method, **style)
            else:
                color = style.get("color", FALLBACK_STYLE["color"])
                ax.plot(table["k0"][rows][order], table[channel][rows][order], "o",
                        color=color, markersize=4.5, linestyle="none",
                        label=method, zorder=style.get("zorder", 3))
        ax.set_title(channel)
        ax.set_ylim(-0.05, 1.05)
    for ax in axes[-1]:
        ax.set_xlabel("initial momentum (a.u.)")
    for ax in axes[:, 0]:
        ax.set_ylabel("probability")
    axes[0, 0].legend(loc="best")


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path."""
    with plt.rc_context(RC_PARAMS):
        if spec.kind == "series":
            fig, axes = plt.subplots(2, 1, figsize=(6.4, 6.2), sharex=True)
            _render_series(spec, axes)
        elif spec.kind == "snapshot":
            fig, axes = plt.subplots(2, 1, figsize=(6.4, 6.2), sharex=True)
            _render_snapshot(spec, axes)
        else:
            fig, axes = plt.subplots(2, 2, figsize=(7.6, 6.2), sharex=True)
            _render_scan(spec, axes)
        if spec.title:
            fig.suptitle(spec.title)
        fig.tight_layout()
        out_dir = os.path.dirname(spec.output)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        fig.savefig(spec.output, metadata={"Software": "nonadiab-plotkit"})
        plt.close(fig)
    return spec.output
