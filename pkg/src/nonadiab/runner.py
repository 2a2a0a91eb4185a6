"""Run orchestration and persistence.

Executes one run description (exact grid reference or a trajectory method),
samples the time series at the configured stride, takes snapshots, applies
the termination rule, and writes the delimited outputs plus a JSON manifest.
Also implements run comparison and momentum scans.
"""

from __future__ import annotations

import hashlib
import json
import os
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .baselines import MqcEngine, SurfaceHoppingEngine
from .config import MODEL_CLEARANCE, RunConfig, serialize_config
from .ctmqc import CoupledTrajectoryEngine, EhrenfestEngine
from .errors import ConfigError, NumericalAbort
from .grid import (
    SplitOperatorPropagator,
    UniformGrid,
    channel_probabilities,
    edge_probability,
    gauge_invariant_tdpes,
    gaussian_packet,
    observables as grid_observables,
)
from .models import make_model
from .observables import ChannelResult, classify_channels, density_histogram, k0_scan
from .sampling import sample_fixed_momentum, sample_wigner

__all__ = ["RunResult", "Snapshot", "execute", "write_result", "run_config", "compare_runs", "run_scan"]

EDGE_GUARD = 1e-8
STOP_CHECK_INTERVAL = 100
ARM_THRESHOLD = 1e-2
STOP_THRESHOLD = 1e-4

EXACT_SERIES_COLUMNS = ["t", "pop1", "pop2", "coherence", "energy", "norm"]
TRAJ_SERIES_COLUMNS = ["t", "pop1", "pop2", "coherence", "gaugeResidualMax", "normDriftMax"]

_ENGINES = {
    "ctmqc": CoupledTrajectoryEngine,
    "ehrenfest": EhrenfestEngine,
    "tsh": SurfaceHoppingEngine,
    "mqc": MqcEngine,
}


@dataclass
class Snapshot:
    time: float
    kind: str  # "grid" | "trajectories" | "histogram"
    columns: dict
    filename: str


@dataclass
class RunResult:
    config: RunConfig
    series_columns: list[str]
    series: dict[str, np.ndarray]
    channels: ChannelResult | None = None
    snapshots: list[Snapshot] = field(default_factory=list)
    hop_log: list | None = None
    initial_conditions: tuple[np.ndarray, np.ndarray] | None = None
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    final_time: float = 0.0
    status: str = "ok"
    error: str | None = None


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:12]


def _model_for(cfg: RunConfig):
    return make_model(cfg.model_kind, mass=cfg.mass, **cfg.params_dict())


def _auto_cap(cfg: RunConfig) -> float:
    if cfg.t_final is not None:
        return cfg.t_final
    return 3.0 * (abs(cfg.center) + 25.0) * cfg.mass / cfg.k0


def _event_steps(total_steps: int, stride: int, snapshot_steps, check: int):
    events = set(range(stride, total_steps + 1, stride))
    events.update(range(check, total_steps + 1, check))
    events.update(s for s in snapshot_steps if 0 < s <= total_steps)
    events.add(total_steps)
    return sorted(events)


def _snapshot_steps(cfg: RunConfig) -> dict[int, float]:
    return {max(1, int(round(t / cfg.dt))): t for t in cfg.snapshot_times}


def _execute_exact(cfg: RunConfig, threads: int) -> RunResult:
    model = _model_for(cfg)
    grid = UniformGrid(cfg.r_min, cfg.r_max, cfg.grid_n)
    prop = SplitOperatorPropagator(model, grid, cfg.dt)
    psi = gaussian_packet(grid, cfg.center, cfg.k0, cfg.sigma, cfg.state)
    energy0 = prop.total_energy(psi)
    norm0 = psi.norm()
    clearance = MODEL_CLEARANCE[cfg.model_kind]
    inside = np.abs(grid.positions) <= clearance

    series = {name: [] for name in EXACT_SERIES_COLUMNS}

    def record(psi):
        obs = grid_observables(psi)
        series["t"].append(psi.time)
        series["pop1"].append(float(obs.populations[0]))
        series["pop2"].append(float(obs.populations[1]))
        series["coherence"].append(obs.coherence)
        series["energy"].append(prop.total_energy(psi))
        series["norm"].append(psi.norm())

    def take_snapshot(psi, when):
        values, mask = gauge_invariant_tdpes(prop, psi)
        dens = np.abs(psi.amps) ** 2
        columns = {
            "R": grid.positions,
            "density": dens.sum(axis=0),
            "boDensity1": dens[0],
            "boDensity2": dens[1],
            "tdpesGI": values,
            "mask": mask.astype(int),
        }
        return Snapshot(when, "grid", columns, f"grid_{int(round(when / cfg.dt)):08d}.csv")

    record(psi)
    snapshots = []
    snap_steps = _snapshot_steps(cfg)
    total_steps = max(1, int(round(_auto_cap(cfg) / cfg.dt)))
    armed = False
    stopped_early = False
    prev_step = 0
    for event in _event_steps(total_steps, cfg.stride, snap_steps, STOP_CHECK_INTERVAL):
        psi = prop.step(psi, event - prev_step)
        prev_step = event
        if edge_probability(psi) > EDGE_GUARD:
            raise NumericalAbort(
                f"packet reached the grid edge (probability > {EDGE_GUARD:g} within 2 bohr)",
                step=event,
            )
        if event % cfg.stride == 0 or event == total_steps:
            record(psi)
        if event in snap_steps:
            snapshots.append(take_snapshot(psi, psi.time))
        if cfg.stop == "auto":
            inside_mass = float(np.sum(np.abs(psi.amps[:, inside]) ** 2) * grid.dr)
            if inside_mass > ARM_THRESHOLD:
                armed = True
            elif armed and inside_mass < STOP_THRESHOLD:
                stopped_early = True
                if series["t"][-1] != psi.time:
                    record(psi)
                break

    channels = channel_probabilities(psi)
    arrays = {k: np.array(v) for k, v in series.items()}
    norm_drift = float(np.max(np.abs(arrays["norm"] - norm0)))
    energy_drift = float(np.max(np.abs(arrays["energy"] - energy0)) / max(abs(energy0), 1e-300))
    surfaces = Snapshot(
        0.0,
        "surfaces",
        {
            "R": grid.positions,
            "eps1": prop.surfaces.energies[:, 0],
            "eps2": prop.surfaces.energies[:, 1],
            "nacv": prop.surfaces.nacv,
        },
        "surfaces.csv",
    )
    return RunResult(
        config=cfg,
        series_columns=EXACT_SERIES_COLUMNS,
        series=arrays,
        channels=channels,
        snapshots=snapshots + [surfaces],
        diagnostics={
            "normDriftMax": norm_drift,
            "energyDriftRelMax": energy_drift,
            "stoppedEarly": stopped_early,
        },
        final_time=psi.time,
    )


def _sample_initial(cfg: RunConfig, seed: int):
    sampler = sample_wigner if cfg.sampling == "wigner" else sample_fixed_momentum
    return sampler(cfg.center, cfg.k0, cfg.sigma, cfg.n_traj, seed, initial_state=cfg.state)


def _execute_trajectory(cfg: RunConfig, threads: int) -> RunResult:
    model = _model_for(cfg)
    initial = _sample_initial(cfg, cfg.seed)
    engine_cls = _ENGINES[cfg.method]
    engine = engine_cls(model, initial, dt=cfg.dt, substeps=cfg.substeps, threads=threads)
    clearance = MODEL_CLEARANCE[cfg.model_kind]

    series = {name: [] for name in TRAJ_SERIES_COLUMNS}

    def record():
        pops = engine.populations()
        series["t"].append(engine.time)
        series["pop1"].append(float(pops[0]))
        series["pop2"].append(float(pops[1]))
        series["coherence"].append(engine.coherence())
        series["gaugeResidualMax"].append(engine.diagnostics.gauge_residual_last)
        series["normDriftMax"].append(engine.diagnostics.norm_drift_last)

    def take_snapshots(when):
        step_tag = int(round(when / cfg.dt))
        weights = engine.state_weights
        traj = Snapshot(
            when,
            "trajectories",
            {
                "index": np.arange(engine.n_traj),
                "R": engine.positions.copy(),
                "P": engine.momenta.copy(),
                "rho1": weights[:, 0],
                "rho2": weights[:, 1],
                "eps0": engine.surface_mean_energy(),
            },
            f"traj_{step_tag:08d}.csv",
        )
        centers, chi2, f1, f2 = density_histogram(
            engine.positions, weights, support=(cfg.r_min, cfg.r_max)
        )
        hist = Snapshot(
            when,
            "histogram",
            {"R": centers, "chi2": chi2, "F1": f1, "F2": f2},
            f"hist_{step_tag:08d}.csv",
        )
        return [traj, hist]

    record()
    snapshots = []
    snap_steps = _snapshot_steps(cfg)
    total_steps = max(1, int(round(_auto_cap(cfg) / cfg.dt)))
    armed = False
    stopped_early = False
    prev_step = 0
    for event in _event_steps(total_steps, cfg.stride, snap_steps, STOP_CHECK_INTERVAL):
        engine.step(event - prev_step)
        prev_step = event
        if event % cfg.stride == 0 or event == total_steps:
            record()
        if event in snap_steps:
            snapshots.extend(take_snapshots(engine.time))
        if cfg.stop == "auto":
            outside = np.abs(engine.positions) > clearance
            if not outside.all():
                armed = True
            elif armed and np.all(engine.positions * engine.momenta > 0):
                stopped_early = True
                if series["t"][-1] != engine.time:
                    record()
                break

    channels = classify_channels(engine.positions, engine.state_weights)
    engine.close()
    return RunResult(
        config=cfg,
        series_columns=TRAJ_SERIES_COLUMNS,
        series={k: np.array(v) for k, v in series.items()},
        channels=channels,
        snapshots=snapshots,
        hop_log=getattr(engine, "hop_log", None),
        initial_conditions=(initial.positions, initial.momenta) if cfg.dump_initial else None,
        diagnostics={
            "normDriftMax": engine.diagnostics.norm_drift_max,
            "gaugeResidualMax": engine.diagnostics.gauge_residual_max,
            "stoppedEarly": stopped_early,
        },
        final_time=engine.time,
    )


def execute(cfg: RunConfig, *, seed: int | None = None, threads: int | None = None) -> RunResult:
    """Run a description in memory.  Aborts are captured in the result."""
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    effective_threads = threads if threads is not None else cfg.threads
    started = _time.perf_counter()
    try:
        if cfg.method == "exact":
            result = _execute_exact(cfg, effective_threads)
        else:
            result = _execute_trajectory(cfg, effective_threads)
    except NumericalAbort as exc:
        result = RunResult(
            config=cfg,
            series_columns=[],
            series={},
            status="aborted",
            error=str(exc),
        )
    result.wall_time = _time.perf_counter() - started
    return result


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path, columns: dict, metadata: dict | None = None):
    names = list(columns)
    rows = len(next(iter(columns.values()))) if columns else 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key} = {value}\n")
        fh.write(",".join(names) + "\n")
        for i in range(rows):
            fh.write(",".join(_format(columns[name][i]) for name in names) + "\n")


def write_result(result: RunResult, out_dir: str) -> dict:
    """Write series/snapshot/auxiliary CSVs and the JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    meta = {"seed": cfg.seed, "config": config_hash(cfg)}
    if result.series:
        ordered = {name: result.series[name] for name in result.series_columns}
        _write_csv(os.path.join(out_dir, "series.csv"), ordered, meta)
    if result.snapshots:
        snap_dir = os.path.join(out_dir, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        for snap in result.snapshots:
            _write_csv(os.path.join(snap_dir, snap.filename), snap.columns, meta)
    if result.hop_log is not None:
        columns = {
            "trajIndex": [row[0] for row in result.hop_log],
            "step": [row[1] for row in result.hop_log],
            "from": [row[2] for row in result.hop_log],
            "to": [row[3] for row in result.hop_log],
            "accepted": [int(row[4]) for row in result.hop_log],
        }
        _write_csv(os.path.join(out_dir, "hops.csv"), columns, meta)
    if result.initial_conditions is not None:
        positions, momenta = result.initial_conditions
        _write_csv(
            os.path.join(out_dir, "initial_conditions.csv"),
            {"index": np.arange(len(positions)), "R": positions, "P": momenta},
            meta,
        )
    manifest = {
        "version": __version__,
        "status": result.status,
        "error": result.error,
        "method": cfg.method,
        "model": cfg.model_kind,
        "configHash": config_hash(cfg),
        "config": serialize_config(cfg),
        "seed": cfg.seed,
        "wallTime": result.wall_time,
        "finalTime": result.final_time,
        "invariants": result.diagnostics,
        "channels": result.channels.as_dict() if result.channels else None,
        "snapshots": [
            {"time": snap.time, "kind": snap.kind, "file": f"snapshots/{snap.filename}"}
            for snap in result.snapshots
        ],
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def run_config(
    cfg: RunConfig,
    *,
    out_dir: str | None = None,
    seed: int | None = None,
    threads: int | None = None,
) -> tuple[int, RunResult]:
    """Execute and persist one run; returns (exit_code, result)."""
    result = execute(cfg, seed=seed, threads=threads)
    write_result(result, out_dir or cfg.out_dir)
    return (0 if result.status == "ok" else 3), result


# -- comparison ---------------------------------------------------------------


def _load_run(run_dir: str):
    manifest_path = os.path.join(run_dir, "run_manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"{run_dir}: missing run_manifest.json")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    series_path = os.path.join(run_dir, "series.csv")
    series = {}
    if os.path.exists(series_path):
        with open(series_path, encoding="utf-8") as fh:
            lines = [line for line in fh if not line.startswith("#")]
        names = lines[0].strip().split(",")
        data = np.array(
            [[float(cell) for cell in line.strip().split(",")] for line in lines[1:]]
        )
        series = {name: data[:, i] for i, name in enumerate(names)}
    return manifest, series


def compare_runs(run_dirs: list[str]) -> dict:
    """Aligned comparison of ≥2 runs; the exact run (if any) is the reference."""
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    loaded = [(d, *_load_run(d)) for d in run_dirs]
    models = {manifest["model"] for _, manifest, _ in loaded}
    if len(models) > 1:
        raise ConfigError(f"runs use different models: {sorted(models)}")
    ref_idx = next(
        (i for i, (_, manifest, _) in enumerate(loaded) if manifest["method"] == "exact"), 0
    )
    ref_dir, ref_manifest, ref_series = loaded[ref_idx]
    if "t" not in ref_series:
        raise ConfigError(f"{ref_dir}: no time series to compare")
    comparisons = []
    for run_dir, manifest, series in loaded:
        if run_dir == ref_dir:
            continue
        if "t" not in series:
            raise ConfigError(f"{run_dir}: no time series to compare")
        t_lo = max(ref_series["t"][0], series["t"][0])
        t_hi = min(ref_series["t"][-1], series["t"][-1])
        shorter = min(
            ref_series["t"][-1] - ref_series["t"][0], series["t"][-1] - series["t"][0]
        )
        if t_hi <= t_lo or (shorter > 0 and (t_hi - t_lo) < 0.5 * shorter):
            raise ConfigError(f"{run_dir}: time grids barely overlap with {ref_dir}")
        window = (series["t"] >= t_lo) & (series["t"] <= t_hi)
        times = series["t"][window]
        entry = {"dir": run_dir, "method": manifest["method"], "overlap": [t_lo, t_hi]}
        for column in ("pop1", "pop2", "coherence"):
            ref_interp = np.interp(times, ref_series["t"], ref_series[column])
            delta = series[column][window] - ref_interp
            entry[column] = {
                "max": float(np.max(np.abs(delta))),
                "rms": float(np.sqrt(np.mean(delta**2))),
                "final": float(delta[-1]),
            }
        if manifest.get("channels") and ref_manifest.get("channels"):
            entry["channels"] = {
                key: manifest["channels"][key] - ref_manifest["channels"][key]
                for key in ("T1", "T2", "R1", "R2")
            }
        comparisons.append(entry)
    return {
        "reference": {"dir": ref_dir, "method": ref_manifest["method"]},
        "model": ref_manifest["model"],
        "comparisons": comparisons,
    }


def format_comparison(report: dict) -> str:
    lines = [
        f"model: {report['model']}   reference: {report['reference']['dir']} "
        f"({report['reference']['method']})",
        f"{'run':<28}{'method':<10}{'pop1 max':>10}{'pop1 rms':>10}"
        f"{'coh max':>10}{'coh rms':>10}{'dT1':>8}{'dR1':>8}",
    ]
    for entry in report["comparisons"]:
        channels = entry.get("channels") or {}
        lines.append(
            f"{os.path.basename(entry['dir'].rstrip('/')) or entry['dir']:<28}"
            f"{entry['method']:<10}"
            f"{entry['pop1']['max']:>10.4f}{entry['pop1']['rms']:>10.4f}"
            f"{entry['coherence']['max']:>10.4f}{entry['coherence']['rms']:>10.4f}"
            f"{channels.get('T1', float('nan')):>8.3f}{channels.get('R1', float('nan')):>8.3f}"
        )
    return "\n".join(lines)


# -- momentum scans -----------------------------------------------------------


def run_scan(cfg: RunConfig, *, threads: int | None = None, out_dir: str | None = None) -> dict:
    """Channel probabilities vs initial momentum for the configured methods."""
    if not cfg.scan_k0:
        raise ConfigError("scan requires a [scan] k0 list")
    effective_threads = threads if threads is not None else cfg.threads

    def run_point(k0: float):
        by_method = {}
        for method in cfg.scan_methods:
            point = replace(
                cfg.with_k0(k0),
                method=method,
                dt=cfg.dt if method == cfg.method else (0.1 if method == "exact" else 0.5),
                t_final=cfg.t_final,
                stop=cfg.stop if cfg.t_final is not None else "auto",
            )
            result = execute(point, threads=1)
            if result.status != "ok":
                raise NumericalAbort(f"{method} at k0={k0:g}: {result.error}")
            by_method[method] = result.channels
        return by_method

    rows = k0_scan(run_point, cfg.scan_k0, threads=effective_threads)
    target = out_dir or cfg.out_dir
    os.makedirs(target, exist_ok=True)
    columns = {name: [] for name in ("k0", "T1", "T2", "R1", "R2", "method", "model")}
    for row in rows:
        for method, channels in row["channels"].items():
            columns["k0"].append(row["k0"])
            columns["T1"].append(channels.t1)
            columns["T2"].append(channels.t2)
            columns["R1"].append(channels.r1)
            columns["R2"].append(channels.r2)
            columns["method"].append(method)
            columns["model"].append(cfg.model_kind)
    path = os.path.join(target, "scan.csv")
    names = list(columns)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# seed = {cfg.seed}\n# config = {config_hash(cfg)}\n")
        fh.write(",".join(names) + "\n")
        for i in range(len(columns["k0"])):
            cells = []
            for name in names:
                value = columns[name][i]
                cells.append(value if isinstance(value, str) else _format(value))
            fh.write(",".join(cells) + "\n")
    manifest = {
        "version": __version__,
        "mode": "scan",
        "model": cfg.model_kind,
        "methods": list(cfg.scan_methods),
        "configHash": config_hash(cfg),
        "config": serialize_config(cfg),
        "rows": [
            {"k0": row["k0"], "error": row["error"]}
            for row in rows
        ],
    }
    with open(os.path.join(target, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"rows": rows, "csv": path}
