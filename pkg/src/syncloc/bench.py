"""Monte-Carlo sweeps over clock offset and bearing noise.

Every trial is a pure function of ``(config, trial_id, offset, sigma)``:
the scenario seed is derived from the base seed and the trial id only, so all
cells of a sweep share the same trajectories per trial id and any record can
be re-run on its own. Aggregation is a separate pass over the records.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import platform
import statistics
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .errors import (
    CoincidentRobots,
    DegenerateMatrix,
    DegenerateSolution,
    Infeasible,
    InconsistentLift,
    InvalidConfig,
    OutOfRange,
    SingularMarginalization,
    TooFewMeasurements,
    ZeroSolution,
)
from .estimator import ItoConfig, estimate_baseline, estimate_ito, estimate_nto
from .geometry import geodesic_deg
from .sim import SimConfig, simulate_pair

log = logging.getLogger(__name__)

METHODS = ("baseline", "nto", "ito")
STATUSES = ("ok", "not_converged", "degenerate", "solver_failure")


def _grid(start, stop, step):
    n = int(round((stop - start) / step))
    return tuple(round(start + k * step, 10) for k in range(n + 1))


PRESETS = {
    "paper-tolerance": dict(offsets=_grid(0.0, 1.4, 0.02), sigmas=(0.0,), trials=100, methods=("nto", "ito")),
    "desk-tolerance": dict(offsets=_grid(0.0, 1.2, 0.2), sigmas=(0.0,), trials=10, methods=("nto", "ito")),
    "paper-grid": dict(offsets=_grid(0.0, 1.0, 0.1), sigmas=_grid(0.0, 0.1, 0.01), trials=100, methods=METHODS),
    "desk-grid": dict(offsets=(0.0, 0.5, 1.0), sigmas=(0.0, 0.05, 0.1), trials=5, methods=METHODS),
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    sim: SimConfig = SimConfig()
    offsets: tuple = (0.0,)
    sigmas: tuple = (0.0,)
    trials: int = 1
    methods: tuple = METHODS
    ito: ItoConfig = ItoConfig()
    workers: int = 1
    out: str = "results"

    def validate(self) -> None:
        self.sim.validate()
        if len(self.offsets) == 0 or len(self.sigmas) == 0:
            raise InvalidConfig("offset and noise grids must be non-empty")
        if self.trials < 1:
            raise InvalidConfig(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")
        if any(s < 0 for s in self.sigmas):
            raise InvalidConfig("noise levels must be non-negative")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise InvalidConfig(f"unknown methods {sorted(unknown)}")

    def content(self) -> dict:
        """Everything that affects results (excludes workers and output path)."""
        d = dataclasses.asdict(self)
        d.pop("workers")
        d.pop("out")
        d["ito"]["solver"].pop("backend", None)
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.content(), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


_SIM_KEYS = {f.name: f.type for f in dataclasses.fields(SimConfig)}


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def build_config(preset: str | None = None, path=None, **overrides) -> ExperimentConfig:
    """Combine a preset, a ``key = value`` config file and explicit overrides.

    Later sources win. Recognized keys: ``seed``, ``trials``, ``workers``,
    ``out``, ``offsets``, ``sigmas``, ``methods``, ``ito_max_iterations``,
    ``ito_epsilon`` and every :class:`SimConfig` field.
    """
    values: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise InvalidConfig(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read_string("[config]\n" + Path(path).read_text())
        values.update(dict(parser["config"]))
    values.update({k: v for k, v in overrides.items() if v is not None})

    sim_kw, kw, ito_kw = {}, {}, {}
    for key, raw in values.items():
        if key in _SIM_KEYS:
            sim_kw[key] = int(raw) if key in ("num_control", "odom_count", "bearing_count") else float(raw)
        elif key in ("seed", "trials", "workers"):
            kw[key] = int(raw)
        elif key == "out":
            kw[key] = str(raw)
        elif key in ("offsets", "sigmas"):
            kw[key] = _floats(raw) if isinstance(raw, str) else tuple(float(v) for v in raw)
        elif key == "methods":
            kw[key] = tuple(raw.replace(",", " ").split()) if isinstance(raw, str) else tuple(raw)
        elif key == "ito_max_iterations":
            ito_kw["max_iterations"] = int(raw)
        elif key == "ito_epsilon":
            ito_kw["epsilon"] = float(raw)
        else:
            raise InvalidConfig(f"unknown config key {key!r}")
    cfg = ExperimentConfig(sim=SimConfig(**sim_kw), ito=ItoConfig(**ito_kw), **kw)
    cfg.validate()
    return cfg


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    seed: int
    true_offset: float
    sigma: float
    method: str
    offset_error: float
    rotation_error_deg: float
    translation_error_m: float
    cost: float
    rank_ratio: float
    iterations: int
    wall_time_s: float
    status: str
    config_hash: str = ""

    def metrics(self) -> tuple:
        """Fields that must reproduce exactly on a re-run (all but timing)."""
        return (
            self.offset_error, self.rotation_error_deg, self.translation_error_m,
            self.cost, self.rank_ratio, self.iterations, self.status,
        )


RECORD_FIELDS = [f.name for f in dataclasses.fields(TrialRecord)]

_DEGENERATE = (
    SingularMarginalization, DegenerateSolution, DegenerateMatrix, InconsistentLift,
    ZeroSolution, CoincidentRobots, OutOfRange, TooFewMeasurements,
)


def trial_seed(base_seed: int, trial_id: int) -> int:
    return int(np.random.SeedSequence([base_seed, trial_id]).generate_state(1, np.uint32)[0])


def _run_method(method, scenario, config: ExperimentConfig):
    b, ta, tb = scenario.bearings, scenario.traj_a, scenario.traj_b
    if method == "baseline":
        return estimate_baseline(b, ta, tb, config.ito.solver), 1, True, None
    if method == "nto":
        return estimate_nto(b, ta, tb, config.ito.solver), 1, True, None
    res = estimate_ito(b, ta, tb, config.ito)
    return res.estimate, res.iterations, res.converged, res.wall_time


def run_trial(config: ExperimentConfig, trial_id: int, offset: float, sigma: float, methods=None) -> list[TrialRecord]:
    """Simulate one scenario and score each requested method on it."""
    seed = trial_seed(config.seed, trial_id)
    methods = tuple(methods or config.methods)
    common = dict(trial_id=trial_id, seed=seed, true_offset=offset, sigma=sigma, config_hash=config.config_hash)
    scenario = simulate_pair(config.sim, offset=offset, sigma=sigma, seed=seed)
    records = []
    for method in methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                est, iters, converged, wall = _run_method(method, scenario, config)
        except _DEGENERATE as exc:
            log.debug("trial %d %s degenerate: %s", trial_id, method, exc)
            records.append(_failed(common, method, "degenerate"))
            continue
        except (Infeasible, np.linalg.LinAlgError) as exc:
            log.debug("trial %d %s solver failure: %s", trial_id, method, exc)
            records.append(_failed(common, method, "solver_failure"))
            continue
        status = "ok" if converged else "not_converged"
        if est.solver_status != "optimal":
            status = "solver_failure"
        records.append(
            TrialRecord(
                method=method,
                offset_error=abs(est.offset - offset),
                rotation_error_deg=geodesic_deg(est.rotation, scenario.rotation),
                translation_error_m=float(np.linalg.norm(est.translation - scenario.translation)),
                cost=est.cost,
                rank_ratio=est.rank_ratio,
                iterations=iters,
                wall_time_s=est.wall_time if wall is None else wall,
                status=status,
                **common,
            )
        )
    return records


def _failed(common, method, status):
    nan = float("nan")
    return TrialRecord(
        method=method, offset_error=nan, rotation_error_deg=nan, translation_error_m=nan,
        cost=nan, rank_ratio=nan, iterations=0, wall_time_s=nan, status=status, **common,
    )


def rerun_record(config: ExperimentConfig, record: TrialRecord) -> TrialRecord:
    if record.config_hash and record.config_hash != config.config_hash:
        raise InvalidConfig("record was produced by a different configuration")
    (rec,) = run_trial(config, record.trial_id, record.true_offset, record.sigma, [record.method])
    return rec


def _task(args):
    config, trial_id, offset, sigma = args
    return run_trial(config, trial_id, offset, sigma)


def run_sweep(config: ExperimentConfig) -> list[TrialRecord]:
    """All cells x trials x methods, sorted by (offset, sigma, method, trial)."""
    config.validate()
    tasks = [(config, k, o, s) for o in config.offsets for s in config.sigmas for k in range(config.trials)]
    records: list[TrialRecord] = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for recs in pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))):
                records.extend(recs)
    else:
        for t in tasks:
            records.extend(_task(t))
    order = {m: i for i, m in enumerate(METHODS)}
    records.sort(key=lambda r: (r.true_offset, r.sigma, order[r.method], r.trial_id))
    return records


def summarize(records) -> list[dict]:
    """Per (method, offset, sigma) means and medians over successful trials."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.method, r.true_offset, r.sigma), []).append(r)
    rows = []
    order = {m: i for i, m in enumerate(METHODS)}
    for (method, offset, sigma), recs in sorted(groups.items(), key=lambda kv: (order[kv[0][0]], kv[0][1], kv[0][2])):
        good = [r for r in recs if r.status in ("ok", "not_converged")]
        row = dict(method=method, true_offset=offset, sigma=sigma, trials=len(recs))
        for s in STATUSES:
            row[f"n_{s}"] = sum(r.status == s for r in recs)
        for name in ("offset_error", "rotation_error_deg", "translation_error_m", "cost", "rank_ratio", "iterations", "wall_time_s"):
            vals = [getattr(r, name) for r in good]
            row[f"mean_{name}"] = statistics.fmean(vals) if vals else float("nan")
            row[f"median_{name}"] = statistics.median(vals) if vals else float("nan")
        rows.append(row)
    return rows


def write_records(path, records) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RECORD_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in dataclasses.asdict(r).items()})


def read_records(path) -> list[TrialRecord]:
    types = {f.name: f.type for f in dataclasses.fields(TrialRecord)}
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = types[k]
                kw[k] = int(v) if t in (int, "int") else float(v) if t in (float, "float") else v
            out.append(TrialRecord(**kw))
    return out


def write_summary(path, rows) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_manifest(path, config: ExperimentConfig, records, kind: str) -> dict:
    from . import __version__

    counts = {s: sum(r.status == s for r in records) for s in STATUSES}
    doc = {
        "kind": kind,
        "config": config.content(),
        "config_hash": config.config_hash,
        "versions": {
            "syncloc": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "totals": {"records": len(records), "status": counts},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")
    return doc


def save_sweep(config: ExperimentConfig, records, kind: str) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records(out / f"{kind}_records.csv", records)
    write_summary(out / f"{kind}_summary.csv", summarize(records))
    write_manifest(out / f"{kind}_manifest.json", config, records, kind)
    return out


def cmd_tolerance(config: ExperimentConfig) -> list[TrialRecord]:
    """Zero-noise offset sweep of NTO and ITO."""
    config = dataclasses.replace(config, sigmas=(0.0,), methods=("nto", "ito"))
    records = run_sweep(config)
    save_sweep(config, records, "tolerance")
    return records


def cmd_grid(config: ExperimentConfig) -> list[TrialRecord]:
    """Offset x noise grid with all three methods."""
    config = dataclasses.replace(config, methods=METHODS)
    records = run_sweep(config)
    save_sweep(config, records, "grid")
    return records


def cmd_simulate(config: ExperimentConfig, offset: float | None = None, sigma: float | None = None) -> dict:
    """Write one simulated scenario to ``config.out``.

    Uses the first grid entries unless ``offset``/``sigma`` are given.
    Produces ``traj_a.csv``, ``traj_b.csv``, ``bearings.csv`` and ``truth.json``.
    """
    from .io import write_bearings, write_trajectory, write_truth

    config.validate()
    offset = config.offsets[0] if offset is None else float(offset)
    sigma = config.sigmas[0] if sigma is None else float(sigma)
    scenario = simulate_pair(config.sim, offset=offset, sigma=sigma, seed=config.seed)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "traj_a": out / "traj_a.csv",
        "traj_b": out / "traj_b.csv",
        "bearings": out / "bearings.csv",
        "truth": out / "truth.json",
    }
    write_trajectory(paths["traj_a"], scenario.traj_a)
    write_trajectory(paths["traj_b"], scenario.traj_b)
    write_bearings(paths["bearings"], scenario.bearings)
    write_truth(
        paths["truth"], scenario.rotation, scenario.translation, offset,
        sigma=sigma, seed=config.seed, config_hash=config.config_hash,
    )
    return paths


def cmd_estimate(traj_a_path, traj_b_path, bearings_path, method: str = "nto",
                 config: ExperimentConfig = ExperimentConfig(), truth_path=None) -> dict:
    """Run one estimator on files and return a JSON-ready report.

    The report carries ``status`` (one of the record statuses); with a truth
    file it also carries the errors against it.
    """
    from .estimator import estimate_report
    from .io import load_bearings, load_trajectory, load_truth

    if method not in METHODS:
        raise InvalidConfig(f"unknown method {method!r}")
    traj_a = load_trajectory(traj_a_path)
    traj_b = load_trajectory(traj_b_path)
    bearings = load_bearings(bearings_path)
    if method == "baseline":
        result = estimate_baseline(bearings, traj_a, traj_b, config.ito.solver)
        status = "ok"
    elif method == "nto":
        result = estimate_nto(bearings, traj_a, traj_b, config.ito.solver)
        status = "ok"
    else:
        result = estimate_ito(bearings, traj_a, traj_b, config.ito)
        status = "ok" if result.converged else "not_converged"
    est = result.estimate if method == "ito" else result
    if est.solver_status != "optimal":
        status = "solver_failure"
    truth = None
    if truth_path is not None:
        doc = load_truth(truth_path)
        truth = {
            "offset": float(doc["offset"]),
            "translation": doc["translation"].tolist(),
            "rotation_matrix": doc["rotation_matrix"].tolist(),
            "offset_error": abs(est.offset - float(doc["offset"])),
            "rotation_error_deg": geodesic_deg(est.rotation, doc["rotation_matrix"]),
            "translation_error_m": float(np.linalg.norm(est.translation - doc["translation"])),
        }
    report = estimate_report(result, method, truth)
    report["status"] = status
    return report
