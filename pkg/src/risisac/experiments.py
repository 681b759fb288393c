"""Parameter sweeps, seeded Monte Carlo and CSV result tables."""

from __future__ import annotations

import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .benchmarks import BENCHMARKS, run_benchmark, solve_proposed
from .config import ScenarioConfig
from .feasibility import max_detection_probability, minimum_transmit_power, required_T0, udr_search

ARRAY_SIDES = (2, 3, 4, 5)
GAMMAS = (0.5, 0.7, 0.8, 0.9, 0.95)
SPREAD_STEPS = (1.0, 0.75, 0.5, 0.25)
RANGES = (2.0, 2.5, 3.0, 3.5, 4.0)
BENCHMARK_SPREADS = (1, 2, 3, 4)


def _db(x):
    return 10 * np.log10(x) if x > 0 else -np.inf


@dataclass
class ResultTable:
    """Rectangular table of real columns with provenance metadata."""

    name: str
    columns: list
    rows: list
    key_columns: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        width = len(self.columns)
        for r in self.rows:
            if len(r) != width:
                raise ValueError(f"row of length {len(r)} in a table with {width} columns")

    def column(self, name) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(len(self.rows), len(self.columns))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# experiment: {self.name}\n")
        for k, v in self.metadata.items():
            buf.write(f"# {k}: {v}\n")
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(repr(float(x)) for x in r) + "\n")
        return buf.getvalue()

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())


# --------------------------------------------------------------------------
# sweep points (module-level so they can run in worker processes)
# --------------------------------------------------------------------------

def _point_maxpd(config: ScenarioConfig, side: int):
    cfg = config.replace(N_x=side, N_y=side)
    rep = max_detection_probability(cfg.problem())
    return [cfg.N, _db(rep.max_echo_power), rep.U]


def _point_minpower(config: ScenarioConfig, side: int):
    cfg = config.replace(N_x=side, N_y=side)
    p = minimum_transmit_power(cfg.problem())
    return [cfg.N, _db(p)]


def _point_gamma(config: ScenarioConfig, gamma: float):
    prob = config.replace(gamma=gamma).problem()
    sol = solve_proposed(prob)
    return [gamma, sol.snr_db, sol.echo_power_dbm, sol.detection_probability]


def _point_spread(config: ScenarioConfig, step: float):
    delta = step * config.delta_theta
    prob = config.replace(delta_theta=delta, delta_phi=delta).problem()
    return [delta, required_T0(prob)]


def _point_udr(config: ScenarioConfig, side: int):
    cfg = config.replace(N_x=side, N_y=side)
    try:
        res = udr_search(cfg.problem())
    except ValueError:
        # undetectable at every admissible size: no resolution to report
        return [cfg.N, np.nan, np.nan]
    return [cfg.N, res.delta_star, res.area_m2]


def _point_range(config: ScenarioConfig, r_max: float):
    prob = config.replace(r_max=r_max).problem()
    sol = solve_proposed(prob)
    return [r_max, sol.snr_db, sol.echo_power_dbm, sol.detection_probability]


def _point_benchmarks(config: ScenarioConfig, step: int):
    delta = step * np.pi / 16
    prob = config.replace(delta_theta=delta, delta_phi=delta).problem()
    proposed = solve_proposed(prob)
    rows = [[delta, -1, proposed.snr_db, proposed.echo_power_dbm, proposed.detection_probability]]
    for k, kind in enumerate(BENCHMARKS):
        b = run_benchmark(kind, prob, proposed=proposed, seed=config.seed)
        rows.append([delta, k, b.snr_db, b.echo_power_dbm, b.detection_probability])
    return rows


def _convergence(config: ScenarioConfig):
    prob = config.problem()
    return solve_proposed(prob)


def _alg2(config, workers):
    sol = _convergence(config)
    rows = [[k, i, v] for k, tr in enumerate(sol.inner_traces) for i, v in enumerate(tr)]
    return ["outer_iteration", "iteration", "objective"], rows, ("outer_iteration", "iteration"), {}


def _alg3(config, workers):
    sol = _convergence(config)
    rows = [[i, s, _db(s)] for i, s in enumerate(sol.trace)]
    return ["iteration", "snr", "snr_db"], rows, ("iteration",), {
        "final_detection_probability": sol.detection_probability}


def _sweep(fn, values, config, workers):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, [config] * len(values), values))
    return [fn(config, v) for v in values]


def _maxpd(config, workers):
    rows = _sweep(_point_maxpd, ARRAY_SIDES, config, workers)
    return ["N", "max_echo_dbm", "U"], rows, ("N",), {}


def _minpower(config, workers):
    rows = _sweep(_point_minpower, ARRAY_SIDES, config, workers)
    return ["N", "min_power_dbm"], rows, ("N",), {}


def _gamma(config, workers):
    rows = _sweep(_point_gamma, GAMMAS, config, workers)
    return ["gamma", "snr_db", "echo_dbm", "pd"], rows, ("gamma",), {}


def _t0(config, workers):
    rows = _sweep(_point_spread, SPREAD_STEPS, config, workers)
    return ["delta", "t0_required_s"], rows, ("delta",), {}


def _udr(config, workers):
    rows = _sweep(_point_udr, ARRAY_SIDES, config, workers)
    return ["N", "delta_star", "area_m2"], rows, ("N",), {}


def _rmax(config, workers):
    rows = _sweep(_point_range, RANGES, config, workers)
    return ["r_max", "snr_db", "echo_dbm", "pd"], rows, ("r_max",), {}


def _benchmarks(config, workers):
    blocks = _sweep(_point_benchmarks, BENCHMARK_SPREADS, config, workers)
    rows = [r for b in blocks for r in b]
    meta = {"kind_codes": "-1=proposed " + " ".join(f"{k}={n}" for k, n in enumerate(BENCHMARKS)),
            "random_phases_averaging": "linear-domain mean over trials, reported in dB"}
    return ["delta", "kind", "snr_db", "echo_dbm", "pd"], rows, ("delta", "kind"), meta


CATALOG = {
    "alg2-convergence": (_alg2, "inner objective per phase-update iteration"),
    "alg3-convergence": (_alg3, "outer SNR per alternating round"),
    "maxpd-vs-n": (_maxpd, "maximum echo power and detection probability against N"),
    "min-power-vs-n": (_minpower, "minimum transmit power against N"),
    "tradeoff-gamma": (_gamma, "optimized SNR against the detection requirement"),
    "t0-vs-delta": (_t0, "required sensing time against the target spread"),
    "udr-vs-n": (_udr, "ultimate detection resolution against N"),
    "rmax-sweep": (_rmax, "SNR and detection probability against target range"),
    "benchmarks": (_benchmarks, "joint design against the five reference designs"),
}


def catalog_listing() -> str:
    return "\n".join(f"{name:18s} {desc}" for name, (_, desc) in CATALOG.items())


def run_experiment(name: str, config: ScenarioConfig, workers: int = 1) -> ResultTable:
    if name not in CATALOG:
        raise KeyError(f"unknown experiment {name!r}; available:\n{catalog_listing()}")
    t = time.perf_counter()
    cols, rows, keys, meta = CATALOG[name][0](config, workers)
    metadata = {"seed": config.seed, "config_hash": config.config_hash(),
                "wall_clock_s": round(time.perf_counter() - t, 3), **meta}
    return ResultTable(name, cols, [list(map(float, r)) for r in rows], keys, metadata)


def _trial(name, config):
    return run_experiment(name, config)


def monte_carlo(name: str, config: ScenarioConfig, trials: int, base_seed: int,
                workers: int = 1) -> ResultTable:
    """Repeat an experiment on seeds ``base_seed + t`` and aggregate per row.

    Key columns are taken from the first trial; every other column becomes a
    ``_mean`` and a ``_std`` column (sample deviation, 0 for a single trial).
    Rows are matched by position, so sweeps must not change length between
    seeds (convergence traces are truncated to the shortest trial).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    t = time.perf_counter()
    configs = [config.replace(seed=base_seed + k) for k in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            tables = list(pool.map(_trial, [name] * trials, configs))
    else:
        tables = [_trial(name, c) for c in configs]
    first = tables[0]
    n = min(len(tb.rows) for tb in tables)
    data = np.stack([tb.as_array()[:n] for tb in tables])
    keys = [c for c in first.columns if c in first.key_columns]
    values = [c for c in first.columns if c not in first.key_columns]
    mean = data.mean(axis=0)
    std = data.std(axis=0, ddof=1) if trials > 1 else np.zeros_like(mean)
    # identical trials: report the value itself rather than a rounded mean
    same = np.all(data == data[0], axis=0)
    mean[same], std[same] = data[0][same], 0.0
    cols = keys + [f"{c}_{s}" for c in values for s in ("mean", "std")]
    rows = []
    for i in range(n):
        row = [data[0, i, first.columns.index(c)] for c in keys]
        for c in values:
            j = first.columns.index(c)
            row += [mean[i, j], std[i, j]]
        rows.append(row)
    meta = {"seed": base_seed, "trials": trials, "config_hash": config.config_hash(),
            "wall_clock_s": round(time.perf_counter() - t, 3),
            "aggregation": "mean and sample std over trials, seed = base_seed + trial"}
    meta.update({k: v for k, v in first.metadata.items() if k not in ("seed", "config_hash", "wall_clock_s")})
    return ResultTable(name, cols, rows, tuple(keys), meta)
