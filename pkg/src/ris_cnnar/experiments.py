"""Monte Carlo experiments regenerating the NMSE, spectral-efficiency and overhead results as CSV."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .ar import fit_ar_from_csi, predict_multi
from .beamforming import nmse_per_trial, optimize_phases_batch, pilot_overhead, spectral_efficiency
from .channel import generate_traces
from .classifier import DopplerClassBank, cnn_ar_predict
from .estimation import PilotEstimator, split_estimate
from .scenario import Geometry, SystemConfig, config_hash

EXPERIMENTS = ("nmse-vs-horizon", "nmse-vs-doppler", "se-vs-distance", "overhead")
BASELINE_ORDERS = (8, 16, 24)
BASELINE_ORDER = 8          # single AR baseline used for the Doppler and SE sweeps
REFERENCE_DOPPLER_HZ = 50.0
SE_DISTANCES = (1.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)
SE_VERTICAL = (2.0, 3.0)
OVERHEAD_V = (10, 20, 30, 40)
OVERHEAD_P = (5, 10, 20, 40)

_TAGS = {name: i for i, name in enumerate(EXPERIMENTS)}


@dataclass
class ExperimentSpec:
    experiment: str
    config_path: str | None = None
    trials: int = 200
    out_dir: str = "results"
    seed: int = 0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class ResultTable:
    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, *cells):
        if len(cells) != len(self.columns):
            raise ValueError(f"row has {len(cells)} cells, table has {len(self.columns)} columns")
        self.rows.append(list(cells))

    def column(self, name):
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def select(self, **match):
        idx = {k: self.columns.index(k) for k in match}
        return [dict(zip(self.columns, row)) for row in self.rows
                if all(row[i] == match[k] for k, i in idx.items())]

    def to_csv(self) -> str:
        """CSV text; only reproducible metadata goes into the ``#`` preamble."""
        lines = [f"# {key}={self.metadata[key]}" for key in ("experiment", "config_hash", "seed", "trials", "version")
                 if key in self.metadata]
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(_cell(c) for c in row))
        return "\n".join(lines) + "\n"

    def write(self, out_dir, wall_clock: float | None = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.name}.csv"
        path.write_text(self.to_csv(), encoding="utf-8")
        meta = dict(self.metadata)
        if wall_clock is not None:
            meta["wall_clock_s"] = wall_clock
        (out / f"{self.name}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                                     encoding="utf-8")
        return path


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _stats(samples) -> tuple[float, float, float]:
    q25, med, q75 = np.nanpercentile(np.asarray(samples, dtype=float), [25, 50, 75])
    return float(med), float(q25), float(q75)


def _metadata(spec: ExperimentSpec, cfg: SystemConfig, geom: Geometry) -> dict:
    return {"experiment": spec.experiment, "config_hash": config_hash(cfg, geom),
            "seed": spec.seed, "trials": spec.trials, "version": __version__}


def trial_rng(seed: int, experiment: str, *index) -> np.random.Generator:
    return np.random.default_rng([seed, _TAGS[experiment], *index])


# -- per-trial simulation -----------------------------------------------------

@dataclass
class TrialData:
    truth: np.ndarray      # (K, V+P, N(M+1)) true stacked channels
    history: np.ndarray    # (K, V, N(M+1)) LS estimates over the training phase
    n_antennas: int

    def reference(self, stacked) -> np.ndarray:
        d, G = split_estimate(stacked, self.n_antennas)
        return d + G.sum(axis=-1)


def simulate_trial(cfg: SystemConfig, geom: Geometry, f_n: float, rng,
                   estimator: PilotEstimator) -> TrialData:
    V, P = cfg.train_intervals, cfg.predict_intervals
    traces = generate_traces(cfg, geom, f_n, V + P, rng)
    truth = np.stack([t.stacked() for t in traces])
    history = np.stack([estimator.estimate(t, k, np.arange(V), rng) for k, t in enumerate(traces)])
    return TrialData(truth, history, cfg.n_bs_antennas)


def baseline_predict(history, Q: int, epsilon: float, P: int) -> np.ndarray:
    """Per-user AR(Q) fitted on that user's own estimated history."""
    return np.stack([predict_multi(h, fit_ar_from_csi(h, Q, epsilon), P) for h in history])


def cnn_predict(history, net, bank, P: int, n_antennas: int, labels=None) -> np.ndarray:
    out = []
    for k, h in enumerate(history):
        label = None if labels is None else labels[k]
        out.append(cnn_ar_predict(h, net, bank, P, n_antennas, label=label)[0])
    return np.stack(out)


def _horizon_nmse(data: TrialData, predicted, V: int) -> np.ndarray:
    """User-averaged NMSE of the reference-phase channel at each horizon, shape (P,)."""
    P = predicted.shape[1]
    truth = data.reference(data.truth[:, V:V + P])        # (K, P, N)
    est = data.reference(predicted)
    return nmse_per_trial(np.swapaxes(est, 0, 1), np.swapaxes(truth, 0, 1))


def _class_of(bank: DopplerClassBank, f_n: float) -> int:
    return int(np.argmin(np.abs(bank.f_n - f_n)))


# -- experiments --------------------------------------------------------------

def run_nmse_vs_horizon(spec: ExperimentSpec, cfg: SystemConfig, geom: Geometry, net, bank) -> ResultTable:
    """Median NMSE per horizon for AR(8/16/24) baselines, CNN-AR and class-dispatch ablations."""
    V, P, eps = cfg.train_intervals, cfg.predict_intervals, cfg.loading
    f_n = float(cfg.doppler_fn(REFERENCE_DOPPLER_HZ))
    estimator = PilotEstimator.from_config(cfg)
    true_class = _class_of(bank, f_n)
    adjacent = min(true_class + 1, len(bank) - 1)
    methods = [f"AR(Q={q})" for q in BASELINE_ORDERS] + ["CNN-AR", "CNN-AR(oracle class)",
                                                         "CNN-AR(adjacent class)"]
    scores = {m: np.empty((spec.trials, P)) for m in methods}
    for trial in range(spec.trials):
        rng = trial_rng(spec.seed, spec.experiment, trial)
        data = simulate_trial(cfg, geom, f_n, rng, estimator)
        for q in BASELINE_ORDERS:
            scores[f"AR(Q={q})"][trial] = _horizon_nmse(data, baseline_predict(data.history, q, eps, P), V)
        K = data.history.shape[0]
        scores["CNN-AR"][trial] = _horizon_nmse(
            data, cnn_predict(data.history, net, bank, P, cfg.n_bs_antennas), V)
        scores["CNN-AR(oracle class)"][trial] = _horizon_nmse(
            data, cnn_predict(data.history, net, bank, P, cfg.n_bs_antennas, [true_class] * K), V)
        scores["CNN-AR(adjacent class)"][trial] = _horizon_nmse(
            data, cnn_predict(data.history, net, bank, P, cfg.n_bs_antennas, [adjacent] * K), V)
    table = ResultTable("nmse_vs_horizon", ["method", "horizon", "nmse_median", "nmse_q25", "nmse_q75"],
                        metadata=_metadata(spec, cfg, geom))
    for m in methods:
        for p in range(P):
            table.add(m, p + 1, *_stats(scores[m][:, p]))
    return table


def run_nmse_vs_doppler(spec: ExperimentSpec, cfg: SystemConfig, geom: Geometry, net, bank,
                        horizons=(10, 20)) -> ResultTable:
    V, P, eps = cfg.train_intervals, cfg.predict_intervals, cfg.loading
    if max(horizons) > P:
        raise ValueError(f"horizon {max(horizons)} exceeds prediction length {P}")
    estimator = PilotEstimator.from_config(cfg)
    table = ResultTable("nmse_vs_doppler",
                        ["f_d_hz", "method", "horizon", "nmse_median", "nmse_q25", "nmse_q75"],
                        metadata=_metadata(spec, cfg, geom))
    methods = (f"AR(Q={BASELINE_ORDER})", "CNN-AR")
    for i, f_d in enumerate(cfg.doppler_grid):
        f_n = float(cfg.doppler_fn(f_d))
        scores = {m: np.empty((spec.trials, P)) for m in methods}
        for trial in range(spec.trials):
            rng = trial_rng(spec.seed, spec.experiment, i, trial)
            data = simulate_trial(cfg, geom, f_n, rng, estimator)
            scores[methods[0]][trial] = _horizon_nmse(
                data, baseline_predict(data.history, BASELINE_ORDER, eps, P), V)
            scores[methods[1]][trial] = _horizon_nmse(
                data, cnn_predict(data.history, net, bank, P, cfg.n_bs_antennas), V)
        for m in methods:
            for h in horizons:
                table.add(float(f_d), m, h, *_stats(scores[m][:, h - 1]))
    return table


def _average_se(cfg: SystemConfig, data: TrialData, predicted, V: int) -> float:
    """SE on the true channels with phases and beams designed from ``predicted``,
    averaged over the prediction intervals and then over users."""
    N = cfg.n_bs_antennas
    P = predicted.shape[1]
    d_true, G_true = split_estimate(data.truth[:, V:V + P], N)
    d_des, G_des = split_estimate(predicted, N)
    K = d_true.shape[0]
    flat = lambda a: a.reshape(K * P, *a.shape[2:])  # noqa: E731
    theta, u = optimize_phases_batch(flat(G_des), flat(d_des))
    se = spectral_efficiency(flat(G_true), theta, flat(d_true), u, cfg.data_power, cfg.noise_variance)
    return float(se.reshape(K, P).mean(axis=1).mean())


def run_se_vs_distance(spec: ExperimentSpec, cfg: SystemConfig, geom: Geometry, net, bank,
                       distances=SE_DISTANCES) -> ResultTable:
    """Average SE with perfect, CNN-AR and AR-baseline CSI for two users at equal ``d_h``."""
    V, P, eps = cfg.train_intervals, cfg.predict_intervals, cfg.loading
    f_n = float(cfg.doppler_fn(REFERENCE_DOPPLER_HZ))
    sys_cfg = cfg.replace(n_users=len(SE_VERTICAL))
    estimator = PilotEstimator.from_config(sys_cfg)
    table = ResultTable("se_vs_distance", ["d_h_m", "method", "se_median", "se_q25", "se_q75"],
                        metadata=_metadata(spec, cfg, geom))
    methods = ("perfect", "CNN-AR", f"AR(Q={BASELINE_ORDER})")
    for i, d_h in enumerate(distances):
        sweep_geom = Geometry(geom.d_bs_ris, (float(d_h),) * len(SE_VERTICAL), SE_VERTICAL)
        scores = {m: np.empty(spec.trials) for m in methods}
        for trial in range(spec.trials):
            rng = trial_rng(spec.seed, spec.experiment, i, trial)
            data = simulate_trial(sys_cfg, sweep_geom, f_n, rng, estimator)
            scores["perfect"][trial] = _average_se(sys_cfg, data, data.truth[:, V:V + P], V)
            scores["CNN-AR"][trial] = _average_se(
                sys_cfg, data, cnn_predict(data.history, net, bank, P, cfg.n_bs_antennas), V)
            scores[methods[2]][trial] = _average_se(
                sys_cfg, data, baseline_predict(data.history, BASELINE_ORDER, eps, P), V)
        for m in methods:
            table.add(float(d_h), m, *_stats(scores[m]))
    return table


def run_overhead(spec: ExperimentSpec, cfg: SystemConfig, geom: Geometry,
                 v_grid=OVERHEAD_V, p_grid=OVERHEAD_P) -> ResultTable:
    table = ResultTable("overhead", ["V", "P", "conventional", "proposed", "ratio"],
                        metadata=_metadata(spec, cfg, geom))
    for V in v_grid:
        for P in p_grid:
            report = pilot_overhead(cfg.replace(train_intervals=V, predict_intervals=P,
                                                ar_order=min(cfg.ar_order, V)))
            table.add(V, P, report.conventional, report.proposed, float(report.ratio))
    return table


def run_experiment(spec: ExperimentSpec, cfg: SystemConfig, geom: Geometry, net=None, bank=None) -> Path:
    """Run one experiment and write ``<name>.csv`` plus a ``.meta.json`` sidecar."""
    start = time.perf_counter()
    if spec.experiment == "overhead":
        table = run_overhead(spec, cfg, geom)
    else:
        if net is None:
            raise FileNotFoundError(f"experiment {spec.experiment} needs a trained classifier checkpoint")
        bank = bank or DopplerClassBank.from_config(cfg)
        runner = {"nmse-vs-horizon": run_nmse_vs_horizon, "nmse-vs-doppler": run_nmse_vs_doppler,
                  "se-vs-distance": run_se_vs_distance}[spec.experiment]
        table = runner(spec, cfg, geom, net, bank)
    return table.write(spec.out_dir, wall_clock=time.perf_counter() - start)
