"""Seeded Monte-Carlo sweeps: NMSE vs SNR over a bank of estimators.

Every (snr, trial) cell derives its own RNG stream from the master seed, so
results are a pure function of the configuration, trials can run in any
order (or in parallel), and adding an algorithm to a sweep never perturbs
the measurements the other algorithms see.  Wall-clock runtime is the one
recorded field that is not reproducible.
"""

from __future__ import annotations

import concurrent.futures
import math
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, NumericalError
from .model import draw_channel, synthesize_measurement, zc_training, dft_dictionary
from .objective import ObjectiveContext
from .operator import build_operator, unvec
from .solvers import (
    SolverConfig,
    brute_force_map,
    run_fista,
    run_grahtp,
    run_grasp,
    tune_gamma,
)

__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "TrialRecord",
    "nmse",
    "reconstruct_channel",
    "child_seed",
    "tuning_seed",
    "run_experiment",
    "emit_csv",
    "parse_csv",
    "emit_curve",
    "parse_config_text",
    "load_config",
]

ALGORITHMS = (
    "bmsgrasp",
    "bmsgrasp-debias",
    "bmsgrahtp",
    "grasp",
    "grahtp",
    "fista",
    "oracle",
)

CSV_HEADER = "algorithm,snr_db,trial,seed,nmse,iterations,runtime_ms,support_hit"
CURVE_HEADER = "algorithm,snr_db,trials,mean_nmse_db,median_nmse_db,p10_nmse_db,p90_nmse_db"

FISTA_MAX_ITERS = 500
FISTA_TOL = 1e-6
FISTA_TUNING_TRIALS = 6


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one NMSE-vs-SNR sweep."""

    m: int
    n: int
    t: int
    l: int
    b_rx: int
    b_tx: int
    snr_db: tuple
    trials: int
    master_seed: int = 0
    algorithms: tuple = ("bmsgrasp-debias",)
    eta: object = "auto"
    operator_mode: str = "auto"
    max_outer_iters: int = 50
    inner_tol: float = 1e-8
    debias: bool = False
    b_rx_overrides: dict = field(default_factory=dict)
    b_tx_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.m, self.n, self.t, self.l, self.trials) < 1:
            raise ValueError("M, N, T, L, trials must all be positive")
        if self.n > self.t:
            raise ValueError(f"need N <= T, got N={self.n}, T={self.t}")
        if not self.snr_db:
            raise ValueError("snr_db grid is empty")
        if not self.algorithms:
            raise ValueError("algorithms list is empty")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")
        for algo in list(self.b_rx_overrides) + list(self.b_tx_overrides):
            if algo not in ALGORITHMS:
                raise ValueError(f"override for unknown algorithm {algo!r}")
        for algo in self.algorithms:
            brx, btx = self.dims_for(algo)
            if brx < self.m or btx < self.n:
                raise ValueError(
                    f"{algo}: need B_rx >= M and B_tx >= N, got ({brx}, {btx})"
                )
        if self.operator_mode not in ("dense", "fft", "auto"):
            raise ValueError(f"operator_mode must be dense/fft/auto, got {self.operator_mode!r}")
        if "oracle" in self.algorithms:
            brx, btx = self.dims_for("oracle")
            if math.comb(brx * btx, self.l) > 10**5:
                raise ValueError(
                    "oracle enumerates all size-L supports and is limited to "
                    f"C(B, L) <= 1e5; got C({brx * btx}, {self.l})"
                )
        if not isinstance(self.eta, str):
            eta = float(self.eta)
            if not 0.0 < eta < 1.0:
                raise ValueError(f"explicit eta must be in (0, 1), got {eta}")
        elif self.eta != "auto":
            raise ValueError(f"eta must be 'auto' or a float, got {self.eta!r}")

    def dims_for(self, algo: str) -> tuple[int, int]:
        """Dictionary sizes for one algorithm, applying per-algo overrides."""
        return (
            int(self.b_rx_overrides.get(algo, self.b_rx)),
            int(self.b_tx_overrides.get(algo, self.b_tx)),
        )


@dataclass(frozen=True)
class TrialRecord:
    """One (algorithm, snr, trial) result row.

    iterations is -1 when the solver failed and the row holds a salvaged
    estimate; support_hit stays None outside on-grid scenarios.
    """

    algorithm: str
    snr_db: float
    trial: int
    seed: int
    nmse: float
    iterations: int
    runtime_ms: float
    support_hit: bool | None = None


def nmse(H_hat: np.ndarray, H: np.ndarray) -> float:
    """Squared Frobenius error of H_hat normalized by the energy of H."""
    H = np.asarray(H)
    H_hat = np.asarray(H_hat)
    if H_hat.shape != H.shape:
        raise ValueError(f"shape mismatch: {H_hat.shape} vs {H.shape}")
    denom = np.linalg.norm(H) ** 2
    if denom == 0.0:
        raise ValueError("reference channel has zero energy")
    return float(np.linalg.norm(H_hat - H) ** 2 / denom)


def reconstruct_channel(op, x_hat: np.ndarray) -> np.ndarray:
    """Channel matrix synthesized from a virtual-channel estimate.

    Uses the same transform that defines the virtual representation,
    H = A_RX X A_TX^H.
    """
    X = unvec(np.asarray(x_hat), op.B_RX, op.B_TX)
    return op.A_RX @ X @ op.A_TX.conj().T


# -- seeding -----------------------------------------------------------------

_M64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def child_seed(master_seed: int, snr_index: int, trial_index: int) -> int:
    """Per-(snr, trial) RNG seed; independent of the algorithm list."""
    s = _splitmix64(master_seed & _M64)
    s = _splitmix64(s ^ snr_index)
    return _splitmix64(s ^ trial_index)


def tuning_seed(master_seed: int, snr_index: int, k: int) -> int:
    """Seed stream reserved for hyperparameter tuning trials."""
    s = _splitmix64((master_seed ^ 0xA5A5A5A5A5A5A5A5) & _M64)
    s = _splitmix64(s ^ snr_index)
    return _splitmix64(s ^ k)


# -- sweep execution ---------------------------------------------------------


class _SweepState:
    """Operators, solver configs, and training shared by all trials."""

    def __init__(self, config: ExperimentConfig, gammas: dict | None):
        self.config = config
        self.gammas = gammas or {}
        self.training = zc_training(config.n, config.t)
        mode = "fft" if config.operator_mode == "auto" else config.operator_mode
        self.ops = {}
        for algo in config.algorithms:
            dims = config.dims_for(algo)
            if dims not in self.ops:
                self.ops[dims] = build_operator(
                    self.training.S,
                    dft_dictionary(config.m, dims[0]),
                    dft_dictionary(config.n, dims[1]),
                    mode=mode,
                )
        self.solver_config = SolverConfig(
            sparsity=config.l,
            eta=config.eta,
            max_outer_iters=config.max_outer_iters,
            inner_tol=config.inner_tol,
            debias=config.debias,
        )

    def _solve(self, algo: str, ctx: ObjectiveContext, snr_index: int):
        cfg = self.solver_config
        if algo == "bmsgrasp":
            report = run_grasp(ctx, cfg, use_bms=True)
        elif algo == "bmsgrasp-debias":
            report = run_grasp(ctx, replace(cfg, debias=True), use_bms=True)
        elif algo == "bmsgrahtp":
            report = run_grahtp(ctx, cfg, use_bms=True)
        elif algo == "grasp":
            report = run_grasp(ctx, cfg, use_bms=False)
        elif algo == "grahtp":
            report = run_grahtp(ctx, cfg, use_bms=False)
        elif algo == "fista":
            estimate, trace = run_fista(
                ctx, self.gammas[snr_index],
                max_iters=FISTA_MAX_ITERS, tol=FISTA_TOL, return_trace=True,
            )
            return estimate.x_hat, len(trace) - 1
        elif algo == "oracle":
            estimate = brute_force_map(ctx, self.config.l)
            return estimate.x_hat, 1
        else:  # pragma: no cover - guarded by config validation
            raise ValueError(f"unknown algorithm {algo!r}")
        return report.estimate.x_hat, report.iterations

    def run_trial(self, snr_index: int, trial: int) -> list:
        config = self.config
        seed = child_seed(config.master_seed, snr_index, trial)
        rng = np.random.default_rng(seed)
        snr_db = config.snr_db[snr_index]
        rho = 10.0 ** (snr_db / 10.0)
        channel = draw_channel(config.l, config.m, config.n, rng)
        measurement = synthesize_measurement(channel.H, self.training.S, rho, rng)

        records = []
        for algo in config.algorithms:
            op = self.ops[config.dims_for(algo)]
            ctx = ObjectiveContext(op, measurement)
            start = time.perf_counter()
            try:
                x_hat, iterations = self._solve(algo, ctx, snr_index)
            except (ConvergenceError, NumericalError) as err:
                x_hat = err.best if err.best is not None else np.zeros(op.B, dtype=complex)
                iterations = -1
                print(
                    f"warning: {algo} failed at snr={snr_db} trial={trial}: {err}",
                    file=sys.stderr,
                )
            runtime_ms = (time.perf_counter() - start) * 1e3
            records.append(
                TrialRecord(
                    algorithm=algo,
                    snr_db=float(snr_db),
                    trial=trial,
                    seed=seed,
                    nmse=nmse(reconstruct_channel(op, x_hat), channel.H),
                    iterations=int(iterations),
                    runtime_ms=runtime_ms,
                )
            )
        return records


_WORKER_STATE = None


def _init_worker(config, gammas):
    global _WORKER_STATE
    _WORKER_STATE = _SweepState(config, gammas)


def _worker_task(args):
    snr_index, trial = args
    return _WORKER_STATE.run_trial(snr_index, trial)


def _tune_fista_gammas(config: ExperimentConfig, info: dict | None) -> dict:
    """Per-SNR regularization weights targeting a mean support of 3L."""
    dims = config.dims_for("fista")
    training = zc_training(config.n, config.t)
    mode = "fft" if config.operator_mode == "auto" else config.operator_mode
    op = build_operator(
        training.S,
        dft_dictionary(config.m, dims[0]),
        dft_dictionary(config.n, dims[1]),
        mode=mode,
    )
    gammas = {}
    for snr_index, snr_db in enumerate(config.snr_db):
        rho = 10.0 ** (snr_db / 10.0)

        def make_ctx(k, _rho=rho, _idx=snr_index):
            rng = np.random.default_rng(tuning_seed(config.master_seed, _idx, k))
            channel = draw_channel(config.l, config.m, config.n, rng)
            meas = synthesize_measurement(channel.H, training.S, _rho, rng)
            return ObjectiveContext(op, meas)

        gamma, achieved = tune_gamma(
            make_ctx, config.l, FISTA_TUNING_TRIALS,
            fista_iters=FISTA_MAX_ITERS, fista_tol=FISTA_TOL,
        )
        gammas[snr_index] = gamma
        if info is not None:
            info.setdefault("fista_gamma", {})[float(snr_db)] = (gamma, achieved)
    return gammas


def run_experiment(config: ExperimentConfig, workers: int = 1, info: dict | None = None):
    """Run the configured sweep and return records in canonical order.

    Rows are sorted by (algorithm, snr_db, trial) regardless of execution
    order; with workers > 1 trials are distributed over processes.  When an
    `info` dict is supplied it collects resolved metadata (training root,
    tuned FISTA weights).
    """
    if info is not None:
        training = zc_training(config.n, config.t)
        info["zc_root"] = training.root
        info["zc_shifts"] = training.shifts

    gammas = None
    if "fista" in config.algorithms:
        gammas = _tune_fista_gammas(config, info)

    tasks = [
        (snr_index, trial)
        for snr_index in range(len(config.snr_db))
        for trial in range(config.trials)
    ]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(config, gammas)
        ) as pool:
            blocks = list(pool.map(_worker_task, tasks, chunksize=8))
    else:
        state = _SweepState(config, gammas)
        blocks = [state.run_trial(*task) for task in tasks]

    records = [record for block in blocks for record in block]
    records.sort(key=lambda r: (r.algorithm, r.snr_db, r.trial))
    return records


# -- serialization -----------------------------------------------------------


def _format_float(value: float) -> str:
    return repr(float(value))


def emit_csv(records, path) -> None:
    """Write trial records with the fixed 8-column schema."""
    if not records:
        raise ValueError("no records to emit")
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            hit = "" if r.support_hit is None else ("1" if r.support_hit else "0")
            fh.write(
                f"{r.algorithm},{_format_float(r.snr_db)},{r.trial},{r.seed},"
                f"{_format_float(r.nmse)},{r.iterations},"
                f"{_format_float(r.runtime_ms)},{hit}\n"
            )


def parse_csv(path):
    """Exact inverse of :func:`emit_csv`."""
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header!r}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            algo, snr, trial, seed, err, iters, runtime, hit = line.split(",")
            records.append(
                TrialRecord(
                    algorithm=algo,
                    snr_db=float(snr),
                    trial=int(trial),
                    seed=int(seed),
                    nmse=float(err),
                    iterations=int(iters),
                    runtime_ms=float(runtime),
                    support_hit=None if hit == "" else hit == "1",
                )
            )
    return records


def curve_rows(records):
    """Aggregate rows (algorithm, snr_db, n, mean/median/p10/p90 NMSE in dB)."""
    groups = {}
    for r in records:
        groups.setdefault((r.algorithm, r.snr_db), []).append(r.nmse)

    def to_db(value):
        return 10.0 * np.log10(value) if value > 0 else -np.inf

    rows = []
    for (algo, snr), values in sorted(groups.items()):
        arr = np.array(values)
        rows.append(
            (
                algo,
                snr,
                arr.size,
                to_db(float(np.mean(arr))),
                to_db(float(np.median(arr))),
                to_db(float(np.percentile(arr, 10))),
                to_db(float(np.percentile(arr, 90))),
            )
        )
    return rows


def emit_curve(records, path) -> None:
    """Write per-(algorithm, snr) NMSE aggregates in dB."""
    if not records:
        raise ValueError("no records to emit")
    with open(path, "w", newline="") as fh:
        fh.write(CURVE_HEADER + "\n")
        for algo, snr, count, mean_db, med_db, p10_db, p90_db in curve_rows(records):
            fh.write(
                f"{algo},{_format_float(snr)},{count},{_format_float(mean_db)},"
                f"{_format_float(med_db)},{_format_float(p10_db)},{_format_float(p90_db)}\n"
            )


# -- config files ------------------------------------------------------------

_CONFIG_SCALARS = {
    "M": ("m", int),
    "N": ("n", int),
    "T": ("t", int),
    "L": ("l", int),
    "B_rx": ("b_rx", int),
    "B_tx": ("b_tx", int),
    "trials": ("trials", int),
    "seed": ("master_seed", int),
    "operator_mode": ("operator_mode", str),
    "max_outer_iters": ("max_outer_iters", int),
    "inner_tol": ("inner_tol", float),
}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat key-value sweep description.

    Recognized keys: M, N, T, L, B_rx, B_tx, B_rx.<algo>, B_tx.<algo>,
    snr_db, trials, seed, algorithms, eta, operator_mode, max_outer_iters,
    inner_tol, debias.  Lists are comma-separated; '#' starts a comment.
    """
    values = {}
    rx_overrides = {}
    tx_overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _CONFIG_SCALARS:
            attr, conv = _CONFIG_SCALARS[key]
            values[attr] = conv(value)
        elif key == "snr_db":
            values["snr_db"] = tuple(float(v) for v in value.split(","))
        elif key == "algorithms":
            values["algorithms"] = tuple(v.strip() for v in value.split(","))
        elif key == "eta":
            values["eta"] = "auto" if value == "auto" else float(value)
        elif key == "debias":
            if value.lower() not in ("true", "false", "0", "1"):
                raise ValueError(f"line {lineno}: debias must be boolean, got {value!r}")
            values["debias"] = value.lower() in ("true", "1")
        elif key.startswith("B_rx.") or key.startswith("B_tx."):
            prefix, algo = key.split(".", 1)
            target = rx_overrides if prefix == "B_rx" else tx_overrides
            target[algo] = int(value)
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")

    required = ("m", "n", "t", "l", "snr_db", "trials", "algorithms")
    missing = [k for k in required if k not in values]
    if missing:
        raise ValueError(f"config missing required keys: {missing}")
    values.setdefault("b_rx", values["m"])
    values.setdefault("b_tx", values["n"])
    return ExperimentConfig(
        b_rx_overrides=rx_overrides, b_tx_overrides=tx_overrides, **values
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())
