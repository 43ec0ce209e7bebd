"""Monte-Carlo link-level experiments.

A sweep runs ``trials`` independent frames at every (sparsity, SNR) point.
Trial ``i`` of point ``p`` draws from ``default_rng([seed, p, i])``, so the
output never depends on worker count or completion order.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import detect, phy
from .seqmat import SpreadingMatrix, construct_peg

log = logging.getLogger(__name__)

CSV_FIELDS = ["lambda", "snr_db", "trials", "rfa", "pf", "pm", "aer", "ser", "bler",
              "ser_stderr", "mean_ops"]
LOAD_MODES = ("energy", "oracle")
BASELINE_MODES = ("full", "no-outer-iteration", "oracle-load")


@dataclass
class ScenarioConfig:
    N: int = 200
    L: int = 100
    w_c: int = 2
    K: int = 60
    M: int = 2
    lambdas: list = field(default_factory=lambda: [0.1])
    snrs_db: list = field(default_factory=lambda: [10.0])
    trials: int = 100
    seed: int = 0
    load_mode: str = "energy"
    baseline_mode: str = "full"
    matrix_file: str | None = None
    matrix_seed: int | None = 0
    threshold_factor: float = 1.55
    t_mpa: int = 5
    t_bp: int = 5
    t_outer: int = 3

    def __post_init__(self):
        self.lambdas = [float(x) for x in np.atleast_1d(self.lambdas)]
        self.snrs_db = [float(x) for x in np.atleast_1d(self.snrs_db)]
        self.validate()

    def validate(self):
        for name in ("N", "L", "w_c", "K", "M", "trials"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("t_mpa", "t_bp", "t_outer"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.load_mode not in LOAD_MODES:
            raise ValueError(f"load_mode must be one of {LOAD_MODES}")
        if self.baseline_mode not in BASELINE_MODES:
            raise ValueError(f"baseline_mode must be one of {BASELINE_MODES}")
        for lam in self.lambdas:
            if not 0 <= lam < 1:
                raise ValueError(f"sparsity {lam} outside [0, 1)")
        if self.threshold_factor < 0:
            raise ValueError("threshold_factor must be non-negative")

    @property
    def oracle_load(self) -> bool:
        return self.load_mode == "oracle" or self.baseline_mode == "oracle-load"

    @property
    def feedback(self) -> bool:
        return self.baseline_mode != "no-outer-iteration"

    def build_matrix(self) -> SpreadingMatrix:
        if self.matrix_file:
            S = SpreadingMatrix.load(self.matrix_file)
            if S.entries.shape != (self.L, self.N):
                raise ValueError(f"{self.matrix_file}: shape {S.entries.shape} != ({self.L}, {self.N})")
            return S
        return construct_peg(self.L, self.N, self.w_c, self.matrix_seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TrialReport:
    active: np.ndarray  # true active users
    tx_idx: np.ndarray  # (n_active, K) transmitted alphabet indices
    est_active: np.ndarray
    est_idx: np.ndarray  # (K, n_est)
    N: int
    K: int
    false_alarms: int
    misses: int
    symbol_errors: int
    block_errors: int
    ops: float = 0.0

    @property
    def n_active(self) -> int:
        return int(self.active.size)


class MetricsRecord(NamedTuple):
    lam: float
    snr_db: float
    trials: int
    rfa: float
    pf: float
    pm: float
    aer: float
    ser: float
    bler: float
    ser_stderr: float
    mean_ops: float

    def row(self) -> dict:
        vals = list(self)
        return dict(zip(CSV_FIELDS, vals))


def score(active, tx_idx, est_active, est_idx, N, K, ops=0.0) -> TrialReport:
    """Compare detector output with the truth.

    A transmitted symbol counts as correct only if its user was detected and
    the decoded index matches; missed users contribute K symbol errors and a
    block error.  False alarms are charged to the activity metrics only.
    """
    active = np.asarray(active, dtype=np.int64)
    est_active = np.asarray(est_active, dtype=np.int64)
    pos = {int(u): i for i, u in enumerate(est_active)}
    sym_err = blk_err = misses = 0
    for row, u in enumerate(active):
        i = pos.get(int(u))
        if i is None:
            misses += 1
            sym_err += K
            blk_err += 1
            continue
        wrong = int(np.count_nonzero(est_idx[:, i] != tx_idx[row]))
        sym_err += wrong
        blk_err += wrong > 0
    false_alarms = int(np.setdiff1d(est_active, active).size)
    return TrialReport(active, tx_idx, est_active, est_idx, N, K, false_alarms, misses,
                       sym_err, blk_err, ops)


def run_trial(cfg: ScenarioConfig, lam: float, snr_db: float, seed, S=None,
              alphabets=None) -> TrialReport:
    """One frame: draw users and symbols, transmit, detect, score."""
    rng = np.random.default_rng(seed)
    S = S if S is not None else cfg.build_matrix()
    alphabets = alphabets if alphabets is not None else phy.alphabet_table(cfg.M, cfg.N)
    noise_var = phy.snr_to_noise_var(snr_db)
    active = phy.draw_activity(cfg.N, lam, rng)
    tx_idx = rng.integers(1, cfg.M + 1, size=(active.size, cfg.K))
    frame = phy.transmit(S, active, tx_idx, alphabets, noise_var, rng)
    load = detect.oracle_load_state(S, active) if cfg.oracle_load else None
    res = detect.two_stage_detect(
        frame, S, noise_var, alphabets, cfg.t_mpa, cfg.t_bp, cfg.t_outer,
        load_state=load, threshold_factor=cfg.threshold_factor, feedback=cfg.feedback,
    )
    return score(active, tx_idx, res.active, res.symbol_idx, cfg.N, cfg.K, res.ops)


def compute_metrics(reports, lam: float, snr_db: float) -> MetricsRecord:
    if not reports:
        raise ValueError("no trial reports")
    n = len(reports)
    fa = np.array([r.false_alarms for r in reports], dtype=float)
    na = np.array([r.n_active for r in reports], dtype=float)
    idle = np.array([r.N - r.n_active for r in reports], dtype=float)
    miss = np.array([r.misses for r in reports], dtype=float)
    K = reports[0].K
    sym = np.array([r.symbol_errors for r in reports], dtype=float)
    blk = np.array([r.block_errors for r in reports], dtype=float)

    pf = float(np.mean(np.divide(fa, idle, out=np.zeros(n), where=idle > 0)))
    pm = float(np.mean(np.divide(miss, na, out=np.zeros(n), where=na > 0)))
    total_active = na.sum()
    rfa = float(fa.sum() / total_active) if total_active else 0.0
    ser = float(sym.sum() / (total_active * K)) if total_active else 0.0
    bler = float(blk.sum() / total_active) if total_active else 0.0
    per_trial = np.divide(sym, na * K, out=np.zeros(n), where=na > 0)
    ser_se = float(per_trial.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    ops = float(np.mean([r.ops for r in reports]))
    return MetricsRecord(lam, snr_db, n, rfa, pf, pm, pf + pm, ser, bler, ser_se, ops)


# -- sweeps ------------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(cfg_dict, entries, w_c):
    cfg = ScenarioConfig.from_dict(cfg_dict)
    _WORKER.update(cfg=cfg, S=SpreadingMatrix(entries, w_c),
                   alph=phy.alphabet_table(cfg.M, cfg.N))


def _worker_trial(args):
    lam, snr, seed = args
    w = _WORKER
    return run_trial(w["cfg"], lam, snr, seed, w["S"], w["alph"])


def default_workers() -> int:
    env = os.environ.get("GFSIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_point(cfg: ScenarioConfig, lam: float, snr_db: float, point: int, S=None,
              alphabets=None, pool=None) -> MetricsRecord:
    seeds = [[cfg.seed, point, i] for i in range(cfg.trials)]
    if pool is not None:
        reports = list(pool.map(_worker_trial, [(lam, snr_db, s) for s in seeds], chunksize=16))
    else:
        S = S if S is not None else cfg.build_matrix()
        alphabets = alphabets if alphabets is not None else phy.alphabet_table(cfg.M, cfg.N)
        reports = [run_trial(cfg, lam, snr_db, s, S, alphabets) for s in seeds]
    return compute_metrics(reports, lam, snr_db)


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def sweep(cfg: ScenarioConfig, out=None, workers: int | None = None) -> list[MetricsRecord]:
    """All (lambda, SNR) points; rows are appended to ``out`` as each finishes."""
    S = cfg.build_matrix()
    alph = phy.alphabet_table(cfg.M, cfg.N)
    workers = default_workers() if workers is None else workers
    points = [(lam, snr) for lam in cfg.lambdas for snr in cfg.snrs_db]

    fh = writer = None
    if out is not None:
        try:
            fh = open(out, "w", newline="")
        except OSError as exc:
            raise OSError(f"cannot write results to {out}: {exc}") from exc
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        fh.flush()

    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(workers, initializer=_init_worker,
                                   initargs=(cfg.to_dict(), S.entries, S.col_weight))
    records = []
    try:
        for p, (lam, snr) in enumerate(points):
            rec = run_point(cfg, lam, snr, p, S, alph, pool)
            log.info("lambda=%g snr=%g ser=%.3g aer=%.3g", lam, snr, rec.ser, rec.aer)
            records.append(rec)
            if writer is not None:
                writer.writerow([_fmt(v) for v in rec])
                fh.flush()
    finally:
        if pool is not None:
            pool.shutdown()
        if fh is not None:
            fh.close()
    return records


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# -- noiseless group-testing experiments -------------------------------------


class RfaEstimate(NamedTuple):
    rfa: float
    stderr: float
    false_alarms: int
    actives: int
    trials: int


def _activity_batch(rng, n, N, lam, activity):
    if activity == "bernoulli":
        return rng.random((n, N)) < lam
    k = int(round(lam * N))
    keys = rng.random((n, N))
    idx = np.argpartition(keys, k - 1, axis=1)[:, :k] if k else np.zeros((n, 0), dtype=int)
    a = np.zeros((n, N), dtype=bool)
    np.put_along_axis(a, idx, True, axis=1)
    return a


def cover_only_rfa_estimate(S, lam: float, trials: int, seed=None, activity: str = "exact",
                            batch: int = 1000) -> RfaEstimate:
    """Cover-decoder false-alarm ratio under a perfectly known load state.

    ``activity="exact"`` activates exactly round(lam N) users per frame;
    ``"bernoulli"`` activates each user independently with probability lam.
    The standard error is the delta-method error of the ratio of sums.
    """
    if activity not in ("exact", "bernoulli"):
        raise ValueError("activity must be 'exact' or 'bernoulli'")
    if activity == "exact" and round(lam * S.cols) < 1:
        raise ValueError("lam * N rounds to zero active users")
    rng = np.random.default_rng(seed)
    H = S.entries.astype(np.float32)
    fa_all, na_all = [], []
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        a = _activity_batch(rng, n, S.cols, lam, activity)
        load = (a.astype(np.float32) @ H.T) > 0
        hits_empty = (~load).astype(np.float32) @ H
        est = hits_empty == 0
        fa_all.append(np.count_nonzero(est & ~a, axis=1))
        na_all.append(np.count_nonzero(a, axis=1))
        done += n
    fa = np.concatenate(fa_all).astype(float)
    na = np.concatenate(na_all).astype(float)
    ratio = fa.sum() / na.sum()
    resid = fa - ratio * na
    se = float(np.sqrt(resid.var(ddof=1) / trials) / na.mean()) if trials > 1 else float("nan")
    return RfaEstimate(float(ratio), se, int(fa.sum()), int(na.sum()), trials)


def cover_only_rfa(S, lam: float, trials: int, seed=None, activity: str = "exact") -> float:
    return cover_only_rfa_estimate(S, lam, trials, seed, activity).rfa


def sample_check_degrees(S, lam: float, trials: int, seed=None, which: str = "estimated",
                         activity: str = "exact") -> np.ndarray:
    """Row degrees of S restricted to candidate users, all L rows per trial.

    ``which="estimated"`` restricts to the cover-decoder output under the
    true load state (the receiver's first graph); ``"true"`` to the truly
    active users.  Rows with no candidate are reported with degree 0.
    """
    rng = np.random.default_rng(seed)
    H = S.entries.astype(np.float32)
    out = []
    for _ in range(trials):
        a = _activity_batch(rng, 1, S.cols, lam, activity)[0]
        if which == "true":
            cols = a
        else:
            load = H[:, a].any(axis=1)
            cols = ((~load).astype(np.float32) @ H) == 0
        out.append(H[:, cols].sum(axis=1))
    return np.concatenate(out).astype(np.int64)
