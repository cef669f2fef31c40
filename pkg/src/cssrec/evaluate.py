"""NMSE metric, Monte Carlo sweeps, and figure-data exports.

The sweep machinery fixes one axis (snr, sparsity, block_count, or
measurements), holds the rest of the problem at the spec's values, and
runs every solver on bit-identical per-trial instances.  Seeds derive
from (spec.seed, axis-value index, trial index), and aggregation is an
ordered fold over trial index, so results do not depend on how many
worker processes computed them.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ContractError
from .network import NetworkParams, forward
from .rng import derive_seed
from .solvers import SolverConfig, ista, rwista
from .synth import SensingMatrix, gen_css_signal, gen_sensing_matrix, synthesize

__all__ = [
    "NMSE_FLOOR_DB",
    "nmse_db",
    "SolverAdapter",
    "ista_adapter",
    "rwista_adapter",
    "network_adapter",
    "SweepSpec",
    "SweepCell",
    "SweepResult",
    "run_sweep",
    "save_sweep_csv",
    "save_sweep_json",
    "export_adjacency",
    "export_reconstruction_grid",
    "write_pgm",
]

NMSE_FLOOR_DB = -150.0
AXES = ("snr", "sparsity", "block_count", "measurements")
RATIO_CAP = 1e12


def nmse_db(estimates, truths, squared: bool = False) -> float:
    """Average the error-norm ratios over trials, then take 10 log10.

    ``estimates`` and ``truths`` are equal-length sequences of vectors (or
    2-D arrays, one row per trial).  The default averages the unsquared
    ratio ||x - x_hat|| / ||x||; ``squared=True`` averages the squared
    ratio instead (label outputs accordingly).  Exact recovery reports the
    -150 dB floor.  A zero truth vector is a contract violation.
    """
    E = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    T = np.atleast_2d(np.asarray(truths, dtype=np.float64))
    if E.shape != T.shape or E.shape[0] < 1:
        raise ContractError(
            f"need matching nonempty trial lists, got {E.shape} vs {T.shape}"
        )
    tnorm = np.linalg.norm(T, axis=1)
    if np.any(tnorm == 0):
        raise ContractError("degenerate truth: zero vector has no defined NMSE")
    ratio = np.linalg.norm(E - T, axis=1) / tnorm
    if squared:
        ratio = ratio * ratio
    mean = float(np.mean(ratio))
    if mean == 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(mean), NMSE_FLOOR_DB)


# --- solver adapters --------------------------------------------------------


@dataclass
class SolverAdapter:
    """Uniform handle over classical solvers and trained networks."""

    name: str
    kind: str  # "ista" | "rwista" | "network"
    cfg: SolverConfig | None = None
    params: NetworkParams | None = None

    def solve(self, A: SensingMatrix, y: np.ndarray) -> np.ndarray:
        if self.kind == "ista":
            return ista(A, y, self.cfg)
        if self.kind == "rwista":
            return rwista(A, y, self.cfg)
        if self.kind == "network":
            return forward(self.params, A, y)[0]
        raise ConfigError(f"unknown solver kind {self.kind!r}")


def ista_adapter(name: str, cfg: SolverConfig) -> SolverAdapter:
    return SolverAdapter(name=name, kind="ista", cfg=cfg)


def rwista_adapter(name: str, cfg: SolverConfig) -> SolverAdapter:
    return SolverAdapter(name=name, kind="rwista", cfg=cfg)


def network_adapter(name: str, params: NetworkParams) -> SolverAdapter:
    return SolverAdapter(name=name, kind="network", params=params)


# --- sweeps -----------------------------------------------------------------


@dataclass
class SweepSpec:
    axis: str
    values: list
    n: int
    m: int
    s: int
    t: int
    snr_db: float
    trials: int
    solvers: list[str]
    seed: int = 0
    matrix_seed: int | None = None  # pin the fixed-M matrix (e.g. a model's)

    def validate(self) -> None:
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ConfigError("axis values must be nonempty")
        if list(self.values) != sorted(self.values):
            raise ConfigError("axis values must be sorted ascending")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.solvers:
            raise ConfigError("need at least one solver")

    def cell_problem(self, value) -> tuple[int, int, int, float]:
        """(m, s, t, snr_db) for one axis value."""
        m, s, t, snr = self.m, self.s, self.t, self.snr_db
        if self.axis == "snr":
            snr = float(value)
        elif self.axis == "sparsity":
            s = int(value)
        elif self.axis == "block_count":
            t = int(value)
        else:
            m = int(value)
        return m, s, t, snr


@dataclass(frozen=True)
class SweepCell:
    solver: str
    value: float
    nmse_db: float
    stderr_db: float
    trials: int


@dataclass
class SweepResult:
    axis: str
    cells: list[SweepCell] = field(default_factory=list)


def _matrix_for(spec: SweepSpec, m: int, cache: dict) -> SensingMatrix:
    # One matrix per (M, N): fixed across cells and trials unless the axis
    # itself varies M, in which case each M draws its own.
    if m not in cache:
        if spec.matrix_seed is not None and m == spec.m:
            seed = spec.matrix_seed
        else:
            seed = derive_seed(spec.seed, "matrix", m)
        cache[m] = gen_sensing_matrix(m, spec.n, seed)
    return cache[m]


_WORKER: dict = {}


def _init_worker(spec: SweepSpec, adapters: list[SolverAdapter]) -> None:
    _WORKER["spec"] = spec
    _WORKER["adapters"] = adapters
    _WORKER["matrices"] = {}


def _trial_ratios(spec, adapters, cache, vi: int, ti: int) -> list[float]:
    m, s, t, snr = spec.cell_problem(spec.values[vi])
    A = _matrix_for(spec, m, cache)
    sig = gen_css_signal(spec.n, s, t, derive_seed(spec.seed, "signal", vi, ti))
    meas = synthesize(A, sig, snr, derive_seed(spec.seed, "noise", vi, ti))
    xnorm = float(np.linalg.norm(sig.x))
    out = []
    for ad in adapters:
        est = ad.solve(A, meas.y)
        out.append(float(np.linalg.norm(sig.x - est)) / xnorm)
    return out


def _trial_task(args) -> list[float]:
    vi, ti = args
    return _trial_ratios(_WORKER["spec"], _WORKER["adapters"], _WORKER["matrices"], vi, ti)


def run_sweep(spec: SweepSpec, adapters: list[SolverAdapter], workers: int = 1) -> SweepResult:
    """Evaluate every adapter on trials fresh instances per axis value.

    All adapters see identical instances.  Results are invariant to
    ``workers``: per-trial seeds fix the data and the aggregation folds in
    trial order.
    """
    spec.validate()
    if len(adapters) != len(spec.solvers) or [a.name for a in adapters] != list(spec.solvers):
        raise ConfigError("adapter list must match spec.solvers by name and order")
    cell_ms = sorted({spec.cell_problem(v)[0] for v in spec.values})
    for ad in adapters:
        if ad.kind == "network":
            if ad.params.n != spec.n:
                raise ConfigError(
                    f"model {ad.name} has N={ad.params.n}, sweep needs N={spec.n}"
                )
            bad = [m for m in cell_ms if m != ad.params.m]
            if bad:
                raise ConfigError(
                    f"model {ad.name} trained at M={ad.params.m} cannot run at M={bad}"
                )
    tasks = [(vi, ti) for vi in range(len(spec.values)) for ti in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(spec, adapters)
        ) as pool:
            ratios = list(pool.map(_trial_task, tasks, chunksize=8))
    else:
        cache: dict = {}
        ratios = [_trial_ratios(spec, adapters, cache, vi, ti) for vi, ti in tasks]

    result = SweepResult(axis=spec.axis)
    for vi, value in enumerate(spec.values):
        block = np.array(ratios[vi * spec.trials:(vi + 1) * spec.trials])
        for si, ad in enumerate(adapters):
            r = block[:, si]
            mean = float(np.mean(r))
            if mean == 0.0:
                db, se_db = NMSE_FLOOR_DB, 0.0
            else:
                db = max(10.0 * math.log10(mean), NMSE_FLOOR_DB)
                if spec.trials > 1:
                    se = float(np.std(r, ddof=1)) / math.sqrt(spec.trials)
                    se_db = (10.0 / math.log(10.0)) * se / mean
                else:
                    se_db = 0.0
            result.cells.append(
                SweepCell(solver=ad.name, value=value, nmse_db=db,
                          stderr_db=se_db, trials=spec.trials)
            )
    return result


def save_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["solver", "axis", "value", "nmse_db", "stderr", "trials"])
        for c in result.cells:
            w.writerow([c.solver, result.axis, c.value,
                        repr(float(c.nmse_db)), repr(float(c.stderr_db)), c.trials])


def save_sweep_json(result: SweepResult, path) -> None:
    payload = {"axis": result.axis, "cells": [asdict(c) for c in result.cells]}
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


# --- figure-data exports ----------------------------------------------------


def export_adjacency(params: NetworkParams, layer: int, path=None):
    """Dump one fc layer's G as CSV with a diagonal-dominance summary.

    The summary is mean |G| over the band |i - j| <= 2 divided by mean |G|
    off the band; a zero off-band denominator reports the 1e12 cap.
    Returns (G, ratio).
    """
    if params.variant != "fc":
        raise ConfigError(f"adjacency export needs variant=fc, got {params.variant!r}")
    if not 0 <= layer < params.depth:
        raise ConfigError(f"layer {layer} out of range for depth {params.depth}")
    G = params.layer(layer).rw.G
    n = G.shape[0]
    idx = np.arange(n)
    band = np.abs(idx[:, None] - idx[None, :]) <= 2
    band_mean = float(np.mean(np.abs(G[band])))
    off_mean = float(np.mean(np.abs(G[~band]))) if np.any(~band) else 0.0
    ratio = min(band_mean / off_mean, RATIO_CAP) if off_mean > 0 else RATIO_CAP
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(f"# layer={layer} band_offband_ratio={ratio!r}\n")
            w = csv.writer(f)
            for row in G:
                w.writerow([repr(float(v)) for v in row])
    return G, ratio


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM (P5), mapping [0, 1] to 0..255 with clipping."""
    data = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    if data.ndim != 2:
        raise ContractError(f"PGM needs a 2-D image, got shape {data.shape}")
    with open(path, "wb") as f:
        f.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode())
        f.write(data.tobytes())


def export_reconstruction_grid(adapters: list[SolverAdapter], images, A: SensingMatrix,
                               snr_db: float, pgm_path, csv_path, seed: int = 0):
    """Side-by-side reconstruction grid: truth row on top, one row per method.

    ``images`` is a list of DigitImage (or bare length-N vectors in [0, 1]).
    Each column is one image; measurements are drawn at ``snr_db`` with
    per-image derived seeds.  Writes a PGM grid and a CSV of per-image NMSE
    (truth row carries the floor sentinel).  Returns the per-method NMSE
    table as a dict.
    """
    if not images:
        raise ConfigError("need at least one image")
    vecs, labels = [], []
    for img in images:
        vec = np.asarray(getattr(img, "pixels", img), dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != A.n:
            raise ConfigError(f"image vector has shape {vec.shape}, expected ({A.n},)")
        vecs.append(vec)
        labels.append(int(getattr(img, "label", -1)))
    side = math.isqrt(A.n)
    if side * side != A.n:
        raise ConfigError(f"N={A.n} is not a perfect square; cannot tile images")
    for ad in adapters:
        if ad.kind == "network" and (ad.params.n != A.n or ad.params.m != A.m):
            raise ConfigError(
                f"model {ad.name} is {ad.params.m}x{ad.params.n}, matrix is {A.m}x{A.n}"
            )

    rows = [("truth", vecs, [NMSE_FLOOR_DB] * len(vecs))]
    for ad in adapters:
        ests, scores = [], []
        for j, vec in enumerate(vecs):
            meas = synthesize(A, vec, snr_db, derive_seed(seed, "grid-noise", j))
            est = ad.solve(A, meas.y)
            ests.append(est)
            scores.append(nmse_db(est[None, :], vec[None, :]))
        rows.append((ad.name, ests, scores))

    pad = 2
    height = len(rows) * side + (len(rows) + 1) * pad
    width = len(vecs) * side + (len(vecs) + 1) * pad
    grid = np.ones((height, width))  # white gutters
    for r, (_, ests, _) in enumerate(rows):
        for c, est in enumerate(ests):
            top = pad + r * (side + pad)
            left = pad + c * (side + pad)
            grid[top:top + side, left:left + side] = np.clip(est, 0.0, 1.0).reshape(side, side)
    write_pgm(pgm_path, grid)

    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "image_index", "label", "nmse_db"])
        for name, _, scores in rows:
            for j, score in enumerate(scores):
                w.writerow([name, j, labels[j], repr(float(score))])
    return {name: scores for name, _, scores in rows}
