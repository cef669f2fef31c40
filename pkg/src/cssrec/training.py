"""Adam training of the unrolled network on (y, x*) pairs.

The loop is deliberately plain: shuffled mini-batches, mean squared
reconstruction loss, Adam with bias correction, best-checkpoint selection
on a held-out validation slice.  Everything is seeded, so a (seed, config,
dataset) triple fully determines the returned parameters; resuming from a
mid-training checkpoint is bit-identical to never having stopped.

theta stays positive through a multiplicative update: the Adam step for
each layer's threshold scale is computed in log space and applied as
theta <- theta * exp(-step).  theta itself is stored linearly so an
untrained network keeps the exact lambda / L value it was built with.
"""

from __future__ import annotations

import copy
import csv
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ContractError, NumericError
from .evaluate import nmse_db
from .network import (
    LayerGrads,
    NetworkParams,
    backward,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .rng import derive_seed, stream
from .synth import SensingMatrix

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainState",
    "loss_mse",
    "adam_step",
    "train",
    "write_log_csv",
    "save_train_checkpoint",
    "load_train_checkpoint",
]

SCHEDULES = ("end_to_end", "stagewise")


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps_adam: float = 1e-8
    batch_size: int = 64
    epochs: int = 40
    schedule: str = "end_to_end"
    validation_fraction: float = 0.1
    seed: int = 0
    divergence_db: float = 20.0

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.betas}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in [0, 1)")


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def loss_mse(x_hat: np.ndarray, x_star: np.ndarray) -> tuple[float, np.ndarray]:
    """Squared reconstruction error and its gradient 2 (x_hat - x_star)."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    if x_hat.shape != x_star.shape:
        raise ContractError(
            f"shape mismatch: estimate {x_hat.shape} vs truth {x_star.shape}"
        )
    diff = x_hat - x_star
    return float(np.sum(diff * diff)), 2.0 * diff


def _moment_update(state: AdamState, key: str, g: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """Bias-corrected Adam step direction for one parameter tensor."""
    b1, b2 = cfg.betas
    if key not in state.m:
        state.m[key] = np.zeros_like(g)
        state.v[key] = np.zeros_like(g)
    state.m[key] = b1 * state.m[key] + (1 - b1) * g
    state.v[key] = b2 * state.v[key] + (1 - b2) * g * g
    mhat = state.m[key] / (1 - b1 ** state.step)
    vhat = state.v[key] / (1 - b2 ** state.step)
    return cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps_adam)


def adam_step(state: AdamState, params: NetworkParams, grads: list[LayerGrads | None],
              cfg: TrainConfig) -> tuple[NetworkParams, AdamState]:
    """One Adam update in place.  ``grads[i] = None`` freezes stored layer i.

    Raises NumericError naming the layer and parameter if any gradient is
    non-finite.  theta updates multiplicatively (see module docstring).
    """
    if len(grads) != len(params.layers):
        raise ContractError(
            f"got {len(grads)} gradient entries for {len(params.layers)} stored layers"
        )
    for i, lg in enumerate(grads):
        if lg is None:
            continue
        for name, g in _named_grads(params.layers[i], lg, i):
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {name}")
    state.step += 1
    for i, lg in enumerate(grads):
        if lg is None:
            continue
        lp = params.layers[i]
        if lg.B is not None:
            lp.B -= _moment_update(state, f"layer{i}.B", lg.B, cfg)
        if lg.C is not None:
            lp.C -= _moment_update(state, f"layer{i}.C", lg.C, cfg)
        g_log = lg.theta * lp.theta  # d loss / d log(theta)
        delta = _moment_update(state, f"layer{i}.theta", np.float64(g_log), cfg)
        lp.theta = float(lp.theta * np.exp(-delta))
        rw = lp.rw
        if lg.t is not None:
            rw.t = float(rw.t - _moment_update(state, f"layer{i}.t", np.float64(lg.t), cfg))
        if lg.v1 is not None:
            rw.v1 -= _moment_update(state, f"layer{i}.v1", lg.v1, cfg)
        if lg.v2 is not None:
            rw.v2 -= _moment_update(state, f"layer{i}.v2", lg.v2, cfg)
        if lg.G is not None:
            rw.G -= _moment_update(state, f"layer{i}.G", lg.G, cfg)
    return params, state


def _named_grads(lp, lg: LayerGrads, i: int):
    if lg.B is not None:
        yield f"layer{i}.B", lg.B
    if lg.C is not None:
        yield f"layer{i}.C", lg.C
    yield f"layer{i}.theta", np.float64(lg.theta)
    if lg.t is not None:
        yield f"layer{i}.t", np.float64(lg.t)
    if lg.v1 is not None:
        yield f"layer{i}.v1", lg.v1
    if lg.v2 is not None:
        yield f"layer{i}.v2", lg.v2
    if lg.G is not None:
        yield f"layer{i}.G", lg.G


@dataclass
class TrainState:
    """Everything needed to resume mid-training bit-identically."""

    adam: AdamState
    next_epoch: int = 0
    best_val: float = np.inf
    best_params: NetworkParams | None = None
    rows: list = field(default_factory=list)  # (epoch, train_loss, val_nmse_db, wall_s)


def _stage_layers(cfg: TrainConfig, params: NetworkParams, epoch: int) -> int:
    """How many leading stored layers train during this epoch."""
    k = len(params.layers)
    if cfg.schedule == "end_to_end" or k == 1:
        return k
    per_stage = cfg.epochs // (k + 1)
    if per_stage == 0:
        return k
    stage = epoch // per_stage  # stages 0..k-1 grow the prefix; rest fine-tunes all
    return min(stage + 1, k)


def train(params: NetworkParams, A: SensingMatrix, data, cfg: TrainConfig,
          resume: TrainState | None = None):
    """Train ``params`` on a dataset of (y, x*) rows.

    ``data`` is a pair of arrays (Y, X) with matching row counts, or a list
    of (Measurement, CssSignal) pairs.  The trailing validation_fraction of
    rows is held out; the parameters with the best validation NMSE are
    returned along with per-epoch log rows (epoch, train_loss, val_nmse_db,
    wall_seconds).  Aborts early if validation NMSE worsens by more than
    ``divergence_db`` from the best seen.

    Mutates ``params`` in place (the returned best snapshot is a copy
    unless no validation split exists, in which case the final parameters
    are returned).
    """
    cfg.validate()
    params.validate()
    if cfg.schedule == "stagewise" and params.sharing == "tied":
        raise ConfigError("stagewise schedule needs per-layer parameters; tied has one")
    Y, X = _data_arrays(data)
    if Y.shape[0] == 0:
        raise ContractError("training data is empty")
    if Y.shape[1] != params.m or X.shape[1] != params.n:
        raise ConfigError(
            f"dataset is M={Y.shape[1]}, N={X.shape[1]} but network expects "
            f"M={params.m}, N={params.n}"
        )
    n_total = Y.shape[0]
    n_val = int(round(cfg.validation_fraction * n_total))
    n_train = n_total - n_val
    if n_train == 0:
        raise ConfigError("validation split leaves no training rows")
    train_Y, train_X = Y[:n_train], X[:n_train]
    val_Y, val_X = Y[n_train:], X[n_train:]

    state = resume if resume is not None else TrainState(adam=AdamState())
    for epoch in range(state.next_epoch, cfg.epochs):
        t0 = time.perf_counter()
        active = _stage_layers(cfg, params, epoch)
        order = stream(derive_seed(cfg.seed, "shuffle", epoch), "shuffle").permutation(n_train)
        total = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x_hat, tape = forward(params, A, train_Y[idx])
            diff = x_hat - train_X[idx]
            total += float(np.sum(diff * diff))
            grads = backward(params, A, tape, (2.0 / idx.size) * diff)
            for i in range(active, len(grads)):
                grads[i] = None
            adam_step(state.adam, params, grads, cfg)
        train_loss = total / n_train
        if n_val:
            val_hat, _ = forward(params, A, val_Y)
            val_nmse = nmse_db(val_hat, val_X)
        else:
            val_nmse = float("nan")
        if val_nmse < state.best_val:
            state.best_val = val_nmse
            state.best_params = copy.deepcopy(params)
        state.rows.append((epoch, train_loss, val_nmse, time.perf_counter() - t0))
        state.next_epoch = epoch + 1
        if n_val and val_nmse > state.best_val + cfg.divergence_db:
            break
    best = state.best_params if state.best_params is not None else params
    return best, list(state.rows)


def _data_arrays(data):
    if isinstance(data, tuple) and len(data) == 2:
        Y = np.asarray(data[0], dtype=np.float64)
        X = np.asarray(data[1], dtype=np.float64)
    else:
        Y = np.stack([np.asarray(p[0].y, dtype=np.float64) for p in data])
        X = np.stack([np.asarray(p[1].x, dtype=np.float64) for p in data])
    if Y.ndim != 2 or X.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise ContractError(
            f"expected matching (count, M) and (count, N) arrays, "
            f"got {Y.shape} and {X.shape}"
        )
    return Y, X


def write_log_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_nmse_db", "wall_seconds"])
        for epoch, loss, nmse, wall in rows:
            writer.writerow([epoch, repr(float(loss)), repr(float(nmse)), f"{wall:.3f}"])


# --- resumable checkpoints --------------------------------------------------
#
# A training checkpoint is the generic container with the live parameters,
# plus extras holding the optimizer moments and the best-so-far snapshot,
# plus resume bookkeeping in the header meta.  Final checkpoints written by
# the CLI carry parameters only, so their bytes depend on nothing but the
# (seed, config, dataset) triple.


def save_train_checkpoint(path, params: NetworkParams, state: TrainState,
                          cfg: TrainConfig) -> None:
    extras = {}
    for key in sorted(state.adam.m):
        extras[f"adam.m.{key}"] = np.atleast_1d(np.asarray(state.adam.m[key]))
        extras[f"adam.v.{key}"] = np.atleast_1d(np.asarray(state.adam.v[key]))
    best = state.best_params
    if best is not None:
        from .network import parameter_items

        for name, arr in parameter_items(best):
            extras[f"best.{name}"] = arr
    meta = {
        "train_state": {
            "step": state.adam.step,
            "next_epoch": state.next_epoch,
            "best_val": None if not np.isfinite(state.best_val) else state.best_val,
            "has_best": best is not None,
            "rows": [[int(e), float(l), float(v), float(w)] for e, l, v, w in state.rows],
            "scalar_moments": sorted(
                k for k, arr in state.adam.m.items() if np.ndim(arr) == 0
            ),
        },
        "cfg": {**asdict(cfg), "betas": list(cfg.betas)},
    }
    save_checkpoint(path, params, extras=extras, meta=meta)


def load_train_checkpoint(path):
    params, meta, extras = load_checkpoint(path)
    ts = meta.get("train_state")
    if ts is None:
        raise ContractError(f"{path} has no training state to resume from")
    scalars = set(ts.get("scalar_moments", []))
    adam = AdamState(step=int(ts["step"]))
    for key, arr in extras.items():
        if key.startswith("adam.m."):
            name = key[len("adam.m."):]
            adam.m[name] = float(arr[0]) if name in scalars else arr
        elif key.startswith("adam.v."):
            name = key[len("adam.v."):]
            adam.v[name] = float(arr[0]) if name in scalars else arr
    best = None
    if ts.get("has_best"):
        best = copy.deepcopy(params)
        for i, lp in enumerate(best.layers):
            if lp.B is not None:
                lp.B = extras[f"best.layer{i}.B"]
            lp.C = extras[f"best.layer{i}.C"]
            lp.theta = float(extras[f"best.layer{i}.theta"][0])
            if lp.rw.variant == "elementwise":
                lp.rw.t = float(extras[f"best.layer{i}.t"][0])
            elif lp.rw.variant == "conv":
                lp.rw.v1 = extras[f"best.layer{i}.v1"]
                lp.rw.v2 = extras[f"best.layer{i}.v2"]
            elif lp.rw.variant == "fc":
                lp.rw.G = extras[f"best.layer{i}.G"]
    best_val = ts.get("best_val")
    state = TrainState(
        adam=adam,
        next_epoch=int(ts["next_epoch"]),
        best_val=np.inf if best_val is None else float(best_val),
        best_params=best,
        rows=[tuple(r) for r in ts.get("rows", [])],
    )
    cfg_d = dict(meta.get("cfg", {}))
    if "betas" in cfg_d:
        cfg_d["betas"] = tuple(cfg_d["betas"])
    cfg = TrainConfig(**cfg_d) if cfg_d else TrainConfig()
    return params, state, cfg
