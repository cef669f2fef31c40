"""Frozen experiment defaults and the grid search that produced them.

The classical baselines need a regularization weight (and, for the
reweighted variant, a merit epsilon) that no reference pins down.  The
values below were chosen by ``grid_search_classical`` at the reference
problem (N=200, M=100, S=40, T=4, SNR=30 dB, 12 iterations, 200 trials,
seed 0): a coarse pass over the default grids, then a refinement over
lam in {0.1..0.4}, eps in {0.1..0.7}.  Rerun the search (see
demos/solvers_demo.py) to reproduce them; the score surface is flat to
within 0.01 dB around each winner.
"""

from __future__ import annotations

import numpy as np

from .rng import derive_seed
from .solvers import MeritFunction, SolverConfig, ista, rwista
from .synth import gen_css_signal, gen_sensing_matrix, synthesize

__all__ = [
    "DEPTH",
    "REFERENCE",
    "ISTA_LAM",
    "RWISTA_LAM",
    "RWISTA_EPS",
    "ista_config",
    "rwista_config",
    "grid_search_classical",
]

DEPTH = 12
REFERENCE = {"n": 200, "m": 100, "s": 40, "t": 4, "snr_db": 30.0}

# Frozen by grid_search_classical at the reference problem (see module docstring).
ISTA_LAM = 0.25
RWISTA_LAM = 0.1
RWISTA_EPS = 0.2


def ista_config(iters: int = DEPTH, lam: float | None = None) -> SolverConfig:
    return SolverConfig(lam=ISTA_LAM if lam is None else lam, iters=iters,
                        merit=MeritFunction("identity"))


def rwista_config(iters: int = DEPTH, lam: float | None = None,
                  epsilon: float | None = None) -> SolverConfig:
    return SolverConfig(
        lam=RWISTA_LAM if lam is None else lam,
        iters=iters,
        merit=MeritFunction("log", RWISTA_EPS if epsilon is None else epsilon),
    )


def grid_search_classical(lam_grid=None, eps_grid=None, trials: int = 200,
                          iters: int = DEPTH, seed: int = 0, problem=None):
    """Mean NMSE ratio per (lam, eps) cell for both solvers at the reference problem.

    Returns {"ista": {lam: mean_ratio}, "rwista": {(lam, eps): mean_ratio},
    "best_ista_lam": ..., "best_rwista": (lam, eps)}.
    """
    p = dict(REFERENCE if problem is None else problem)
    lam_grid = [0.02, 0.05, 0.1, 0.2, 0.5, 1.0] if lam_grid is None else lam_grid
    eps_grid = [0.01, 0.03, 0.1, 0.3, 1.0] if eps_grid is None else eps_grid
    A = gen_sensing_matrix(p["m"], p["n"], derive_seed(seed, "tune-matrix"))
    sigs, meas = [], []
    for i in range(trials):
        sig = gen_css_signal(p["n"], p["s"], p["t"], derive_seed(seed, "tune-signal", i))
        sigs.append(sig)
        meas.append(synthesize(A, sig, p["snr_db"], derive_seed(seed, "tune-noise", i)))
    Y = np.stack([m.y for m in meas])
    X = np.stack([s.x for s in sigs])
    xnorm = np.linalg.norm(X, axis=1)

    def score(est):
        return float(np.mean(np.linalg.norm(est - X, axis=1) / xnorm))

    out = {"ista": {}, "rwista": {}}
    for lam in lam_grid:
        cfg = SolverConfig(lam=lam, iters=iters, merit=MeritFunction("identity"))
        out["ista"][lam] = score(ista(A, Y, cfg))
        for eps in eps_grid:
            cfg = SolverConfig(lam=lam, iters=iters, merit=MeritFunction("log", eps))
            out["rwista"][(lam, eps)] = score(rwista(A, Y, cfg))
    out["best_ista_lam"] = min(out["ista"], key=out["ista"].get)
    out["best_rwista"] = min(out["rwista"], key=out["rwista"].get)
    return out
