"""Untrained baselines: ISTA and its magnitude-reweighted variant.

Both solvers run the proximal-gradient recursion

    x <- soft_threshold(W x + C y, thr),   W = I - (A^T A)/L,  C = A^T/L

from x = 0.  Plain ISTA uses the constant threshold lambda/L; the
reweighted variant recomputes per-coordinate thresholds
(lambda/L) * w each sweep from the current magnitudes via a merit
function, so entries that grow large are penalized less on the next pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .linalg import _shrink
from .synth import SensingMatrix

__all__ = ["MeritFunction", "SolverConfig", "reweight", "ista", "rwista", "ista_matrices"]


@dataclass(frozen=True)
class MeritFunction:
    """Reweighting rule derived from a concave merit function.

    ``identity`` leaves all weights at 1 (plain l1); ``log`` gives
    w_i = 1/(|x_i| + epsilon), inversely proportional to magnitude.
    """

    kind: str = "log"
    epsilon: float = 0.1

    def __post_init__(self):
        if self.kind not in ("identity", "log"):
            raise ConfigError(f"unknown merit kind {self.kind!r}")
        if self.kind == "log" and not self.epsilon > 0:
            raise ConfigError(f"log merit needs epsilon > 0, got {self.epsilon}")


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 0.1
    iters: int = 12
    merit: MeritFunction = field(default_factory=MeritFunction)

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.iters < 1:
            raise ConfigError(f"iters must be >= 1, got {self.iters}")


def reweight(merit: MeritFunction, magnitudes: np.ndarray) -> np.ndarray:
    """Per-coordinate weights from magnitudes (which must be non-negative)."""
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    if np.any(magnitudes < 0):
        raise ContractError("reweight requires non-negative magnitudes")
    if merit.kind == "identity":
        return np.ones_like(magnitudes)
    return 1.0 / (magnitudes + merit.epsilon)


def ista_matrices(A: SensingMatrix) -> tuple[np.ndarray, np.ndarray]:
    """The fixed ISTA operator pair (W, C) = (I - A^T A / L, A^T / L).

    Both come back C-contiguous so every consumer hits the same BLAS path
    (memory order changes GEMM summation order, hence bits).
    """
    mat = A.A
    W = np.eye(mat.shape[1]) - (mat.T @ mat) / A.L
    C = np.ascontiguousarray(mat.T / A.L)
    return W, C


def _check_dims(A: SensingMatrix, y: np.ndarray) -> tuple[np.ndarray, bool]:
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    Y = y[None, :] if single else y
    if Y.ndim != 2 or Y.shape[1] != A.m:
        raise ContractError(f"y has shape {y.shape}, expected length-{A.m} vectors")
    return Y, single


def ista(A: SensingMatrix, y: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Plain iterative soft-thresholding from x = 0.

    ``y`` may be a single measurement (M,) or a batch (B, M); the estimate
    comes back with matching shape.
    """
    if cfg.merit.kind != "identity":
        raise ContractError("ista requires the identity merit; use rwista otherwise")
    Y, single = _check_dims(A, y)
    W, C = ista_matrices(A)
    Wt, YC = W.T, Y @ C.T
    thr = cfg.lam / A.L
    X = np.zeros((Y.shape[0], A.n))
    for _ in range(cfg.iters):
        X = _shrink(X @ Wt + YC, thr)
    return X[0] if single else X


def rwista(A: SensingMatrix, y: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Reweighted ISTA: refresh weights from |x| before every gradient step."""
    Y, single = _check_dims(A, y)
    W, C = ista_matrices(A)
    Wt, YC = W.T, Y @ C.T
    base = cfg.lam / A.L
    X = np.zeros((Y.shape[0], A.n))
    for _ in range(cfg.iters):
        w = reweight(cfg.merit, np.abs(X))
        X = _shrink(X @ Wt + YC, base * w)
    return X[0] if single else X


def lasso_objective(A: SensingMatrix, y: np.ndarray, x: np.ndarray, lam: float) -> float:
    """0.5 ||y - Ax||^2 + lam ||x||_1, the function ISTA descends."""
    r = y - A.A @ x
    return 0.5 * float(r @ r) + lam * float(np.abs(x).sum())
