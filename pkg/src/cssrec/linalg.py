"""Dense float64 linear-algebra primitives.

Vectors and matrices are plain C-contiguous numpy float64 arrays.  The
functions here are pure and safe to call from any number of workers.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ContractError, ConvergenceError

__all__ = ["matvec", "soft_threshold", "lipschitz_constant", "conv1d_same", "as_vector", "as_matrix"]


def as_vector(x, name: str = "x") -> np.ndarray:
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {v.shape}")
    return v


def as_matrix(a, name: str = "A") -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matvec(A, x) -> np.ndarray:
    """Matrix-vector product A @ x with explicit dimension checking."""
    A = as_matrix(A)
    x = as_vector(x)
    if A.shape[1] != x.shape[0]:
        raise ContractError(f"dimension mismatch: A is {A.shape}, x has length {x.shape[0]}")
    return A @ x


def _shrink(u, theta):
    """Unchecked shrinkage core; callers guarantee theta >= 0."""
    return np.sign(u) * np.maximum(np.abs(u) - theta, 0.0)


def soft_threshold(u, theta) -> np.ndarray:
    """Element-wise shrinkage max(|u| - theta, 0) * sign(u).

    ``theta`` may be a scalar or an array broadcastable against ``u``; all
    entries must be non-negative.  sign(0) is 0, so zero is a fixed point.
    """
    u = np.asarray(u, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(theta < 0):
        raise ContractError("soft_threshold requires theta >= 0")
    if theta.ndim and theta.shape[-1] != u.shape[-1] and theta.shape[-1] != 1:
        raise ContractError(
            f"threshold shape {theta.shape} does not broadcast against input {u.shape}"
        )
    return _shrink(u, theta)


def lipschitz_constant(A, tol: float = 1e-10, max_iters: int = 10000) -> float:
    """Largest eigenvalue of A^T A by power iteration.

    Starts from the all-ones vector so repeated calls are reproducible.
    Converged when the Rayleigh-quotient estimate changes by less than
    ``tol`` relative; raises ConvergenceError (carrying the last estimate)
    if ``max_iters`` is exhausted first.
    """
    A = as_matrix(A)
    if not np.any(A):
        raise ContractError("lipschitz_constant requires a nonzero matrix")
    G = A.T @ A
    v = np.ones(G.shape[0])
    v /= np.linalg.norm(v)
    estimate = float(v @ (G @ v))
    for _ in range(max_iters):
        w = G @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # ones vector sits in the nullspace; restart off-axis
            v = np.zeros_like(v)
            v[0] = 1.0
            continue
        v = w / norm
        new_estimate = float(v @ (G @ v))
        if abs(new_estimate - estimate) <= tol * max(abs(new_estimate), 1.0):
            return new_estimate
        estimate = new_estimate
    raise ConvergenceError(
        f"power iteration did not converge within {max_iters} iterations "
        f"(last estimate {estimate!r})",
        last_estimate=estimate,
    )


def conv1d_same(kernel, x) -> np.ndarray:
    """Centered sliding dot product with zero padding, output length = input length.

    result[i] = sum_j kernel[j] * x[i + j - (len(kernel)-1)//2], with
    out-of-range x taken as 0.  The kernel length must be odd.  ``x`` may be
    2-D, in which case the filter runs along the last axis row by row.
    """
    kernel = as_vector(kernel, "kernel")
    x = np.ascontiguousarray(x, dtype=np.float64)
    if kernel.shape[0] % 2 == 0:
        raise ContractError(f"kernel length must be odd, got {kernel.shape[0]}")
    return correlate1d(x, kernel, axis=-1, mode="constant", cval=0.0)
