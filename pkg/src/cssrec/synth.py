"""Synthetic problem generation: sensing matrices, cluster-sparse signals,
noisy measurements, and whole datasets.

Signals follow the block model: S nonzero entries arranged in exactly T
maximal runs of consecutive indices, with at least one zero between runs.
Block sizes are a uniform composition of S into T positive parts; block
locations are uniform over all feasible placements (no rejection loops).
All randomness is keyed Philox, so every artifact is a pure function of
its seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, ParseError
from .linalg import lipschitz_constant
from .rng import example_seed, stream

__all__ = [
    "SensingMatrix",
    "CssSignal",
    "Measurement",
    "DatasetSpec",
    "gen_sensing_matrix",
    "gen_css_signal",
    "synthesize",
    "make_dataset",
    "dataset_arrays",
    "save_dataset",
    "load_dataset",
]

_MAGIC = b"CSSD"
_VERSION = 1


@dataclass(frozen=True)
class SensingMatrix:
    """Dictionary A (M x N, unit-norm columns) with its cached Lipschitz constant."""

    A: np.ndarray
    L: float

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class CssSignal:
    """Ground-truth sparse vector with support metadata."""

    x: np.ndarray
    support: np.ndarray  # sorted nonzero indices
    sparsity: int
    block_count: int


@dataclass(frozen=True)
class Measurement:
    y: np.ndarray
    snr_db: float
    noise_seed: int


def gen_sensing_matrix(m: int, n: int, seed: int) -> SensingMatrix:
    """Gaussian dictionary: entries N(0, 1/M), columns rescaled to unit l2 norm."""
    if m <= 0 or n <= 0:
        raise ConfigError(f"matrix dimensions must be positive, got {m}x{n}")
    if m > n:
        raise ConfigError(f"overdetermined systems unsupported (M={m} > N={n})")
    raw = _raw_gaussian(m, n, seed)
    A = raw / np.linalg.norm(raw, axis=0)
    return SensingMatrix(A=A, L=lipschitz_constant(A))


def _raw_gaussian(m: int, n: int, seed: int) -> np.ndarray:
    """Pre-normalization entries; split out so tests can check their statistics."""
    rng = stream(seed, "sensing-matrix")
    return rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, n))


def gen_css_signal(n: int, s: int, t: int, seed: int) -> CssSignal:
    """Draw a cluster-sparse signal: T blocks summing to S nonzeros, N(0,1) values."""
    if not (1 <= t <= s):
        raise ConfigError(f"need 1 <= T <= S, got S={s}, T={t}")
    if s + (t - 1) > n:
        raise ConfigError(f"S={s} nonzeros in T={t} separated blocks do not fit in N={n}")
    rng = stream(seed, "css-signal")
    sizes = _uniform_composition(s, t, rng)
    free = n - s - (t - 1)
    gaps = _uniform_weak_composition(free, t + 1, rng)

    support = []
    pos = gaps[0]
    for i, size in enumerate(sizes):
        support.extend(range(pos, pos + size))
        pos += size
        if i < t - 1:
            pos += 1 + gaps[i + 1]  # mandatory separator zero plus free slack
    support = np.asarray(support, dtype=np.intp)

    x = np.zeros(n)
    x[support] = rng.normal(size=s)
    return CssSignal(x=x, support=support, sparsity=s, block_count=t)


def _uniform_composition(total: int, parts: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform composition of ``total`` into ``parts`` positive integers."""
    if parts == 1:
        return np.array([total], dtype=np.intp)
    cuts = np.sort(rng.choice(total - 1, size=parts - 1, replace=False)) + 1
    return np.diff(np.concatenate(([0], cuts, [total]))).astype(np.intp)


def _uniform_weak_composition(total: int, parts: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform composition of ``total`` into ``parts`` non-negative integers."""
    if total == 0:
        return np.zeros(parts, dtype=np.intp)
    # stars and bars: choose bar positions among total + parts - 1 slots
    bars = np.sort(rng.choice(total + parts - 1, size=parts - 1, replace=False))
    padded = np.concatenate(([-1], bars, [total + parts - 1]))
    return (np.diff(padded) - 1).astype(np.intp)


def support_runs(support: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of consecutive indices as (start, length) pairs."""
    if len(support) == 0:
        return []
    breaks = np.where(np.diff(support) > 1)[0]
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [len(support) - 1]))
    return [(int(support[a]), int(b - a + 1)) for a, b in zip(starts, ends)]


def synthesize(A: SensingMatrix, x: CssSignal | np.ndarray, snr_db: float, seed: int) -> Measurement:
    """Measure y = Ax + noise, with the noise rescaled to hit snr_db exactly.

    ``snr_db=inf`` gives the noiseless y = Ax.  The drawn Gaussian noise is
    scaled so the empirical ratio ||Ax||^2 / ||eps||^2 equals 10^(snr/10)
    per sample, not just in expectation.
    """
    vec = x.x if isinstance(x, CssSignal) else np.asarray(x, dtype=np.float64)
    if A.A.shape[1] != vec.shape[0]:
        raise ContractError(f"A is {A.A.shape} but x has length {vec.shape[0]}")
    clean = A.A @ vec
    if np.isinf(snr_db) and snr_db > 0:
        return Measurement(y=clean, snr_db=snr_db, noise_seed=seed)
    signal_power = float(clean @ clean)
    if signal_power == 0.0:
        raise ConfigError("x is identically zero: SNR is undefined at finite snr_db")
    rng = stream(seed, "measurement-noise")
    eps = rng.normal(size=A.m)
    eps *= np.sqrt(signal_power / (float(eps @ eps) * 10.0 ** (snr_db / 10.0)))
    return Measurement(y=clean + eps, snr_db=snr_db, noise_seed=seed)


@dataclass
class DatasetSpec:
    """Sizes and noise level for a generated dataset.

    ``s`` may be a single sparsity or a per-example list (length == count).
    """

    n: int
    m: int
    s: int | list[int]
    t: int
    snr_db: float
    count: int
    seed: int = 0
    matrix_seed: int | None = None  # defaults to seed

    def s_for(self, index: int) -> int:
        if isinstance(self.s, (list, tuple, np.ndarray)):
            return int(self.s[index])
        return int(self.s)

    def validate(self) -> None:
        if self.n <= 0 or self.m <= 0 or self.t <= 0 or self.count <= 0:
            raise ConfigError("dataset spec sizes must be positive")
        if isinstance(self.s, (list, tuple, np.ndarray)) and len(self.s) != self.count:
            raise ConfigError(
                f"per-example sparsity list has length {len(self.s)}, expected count={self.count}"
            )

    @classmethod
    def from_json(cls, path) -> "DatasetSpec":
        with open(path) as f:
            raw = json.load(f)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "DatasetSpec":
        def pick(*names, required=True, default=None):
            for name in names:
                if name in raw:
                    return raw[name]
            if required:
                raise ConfigError(f"dataset spec missing key {names[0]!r}")
            return default

        spec = cls(
            n=int(pick("N", "n")),
            m=int(pick("M", "m")),
            s=pick("S", "s"),
            t=int(pick("T", "t")),
            snr_db=float(pick("snr_db", "snr")),
            count=int(pick("count", "counts")),
            seed=int(pick("seed", "seeds", required=False, default=0)),
        )
        spec.validate()
        return spec


def make_dataset(spec: DatasetSpec, seed: int | None = None):
    """Generate ``spec.count`` (Measurement, CssSignal) pairs plus their matrix.

    Example i derives its seed as ``seed XOR i``, so the result is identical
    no matter how generation is parallelized or ordered.
    """
    spec.validate()
    base = spec.seed if seed is None else seed
    A = gen_sensing_matrix(spec.m, spec.n, base if spec.matrix_seed is None else spec.matrix_seed)
    pairs = []
    for i in range(spec.count):
        es = example_seed(base, i)
        sig = gen_css_signal(spec.n, spec.s_for(i), spec.t, es)
        meas = synthesize(A, sig, spec.snr_db, es)
        pairs.append((meas, sig))
    return A, pairs


def dataset_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    """Stack a pair list into (Y, X) arrays of shape (count, M) and (count, N)."""
    Y = np.stack([m.y for m, _ in pairs])
    X = np.stack([s.x for _, s in pairs])
    return Y, X


def save_dataset(path, Y: np.ndarray, X: np.ndarray) -> None:
    """Write (y, x) pairs: 16-byte header then little-endian f64 per pair."""
    Y = np.ascontiguousarray(Y, dtype="<f8")
    X = np.ascontiguousarray(X, dtype="<f8")
    if Y.ndim != 2 or X.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise ContractError("Y and X must be 2-D with matching pair counts")
    header = _MAGIC + struct.pack("<HHII", _VERSION, 0, Y.shape[1], X.shape[1])
    with open(path, "wb") as f:
        f.write(header)
        for y, x in zip(Y, X):
            f.write(y.tobytes())
            f.write(x.tobytes())


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a dataset file back into (Y, X) arrays."""
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise ParseError(f"{path}: truncated header ({len(blob)} bytes, need 16)")
    if blob[:4] != _MAGIC:
        raise ParseError(f"{path}: bad magic {blob[:4]!r} at offset 0")
    version, _, m, n = struct.unpack("<HHII", blob[4:16])
    if version != _VERSION:
        raise ParseError(f"{path}: unsupported version {version} at offset 4")
    pair_bytes = 8 * (m + n)
    body = len(blob) - 16
    if pair_bytes == 0 or body % pair_bytes:
        raise ParseError(
            f"{path}: payload of {body} bytes is not a whole number of "
            f"{pair_bytes}-byte (y, x) pairs"
        )
    count = body // pair_bytes
    flat = np.frombuffer(blob, dtype="<f8", offset=16).reshape(count, m + n)
    return flat[:, :m].astype(np.float64), flat[:, m:].astype(np.float64)
