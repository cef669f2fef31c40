"""Depth-K unrolled shrinkage network with learnable reweighting blocks.

Each layer computes

    w = block(|x|)                      # threshold weights in (0, 1)
    x <- soft_threshold(B x + C y, theta * w)

where the reweighting block is one of:

    none         w = 1                       (plain LISTA layer)
    elementwise  w = sigma(-t * |x|)         (self-dependence)
    conv         w = sigma(-v2 * relu(v1 * |x|))   (local dependence,
                 * = centered zero-padded sliding dot product)
    fc           w = sigma(-G |x|)           (global dependence)

``forward`` records every intermediate needed by ``backward``, which is a
hand-derived reverse sweep (no autodiff).  Parameter sharing modes:
``untied`` (per-layer B, C, theta, block), ``tied`` (one layer reused K
times), ``coupled`` (per-layer C with B = I - C A formed on the fly).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError, ContractError, NumericError, ParseError
from .linalg import _shrink, conv1d_same
from .solvers import ista_matrices
from .synth import SensingMatrix

__all__ = [
    "ReweightBlockParams",
    "LayerParams",
    "NetworkParams",
    "ForwardTape",
    "LayerGrads",
    "init_from_ista",
    "reweight_block",
    "forward",
    "backward",
    "save_checkpoint",
    "load_checkpoint",
]

VARIANTS = ("none", "elementwise", "conv", "fc")
SHARING_MODES = ("untied", "tied", "coupled")


@dataclass
class ReweightBlockParams:
    """Parameters of one reweighting block (unused fields stay None)."""

    variant: str
    t: float | None = None
    v1: np.ndarray | None = None
    v2: np.ndarray | None = None
    G: np.ndarray | None = None

    def validate(self, n: int) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown reweighting variant {self.variant!r}")
        if self.variant == "conv":
            if self.v1 is None or self.v2 is None or self.v1.shape != self.v2.shape:
                raise ConfigError("conv block needs kernels v1, v2 of equal length")
            if self.v1.shape[0] % 2 == 0:
                raise ConfigError("conv kernels must have odd length")
        if self.variant == "fc" and (self.G is None or self.G.shape != (n, n)):
            raise ConfigError(f"fc block needs a square {n}x{n} matrix")
        if self.variant == "elementwise" and self.t is None:
            raise ConfigError("elementwise block needs a temperature")


@dataclass
class LayerParams:
    """One layer's parameters. ``B`` is None under coupled sharing."""

    B: np.ndarray | None
    C: np.ndarray
    theta: float
    rw: ReweightBlockParams


@dataclass
class NetworkParams:
    n: int
    m: int
    depth: int
    sharing: str
    variant: str
    kernel_len: int
    layers: list[LayerParams]

    def layer(self, k: int) -> LayerParams:
        return self.layers[0] if self.sharing == "tied" else self.layers[k]

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.sharing not in SHARING_MODES:
            raise ConfigError(f"unknown sharing mode {self.sharing!r}")
        expect = 1 if self.sharing == "tied" else self.depth
        if len(self.layers) != expect:
            raise ConfigError(
                f"{self.sharing} sharing stores {expect} layer(s), got {len(self.layers)}"
            )
        for lp in self.layers:
            if not lp.theta > 0:
                raise ConfigError("theta must stay positive")
            if self.sharing == "coupled":
                if lp.B is not None:
                    raise ConfigError("coupled sharing must not store B explicitly")
            elif lp.B is None or lp.B.shape != (self.n, self.n):
                raise ConfigError("B must be N x N")
            if lp.C.shape != (self.n, self.m):
                raise ConfigError("C must be N x M")
            lp.rw.validate(self.n)


@dataclass
class LayerTape:
    """Intermediates of one unrolled step, kept for the reverse sweep."""

    x: np.ndarray        # layer input
    mag: np.ndarray      # |x|
    pre1: np.ndarray | None  # conv block: first-stage output before relu
    w: np.ndarray        # block output
    u: np.ndarray        # B x + C y
    thr: np.ndarray      # theta * w
    b_applied: np.ndarray | None  # coupled sharing: the derived I - C A


@dataclass
class ForwardTape:
    y: np.ndarray
    entries: list[LayerTape]
    x_hat: np.ndarray
    single: bool


def _delta_kernel(length: int, scale: float = 1.0) -> np.ndarray:
    k = np.zeros(length)
    k[(length - 1) // 2] = scale
    return k


def init_from_ista(
    A: SensingMatrix,
    lam: float,
    depth: int,
    sharing: str = "untied",
    variant: str = "none",
    kernel_len: int = 3,
    temperature: float = 1.0,
) -> NetworkParams:
    """Initialize at the classical operating point: B = I - A^T A / L,
    C = A^T / L, theta = lambda / L, and block parameters that reproduce
    elementwise reweighting with the given temperature (delta kernels for
    conv, temperature * I for fc).  ``temperature=0`` gives the flat
    half-weight start (sigma(0) = 0.5 everywhere).
    """
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown reweighting variant {variant!r}")
    if sharing not in SHARING_MODES:
        raise ConfigError(f"unknown sharing mode {sharing!r}")
    W, C = ista_matrices(A)
    theta = lam / A.L
    n, m = A.n, A.m
    count = 1 if sharing == "tied" else depth

    def block() -> ReweightBlockParams:
        if variant == "elementwise":
            return ReweightBlockParams(variant, t=temperature)
        if variant == "conv":
            return ReweightBlockParams(
                variant,
                v1=_delta_kernel(kernel_len),
                v2=_delta_kernel(kernel_len, scale=temperature),
            )
        if variant == "fc":
            return ReweightBlockParams(variant, G=temperature * np.eye(n))
        return ReweightBlockParams(variant)

    layers = [
        LayerParams(
            B=None if sharing == "coupled" else W.copy(),
            C=C.copy(),
            theta=theta,
            rw=block(),
        )
        for _ in range(count)
    ]
    params = NetworkParams(
        n=n, m=m, depth=depth, sharing=sharing, variant=variant,
        kernel_len=kernel_len, layers=layers,
    )
    params.validate()
    return params


def _block_forward(rw: ReweightBlockParams, mag: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    if rw.variant == "none":
        return np.ones_like(mag), None
    if rw.variant == "elementwise":
        return expit(-rw.t * mag), None
    if rw.variant == "fc":
        return expit(-(mag @ rw.G.T)), None
    h = conv1d_same(rw.v1, mag)
    z = conv1d_same(rw.v2, np.maximum(h, 0.0))
    return expit(-z), h


def reweight_block(rw: ReweightBlockParams, magnitudes: np.ndarray) -> np.ndarray:
    """Threshold weights in (0, 1) from non-negative magnitudes."""
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    if np.any(magnitudes < 0):
        raise ContractError("reweight_block requires non-negative magnitudes")
    w, _ = _block_forward(rw, magnitudes)
    return w


def forward(params: NetworkParams, A: SensingMatrix, y: np.ndarray):
    """Run the K-layer recursion from x = 0.

    ``y`` may be (M,) or (B, M).  Returns (x_hat, tape); the tape holds
    everything ``backward`` needs.  Raises NumericError naming the layer if
    an intermediate goes non-finite.
    """
    params.validate()
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    Y = y[None, :] if single else y
    if Y.ndim != 2 or Y.shape[1] != params.m:
        raise ContractError(f"y has shape {y.shape}, expected length-{params.m} vectors")
    if A.n != params.n or A.m != params.m:
        raise ContractError(
            f"sensing matrix is {A.m}x{A.n} but network expects {params.m}x{params.n}"
        )
    X = np.zeros((Y.shape[0], params.n))
    entries: list[LayerTape] = []
    for k in range(params.depth):
        lp = params.layer(k)
        mag = np.abs(X)
        w, pre1 = _block_forward(lp.rw, mag)
        thr = lp.theta * w
        if lp.B is None:
            b_applied = np.eye(params.n) - lp.C @ A.A
            U = X @ b_applied.T + Y @ lp.C.T
        else:
            b_applied = None
            U = X @ lp.B.T + Y @ lp.C.T
        X_next = _shrink(U, thr)
        # one cheap reduction instead of isfinite over the batch; inf - inf
        # inside the sum is the detection mechanism, so mute that warning
        with np.errstate(invalid="ignore"):
            total = float(X_next.sum())
        if not math.isfinite(total):
            raise NumericError(f"non-finite values at layer {k}")
        entries.append(LayerTape(x=X, mag=mag, pre1=pre1, w=w, u=U, thr=thr,
                                 b_applied=b_applied))
        X = X_next
    tape = ForwardTape(y=Y, entries=entries, x_hat=X, single=single)
    return (X[0] if single else X), tape


@dataclass
class LayerGrads:
    """Loss gradients for one stored layer; unused fields stay None."""

    B: np.ndarray | None = None
    C: np.ndarray | None = None
    theta: float = 0.0
    t: float | None = None
    v1: np.ndarray | None = None
    v2: np.ndarray | None = None
    G: np.ndarray | None = None


def _kernel_grad(gout: np.ndarray, x: np.ndarray, klen: int) -> np.ndarray:
    """d/d kernel of sum(gout * corr(kernel, x)) under zero padding."""
    c = (klen - 1) // 2
    n = x.shape[-1]
    g = np.zeros(klen)
    for j in range(klen):
        shift = j - c
        if shift >= 0:
            if shift < n:
                g[j] = np.sum(gout[..., : n - shift] * x[..., shift:])
        elif -shift < n:
            g[j] = np.sum(gout[..., -shift:] * x[..., : n + shift])
    return g


def _block_backward(rw: ReweightBlockParams, entry: LayerTape, gw: np.ndarray, grads: LayerGrads):
    """Accumulate block-parameter gradients; return d loss / d magnitudes."""
    if rw.variant == "none":
        return np.zeros_like(entry.mag)
    gz = -gw * entry.w * (1.0 - entry.w)  # through sigma(-z)
    if rw.variant == "elementwise":
        grads.t = (grads.t or 0.0) + float(np.sum(gz * entry.mag))
        return gz * rw.t
    if rw.variant == "fc":
        dG = gz.reshape(-1, gz.shape[-1]).T @ entry.mag.reshape(-1, entry.mag.shape[-1])
        grads.G = dG if grads.G is None else grads.G + dG
        return gz @ rw.G
    klen = rw.v2.shape[0]
    a = np.maximum(entry.pre1, 0.0)
    dv2 = _kernel_grad(gz, a, klen)
    ga = conv1d_same(rw.v2[::-1], gz)
    gh = ga * (entry.pre1 > 0.0)
    dv1 = _kernel_grad(gh, entry.mag, klen)
    grads.v1 = dv1 if grads.v1 is None else grads.v1 + dv1
    grads.v2 = dv2 if grads.v2 is None else grads.v2 + dv2
    return conv1d_same(rw.v1[::-1], gh)


def backward(params: NetworkParams, A: SensingMatrix, tape: ForwardTape,
             grad_out: np.ndarray) -> list[LayerGrads]:
    """Reverse sweep: gradients of a scalar loss with respect to every parameter.

    ``grad_out`` is d loss / d x_hat with the same shape forward returned.
    Both downstream paths into each layer input are accumulated: the linear
    path through B x and the reweighting path through w = block(|x|).
    Subgradient conventions at kinks: the shrinkage passes gradient only
    where |u| exceeds the threshold, and sign(0) = 0.

    Returns one LayerGrads per stored layer (so a single summed entry under
    tied sharing).  Under coupled sharing the B-path gradient is folded into
    C via B = I - C A.
    """
    params.validate()
    if len(tape.entries) != params.depth:
        raise ContractError(
            f"tape has {len(tape.entries)} layers but params expect {params.depth}"
        )
    g = np.asarray(grad_out, dtype=np.float64)
    if tape.single and g.ndim == 1:
        g = g[None, :]
    if g.shape != tape.x_hat.shape:
        raise ContractError(
            f"grad_out shape {np.shape(grad_out)} does not match network output"
        )
    grads = [LayerGrads() for _ in params.layers]
    Y = tape.y
    for k in reversed(range(params.depth)):
        entry = tape.entries[k]
        lp = params.layer(k)
        if entry.w.shape != (g.shape[0], params.n) and entry.w.shape != (params.n,):
            raise ContractError(f"tape/params mismatch at layer {k}")
        gi = grads[0] if params.sharing == "tied" else grads[k]
        active = np.abs(entry.u) > entry.thr
        gU = np.where(active, g, 0.0)
        gthr = np.where(active, -np.sign(entry.u) * g, 0.0)
        gi.theta += float(np.sum(gthr * entry.w))
        gw = gthr * lp.theta
        gmag = _block_backward(lp.rw, entry, gw, gi)

        dB = gU.T @ entry.x
        dC = gU.T @ Y
        if params.sharing == "coupled":
            b_applied = entry.b_applied
            dC = dC - dB @ A.A.T
            gi.C = dC if gi.C is None else gi.C + dC
        else:
            b_applied = lp.B
            gi.B = dB if gi.B is None else gi.B + dB
            gi.C = dC if gi.C is None else gi.C + dC
        g = gU @ b_applied + np.sign(entry.x) * gmag
    return grads


# --- checkpoint container ---------------------------------------------------
#
# Single file: one line of JSON (schema, dims, sharing, variant, kernel
# length, array manifest) then the declared float64 arrays, little-endian.
# Scalars travel as length-1 arrays.  Extras (optimizer state, snapshots)
# append after the parameter arrays and are declared the same way.

SCHEMA_VERSION = 1


def parameter_items(params: NetworkParams) -> list[tuple[str, np.ndarray]]:
    """Canonical (name, array) order used by checkpoints and the optimizer."""
    items: list[tuple[str, np.ndarray]] = []
    for i, lp in enumerate(params.layers):
        if lp.B is not None:
            items.append((f"layer{i}.B", lp.B))
        items.append((f"layer{i}.C", lp.C))
        items.append((f"layer{i}.theta", np.array([lp.theta])))
        rw = lp.rw
        if rw.variant == "elementwise":
            items.append((f"layer{i}.t", np.array([rw.t])))
        elif rw.variant == "conv":
            items.append((f"layer{i}.v1", rw.v1))
            items.append((f"layer{i}.v2", rw.v2))
        elif rw.variant == "fc":
            items.append((f"layer{i}.G", rw.G))
    return items


def save_checkpoint(path, params: NetworkParams, extras=None, meta=None) -> None:
    params.validate()
    items = parameter_items(params)
    extras = dict(extras or {})
    header = {
        "schema": SCHEMA_VERSION,
        "n": params.n,
        "m": params.m,
        "depth": params.depth,
        "sharing": params.sharing,
        "variant": params.variant,
        "kernel_len": params.kernel_len,
        "params": [[name, list(arr.shape)] for name, arr in items],
        "extras": [[name, list(np.asarray(arr).shape)] for name, arr in extras.items()],
        "meta": meta or {},
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for _, arr in items:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for _, arr in extras.items():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint back; returns (params, meta, extras). Bit-exact."""
    with open(path, "rb") as f:
        line = f.readline()
        try:
            header = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: bad JSON header: {e}") from None
        if header.get("schema") != SCHEMA_VERSION:
            raise ParseError(f"{path}: unsupported schema {header.get('schema')!r}")
        blob = f.read()

    def take(shapes, offset):
        out = {}
        for name, shape in shapes:
            size = int(np.prod(shape)) if shape else 1
            nbytes = 8 * size
            if offset + nbytes > len(blob):
                raise ParseError(f"{path}: truncated at array {name!r}")
            out[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape).copy()
            offset += nbytes
        return out, offset

    arrays, offset = take(header["params"], 0)
    extras, offset = take(header.get("extras", []), offset)
    if offset != len(blob):
        raise ParseError(f"{path}: {len(blob) - offset} trailing bytes")

    n, m, depth = header["n"], header["m"], header["depth"]
    sharing, variant = header["sharing"], header["variant"]
    count = 1 if sharing == "tied" else depth
    layers = []
    for i in range(count):
        rw = ReweightBlockParams(variant)
        if variant == "elementwise":
            rw.t = float(arrays[f"layer{i}.t"][0])
        elif variant == "conv":
            rw.v1 = arrays[f"layer{i}.v1"]
            rw.v2 = arrays[f"layer{i}.v2"]
        elif variant == "fc":
            rw.G = arrays[f"layer{i}.G"]
        layers.append(
            LayerParams(
                B=arrays.get(f"layer{i}.B"),
                C=arrays[f"layer{i}.C"],
                theta=float(arrays[f"layer{i}.theta"][0]),
                rw=rw,
            )
        )
    params = NetworkParams(
        n=n, m=m, depth=depth, sharing=sharing, variant=variant,
        kernel_len=header["kernel_len"], layers=layers,
    )
    params.validate()
    return params, header.get("meta", {}), extras
