"""Command-line front end: gen, train, sweep, mnist.

Every subcommand honors --seed, echoes its fully resolved configuration
as JSON (and writes it next to each output), and is deterministic:
identical invocations produce byte-identical artifacts.  Flags override
--config file keys, which override built-in defaults.  Relative paths
resolve under $CSSREC_DATA_DIR when that variable is set.

Exit codes: 0 success, 2 usage or configuration, 3 data or parse, 4
numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import configs
from .errors import ConfigError, ContractError, NumericError, ParseError
from .evaluate import (
    SweepSpec,
    export_reconstruction_grid,
    ista_adapter,
    network_adapter,
    nmse_db,
    run_sweep,
    rwista_adapter,
    save_sweep_csv,
    save_sweep_json,
)
from .mnist import load_idx_images, load_idx_labels, to_digit_vector
from .network import init_from_ista, load_checkpoint, save_checkpoint
from .rng import derive_seed, example_seed
from .synth import (
    DatasetSpec,
    dataset_arrays,
    gen_sensing_matrix,
    load_dataset,
    make_dataset,
    save_dataset,
    synthesize,
)
from .training import (
    AdamState,
    TrainConfig,
    TrainState,
    load_train_checkpoint,
    save_train_checkpoint,
    train,
    write_log_csv,
)

USAGE_EXIT, DATA_EXIT, NUMERIC_EXIT = 2, 3, 4


def data_dir() -> Path:
    return Path(os.environ.get("CSSREC_DATA_DIR", "."))


def _resolve_path(p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else data_dir() / p


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > --config file > defaults; argparse leaves unset flags at None."""
    merged = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(_resolve_path(cfg_path)) as f:
                file_cfg = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}")
        except json.JSONDecodeError as e:
            raise ParseError(f"{cfg_path}: invalid JSON: {e}")
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    return merged


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required options: {', '.join('--' + k for k in missing)}")


def _write_resolved(cfg: dict, out_path: Path) -> None:
    payload = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items())}
    with open(str(out_path) + ".config.json", "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")
    print(json.dumps(payload, sort_keys=True))


# --- gen --------------------------------------------------------------------

GEN_DEFAULTS = {
    "n": None, "m": None, "s": None, "t": None, "snr": None, "count": None,
    "seed": 0, "matrix_seed": None, "out": None,
    "from_idx": None, "labels": None, "limit": None,
}


def cmd_gen(args) -> int:
    cfg = _merge_config(args, GEN_DEFAULTS)
    _require(cfg, "n", "m", "snr", "count", "out")
    out = _resolve_path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    if cfg["from_idx"]:
        images = load_idx_images(_resolve_path(cfg["from_idx"]))
        labels = (
            load_idx_labels(_resolve_path(cfg["labels"]))
            if cfg["labels"] else np.full(len(images), -1)
        )
        if len(labels) != len(images):
            raise ContractError(
                f"{len(images)} images but {len(labels)} labels"
            )
        count = min(int(cfg["count"]), len(images))
        if cfg["limit"] is not None:
            count = min(count, int(cfg["limit"]))
        n = int(cfg["n"])
        digits = [to_digit_vector(images[i], labels[i]) for i in range(count)]
        if digits and digits[0].pixels.shape[0] != n:
            raise ConfigError(
                f"digit vectors have length {digits[0].pixels.shape[0]}, --n is {n}"
            )
        mseed = cfg["seed"] if cfg["matrix_seed"] is None else cfg["matrix_seed"]
        A = gen_sensing_matrix(int(cfg["m"]), n, mseed)
        Y = np.stack([
            synthesize(A, d.pixels, float(cfg["snr"]), example_seed(cfg["seed"], i)).y
            for i, d in enumerate(digits)
        ])
        X = np.stack([d.pixels for d in digits])
        cfg["count"] = count
    else:
        _require(cfg, "s", "t")
        spec = DatasetSpec(
            n=int(cfg["n"]), m=int(cfg["m"]), s=cfg["s"], t=int(cfg["t"]),
            snr_db=float(cfg["snr"]), count=int(cfg["count"]),
            seed=int(cfg["seed"]), matrix_seed=cfg["matrix_seed"],
        )
        _, pairs = make_dataset(spec)
        Y, X = dataset_arrays(pairs)
    save_dataset(out, Y, X)
    _write_resolved(cfg, out)
    return 0


# --- train ------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "data": None, "out": None, "arch": "lista", "rw": None, "kernel": 3,
    "sharing": "untied", "depth": configs.DEPTH, "lam": configs.ISTA_LAM,
    "temperature": 1.0, "lr": 5e-4, "batch": 64, "epochs": 40,
    "val_frac": 0.1, "schedule": "end_to_end", "seed": 0,
    "matrix_seed": None, "resume": None, "save_state": None,
}

RW_NAMES = {"none": "none", "elem": "elementwise", "conv": "conv", "fc": "fc"}


def _dataset_matrix(cfg, data_path: Path, m: int, n: int):
    """Rebuild the sensing matrix a dataset was generated with."""
    mseed = cfg.get("matrix_seed")
    if mseed is None:
        sidecar = Path(str(data_path) + ".config.json")
        if sidecar.exists():
            with open(sidecar) as f:
                gen_cfg = json.load(f)
            mseed = gen_cfg.get("matrix_seed")
            if mseed is None:
                mseed = gen_cfg.get("seed")
        if mseed is None:
            raise ConfigError(
                f"no --matrix-seed given and no sidecar config at {sidecar}"
            )
    return gen_sensing_matrix(m, n, int(mseed))


def cmd_train(args) -> int:
    cfg = _merge_config(args, TRAIN_DEFAULTS)
    _require(cfg, "data", "out")
    if int(cfg["depth"]) < 1:
        raise ConfigError(f"--depth must be >= 1, got {cfg['depth']}")
    if cfg["arch"] not in ("lista", "rw-lista"):
        raise ConfigError(f"--arch must be lista or rw-lista, got {cfg['arch']!r}")
    rw = cfg["rw"]
    if cfg["arch"] == "lista":
        if rw not in (None, "none"):
            raise ConfigError("--arch lista does not take a reweighting block")
        rw = "none"
    else:
        rw = "conv" if rw is None else rw
        if rw == "none":
            raise ConfigError("--arch rw-lista needs --rw elem|conv|fc")
    if rw not in RW_NAMES:
        raise ConfigError(f"--rw must be one of {sorted(RW_NAMES)}, got {rw!r}")
    if int(cfg["kernel"]) not in (3, 5, 7):
        raise ConfigError(f"--kernel must be 3, 5, or 7, got {cfg['kernel']}")
    cfg["rw"] = rw

    data_path = _resolve_path(cfg["data"])
    Y, X = load_dataset(data_path)
    A = _dataset_matrix(cfg, data_path, Y.shape[1], X.shape[1])
    tc = TrainConfig(
        learning_rate=float(cfg["lr"]), batch_size=int(cfg["batch"]),
        epochs=int(cfg["epochs"]), schedule=cfg["schedule"],
        validation_fraction=float(cfg["val_frac"]), seed=int(cfg["seed"]),
    )
    tc.validate()
    out = _resolve_path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)

    if cfg["resume"]:
        params, state, tc = load_train_checkpoint(_resolve_path(cfg["resume"]))
        # the saved config freezes the optimizer settings, but the epoch
        # target may be raised to continue past the interrupted run
        if args.epochs is not None:
            tc.epochs = int(args.epochs)
    else:
        params = init_from_ista(
            A, float(cfg["lam"]), int(cfg["depth"]), sharing=cfg["sharing"],
            variant=RW_NAMES[rw], kernel_len=int(cfg["kernel"]),
            temperature=float(cfg["temperature"]),
        )
        state = TrainState(adam=AdamState())
    best, rows = train(params, A, (Y, X), tc, resume=state)
    meta = {
        "val_nmse_db": None if not rows else rows[-1][2],
        "best_val_nmse_db": None if not np.isfinite(state.best_val) else state.best_val,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items())},
    }
    save_checkpoint(out, best, meta=meta)
    if cfg["save_state"]:
        save_train_checkpoint(_resolve_path(cfg["save_state"]), params, state, tc)
    write_log_csv(str(out) + ".log.csv", rows)
    _write_resolved(cfg, out)
    if rows:
        print(f"best validation NMSE: {state.best_val:.3f} dB over {len(rows)} epochs")
    return 0


# --- sweep ------------------------------------------------------------------

SWEEP_DEFAULTS = {
    "axis": None, "values": None, "n": 200, "m": 100, "s": 40, "t": 4,
    "snr": 30.0, "trials": 100, "solvers": "ista,rwista", "seed": 0,
    "matrix_seed": None, "workers": 1, "out": None, "iters": configs.DEPTH,
    "ista_lam": None, "rwista_lam": None, "rwista_eps": None,
}


def _parse_values(text: str) -> list[float]:
    try:
        vals = [float(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"cannot parse --values {text!r}")
    if not vals:
        raise ConfigError("--values is empty")
    return [int(v) if float(v).is_integer() else v for v in vals]


def _build_adapters(tokens: list[str], cfg: dict):
    adapters = []
    iters = int(cfg["iters"])
    for tok in tokens:
        if "=" in tok:
            name, path = tok.split("=", 1)
            ckpt = _resolve_path(path)
            if not ckpt.exists():
                raise ConfigError(f"missing checkpoint for {name!r}: {ckpt}")
            params, _, _ = load_checkpoint(ckpt)
            adapters.append(network_adapter(name, params))
        elif tok == "ista":
            adapters.append(ista_adapter(
                tok, configs.ista_config(iters, lam=cfg.get("ista_lam"))))
        elif tok.startswith("rwista"):
            it = int(tok[len("rwista"):]) if tok != "rwista" else iters
            adapters.append(rwista_adapter(tok, configs.rwista_config(
                it, lam=cfg.get("rwista_lam"), epsilon=cfg.get("rwista_eps"))))
        else:
            raise ConfigError(
                f"unknown solver {tok!r}: use ista, rwista, rwista<iters>, or name=ckpt"
            )
    return adapters


def cmd_sweep(args) -> int:
    cfg = _merge_config(args, SWEEP_DEFAULTS)
    _require(cfg, "axis", "values", "out")
    values = _parse_values(cfg["values"])
    tokens = [t for t in str(cfg["solvers"]).split(",") if t]
    adapters = _build_adapters(tokens, cfg)
    spec = SweepSpec(
        axis=cfg["axis"], values=values, n=int(cfg["n"]), m=int(cfg["m"]),
        s=int(cfg["s"]), t=int(cfg["t"]), snr_db=float(cfg["snr"]),
        trials=int(cfg["trials"]), solvers=[a.name for a in adapters],
        seed=int(cfg["seed"]), matrix_seed=cfg["matrix_seed"],
    )
    result = run_sweep(spec, adapters, workers=int(cfg["workers"]))
    out = _resolve_path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_sweep_csv(result, str(out) + ".csv")
    save_sweep_json(result, str(out) + ".json")
    cfg["values"] = values
    _write_resolved(cfg, out)
    return 0


# --- mnist ------------------------------------------------------------------

MNIST_DEFAULTS = {
    "images": None, "labels": None, "models": None, "n": 400, "m": 200,
    "snr": 20.0, "digits": "0..9", "per_digit": 1, "eval_count": 100,
    "seed": 0, "matrix_seed": None, "out": None,
    "iters": configs.DEPTH, "ista_lam": None, "rwista_lam": None, "rwista_eps": None,
}


def _parse_digits(text: str) -> list[int]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    bad = [d for d in out if not 0 <= d <= 9]
    if bad or not out:
        raise ConfigError(f"--digits must name digits 0-9, got {text!r}")
    return out


def cmd_mnist(args) -> int:
    cfg = _merge_config(args, MNIST_DEFAULTS)
    _require(cfg, "images", "labels", "models", "out")
    images = load_idx_images(_resolve_path(cfg["images"]))
    labels = load_idx_labels(_resolve_path(cfg["labels"]))
    if len(images) != len(labels):
        raise ContractError(f"{len(images)} images but {len(labels)} labels")
    n, m = int(cfg["n"]), int(cfg["m"])
    mseed = cfg["seed"] if cfg["matrix_seed"] is None else cfg["matrix_seed"]
    A = gen_sensing_matrix(m, n, int(mseed))
    adapters = _build_adapters([t for t in str(cfg["models"]).split(",") if t], cfg)

    eval_count = int(cfg["eval_count"])
    if eval_count > len(images):
        raise ConfigError(f"--eval-count {eval_count} exceeds {len(images)} images")
    tail = range(len(images) - eval_count, len(images))
    held = [to_digit_vector(images[i], labels[i]) for i in tail]

    out = _resolve_path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)

    # mean NMSE per model over the held-out tail
    seed = int(cfg["seed"])
    truths = np.stack([d.pixels for d in held])
    meas = np.stack([
        synthesize(A, d.pixels, float(cfg["snr"]), derive_seed(seed, "eval-noise", i)).y
        for i, d in enumerate(held)
    ])
    rows = []
    for ad in adapters:
        est = np.stack([ad.solve(A, meas[i]) for i in range(len(held))])
        rows.append((ad.name, nmse_db(est, truths), len(held)))
    with open(str(out) + ".eval.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "mean_nmse_db", "images"])
        for name, db, cnt in rows:
            w.writerow([name, repr(float(db)), cnt])

    # reconstruction grid over the requested digit selection
    wanted = _parse_digits(cfg["digits"])
    per = int(cfg["per_digit"])
    chosen = []
    for d in wanted:
        picks = [img for img in held if img.label == d][:per]
        if len(picks) < per:
            raise ConfigError(
                f"held-out set has only {len(picks)} image(s) of digit {d}, need {per}"
            )
        chosen.extend(picks)
    export_reconstruction_grid(
        adapters, chosen, A, float(cfg["snr"]),
        str(out) + ".grid.pgm", str(out) + ".grid.csv",
        seed=derive_seed(seed, "grid"),
    )
    _write_resolved(cfg, out)
    for name, db, _ in rows:
        print(f"{name}: mean NMSE {db:.3f} dB over {len(held)} held-out digits")
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cssrec",
        description="Cluster-structured sparse recovery: data synthesis, "
                    "classical and unrolled solvers, training, and evaluation.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", help="JSON config file; flags override its keys")
        sp.add_argument("--seed", type=int, help="global RNG seed (default 0)")
        sp.add_argument("--out", help="output path or prefix")
        return sp

    g = add("gen", cmd_gen, "generate a (y, x) dataset file")
    g.add_argument("--n", type=int, help="signal length N")
    g.add_argument("--m", type=int, help="measurement count M")
    g.add_argument("--s", type=int, help="nonzeros per signal S")
    g.add_argument("--t", type=int, help="block count T")
    g.add_argument("--snr", type=float, help="measurement SNR in dB")
    g.add_argument("--count", type=int, help="number of examples")
    g.add_argument("--matrix-seed", dest="matrix_seed", type=int,
                   help="sensing-matrix seed (default: --seed)")
    g.add_argument("--from-idx", dest="from_idx",
                   help="build the dataset from an IDX image file instead")
    g.add_argument("--labels", help="IDX label file for --from-idx")
    g.add_argument("--limit", type=int, help="cap on images taken from --from-idx")

    t = add("train", cmd_train, "train an unrolled network on a dataset")
    t.add_argument("--data", help="dataset file from gen")
    t.add_argument("--arch", choices=["lista", "rw-lista"])
    t.add_argument("--rw", choices=["none", "elem", "conv", "fc"])
    t.add_argument("--kernel", type=int, help="conv kernel length: 3, 5, or 7")
    t.add_argument("--sharing", choices=["untied", "tied", "coupled"])
    t.add_argument("--depth", type=int, help="number of unrolled layers")
    t.add_argument("--lam", type=float, help="lambda for the ISTA initialization")
    t.add_argument("--temperature", type=float, help="reweighting-block init scale")
    t.add_argument("--lr", type=float, help="Adam learning rate")
    t.add_argument("--batch", type=int, help="mini-batch size")
    t.add_argument("--epochs", type=int)
    t.add_argument("--val-frac", dest="val_frac", type=float,
                   help="fraction of rows held out for validation")
    t.add_argument("--schedule", choices=["end_to_end", "stagewise"])
    t.add_argument("--matrix-seed", dest="matrix_seed", type=int,
                   help="seed of the dataset's sensing matrix")
    t.add_argument("--resume", help="training-state checkpoint to continue from")
    t.add_argument("--save-state", dest="save_state",
                   help="also write a resumable training-state checkpoint here")

    s = add("sweep", cmd_sweep, "Monte Carlo NMSE sweep along one axis")
    s.add_argument("--axis", choices=["snr", "sparsity", "block_count", "measurements"])
    s.add_argument("--values", help="comma-separated axis values, ascending")
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--s", type=int)
    s.add_argument("--t", type=int)
    s.add_argument("--snr", type=float)
    s.add_argument("--trials", type=int)
    s.add_argument("--solvers",
                   help="comma list: ista, rwista, rwista<iters>, name=checkpoint")
    s.add_argument("--matrix-seed", dest="matrix_seed", type=int,
                   help="pin the fixed-M sensing matrix (e.g. a model's)")
    s.add_argument("--workers", type=int, help="process-pool size")
    s.add_argument("--iters", type=int, help="classical solver iterations")
    s.add_argument("--ista-lam", dest="ista_lam", type=float)
    s.add_argument("--rwista-lam", dest="rwista_lam", type=float)
    s.add_argument("--rwista-eps", dest="rwista_eps", type=float)

    mn = add("mnist", cmd_mnist, "digit-recovery evaluation and grid export")
    mn.add_argument("--images", help="IDX image file")
    mn.add_argument("--labels", help="IDX label file")
    mn.add_argument("--models", help="comma list: name=checkpoint, ista, rwista")
    mn.add_argument("--n", type=int)
    mn.add_argument("--m", type=int)
    mn.add_argument("--snr", type=float)
    mn.add_argument("--digits", help="grid digits, e.g. 0..9 or 3,7")
    mn.add_argument("--per-digit", dest="per_digit", type=int)
    mn.add_argument("--eval-count", dest="eval_count", type=int,
                    help="held-out tail images scored for mean NMSE")
    mn.add_argument("--matrix-seed", dest="matrix_seed", type=int)
    mn.add_argument("--iters", type=int)
    mn.add_argument("--ista-lam", dest="ista_lam", type=float)
    mn.add_argument("--rwista-lam", dest="rwista_lam", type=float)
    mn.add_argument("--rwista-eps", dest="rwista_eps", type=float)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_EXIT
    except (ParseError, ContractError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_EXIT
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
