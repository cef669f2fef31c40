"""Recover rasterized digits from compressed measurements.

Digits are treated as plain length-400 signals (20x20 pixels): measure
them through a 200x400 Gaussian matrix at 20 dB SNR, train a small
unrolled network, and write a side-by-side reconstruction grid as a PGM
image anyone's viewer can open.

Point --images/--labels at MNIST IDX files if you have them.  Without
them the demo fabricates an IDX pair from scikit-learn's bundled 8x8
digit scans (upsampled to 28x28), which keeps the pipeline identical:
parse IDX, downscale to 20x20, recover, tile.

    python3 demos/digits_demo.py [--count 3000] [--epochs 15]
"""

import argparse
import gzip
import struct
from pathlib import Path

import numpy as np

from cssrec import configs
from cssrec.evaluate import export_reconstruction_grid, network_adapter
from cssrec.mnist import _bilinear_resize, load_idx_images, load_idx_labels, to_digit_vector
from cssrec.network import init_from_ista
from cssrec.rng import derive_seed, stream
from cssrec.synth import gen_sensing_matrix, synthesize
from cssrec.training import TrainConfig, train


def fabricate_idx(img_path: Path, lab_path: Path, count: int, seed: int) -> None:
    """Stand-in IDX pair from sklearn's digit scans when MNIST is absent."""
    from sklearn.datasets import load_digits

    raw = load_digits()
    base = np.stack([
        np.clip(np.rint(_bilinear_resize(img * (255.0 / 16.0), 28)), 0, 255)
        for img in raw.images
    ]).astype(np.uint8)
    order = stream(seed, "digits-demo").permutation(len(base))
    idx = np.resize(order, count)
    images, labels = base[idx], raw.target.astype(np.uint8)[idx]
    blob = struct.pack(">IIII", 0x803, count, 28, 28) + images.tobytes()
    img_path.write_bytes(gzip.compress(blob, mtime=0))
    blob = struct.pack(">II", 0x801, count) + labels.tobytes()
    lab_path.write_bytes(gzip.compress(blob, mtime=0))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", type=Path, default=None)
    ap.add_argument("--labels", type=Path, default=None)
    ap.add_argument("--count", type=int, default=3000)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    here = Path(__file__).parent
    if args.images is None:
        args.images = here / "digits_images.idx.gz"
        args.labels = here / "digits_labels.idx.gz"
        if not args.images.exists():
            print("no IDX files given; fabricating a stand-in pair from "
                  "sklearn's digit scans")
            fabricate_idx(args.images, args.labels, args.count + 8, args.seed)

    images = load_idx_images(args.images)[: args.count + 8]
    labels = load_idx_labels(args.labels)[: len(images)]
    digits = [to_digit_vector(img, lab) for img, lab in zip(images, labels)]
    X = np.stack([d.pixels for d in digits])
    print(f"{len(digits)} digits loaded, labels "
          f"{''.join(str(d.label) for d in digits[-8:])} held out for the grid")

    n, m, snr = 400, 200, 20.0
    A = gen_sensing_matrix(m, n, args.seed + 1)
    Y = np.stack([
        synthesize(A, X[i], snr, derive_seed(args.seed, "demo-noise", i)).y
        for i in range(len(digits))
    ])

    params = init_from_ista(A, configs.ISTA_LAM, 12, sharing="untied",
                            variant="conv", kernel_len=3)
    cfg = TrainConfig(learning_rate=1e-3, epochs=args.epochs, seed=args.seed)
    best, rows = train(params, A, (Y[:-8], X[:-8]), cfg)
    print(f"trained rw-lista conv3 for {args.epochs} epochs: "
          f"val {rows[-1][2]:.2f} dB")

    table = export_reconstruction_grid(
        [network_adapter("conv3", best)], digits[-8:], A, snr,
        here / "digits_grid.pgm", here / "digits_grid.csv", seed=args.seed,
    )
    print(f"grid NMSE over 8 digits: {np.mean(table['conv3']):.2f} dB (mean)")
    print(f"wrote {here / 'digits_grid.pgm'} (truth row on top)")
