"""Classical baselines on one cluster-sparse instance, plus the grid search.

Walks through the core recovery problem: draw a sensing matrix and a
cluster-structured sparse signal, measure it at 30 dB SNR, then run ISTA
and reweighted ISTA side by side and watch the reweighting pull ahead.
The second half reruns the lambda/epsilon grid search that produced the
frozen defaults in cssrec.configs (at reduced trial count by default;
pass --full for the exact frozen configuration, which takes a few
minutes).

Run from the repository root:

    python3 demos/solvers_demo.py
    python3 demos/solvers_demo.py --full
"""

import argparse

import numpy as np

from cssrec import configs
from cssrec.solvers import ista, rwista
from cssrec.synth import gen_css_signal, gen_sensing_matrix, support_runs, synthesize


def nmse(est, x):
    return 20.0 * np.log10(np.linalg.norm(est - x) / np.linalg.norm(x))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--full", action="store_true",
                    help="rerun the grid search at the frozen settings")
    args = ap.parse_args()

    p = configs.REFERENCE
    print(f"problem: N={p['n']} M={p['m']} S={p['s']} T={p['t']} "
          f"SNR={p['snr_db']:g} dB")

    A = gen_sensing_matrix(p["m"], p["n"], args.seed)
    sig = gen_css_signal(p["n"], p["s"], p["t"], args.seed + 1)
    meas = synthesize(A, sig, p["snr_db"], args.seed + 2)
    runs = ", ".join(f"{start}+{length}"
                     for start, length in support_runs(sig.support))
    print(f"signal support: {p['t']} blocks at {runs}")

    for iters in (12, 30, 100):
        xi = ista(A, meas.y, configs.ista_config(iters=iters))
        xr = rwista(A, meas.y, configs.rwista_config(iters=iters))
        print(f"  {iters:3d} iterations: ista {nmse(xi, sig.x):7.2f} dB   "
              f"rwista {nmse(xr, sig.x):7.2f} dB")

    print()
    trials = 200 if args.full else 30
    print(f"grid search over lambda (and epsilon for rwista), {trials} trials:")
    out = configs.grid_search_classical(
        lam_grid=[0.1, 0.15, 0.2, 0.25, 0.3, 0.4],
        eps_grid=[0.1, 0.2, 0.3, 0.5, 0.7],
        trials=trials,
    )
    for lam, score in sorted(out["ista"].items()):
        print(f"  ista   lam={lam:<5g} mean ratio {score:.4f}")
    best_lam, best_eps = out["best_rwista"]
    print(f"  best: ista lam={out['best_ista_lam']:g}, "
          f"rwista (lam={best_lam:g}, eps={best_eps:g})")
    print(f"  frozen defaults: ista lam={configs.ISTA_LAM:g}, "
          f"rwista (lam={configs.RWISTA_LAM:g}, eps={configs.RWISTA_EPS:g})")
    if args.full:
        match = (out["best_ista_lam"] == configs.ISTA_LAM
                 and out["best_rwista"] == (configs.RWISTA_LAM, configs.RWISTA_EPS))
        print(f"  frozen values reproduced: {match}")
