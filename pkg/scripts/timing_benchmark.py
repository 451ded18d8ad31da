"""Seconds per 1000 Gibbs iterations as the number of predictors or curves grows."""
import argparse

import numpy as np

from fosr.data import McmcConfig
from fosr.gibbs import run_gibbs
from fosr.simulate import generate_dataset


def seconds_per_1000(n: int, p: int, iters: int, K: int = 6) -> float:
    data, _ = generate_dataset(n=n, p=p, p1=min(10, p), seed=1)
    arch = run_gibbs(data, McmcConfig(K=K, n_iter=iters, burn_in=iters - 1, thin=1, seed=0))
    return float(np.median(arch.iter_seconds[min(20, iters // 5):])) * 1000


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=200)
    ap.add_argument("--p", type=int, nargs="+", default=[25, 50, 100, 200, 400])
    ap.add_argument("--n", type=int, nargs="+", default=[100, 200, 400, 800])
    args = ap.parse_args()
    print("varying p at n=100")
    prev = None
    for p in args.p:
        t = seconds_per_1000(100, p, args.iters)
        print(f"  p={p:4d}  {t:7.2f} s/1000 it" + (f"  x{t / prev:.2f}" if prev else ""))
        prev = t
    print("varying n at p=20")
    prev = None
    for n in args.n:
        t = seconds_per_1000(n, 20, args.iters)
        print(f"  n={n:4d}  {t:7.2f} s/1000 it" + (f"  x{t / prev:.2f}" if prev else ""))
        prev = t


if __name__ == "__main__":
    main()
