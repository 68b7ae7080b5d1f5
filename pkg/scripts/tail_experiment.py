"""Tail curves: the L statistic against its union-bound envelope, and the F_N tail exponent.

    python scripts/tail_experiment.py [--n 20000] [--N 32]
"""

import argparse

import numpy as np

from dnls_gauge.measure import MeasureSpec
from dnls_gauge.montecarlo import Statistic, stat_values, tail_exponent_fit, tail_from_values


def envelope(t, N, s, s_prime, n0):
    n = np.arange(n0, N + 1, dtype=float)
    return float(np.sum(np.exp(-(t**2) * (1 + n ** (2 * s)) / (2 * n ** (2 * s_prime)))))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--N", type=int, default=32, help="cutoff for the F_N tail")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    s, s_prime, n0, K = 1.0, 0.75, 8, 64
    vals = stat_values(Statistic("l_stat", {"s_prime": s_prime, "n0": n0}), MeasureSpec(s, K, master_seed=5), args.n, workers=args.workers)
    th = np.linspace(0.6, 2.0, 8)
    curve = tail_from_values(vals, th)
    print(f"L_{{s'={s_prime}, n0={n0}}}, s={s}, cutoff {K}, n={args.n}")
    print("      t   log P(L>=t)    CP low   envelope")
    for t, ls, lo in zip(curve.thresholds, curve.log_survival, curve.cp_lo):
        print(f"  {t:5.2f}  {ls:11.4f}  {lo:8.2e}  {envelope(t, K, s, s_prime, n0):9.2e}")

    vals = stat_values(Statistic("f_n"), MeasureSpec(1.0, args.N, 1.0, master_seed=4), args.n, workers=args.workers)
    hi = float(np.quantile(np.abs(vals), 0.999))
    curve = tail_from_values(vals, np.geomspace(hi / 10, hi, 12))
    fit = tail_exponent_fit(curve)
    print(f"\nF_N tail, N={args.N}, R=1: -log P(|F_N| >= t) ~ {fit.scale:.3g} t^{fit.exponent:.3f} (+- {fit.exponent_stderr:.3f})")
    for t, ls, k in zip(curve.thresholds, curve.log_survival, curve.counts):
        print(f"  t={t:8.4g}  log S={ls:8.3f}  count={k}")


if __name__ == "__main__":
    main()
