"""Log-log rates: L2(gamma_s) distance F_N -> F_M (exact Wick), E|div| decay, flow discrepancy.

    python scripts/convergence_rates.py [--quick]
"""

import argparse
import math

import numpy as np

from dnls_gauge.flow import FlowOptions, gauge_exact, gauge_truncated
from dnls_gauge.measure import MeasureSpec, sample
from dnls_gauge.montecarlo import Statistic, estimate_moment, rate_fit
from dnls_gauge.spectral import l2_norm_sq
from dnls_gauge.wick import rate_table


def wick_rates(s_list, M_list, N_ref):
    print(f"\n|| F_Nref - F_M ||_L2, N_ref={N_ref}")
    for s in s_list:
        rows = rate_table(s, M_list, N_ref)
        fit = rate_fit(rows)
        body = "  ".join(f"M={M}: {d:.4g}" for M, d in rows)
        print(f"  s={s}: {body}  slope={fit.slope:.3f} (reference -(s-1/2) = {-(s - 0.5):.3f})")


def divergence_decay(N_list, n):
    print(f"\nE|div| under the R=1 restricted measure, s=1, {n} samples per N")
    pts = []
    for N in N_list:
        est = estimate_moment(Statistic("divergence"), 1, MeasureSpec(1.0, N, 1.0, master_seed=8), n)
        pts.append((N, est.value))
        print(f"  N={N:4d}  {est.value:.5g} +- {est.stderr:.2g}")
    print(f"  slope {rate_fit(pts).slope:.3f}")


def flow_rate(N_list, n, alpha=0.2):
    K = max(N_list)
    batch = sample(MeasureSpec(1.0, K, 1.0, master_seed=2), n)
    opts = FlowOptions.for_alpha(alpha)
    exact = [gauge_exact(u, alpha, opts) for u in batch.samples]
    print(f"\nmean || G_alpha u - G^N_alpha u ||_L2, alpha={alpha}, {n} samples at cutoff {K}")
    pts = []
    for N in N_list:
        d = np.mean([math.sqrt(l2_norm_sq(e - gauge_truncated(u, alpha, N, opts).final)) for u, e in zip(batch.samples, exact)])
        pts.append((N, float(d)))
        print(f"  N={N:4d}  {d:.5g}")
    print(f"  slope {rate_fit(pts).slope:.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--quick", action="store_true", help="smaller cutoffs and sample counts")
    args = ap.parse_args()
    if args.quick:
        wick_rates([1.0, 1.5], [2, 4, 8], 16)
        divergence_decay([8, 16, 32], 500)
        flow_rate([4, 8, 16], 20)
    else:
        wick_rates([0.75, 1.0, 1.5], [4, 8, 16, 32], 48)
        divergence_decay([16, 32, 64, 128], 2000)
        flow_rate([4, 8, 16, 32], 100)


if __name__ == "__main__":
    main()
