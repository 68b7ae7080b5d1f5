"""Monte Carlo estimation under the (restricted) Gaussian measure.

Samples are produced in chunks of ``CHUNK`` accepted draws; chunk ``k`` of an
estimate comes from stream ``stream_base + k`` of the sampler.  Chunks are
independent, so they can be farmed out to worker processes and concatenated
in chunk order afterwards; every estimate is therefore bit-identical for any
worker count.  An estimate over ``n`` samples consumes stream ids
``stream_base .. stream_base + ceil(n / CHUNK) - 1``.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats as sps

from .flow import FlowOptions, divergence_batch, flow_batch
from .functionals import f_n_batch, l_stat_batch, lp_blocks_batch
from .measure import SAMPLING_EXPONENT, MeasureSpec, sample_array
from .spectral import evaluate_coeffs, pad, sobolev_weights

log = logging.getLogger(__name__)

CHUNK = 2048
CSV_COLUMNS = ("config_hash", "statistic", "value", "stderr", "n", "seed")


def r_star(radius: float | None, s: float) -> float:
    """Mass scale ``max(R^{2/(2s-1)}, R^{2(2s-1)})`` (1 for the unrestricted measure)."""
    if radius is None:
        return 1.0
    if s <= 0.5:
        raise ValueError("R* needs s > 1/2")
    return max(radius ** (2 / (2 * s - 1)), radius ** (2 * (2 * s - 1)))


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class Statistic:
    """A named scalar statistic of a sample; ``params`` default from the spec."""

    name: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in STATISTICS:
            raise ValueError(f"unknown statistic {self.name!r}; choose from {sorted(STATISTICS)}")
        object.__setattr__(self, "params", dict(self.params))

    def __call__(self, c: np.ndarray, spec: MeasureSpec) -> np.ndarray:
        return STATISTICS[self.name](c, spec, **self.params)

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.name}[{inner}]"

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


def _stat_f_n(c, spec, N=None, s=None):
    return f_n_batch(c, int(N if N is not None else spec.cutoff), spec.s if s is None else s)


def _stat_f_diff(c, spec, N=None, M=0):
    N = int(N if N is not None else spec.cutoff)
    return f_n_batch(c, N, spec.s) - f_n_batch(c, int(M), spec.s)


def _stat_divergence(c, spec, N=None):
    N = int(N if N is not None else spec.cutoff)
    return divergence_batch(pad(c, N), N)


def _stat_l_stat(c, spec, s_prime=0.75, n0=8):
    return l_stat_batch(c, s_prime, int(n0))


def _stat_x_total(c, spec, N=None):
    x, _ = lp_blocks_batch(c, int(N if N is not None else spec.cutoff), spec.s)
    return x.sum(axis=-1)


def _stat_y_total(c, spec, N=None):
    _, y = lp_blocks_batch(c, int(N if N is not None else spec.cutoff), spec.s)
    return y.sum(axis=-1)


def _stat_bound_ratio(c, spec, N=None):
    # |F_N| / (X_N^2 Y_N^2), 0 where the denominator vanishes
    N = int(N if N is not None else spec.cutoff)
    x, y = lp_blocks_batch(c, N, spec.s)
    den = (x.sum(axis=-1) * y.sum(axis=-1)) ** 2
    num = np.abs(f_n_batch(c, N, spec.s))
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


STATISTICS: dict[str, Callable[..., np.ndarray]] = {
    "f_n": _stat_f_n,
    "f_diff": _stat_f_diff,
    "divergence": _stat_divergence,
    "l_stat": _stat_l_stat,
    "x_total": _stat_x_total,
    "y_total": _stat_y_total,
    "bound_ratio": _stat_bound_ratio,
}


def as_statistic(stat) -> Statistic:
    if isinstance(stat, Statistic):
        return stat
    if isinstance(stat, str):
        return Statistic(stat)
    if isinstance(stat, Mapping):
        return Statistic(stat["name"], stat.get("params", {}))
    name, params = stat
    return Statistic(name, params)


# ---------------------------------------------------------------------------
# chunked, optionally parallel evaluation


def _chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(n, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _run_chunk(fn, spec: MeasureSpec, count: int, stream_id: int):
    c, rejected = sample_array(spec, count, stream_id)
    return fn(c, spec), rejected


def map_chunks(fn, spec: MeasureSpec, n: int, stream_base: int = 0, workers: int = 1):
    """Apply ``fn(samples, spec)`` chunk by chunk; returns (list of outputs, rejected)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sizes = _chunk_sizes(n)
    ids = [stream_base + k for k in range(len(sizes))]
    if workers > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_chunk, [fn] * len(sizes), [spec] * len(sizes), sizes, ids))
    else:
        results = [_run_chunk(fn, spec, m, i) for m, i in zip(sizes, ids)]
    return [r[0] for r in results], sum(r[1] for r in results)


def stat_values(stat, spec: MeasureSpec, n: int, stream_base: int = 0, workers: int = 1) -> np.ndarray:
    """The statistic on ``n`` samples, in stream order."""
    stat = as_statistic(stat)
    outs, _ = map_chunks(stat, spec, n, stream_base, workers)
    return np.concatenate(outs)


# ---------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n_samples: int
    spec: MeasureSpec
    stream_base: int
    statistic: str = ""
    p: float = 1.0
    moment: float = math.nan
    moment_stderr: float = math.nan

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spec"] = self.spec.to_dict()
        return d


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    mean = math.fsum(x) / n
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    return mean, sd / math.sqrt(n)


def moment_from_values(values: np.ndarray, p: float) -> tuple[float, float, float, float]:
    """``(E|X|^p)^{1/p}`` and delta-method stderr, plus the raw moment and its stderr."""
    y = np.abs(values) ** p
    m, se_m = _mean_stderr(y)
    if m == 0:
        return 0.0, 0.0, 0.0, se_m
    val = m ** (1.0 / p)
    return val, val / (p * m) * se_m, m, se_m


def estimate_moment(
    stat, p: float, spec: MeasureSpec, n: int, stream_base: int = 0, workers: int = 1, min_n: int = 100
) -> MCEstimate:
    """Estimate ``E[|stat|^p]^{1/p}``; ``moment`` holds ``E|stat|^p`` itself."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if n < min_n:
        raise ValueError(f"need at least {min_n} samples")
    stat = as_statistic(stat)
    if spec.radius is not None:
        log.info("R* = %.6g for R=%g, s=%g", r_star(spec.radius, spec.s), spec.radius, spec.s)
    vals = stat_values(stat, spec, n, stream_base, workers)
    val, se, m, se_m = moment_from_values(vals, p)
    return MCEstimate(val, se, n, spec, stream_base, stat.label, float(p), m, se_m)


@dataclass(frozen=True)
class TailCurve:
    thresholds: tuple[float, ...]
    log_survival: tuple[float, ...]
    cp_lo: tuple[float, ...]
    cp_hi: tuple[float, ...]
    counts: tuple[int, ...]
    n_samples: int
    confidence: float = 0.95

    def to_dict(self) -> dict:
        return asdict(self)


def clopper_pearson(k: np.ndarray, n: int, confidence: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Exact binomial confidence interval for ``k`` successes out of ``n``."""
    k = np.asarray(k)
    a = 1.0 - confidence
    lo = np.where(k > 0, sps.beta.ppf(a / 2, np.maximum(k, 1), n - k + 1), 0.0)
    hi = np.where(k < n, sps.beta.ppf(1 - a / 2, k + 1, np.maximum(n - k, 1)), 1.0)
    return lo, hi


def tail_from_values(values: np.ndarray, thresholds: Sequence[float], confidence: float = 0.95) -> TailCurve:
    t = np.asarray(thresholds, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
        raise ValueError("thresholds must be a non-empty increasing sequence")
    a = np.sort(np.abs(values))
    n = a.size
    counts = n - np.searchsorted(a, t, side="left")  # #{|X| >= t}
    with np.errstate(divide="ignore"):
        ls = np.log(counts / n)
    lo, hi = clopper_pearson(counts, n, confidence)
    return TailCurve(
        tuple(map(float, t)),
        tuple(map(float, ls)),
        tuple(map(float, lo)),
        tuple(map(float, hi)),
        tuple(map(int, counts)),
        n,
        confidence,
    )


def tail_curve(
    stat, spec: MeasureSpec, thresholds: Sequence[float], n: int, stream_base: int = 0, workers: int = 1,
    confidence: float = 0.95, min_n: int = 10_000,
) -> TailCurve:
    """Empirical ``log P(|stat| >= t)`` with Clopper-Pearson bands."""
    if n < min_n:
        raise ValueError(f"need at least {min_n} samples")
    if spec.radius is not None:
        log.info("R* = %.6g for R=%g, s=%g", r_star(spec.radius, spec.s), spec.radius, spec.s)
    return tail_from_values(stat_values(stat, spec, n, stream_base, workers), thresholds, confidence)


class TailFit(NamedTuple):
    exponent: float
    exponent_stderr: float
    scale: float


def tail_exponent_fit(curve: TailCurve, min_count: int = 10) -> TailFit:
    """Fit ``-log P(|X| >= t) ~ scale * t^exponent`` on points with enough exceedances.

    Points with survival 1 (no information) or fewer than ``min_count``
    exceedances are dropped.
    """
    t = np.asarray(curve.thresholds)
    ls = np.asarray(curve.log_survival)
    k = np.asarray(curve.counts)
    ok = (k >= min_count) & (ls < 0) & (t > 0)
    if ok.sum() < 3:
        raise ValueError("fewer than 3 usable tail points")
    res = sps.linregress(np.log(t[ok]), np.log(-ls[ok]))
    return TailFit(float(res.slope), float(res.stderr), float(math.exp(res.intercept)))


# ---------------------------------------------------------------------------
# change of variables


@dataclass(frozen=True)
class TestSet:
    """Catalog of sets for the pushforward check.

    kinds: ``all``; ``hs_ball`` (``radius``: ||P_N u||_{H^s dot} <= radius);
    ``halfspace`` (``k``, ``c``: Re u(k) >= c); ``linf_ball`` (``radius``,
    optional ``grid_size``: max over the grid of |P_N u| <= radius).
    """

    __test__ = False  # keep pytest from collecting this class

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    KINDS = ("all", "hs_ball", "halfspace", "linf_ball")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown test set {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))

    def contains(self, c: np.ndarray, N: int, s: float) -> np.ndarray:
        c = pad(c, N)
        p = self.params
        if self.kind == "all":
            return np.ones(c.shape[:-1], dtype=bool)
        if self.kind == "hs_ball":
            return np.abs(c) ** 2 @ sobolev_weights(N, s) <= p["radius"] ** 2
        if self.kind == "halfspace":
            k = int(p["k"])
            if abs(k) > N:
                raise ValueError("halfspace mode outside the cutoff")
            return c[..., N + k].real >= p["c"]
        G = int(p.get("grid_size", 4 * (2 * N + 1)))
        return np.max(np.abs(evaluate_coeffs(c, G)), axis=-1) <= p["radius"]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TestSet":
        return cls(d["kind"], d.get("params", {}))


def _pushforward_chunk(c, spec, test_set: TestSet, alpha: float, step_count: int):
    N, s = spec.cutoff, spec.s
    w = sobolev_weights(N, s)
    back, _, _ = flow_batch(c, -alpha, N, step_count)
    fwd, logdet, _ = flow_batch(c, alpha, N, step_count)
    lhs = test_set.contains(back, N, s).astype(float)
    # log of rho(G u) / rho(u) for the sampler's density; the L2 parts cancel
    log_j = logdet + 0.5 * SAMPLING_EXPONENT * (np.abs(c) ** 2 @ w - np.abs(fwd) ** 2 @ w)
    rhs = np.where(test_set.contains(c, N, s), np.exp(log_j), 0.0)
    return np.stack([lhs, rhs])


def density_weights(c: np.ndarray, alpha: float, spec: MeasureSpec, step_count: int) -> np.ndarray:
    """Radon-Nikodym weight ``J_alpha(u) = det D(P_N G_alpha)(u) rho(G_alpha u) / rho(u)``.

    ``rho`` is the Lebesgue density of the sampler, so the ratio is
    ``exp(|u|^2_{H^s dot} - |G_alpha u|^2_{H^s dot})`` under the E|g|^2 = 1
    convention.
    """
    return _pushforward_chunk(c, spec, TestSet("all"), alpha, step_count)[1]


def pushforward_check(
    test_set: TestSet, alpha: float, spec: MeasureSpec, n: int, opts: FlowOptions | None = None,
    stream_base: int = 0, workers: int = 1, min_n: int = 10_000,
) -> tuple[MCEstimate, MCEstimate, float]:
    """Compare ``P(G_{-alpha} u in E)`` with ``E[1_E(u) J_alpha(u)]`` on common samples.

    The z-score uses the standard error of the paired differences.
    """
    if n < min_n:
        raise ValueError(f"need at least {min_n} samples")
    if opts is None:
        opts = FlowOptions.for_alpha(alpha, (spec.radius or 1.0) ** 2)
    if spec.radius is not None:
        log.info("R* = %.6g for R=%g, s=%g", r_star(spec.radius, spec.s), spec.radius, spec.s)
    fn = functools.partial(_pushforward_chunk, test_set=test_set, alpha=alpha, step_count=opts.step_count)
    outs, _ = map_chunks(fn, spec, n, stream_base, workers)
    lhs_v, rhs_v = np.concatenate(outs, axis=1)
    lm, lse = _mean_stderr(lhs_v)
    rm, rse = _mean_stderr(rhs_v)
    _, dse = _mean_stderr(lhs_v - rhs_v)
    diff = lm - rm
    z = 0.0 if diff == 0 else (diff / dse if dse > 0 else math.copysign(math.inf, diff))
    lhs = MCEstimate(lm, lse, n, spec, stream_base, f"pushforward_lhs[{test_set.kind}]")
    rhs = MCEstimate(rm, rse, n, spec, stream_base, f"pushforward_rhs[{test_set.kind}]")
    return lhs, rhs, float(z)


# ---------------------------------------------------------------------------
# rates and output


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def rate_fit(points: Iterable[tuple[float, float]]) -> RateFit:
    """Least-squares line through ``(log x, log y)``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need at least 3 (x, y) points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("rate_fit needs positive finite data")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(slope), float(intercept), r2)


@dataclass(frozen=True)
class ResultRow:
    statistic: str
    value: float
    stderr: float
    n: int
    seed: int


def write_csv(path: str | Path, rows: Sequence[ResultRow], config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([config_hash, r.statistic, repr(float(r.value)), repr(float(r.stderr)), r.n, r.seed])
