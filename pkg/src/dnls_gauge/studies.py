"""Named studies driven by JSON configs.

Every study returns a list of :class:`~dnls_gauge.montecarlo.ResultRow`
(and optionally extra tables); :func:`run_study` writes them together with a
manifest.  The config hash covers everything that can change the numbers,
so it excludes ``output_dir`` and ``workers``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__
from .flow import FlowOptions, gauge_exact, gauge_truncated, group_defect
from .functionals import divergence, divergence_closed, divergence_double_sum, f_n, f_split
from .measure import MeasureSpec, sample
from .montecarlo import (
    CHUNK,
    ResultRow,
    Statistic,
    TestSet,
    as_statistic,
    map_chunks,
    moment_from_values,
    pushforward_check,
    r_star,
    rate_fit,
    stat_values,
    tail_exponent_fit,
    tail_from_values,
    write_csv,
)
from .spectral import evaluate_coeffs, l2_norm_sq, sobolev_weights
from .wick import rate_table, second_moment_diff, write_rate_csv

log = logging.getLogger(__name__)

OUTPUT_ENV = "DNLS_GAUGE_OUTPUT_DIR"
PILOT_STREAM = 1 << 40


class ConfigError(ValueError):
    """The study config is malformed."""


STUDY_DEFAULTS: dict[str, dict[str, Any]] = {
    "invariants": {"n_samples": 3, "alpha": 0.5, "N": None, "group_pairs": [[0.1, 0.2], [0.3, -0.3]], "split_tol": 1e-10},
    "flow-rate": {"N_list": [2, 4, 8], "alpha": 0.2, "n_samples": 100},
    "l2-rate": {"M_list": [4, 8, 16, 32], "N_ref": 48},
    "tails": {"statistic": {"name": "f_n", "params": {}}, "n_samples": 10_000, "thresholds": None, "num_thresholds": 20},
    "density": {
        "n_samples": 10_000,
        "sweep": None,
        "alphas": [0.1, -0.1, 0.2, -0.2],
        "N_list": [4, 6],
        "test_sets": [{"kind": "all"}],
    },
    "wick-vs-mc": {"N": 8, "M": 4, "n_samples": 100_000},
}

LIST_PARAMS = {"group_pairs", "N_list", "M_list", "alphas", "test_sets", "thresholds", "sweep"}


@dataclass
class StudyConfig:
    study: str
    measure: MeasureSpec
    flow: FlowOptions | None = None
    params: dict[str, Any] = field(default_factory=dict)
    output_dir: str | None = None
    workers: int = 1

    @classmethod
    def from_dict(cls, d: Mapping) -> "StudyConfig":
        if not isinstance(d, Mapping):
            raise ConfigError("config must be a JSON object")
        if "config" in d and "config_hash" in d:  # a manifest: re-run its config
            d = d["config"]
        study = d.get("study")
        if study not in STUDY_DEFAULTS:
            raise ConfigError(f"study must be one of {sorted(STUDY_DEFAULTS)}, got {study!r}")
        try:
            measure = MeasureSpec.from_dict(d["measure"])
        except KeyError as exc:
            raise ConfigError(f"missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad measure: {exc}") from exc
        flow = None
        if d.get("flow") is not None:
            try:
                flow = FlowOptions(**d["flow"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad flow options: {exc}") from exc
        extra = dict(d.get("params", {}))
        unknown = set(extra) - set(STUDY_DEFAULTS[study])
        if unknown:
            raise ConfigError(f"unknown params for {study}: {sorted(unknown)}")
        params = {**STUDY_DEFAULTS[study], **extra}
        for k, v in params.items():
            if k in LIST_PARAMS and v is not None and (not isinstance(v, list) or not v):
                raise ConfigError(f"param {k!r} must be a non-empty list")
        workers = int(d.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        return cls(study, measure, flow, params, d.get("output_dir"), workers)

    def resolved(self) -> dict:
        """Everything that determines the numbers, in canonical form."""
        return {
            "study": self.study,
            "measure": self.measure.to_dict(),
            "flow": None if self.flow is None else self.flow.to_dict(),
            "params": self.params,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def out_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV) or "results")


def load_config(path: str | Path) -> StudyConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return StudyConfig.from_dict(data)


# ---------------------------------------------------------------------------
# studies


@dataclass
class StudyOutput:
    rows: list[ResultRow]
    tables: dict[str, Callable[[Path], None]] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)


def _flow_opts(cfg: StudyConfig, alpha: float) -> FlowOptions:
    if cfg.flow is not None:
        return cfg.flow
    return FlowOptions.for_alpha(alpha, (cfg.measure.radius or 1.0) ** 2)


def study_invariants(cfg: StudyConfig) -> StudyOutput:
    p, spec = cfg.params, cfg.measure
    N = p["N"] if p["N"] is not None else max(1, spec.cutoff // 2)
    if N > spec.cutoff:
        raise ConfigError("N must not exceed the measure cutoff")
    alpha = float(p["alpha"])
    opts = _flow_opts(cfg, alpha)
    batch = sample(spec, int(p["n_samples"]))
    rows = []
    seed = spec.master_seed
    for i, u in enumerate(batch.samples):
        tr = gauge_truncated(u, alpha, N, opts)
        frozen = np.array_equal(tr.final.coeffs[: spec.cutoff - N], u.coeffs[: spec.cutoff - N]) and np.array_equal(
            tr.final.coeffs[spec.cutoff + N + 1 :], u.coeffs[spec.cutoff + N + 1 :]
        )
        ex = gauge_exact(u, alpha, opts)
        G = opts.oversample_factor * (2 * ex.cutoff + 1)
        mod_err = float(np.max(np.abs(np.abs(evaluate_coeffs(ex.coeffs, G)) - np.abs(evaluate_coeffs(u.coeffs, G)))))
        divergence(u, N)  # raises on a dual-form mismatch
        div_gap = abs(divergence_double_sum(u, N) - divergence_closed(u, N))
        fv = f_split(u, N, spec.s, tol=p["split_tol"])
        split_err = abs(fv.value - f_n(u, N, spec.s).value)
        vals = [
            ("l2_drift", tr.l2_drift),
            ("tail_frozen", float(frozen)),
            ("exact_modulus_error", mod_err),
            ("divergence_dual_gap", div_gap),
            ("split_error", split_err),
        ]
        for a1, a2 in p["group_pairs"]:
            vals.append((f"group_defect[a1={a1},a2={a2}]", group_defect(u, a1, a2, N, opts)))
        rows += [ResultRow(f"{name}[sample={i}]", v, 0.0, 1, seed) for name, v in vals]
    return StudyOutput(rows, summary={"N": N, "rejected": batch.rejected})


def study_flow_rate(cfg: StudyConfig) -> StudyOutput:
    p, spec = cfg.params, cfg.measure
    N_list = [int(n) for n in p["N_list"]]
    if max(N_list) > spec.cutoff:
        raise ConfigError("every N must be <= the measure cutoff")
    alpha = float(p["alpha"])
    opts = _flow_opts(cfg, alpha)
    batch = sample(spec, int(p["n_samples"]))
    rows, pts = [], []
    exact = [gauge_exact(u, alpha, opts) for u in batch.samples]
    for N in N_list:
        d = np.array(
            [math.sqrt(l2_norm_sq(ex - gauge_truncated(u, alpha, N, opts).final)) for u, ex in zip(batch.samples, exact)]
        )
        m = math.fsum(d) / d.size
        se = float(np.std(d, ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
        rows.append(ResultRow(f"flow_discrepancy[N={N}]", m, se, d.size, spec.master_seed))
        pts.append((N, m))
    if len(pts) >= 3 and all(y > 0 for _, y in pts):
        fit = rate_fit(pts)
        rows.append(ResultRow("rate_slope", fit.slope, 0.0, len(pts), spec.master_seed))
    return StudyOutput(rows)


def study_l2_rate(cfg: StudyConfig) -> StudyOutput:
    p, spec = cfg.params, cfg.measure
    table = rate_table(spec.s, [int(m) for m in p["M_list"]], int(p["N_ref"]))
    rows = [ResultRow(f"l2_distance[M={M}]", d, 0.0, 0, spec.master_seed) for M, d in table]
    pts = [(M, d) for M, d in table if d > 0]
    if len(pts) >= 3:
        fit = rate_fit(pts)
        rows.append(ResultRow("rate_slope", fit.slope, 0.0, len(pts), spec.master_seed))
    tables = {"rate_table.csv": lambda path: write_rate_csv(path, table, spec.s, int(p["N_ref"]))}
    return StudyOutput(rows, tables)


def study_tails(cfg: StudyConfig, stream_base: int = 0) -> StudyOutput:
    p, spec = cfg.params, cfg.measure
    stat = as_statistic(p["statistic"])
    n = int(p["n_samples"])
    vals = stat_values(stat, spec, n, stream_base, cfg.workers)
    if p["thresholds"] is not None:
        th = [float(t) for t in p["thresholds"]]
    else:
        a = np.abs(vals)
        hi = float(np.quantile(a, 0.999))
        th = list(np.geomspace(hi / 10, hi, int(p["num_thresholds"])))
    curve = tail_from_values(vals, th)
    rows = []
    for t, k in zip(curve.thresholds, curve.counts):
        q = k / n
        rows.append(ResultRow(f"survival[{stat.label},t={t!r}]", q, math.sqrt(q * (1 - q) / n), n, spec.master_seed))
    summary = {"r_star": r_star(spec.radius, spec.s)}
    try:
        fit = tail_exponent_fit(curve)
        rows.append(ResultRow(f"tail_exponent[{stat.label}]", fit.exponent, fit.exponent_stderr, n, spec.master_seed))
    except ValueError as exc:
        log.warning("no tail fit: %s", exc)

    def write_curve(path: Path):
        with open(path, "w") as fh:
            fh.write("threshold,log_survival,cp_lo,cp_hi,count\n")
            for row in zip(curve.thresholds, curve.log_survival, curve.cp_lo, curve.cp_hi, curve.counts):
                fh.write(",".join(repr(float(x)) for x in row[:4]) + f",{row[4]}\n")

    return StudyOutput(rows, {"tail_curve.csv": write_curve}, summary)


def resolve_test_set(ts: TestSet, spec: MeasureSpec, pilot: int = 4096) -> TestSet:
    """Replace a ``quantile`` parameter by the matching radius from a pilot stream.

    The pilot stream is disjoint from the estimation streams.
    """
    q = ts.params.get("quantile")
    if q is None:
        return ts
    if ts.kind == "hs_ball":
        w = sobolev_weights(spec.cutoff, spec.s)
        fn = lambda c, sp: np.sqrt(np.abs(c) ** 2 @ w)  # noqa: E731
    elif ts.kind == "linf_ball":
        G = int(ts.params.get("grid_size", 4 * (2 * spec.cutoff + 1)))
        fn = lambda c, sp: np.max(np.abs(evaluate_coeffs(c, G)), axis=-1)  # noqa: E731
    else:
        raise ConfigError(f"quantile only applies to ball sets, not {ts.kind}")
    outs, _ = map_chunks(fn, spec, pilot, PILOT_STREAM)
    radius = float(np.quantile(np.concatenate(outs), q))
    params = {k: v for k, v in ts.params.items() if k != "quantile"}
    params["radius"] = radius
    return TestSet(ts.kind, params)


def density_sweep(cfg: StudyConfig) -> list[tuple[TestSet, float, int]]:
    p = cfg.params
    if p["sweep"] is not None:
        return [(TestSet.from_dict(e["test_set"]), float(e["alpha"]), int(e["N"])) for e in p["sweep"]]
    return [
        (TestSet.from_dict(ts), float(a), int(N))
        for ts in p["test_sets"]
        for N in p["N_list"]
        for a in p["alphas"]
    ]


def study_density(cfg: StudyConfig) -> StudyOutput:
    spec0, n = cfg.measure, int(cfg.params["n_samples"])
    stride = -(-n // CHUNK)
    rows, zs = [], []
    for i, (ts, alpha, N) in enumerate(density_sweep(cfg)):
        spec = spec0.with_(cutoff=N)
        ts = resolve_test_set(ts, spec)
        opts = _flow_opts(cfg, alpha)
        lhs, rhs, z = pushforward_check(ts, alpha, spec, n, opts, stream_base=i * stride, workers=cfg.workers)
        tag = f"{ts.kind},N={N},alpha={alpha}"
        seed = spec.master_seed
        rows += [
            ResultRow(f"lhs[{i}:{tag}]", lhs.value, lhs.stderr, n, seed),
            ResultRow(f"rhs[{i}:{tag}]", rhs.value, rhs.stderr, n, seed),
            ResultRow(f"z_score[{i}:{tag}]", z, 0.0, n, seed),
        ]
        zs.append(z)
    frac = float(np.mean(np.abs(zs) <= 3))
    rows.append(ResultRow("fraction_abs_z_le_3", frac, 0.0, len(zs), spec0.master_seed))
    return StudyOutput(rows, summary={"r_star": r_star(spec0.radius, spec0.s)})


def study_wick_vs_mc(cfg: StudyConfig) -> StudyOutput:
    p, spec = cfg.params, cfg.measure
    N, M, n = int(p["N"]), int(p["M"]), int(p["n_samples"])
    if N > spec.cutoff:
        raise ConfigError("N must not exceed the measure cutoff")
    w = second_moment_diff(N, M, spec.s)
    vals = stat_values(Statistic("f_diff", {"N": N, "M": M}), spec, n, 0, cfg.workers)
    _, _, m, se = moment_from_values(vals, 2.0)
    seed = spec.master_seed
    return StudyOutput(
        [
            ResultRow(f"wick_second_moment[N={N},M={M}]", w.value, 0.0, 0, seed),
            ResultRow(f"mc_second_moment[N={N},M={M}]", m, se, n, seed),
            ResultRow("z_score", (m - w.value) / se if se > 0 else 0.0, 0.0, n, seed),
            ResultRow("zz_block", w.block_total("zz"), 0.0, 0, seed),
        ]
    )


STUDIES: dict[str, Callable[[StudyConfig], StudyOutput]] = {
    "invariants": study_invariants,
    "flow-rate": study_flow_rate,
    "l2-rate": study_l2_rate,
    "tails": study_tails,
    "density": study_density,
    "wick-vs-mc": study_wick_vs_mc,
}


def run_study(cfg: StudyConfig) -> Path:
    """Run a study and write ``results.csv``, extra tables and ``manifest.json``."""
    if cfg.measure.radius is not None and cfg.measure.s > 0.5:
        log.info("R* = %.6g", r_star(cfg.measure.radius, cfg.measure.s))
    out = STUDIES[cfg.study](cfg)
    h = cfg.config_hash()
    d = cfg.out_dir() / f"{cfg.study}-{h}"
    d.mkdir(parents=True, exist_ok=True)
    write_csv(d / "results.csv", out.rows, h)
    files = ["results.csv"]
    for name, writer in out.tables.items():
        writer(d / name)
        files.append(name)
    manifest = {
        "config_hash": h,
        "config": cfg.resolved(),
        "seed": cfg.measure.master_seed,
        "files": files,
        "summary": out.summary,
        "version": __version__,
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return d


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serialisable: {type(x)}")


__all__ = [
    "ConfigError",
    "StudyConfig",
    "StudyOutput",
    "STUDIES",
    "load_config",
    "run_study",
    "density_sweep",
    "resolve_test_set",
    "OUTPUT_ENV",
]
