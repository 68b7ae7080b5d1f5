"""Command line front end.

    dnls-gauge run CONFIG.json
    dnls-gauge eval {gauge-potential,f-n,divergence,logdet,sample} [--in FILE] [--N ..] [--s ..] [--alpha ..] [--seed ..]

Exit codes: 0 success, 2 invalid input or config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .flow import FlowError, FlowOptions, TailMassError
from .functionals import DivergenceMismatch, SeriesTruncationError, divergence, f_n, jacobian_log_det
from .measure import MeasureSpec, StarvationError, sample
from .spectral import SpectralFunction, gauge_potential
from .studies import ConfigError, load_config, run_study
from .wick import ComplexityError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (DivergenceMismatch, FlowError, TailMassError, StarvationError, SeriesTruncationError, FloatingPointError)

log = logging.getLogger("dnls_gauge")


def _load_u(path: str | None) -> SpectralFunction:
    if path is None:
        raise ConfigError("--in FILE is required for this quantity")
    try:
        return SpectralFunction.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def cmd_eval(args) -> object:
    q = args.quantity
    if q == "sample":
        if args.N is None:
            raise ConfigError("sample needs --N")
        spec = MeasureSpec(args.s, args.N, args.radius, args.seed)
        batch = sample(spec, args.count, args.stream)
        return batch.to_dict()
    u = _load_u(args.input)
    N = u.cutoff if args.N is None else args.N
    if N < 0 or N > u.cutoff:
        raise ConfigError(f"--N must be in 0..{u.cutoff}")
    if q == "gauge-potential":
        return gauge_potential(u, N).to_dict()
    if q == "f-n":
        return f_n(u, N, args.s).value
    if q == "divergence":
        return divergence(u, N)
    if q == "logdet":
        if args.alpha is None:
            raise ConfigError("logdet needs --alpha")
        opts = FlowOptions(step_count=args.steps) if args.steps else FlowOptions.for_alpha(args.alpha, max(1.0, sum(abs(c) ** 2 for _, c in u)))
        return jacobian_log_det(u, args.alpha, N, opts)
    raise ConfigError(f"unknown quantity {q}")  # pragma: no cover


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dnls-gauge", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a study from a JSON config (or a manifest)")
    r.add_argument("config")
    r.add_argument("--output-dir", help="override the config's output_dir")
    r.add_argument("--workers", type=int, help="override the number of worker processes")

    e = sub.add_parser("eval", help="one-shot evaluation, printed as JSON")
    e.add_argument("quantity", choices=["gauge-potential", "f-n", "divergence", "logdet", "sample"])
    e.add_argument("--in", dest="input", help="SpectralFunction JSON file")
    e.add_argument("--N", type=int)
    e.add_argument("--s", type=float, default=1.0)
    e.add_argument("--alpha", type=float)
    e.add_argument("--steps", type=int, help="RK4 steps for logdet (default from alpha and mass)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--radius", type=float)
    e.add_argument("--stream", type=int, default=0)
    e.add_argument("--count", type=int, default=1)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.output_dir:
                cfg.output_dir = args.output_dir
            if args.workers:
                cfg.workers = args.workers
            out = run_study(cfg)
            print(out)
        else:
            print(json.dumps(cmd_eval(args)))
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ComplexityError, ValueError, KeyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
