"""Command line front end.

Modes:
  analyze     convergence parameter and recurrence diagnostics
  eig-series  left/right eigenvector series with residuals and total mass
  eig-mc      regenerative Monte Carlo estimate of the left vector
  metzler     spectral bound and positive eigenvector of a Metzler matrix
  verify      built-in acceptance battery (exit 0 iff everything passes)

Sources come from --input (Matrix Market file, Metzler detected by a negative
diagonal entry) or --model (srw:p=0.3 | bd:lambda=1,mu=2 |
metzler-tri:diag=-2,off=1). Reports go to stdout (or --output) as JSON or as
flat key,value CSV with 17 significant digits. Exit codes: 0 ok, 1 failed
verification or internal error, 2 input/parse, 3 hypotheses unmet,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .convergence import (classify_recurrence, convergence_parameter_finite,
                          convergence_parameter_ladder)
from .errors import (EXIT_OK, EXIT_PARSE, DomainError, ParseError,
                     PerronChainError, exit_code_for)
from .matrix import FiniteMatrix, FiniteMetzler, LazyMetzler, build_kernel
from .mc import DEFAULT_SEED, McConfig, estimate_left
from .metzler import estimate_metzler_mc, left_vector_metzler_series, spectral_bound
from .mmio import read_matrix
from .models import parse_model
from .series import (left_vector_series, merge_pairs, residuals,
                     right_vector_series, total_mass)

_MODES = ("analyze", "eig-series", "eig-mc", "metzler", "verify")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="perron-chain",
        description="Perron eigenvectors of non-negative and Metzler matrices "
                    "via weighted-excursion series and Monte Carlo.")
    ap.add_argument("mode", choices=_MODES)
    ap.add_argument("--input", metavar="PATH",
                    help="Matrix Market coordinate file")
    ap.add_argument("--model", metavar="SPEC",
                    help="built-in model string, e.g. srw:p=0.3")
    ap.add_argument("--k", type=int, default=0,
                    help="reference state (default 0)")
    ap.add_argument("--R", type=float, default=None,
                    help="weight parameter; computed when omitted")
    ap.add_argument("--tol", type=float, default=None,
                    help="tolerance (per-mode default when omitted)")
    ap.add_argument("--horizon", type=int, default=None,
                    help="series/path length cap (per-mode default)")
    ap.add_argument("--excursions", type=int, default=10**5,
                    help="Monte Carlo excursion count (default 100000)")
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED,
                    help=f"RNG seed (default {DEFAULT_SEED:#x})")
    ap.add_argument("--batches", type=int, default=32,
                    help="Monte Carlo batch count (default 32)")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default $PERRON_CHAIN_THREADS or 1)")
    ap.add_argument("--radii", default="8,16,32,64",
                    help="truncation ladder radii (default 8,16,32,64)")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--output", metavar="PATH",
                    help="write the report here instead of stdout")
    ap.add_argument("--version", action="version",
                    version=f"perron-chain {__version__}")
    return ap


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("PERRON_CHAIN_THREADS")
    return int(env) if env else 1


def _radii(args) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in args.radii.split(","))
    except ValueError:
        raise ParseError(f"bad --radii {args.radii!r}; expected e.g. 8,16,32,64") from None


def _load_source(args):
    """Returns (source, model metadata dict)."""
    if args.input and args.model:
        raise ParseError("--input and --model are mutually exclusive")
    if args.input:
        return read_matrix(args.input), {}
    if args.model:
        spec = parse_model(args.model)
        return spec.source, dict(spec.meta)
    raise ParseError(f"mode {args.mode!r} needs --input or --model")


def _is_metzler(source) -> bool:
    return isinstance(source, (FiniteMetzler, LazyMetzler))


def _resolve_R(args, source, meta) -> tuple[float, str]:
    if args.R is not None:
        return args.R, "flag"
    if "R_ref" in meta:
        return float(meta["R_ref"]), "model-reference"
    if isinstance(source, FiniteMatrix):
        rep = convergence_parameter_finite(source, tol=args.tol or 1e-8, k=args.k)
        return rep.R, "computed-finite"
    rep = convergence_parameter_ladder(source, k=args.k, radii=_radii(args),
                                       tol=args.tol or 1e-4)
    return rep.R, "computed-ladder"


def _run_analyze(args) -> dict:
    source, meta = _load_source(args)
    if _is_metzler(source):
        raise DomainError("analyze handles non-negative sources; use the metzler mode")
    if isinstance(source, FiniteMatrix):
        rep = convergence_parameter_finite(source, tol=args.tol or 1e-8, k=args.k)
    else:
        rep = convergence_parameter_ladder(source, k=args.k, radii=_radii(args),
                                           tol=args.tol or 1e-4)
    result = {"convergence": rep.to_dict(), "classification": None, "reference": meta or None}
    if args.R is not None:
        verdict = classify_recurrence(source, args.R, k=args.k,
                                      horizon=args.horizon or 2**14,
                                      tol=args.tol or 1e-8)
        result["classification"] = verdict.to_dict()
    return result


def _run_eig_series(args) -> dict:
    source, meta = _load_source(args)
    if _is_metzler(source):
        raise DomainError("eig-series handles non-negative sources; use the metzler mode")
    r, r_source = _resolve_R(args, source, meta)
    horizon = args.horizon or 2**18
    tol = args.tol or 1e-8
    left = left_vector_series(source, r, k=args.k, horizon=horizon, tol=tol)
    right = right_vector_series(source, r, k=args.k, horizon=horizon, tol=tol)
    pair = merge_pairs(left, right)
    residuals(source, pair, r)
    mass = total_mass(source, r, k=args.k, horizon=horizon, tol=tol)
    return {"R": r, "R_source": r_source, "pair": pair.to_dict(),
            "total_mass": mass.to_dict(), "reference": meta or None}


def _mc_config(args) -> McConfig:
    return McConfig(seed=args.seed, n_excursions=args.excursions,
                    horizon_cap=args.horizon or 10**5, k=args.k,
                    batches=args.batches, threads=_threads(args))


def _run_eig_mc(args) -> dict:
    source, meta = _load_source(args)
    cfg = _mc_config(args)
    if _is_metzler(source):
        spec = spectral_bound(source, tol=args.tol or 1e-10, k=args.k,
                              radii=_radii(args))
        est = estimate_metzler_mc(source, spec.lam, cfg)
        return {"lambda": spec.lam, "R": None, "R_source": "spectral-bound",
                "estimate": est.to_dict(), "reference": meta or None}
    r, r_source = _resolve_R(args, source, meta)
    est = estimate_left(build_kernel(source), r, cfg)
    return {"lambda": None, "R": r, "R_source": r_source,
            "estimate": est.to_dict(), "reference": meta or None}


def _run_metzler(args) -> dict:
    source, meta = _load_source(args)
    if isinstance(source, FiniteMatrix):
        source = FiniteMetzler(source.dense())
    elif not _is_metzler(source):
        raise DomainError("metzler mode needs a Metzler source; "
                          "got a lazy non-negative model")
    spec = spectral_bound(source, tol=args.tol or 1e-10, k=args.k,
                          radii=_radii(args))
    vec = left_vector_metzler_series(source, spec.lam, k=args.k,
                                     horizon=args.horizon or 2**18,
                                     tol=args.tol or 1e-8)
    return {"spectral": spec.to_dict(), "vector": vec.to_dict(),
            "reference": meta or None}


def _run_verify(args) -> dict:
    from .verify import run_battery
    return run_battery(progress=sys.stderr)


_RUNNERS = {
    "analyze": _run_analyze,
    "eig-series": _run_eig_series,
    "eig-mc": _run_eig_mc,
    "metzler": _run_metzler,
    "verify": _run_verify,
}


def _config_echo(args) -> dict:
    return {
        "input": args.input, "model": args.model, "k": args.k, "R": args.R,
        "tol": args.tol, "horizon": args.horizon, "excursions": args.excursions,
        "seed": args.seed, "batches": args.batches, "threads": _threads(args),
        "radii": args.radii, "format": args.format,
    }


def _jsonable(obj):
    """NaN and infinities have no strict-JSON spelling; they become null.

    numpy scalars unwrap to their Python equivalents first: np.bool_ and the
    integer types are not subclasses of bool/int, and json refuses them.
    """
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, dict):
        return {key: _jsonable(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(val) for val in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(val) for val in obj.tolist()]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _csv_rows(obj, prefix: str, rows: list[str]) -> None:
    if isinstance(obj, dict):
        for key, val in obj.items():
            _csv_rows(val, f"{prefix}.{key}" if prefix else str(key), rows)
    elif isinstance(obj, (list, tuple)):
        for idx, val in enumerate(obj):
            _csv_rows(val, f"{prefix}.{idx}", rows)
    else:
        if isinstance(obj, bool):
            text = "true" if obj else "false"
        elif isinstance(obj, float):
            text = format(obj, ".17g")
        elif obj is None:
            text = ""
        else:
            text = str(obj)
        if any(ch in text for ch in ',"\n'):
            text = '"' + text.replace('"', '""') + '"'
        rows.append(f"{prefix},{text}")


def render(report: dict, fmt: str) -> str:
    clean = _jsonable(report)
    if fmt == "json":
        return json.dumps(clean, indent=2, allow_nan=False) + "\n"
    rows: list[str] = ["key,value"]
    _csv_rows(clean, "", rows)
    return "\n".join(rows) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = _RUNNERS[args.mode](args)
    except FileNotFoundError as exc:
        print(f"perron-chain: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except PerronChainError as exc:
        print(f"perron-chain: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    report = {
        "tool": "perron-chain",
        "version": __version__,
        "mode": args.mode,
        "config": _config_echo(args),
        "result": result,
    }
    text = render(report, args.format)
    if args.output:
        with open(args.output, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.mode == "verify" and not result.get("passed", False):
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
