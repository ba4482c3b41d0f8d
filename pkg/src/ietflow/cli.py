"""Command-line front end: ``ietflow {apply,orbit,induct,criterion,joining}``.

Every command prints one JSON document on stdout (CSV for ``joining``).
Failures print ``{"error": {...}}`` and exit with the code from EXIT_CODES.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import Optional, Sequence

from .criterion import (
    CaseUnsupported,
    InputRejected,
    NotAtomic,
    RefinementExplosion,
    Verdict,
    pair_distribution,
    theorem_pipeline,
)
from .iet import DomainError, IetSpec, InvalidIet, Permutation, apply, orbit
from .joinings import FlowRect, default_threads, joining_convergence_check, write_discrepancy_csv
from .rauzy import KeaneViolation, NotFound, induct
from .roof import InvalidRoof, PiecewiseAffine, PiecewiseRoof, center_on_tower
from .scalar import FieldMismatch, Scalar, ScalarParseError
from .towers import (
    BudgetExhausted,
    EmptyTower,
    InvalidParameter,
    NoSuitablePermutation,
    NotCaptured,
    ParameterInfeasible,
    build_W_linear,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_KEANE = 4
EXIT_REJECTED = 5
EXIT_INFEASIBLE = 6
EXIT_FAILED_MASS = 10
EXIT_FAILED_SYMMETRY = 11
EXIT_INCONCLUSIVE = 12

EXIT_CODES = {
    EXIT_OK: "success (criterion: SATISFIED)",
    EXIT_INTERNAL: "internal error",
    EXIT_USAGE: "usage or configuration error",
    EXIT_DOMAIN: "point outside the domain",
    EXIT_KEANE: "exact length tie during induction",
    EXIT_REJECTED: "input rejected by the criterion pipeline",
    EXIT_INFEASIBLE: "parameters admit no valid construction",
    EXIT_FAILED_MASS: "criterion FAILED_MASS",
    EXIT_FAILED_SYMMETRY: "criterion FAILED_SYMMETRY",
    EXIT_INCONCLUSIVE: "criterion INCONCLUSIVE or search budget exhausted",
}

VERDICT_EXIT = {
    Verdict.SATISFIED: EXIT_OK,
    Verdict.FAILED_MASS: EXIT_FAILED_MASS,
    Verdict.FAILED_SYMMETRY: EXIT_FAILED_SYMMETRY,
    Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}


class ConfigError(ValueError):
    pass


def _error_exit(exc: BaseException) -> int:
    # most specific first
    table = (
        (KeaneViolation, EXIT_KEANE),
        (DomainError, EXIT_DOMAIN),
        ((InputRejected, CaseUnsupported, NotAtomic), EXIT_REJECTED),
        ((ParameterInfeasible, InvalidParameter, NoSuitablePermutation), EXIT_INFEASIBLE),
        ((BudgetExhausted, NotFound, RefinementExplosion, EmptyTower, NotCaptured), EXIT_INCONCLUSIVE),
        ((ConfigError, ScalarParseError, FieldMismatch, InvalidIet, InvalidRoof), EXIT_USAGE),
    )
    for kinds, code in table:
        if isinstance(exc, kinds):
            return code
    return EXIT_INTERNAL


# --- configuration ----------------------------------------------------------------

class RunConfig:
    """Validated run configuration; every scalar arrives as an exact string."""

    __slots__ = ("iet", "roof", "epsilon", "budget", "depth", "samples", "seed", "r", "format", "precision")

    def __init__(self, data: dict):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {"iet", "roof", "params", "output"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        self.iet = _parse_iet(data.get("iet"))
        self.roof = _parse_roof(data["roof"]) if data.get("roof") is not None else None
        params = data.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        bad = set(params) - {"epsilon", "budget", "depth", "samples", "seed", "r"}
        if bad:
            raise ConfigError(f"unknown params: {sorted(bad)}")
        self.epsilon = _fraction(params["epsilon"], "epsilon") if "epsilon" in params else None
        self.budget = _int(params.get("budget"), "budget", minimum=0)
        self.depth = _int(params.get("depth"), "depth", minimum=0)
        self.samples = _int(params.get("samples"), "samples", minimum=1)
        self.seed = _int(params.get("seed"), "seed", minimum=0)
        self.r = _int(params.get("r"), "r", minimum=1)
        output = data.get("output") or {}
        self.format = output.get("format", "json")
        if self.format not in ("json", "csv"):
            raise ConfigError("output.format must be json or csv")
        self.precision = _int(output.get("precision", 12), "precision", minimum=1)
        if self.roof is not None and self.r is not None and self.roof.is_piecewise_constant():
            jumps = len(self.roof.jump_points())
            if self.roof.sum_of_jumps() == 0 and jumps != self.r:
                raise ConfigError(f"params.r = {self.r} but the roof has {jumps} jumps")

    @classmethod
    def load(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls({})
        try:
            with open(path, encoding="utf-8") as fh:
                return cls(json.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None


def _scalar(text, what: str) -> Scalar:
    if not isinstance(text, (str, int)) or isinstance(text, bool):
        raise ConfigError(f"{what} must be an exact string, got {text!r}")
    return Scalar.parse(str(text))


def _fraction(text, what: str) -> Fraction:
    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{what} must be a rational string, got {text!r}") from None


def _int(value, what: str, minimum: int) -> Optional[int]:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{what} must be an integer >= {minimum}")
    return value


def _parse_iet(obj) -> Optional[IetSpec]:
    if obj is None:
        return None
    if not isinstance(obj, dict) or "permutation" not in obj or "lengths" not in obj:
        raise ConfigError("iet needs permutation and lengths")
    perm = obj["permutation"]
    try:
        pi = Permutation.parse(perm) if isinstance(perm, str) else Permutation(perm)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad permutation: {exc}") from None
    lengths = obj["lengths"]
    if not isinstance(lengths, list):
        raise ConfigError("lengths must be a list of exact strings")
    return IetSpec(pi, [_scalar(v, "length") for v in lengths])


def _parse_roof(obj) -> PiecewiseAffine:
    if not isinstance(obj, list) or not obj:
        raise ConfigError("roof must be a nonempty list of pieces")
    for piece in obj:
        if not isinstance(piece, dict):
            raise ConfigError("each roof piece must be an object")
        for key in ("start", "left_value", "slope"):
            if key in piece:
                _scalar(piece[key], key)
    return PiecewiseAffine.from_pieces(obj)


def _require(value, what: str):
    if value is None:
        raise ConfigError(f"missing {what}")
    return value


def _load_rects(path: str) -> list:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read rects file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"rects file is not valid JSON: {exc}") from None
    if not isinstance(data, list):
        raise ConfigError("rects file must hold a JSON list")
    triples = []
    for i, item in enumerate(data):
        # either {A, B, C} or one rectangle used for all three roles
        try:
            if isinstance(item, dict) and {"A", "B", "C"} <= set(item):
                triples.append(tuple(FlowRect.from_json(item[k]) for k in "ABC"))
            else:
                r = FlowRect.from_json(item)
                triples.append((r, r, r))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"rectangle {i} is malformed: {exc}") from None
    return triples


# --- commands ---------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def cmd_apply(cfg: RunConfig, args) -> tuple[int, str]:
    iet = _require(cfg.iet, "iet")
    x = _scalar(args.x, "x")
    return EXIT_OK, _dump({"x": str(x), "n": args.n, "value": str(apply(iet, x, args.n))})


def cmd_orbit(cfg: RunConfig, args) -> tuple[int, str]:
    iet = _require(cfg.iet, "iet")
    x = _scalar(args.x, "x")
    return EXIT_OK, _dump({"x": str(x), "n": args.n, "orbit": [str(v) for v in orbit(iet, x, args.n)]})


def cmd_induct(cfg: RunConfig, args) -> tuple[int, str]:
    iet = _require(cfg.iet, "iet")
    n = _pick(args.depth, cfg.depth, "depth")
    trace = induct(iet.pi, iet.lengths, n)
    return EXIT_OK, _dump(trace.to_json())


def cmd_criterion(cfg: RunConfig, args) -> tuple[int, str]:
    iet = _require(cfg.iet, "iet")
    roof = PiecewiseRoof.of(_require(cfg.roof, "roof"))
    eps = _pick(args.epsilon, cfg.epsilon, "epsilon")
    budget = _pick(args.budget, cfg.budget, "budget")
    samples = _pick(args.samples, cfg.samples, "samples", default=32)
    if roof.sum_of_jumps() == 0 and roof.is_piecewise_constant() and cfg.r is None:
        raise ConfigError("params.r is required for a piecewise-constant roof")
    report = theorem_pipeline(iet, roof, eps, budget, ac_samples=samples)
    out = report.to_json()
    if args.histogram:
        rows = ["value,mass"]
        if report.depths:
            rec = report.depths[-1]
            rows += [f"{v},{m}" for v, m in rec.xi_P.histogram_rows(cfg.precision)]
        with open(args.histogram, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
    return VERDICT_EXIT[report.verdict], _dump(out)


def cmd_joining(cfg: RunConfig, args) -> tuple[int, str]:
    iet = _require(cfg.iet, "iet")
    roof = PiecewiseRoof.of(_require(cfg.roof, "roof"))
    eps = _pick(args.epsilon, cfg.epsilon, "epsilon")
    budget = _pick(args.budget, cfg.budget, "budget")
    samples = _pick(args.samples, cfg.samples, "samples", default=100_000)
    seed = _pick(args.seed, cfg.seed, "seed", default=0)
    rects = _load_rects(args.rects)
    rows = []
    if rects:
        spec = iet if iet.total == 1 else iet.normalized()
        towers = build_W_linear(spec.pi, spec.lengths, eps, budget)
        a_values = [center_on_tower(roof, spec, t) for t in towers]
        pairs = [pair_distribution(roof, spec, t, a) for t, a in zip(towers, a_values)]
        rows = joining_convergence_check(roof, spec, towers, rects, a_values, pairs, samples, seed,
                                         threads=args.threads)
    return EXIT_OK, write_discrepancy_csv(rows, cfg.precision).rstrip("\n")


def _pick(flag, configured, what: str, default=None):
    if flag is not None:
        return flag
    if configured is not None:
        return configured
    if default is not None:
        return default
    raise ConfigError(f"missing {what} (flag or params.{what})")


# --- argument parsing ---------------------------------------------------------------

def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    epilog = "exit codes:\n" + "\n".join(f"  {k:>3}  {v}" for k, v in EXIT_CODES.items())
    p = argparse.ArgumentParser(prog="ietflow", description="Interval exchanges, towers and special flows.",
                                epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="JSON run configuration")
    common.add_argument("--permutation", help="inline permutation, e.g. '(2 1)'")
    common.add_argument("--lengths", help="inline comma-separated exact lengths")
    common.add_argument("--seed", type=_nonneg)
    common.add_argument("--depth", type=_nonneg)
    common.add_argument("--epsilon", type=_rational)
    common.add_argument("--budget", type=_nonneg)
    common.add_argument("--samples", type=_positive)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("apply", parents=[common], help="T^n x")
    s.add_argument("x")
    s.add_argument("-n", type=int, default=1)
    s.set_defaults(func=cmd_apply)

    s = sub.add_parser("orbit", parents=[common], help="x, Tx, ..., T^n x")
    s.add_argument("x")
    s.add_argument("n", type=int)
    s.set_defaults(func=cmd_orbit)

    s = sub.add_parser("induct", parents=[common], help="Rauzy-Veech induction trace")
    s.set_defaults(func=cmd_induct)

    s = sub.add_parser("criterion", parents=[common], help="end-to-end non-reversibility check")
    s.add_argument("--histogram", help="write the displacement histogram CSV here")
    s.set_defaults(func=cmd_criterion)

    s = sub.add_parser("joining", parents=[common], help="joining convergence table (CSV)")
    s.add_argument("rects", help="JSON list of rectangles or {A, B, C} triples")
    s.add_argument("--threads", type=_positive, default=None,
                   help="worker threads (default: IETFLOW_THREADS or 1)")
    s.set_defaults(func=cmd_joining)
    return p


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if args.permutation or args.lengths:
        if not (args.permutation and args.lengths):
            raise ConfigError("--permutation and --lengths go together")
        cfg.iet = _parse_iet({"permutation": args.permutation,
                              "lengths": [t.strip() for t in args.lengths.split(",")]})
    return cfg


def _error_payload(exc: BaseException) -> dict:
    err = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, KeaneViolation):
        err["at_step"] = exc.at_step
    if isinstance(exc, NotCaptured):
        err["l"] = exc.l
    return {"error": err}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "joining":
            default_threads()
        cfg = _config_from_args(args)
        code, text = args.func(cfg, args)
    except Exception as exc:  # every failure becomes an error document and an exit code
        code = _error_exit(exc)
        if code == EXIT_INTERNAL and isinstance(exc, ValueError):
            code = EXIT_USAGE
        print(_dump(_error_payload(exc)))
        return code
    print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
