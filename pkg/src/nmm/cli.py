"""Command-line front end: ``nmm curve|ortho|gas|toda|levelspacing|check``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .curvegeom import (
    ConvergenceError,
    CurveError,
    HarmonicMoments,
    PolynomialCurve,
    critical_radius,
    curve_from_moments,
    eval_map,
    interior_moments,
    moments_of_curve,
    validate_curve,
)

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_PRECISION = 3
EXIT_USAGE = 64
MAX_HARMONIC = 8


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse with the usage exit code of this tool."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# parsing helpers


def parse_complex(text: str) -> complex:
    """'1.5', '0.1,0.2' (re,im) or a Python complex literal."""
    text = text.strip().strip('"').strip("'")
    if "," in text:
        re_, im_ = text.split(",", 1)
        return complex(float(re_), float(im_))
    try:
        return complex(float(text))
    except ValueError:
        return complex(text.replace(" ", ""))


def parse_pairs(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip().strip('"').strip("'")
    return out


def merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Fill options not given on the command line from --config; unknown keys are rejected."""
    if not getattr(args, "config", None):
        return args
    cfg = read_config(args.config)
    defaults = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    for key, value in cfg.items():
        if key not in defaults:
            raise UsageError(f"unknown config key {key!r}")
        action = defaults[key]
        if getattr(args, key) != action.default:
            continue  # flags win
        if action.type is not None:
            value = action.type(value)
        elif isinstance(action, argparse._StoreTrueAction):
            value = value.lower() in ("1", "true", "yes")
        setattr(args, key, value)
    return args


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def metadata(command: str, config: dict, seed: int | None = None) -> dict:
    return {"tool": "nmm", "version": __version__, "command": command, "config_hash": config_hash(config), "seed": seed}


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: Path, meta: dict, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k in ("tool", "version", "command", "config_hash", "seed"):
            fh.write(f"# {k}={meta[k]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def write_json(path: Path, meta: dict, payload: dict) -> None:
    data = {"metadata": meta, **payload}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))


def fail(code: int, payload: dict) -> int:
    clean = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in payload.items()}
    sys.stderr.write(json.dumps(clean, default=_json_default) + "\n")
    return code


def _apply_threads() -> None:
    value = os.environ.get("NMM_THREADS")
    if not value:
        return
    try:
        n = int(value)
    except ValueError as exc:
        raise UsageError("NMM_THREADS must be a positive integer") from exc
    if n < 1:
        raise UsageError("NMM_THREADS must be a positive integer")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _positive(kind):
    def check(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return check


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; command-line flags win")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")


def _add_potential(p: argparse.ArgumentParser, need_n: bool = True) -> None:
    p.add_argument("--t0", type=_positive(float), help="area parameter t0 > 0")
    for k in range(1, MAX_HARMONIC + 1):
        p.add_argument(f"--t{k}", type=parse_complex, default=None, help=f"harmonic moment t_{k} (re or re,im)")
    if need_n:
        p.add_argument("--N", type=_positive(int), help="matrix size N")


def _potential_terms(args) -> tuple[complex, ...]:
    t = [getattr(args, f"t{k}") or 0j for k in range(1, MAX_HARMONIC + 1)]
    while t and t[-1] == 0:
        t.pop()
    return tuple(t)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "config")}


# ---------------------------------------------------------------------------
# commands


def cmd_curve(args) -> int:
    if bool(args.from_moments) == bool(args.from_coeffs):
        raise UsageError("give exactly one of --from-moments or --from-coeffs")
    out = Path(args.out)
    if args.from_moments:
        pairs = parse_pairs(args.from_moments)
        if "t0" not in pairs:
            raise UsageError("--from-moments needs t0")
        t0 = float(parse_complex(pairs.pop("t0")).real)
        terms = {}
        for key, v in pairs.items():
            if not (key.startswith("t") and key[1:].isdigit() and int(key[1:]) >= 1):
                raise UsageError(f"unknown moment {key!r}")
            terms[int(key[1:])] = parse_complex(v)
        t = [terms.get(k, 0j) for k in range(1, max(terms, default=0) + 1)]
        try:
            moments = HarmonicMoments(t0, tuple(t)).lowered()
            curve = curve_from_moments(moments, tol=args.tol, max_iter=args.max_iter)
        except ConvergenceError as exc:
            return fail(EXIT_NUMERICAL, {"error": str(exc), "residual": exc.residual, "iterations": exc.iterations})
        except CurveError as exc:
            raise UsageError(str(exc)) from exc
    else:
        pairs = parse_pairs(args.from_coeffs)
        if "r" not in pairs:
            raise UsageError("--from-coeffs needs r")
        r = float(parse_complex(pairs.pop("r")).real)
        terms = {}
        for key, v in pairs.items():
            if not (key.startswith("a") and key[1:].isdigit()):
                raise UsageError(f"unknown coefficient {key!r}")
            terms[int(key[1:])] = parse_complex(v)
        a = [terms.get(j, 0j) for j in range(max(terms, default=-1) + 1)]
        try:
            curve = PolynomialCurve(r, tuple(a))
        except (CurveError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    report = validate_curve(curve, max(512, 8 * (curve.degree + 1)))
    if not report.valid:
        return fail(EXIT_NUMERICAL, {"error": "curve is not admissible", "validation": report.to_json()})
    d = curve.degree
    moments = moments_of_curve(curve, d + 1, shifted=not report.encloses_origin)
    interior = interior_moments(curve, args.k_max)
    meta = metadata("curve", _echo(args))
    out.mkdir(parents=True, exist_ok=True)
    write_json(
        out / "curve.json",
        meta,
        {
            "curve": curve.to_json(),
            "moments": moments.to_json(),
            "interior_moments": interior.to_json(),
            "critical_radius": critical_radius(curve),
            "validation": report.to_json(),
        },
    )
    theta = 2 * np.pi * np.arange(args.samples) / args.samples
    pts = eval_map(curve, np.exp(1j * theta))
    write_csv(out / "boundary.csv", meta, ["theta", "re", "im"], ((float(t), float(p.real), float(p.imag)) for t, p in zip(theta, pts)))
    return EXIT_OK


def cmd_ortho(args) -> int:
    from . import orthopoly as op

    _require(args, "t0", "N", "n_max")
    pot = op.PotentialSpec(args.t0, _potential_terms(args), args.N)
    if args.n_max > min(pot.N, op.MAX_DEGREE):
        raise UsageError(f"--n-max must not exceed min(N, {op.MAX_DEGREE})")
    cutoff = args.cutoff or op.default_cutoff(pot, args.n_max)
    grid = op.build_grid(cutoff, args.n_r, args.n_theta)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", op.PrecisionWarning)
            fam = op.build_family(pot, grid, args.n_max, method=args.method)
    except op.PrecisionError as exc:
        return fail(EXIT_PRECISION, {"error": str(exc), "achieved": exc.achieved})
    if fam.n_max < args.n_max:
        return fail(EXIT_PRECISION, {"error": "moment matrix lost positivity", "achieved": fam.n_max})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = metadata("ortho", _echo(args))
    write_csv(out / "norms.csv", meta, ["n", "h_n", "log_h_n"], ((n, float(np.exp(lh)), float(lh)) for n, lh in enumerate(fam.log_norms)))
    summary: dict = {"operator_identity": None, "string_equation": None, "recursion": None}
    if pot.symmetry_order not in (None, 1):
        rec = op.recursion_coefficients(fam)
        summary["recursion"] = rec.to_json()
        rows = []
        for n in range(len(rec.r)):
            a = float(abs(rec.a[n])) if n < len(rec.a) else float("nan")
            rows.append((n, float(rec.r[n]), a))
        write_csv(out / "recursion.csv", meta, ["n", "r_n", "abs_a_n"], rows)
    elif pot.symmetry_order is None:
        H = fam.hessenberg
        write_csv(out / "recursion.csv", meta, ["n", "r_n", "abs_a_n"],
                  ((n, float(abs(H[n, n - 1])) if n else 0.0, float("nan")) for n in range(fam.n_max + 1)))
    if fam.n_max >= pot.degree + 2:
        summary["operator_identity"] = op.check_operator_identity(fam).to_json()
    if fam.n_max >= pot.N:
        summary["string_equation"] = op.check_string_equation(fam).to_json()
    for n in args.zeros or []:
        if not 0 <= n <= fam.n_max:
            raise UsageError(f"zero degree {n} outside 0..n_max")
        zeros = op.polynomial_zeros(fam, n)
        write_csv(out / f"zeros_{n}.csv", meta, ["n", "re", "im"], ((n, float(z.real), float(z.imag)) for z in zeros))
    write_json(out / "string_residuals.json", meta, summary)
    if fam.n_max >= pot.N - 1:
        extent = 2.0 * np.sqrt(pot.t0 / max(1 - 2 * abs(pot.t(2)), 1e-3))
        xs = np.linspace(-extent, extent, args.profile_points)
        dens = op.one_point_density(fam, xs.astype(complex))
        write_csv(out / "density_profile.csv", meta, ["re_z", "im_z", "density"], ((float(x), 0.0, float(r)) for x, r in zip(xs, dens)))
    return EXIT_OK


def cmd_gas(args) -> int:
    from . import gas
    from .orthopoly import PotentialSpec

    _require(args, "t0", "N", "steps")
    pot = PotentialSpec(args.t0, _potential_terms(args), args.N)
    burn = args.burn_in if args.burn_in is not None else args.steps // 10
    if args.steps <= burn:
        raise UsageError("--steps must exceed --burn-in")
    run = gas.mcmc_run(pot, args.steps, burn, seed=args.seed, proposal_scale=args.scale, cutoff=args.cutoff, bins=args.bins)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = metadata("gas", _echo(args), args.seed)
    payload = run.to_json()
    try:
        curve = curve_from_moments(HarmonicMoments(pot.t0, pot.tk or (0j,)).lowered())
    except (ConvergenceError, CurveError):
        curve = None
    if curve is not None:
        payload["density"] = gas.density_compare(run.measure, curve, pot.t0, pot.N).to_json()
        payload["interior_moments"] = interior_moments(curve, len(run.m_hat)).to_json()
    write_json(out / "gas.json", meta, payload)
    centers = run.measure.centers()
    mass = run.measure.mass
    rows = (
        (ix, iy, float(centers[ix, iy].real), float(centers[ix, iy].imag), float(mass[ix, iy]))
        for ix in range(mass.shape[0])
        for iy in range(mass.shape[1])
    )
    write_csv(out / "histogram.csv", meta, ["ix", "iy", "center_re", "center_im", "mass"], rows)
    return EXIT_OK


def cmd_toda(args) -> int:
    from . import toda

    _require(args, "t0", "flow")
    moments = HarmonicMoments(args.t0, _potential_terms(args) or (0j,))
    try:
        report = toda.verify_flow(moments, args.flow, args.eps)
    except ConvergenceError as exc:
        return fail(EXIT_NUMERICAL, {"error": str(exc), "residual": exc.residual})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "toda.json", metadata("toda", _echo(args)), report.to_json())
    return EXIT_OK


def cmd_levelspacing(args) -> int:
    from .orthopoly import gaussian_level_spacing

    _require(args, "t0", "N", "x")
    table = gaussian_level_spacing(args.t0, args.N, args.x)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = metadata("levelspacing", _echo(args))
    write_csv(out / "levelspacing.csv", meta, ["n", "probability"], ((n, float(p)) for n, p in enumerate(table)))
    write_json(out / "levelspacing.json", meta, {"sum": float(table.sum()), "table": table.tolist()})
    return EXIT_OK


def cmd_check(args) -> int:
    from .acceptance import run_all

    results = run_all(quick=args.quick)
    for res in results:
        print(res.line())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "acceptance.json", metadata("check", _echo(args)), {"criteria": [r.to_json() for r in results]})
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="nmm", description="Normal matrix model numerical laboratory")
    parser.add_argument("--version", action="version", version=f"nmm {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    p = sub.add_parser("curve", help="polynomial curve from moments or coefficients")
    _add_common(p)
    p.add_argument("--from-moments", nargs="+", metavar="KEY=VALUE", help="t0=... tk=...")
    p.add_argument("--from-coeffs", nargs="+", metavar="KEY=VALUE", help="r=... aj=...")
    p.add_argument("--k-max", type=_positive(int), default=5, help="number of interior moments")
    p.add_argument("--samples", type=_positive(int), default=512, help="boundary samples")
    p.add_argument("--tol", type=_positive(float), default=1e-14, help="Newton tolerance")
    p.add_argument("--max-iter", type=_positive(int), default=100, help="Newton iteration cap")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("ortho", help="orthogonal polynomials, recursion, zeros, string equation")
    _add_common(p)
    _add_potential(p)
    p.add_argument("--n-max", type=_nonneg_int, help="highest polynomial degree (required)")
    p.add_argument("--n-r", type=_positive(int), default=200, help="radial Gauss-Legendre nodes")
    p.add_argument("--n-theta", type=_positive(int), default=256, help="angular trapezoid nodes")
    p.add_argument("--cutoff", type=_positive(float), default=None, help="cut-off radius")
    p.add_argument("--method", choices=("arnoldi", "cholesky"), default="arnoldi")
    p.add_argument("--zeros", type=_nonneg_int, nargs="*", help="degrees whose zeros are written")
    p.add_argument("--profile-points", type=_positive(int), default=201, help="density profile samples")
    p.set_defaults(func=cmd_ortho)

    p = sub.add_parser("gas", help="Metropolis Coulomb gas")
    _add_common(p)
    _add_potential(p)
    p.add_argument("--steps", type=_positive(int), help="number of sweeps")
    p.add_argument("--burn-in", type=_nonneg_int, default=None, help="burn-in sweeps (default steps/10)")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--scale", type=_positive(float), default=None, help="initial proposal scale")
    p.add_argument("--cutoff", type=_positive(float), default=None, help="cut-off radius")
    p.add_argument("--bins", type=_positive(int), default=96, help="histogram bins per axis")
    p.set_defaults(func=cmd_gas)

    p = sub.add_parser("toda", help="dispersionless Toda flow and string equation residuals")
    _add_common(p)
    _add_potential(p, need_n=False)
    p.add_argument("--flow", type=_positive(int), help="flow index k")
    p.add_argument("--eps", type=_positive(float), default=None, help="finite-difference step")
    p.set_defaults(func=cmd_toda)

    p = sub.add_parser("levelspacing", help="exact Gaussian level-spacing table")
    _add_common(p)
    p.add_argument("--t0", type=_positive(float))
    p.add_argument("--N", type=_positive(int))
    p.add_argument("--x", type=_positive(float))
    p.set_defaults(func=cmd_levelspacing)

    p = sub.add_parser("check", help="run the acceptance suite")
    _add_common(p)
    p.add_argument("--quick", action="store_true", help="shorter Monte Carlo runs")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        _apply_threads()
        args = merge_config(args, sub)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"nmm {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        sys.stderr.write(f"nmm {args.command}: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
