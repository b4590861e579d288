"""Command-line runner: ``zeromult {eval,zeros,trace,strips,verify,ratio}``.

Every run writes its outputs plus ``manifest.json`` (config echo, version,
wall time, defaults table) into the output directory. Exit status is 0 on
success, 2 on a validation error and 3 on a numerical failure; failures
are serialized to ``error.json``.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, conformal, curves, io, special, zeros
from .conformal import (
    area_integral_check,
    build_domain_patch,
    build_involution,
    check_chain_rule,
    length_integral_check,
    local_model_fit,
    ratio_divergence_diagnostic,
)
from .curves import (
    CirclePreimage,
    RayPreimage,
    RealAxisPreimage,
    classify_component,
    partition_strips,
    trace_components,
    trace_level_curve,
)
from .dirichlet import GeneralDirichletSeries, validate_series_config
from .errors import ConfigInvalid, InsufficientArc, NumericalError, ValidationError
from .handles import (
    DavenportHeilbronn,
    DerivativeHandle,
    DirichletL,
    HurwitzZeta,
    RiemannZeta,
    TruncatedGeneralSeries,
    double_zero,
)
from .zeros import SearchRectangle, locate_zeros

SCHEMA = "zeromult.manifest/1"
OUTPUT_ENV = "ZEROMULT_OUTPUT_DIR"

# name -> (value, meaning); --tol NAME=VALUE overrides the value
DEFAULTS = {
    "precision": (special.DEFAULT_PRECISION, "evaluator target precision"),
    "max_depth": (16, "zero finder subdivision depth"),
    "edge_nodes": (zeros.EDGE_NODES, "initial contour nodes per edge"),
    "grid_density": (64, "seed grid points along the short window side"),
    "trace_tol": (curves.TRACE_TOL, "curve corrector tolerance (relative)"),
    "extent": (0.35, "half-size of the verification patch"),
    "involution_grid": (16, "involution grid nodes per side"),
    "chain_distance": (10.0, "chain-rule samples at >= this many pair separations"),
    "area_tol": (5e-3, "area identity relative tolerance"),
    "length_tol": (5e-3, "length identity relative tolerance"),
    "chain_tol": (1e-4, "chain-rule residual tolerance"),
    "model_level": (conformal.BREAKDOWN_LEVEL, "local model breakdown residual"),
    "model_order": (conformal.MODEL_ORDER, "local model polynomial degree"),
    "ratio_tol": (1e-14, "vanishing-factor threshold for the ratio diagnostic"),
}
INTEGER_DEFAULTS = {"max_depth", "edge_nodes", "grid_density", "involution_grid", "model_order"}


# --- parsing --------------------------------------------------------------------

def parse_point(text: str) -> complex:
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigInvalid("point must be 're,im', got %r" % text) from None
    if len(parts) != 2:
        raise ConfigInvalid("point must be 're,im', got %r" % text)
    return complex(*parts)


def parse_rect(text: str) -> SearchRectangle:
    try:
        return SearchRectangle.parse(text)
    except ValueError:
        raise ConfigInvalid("rectangle must be 'sigma_min,sigma_max,t_min,t_max'") from None


def parse_tolerances(items) -> dict:
    values = {k: v for k, (v, _) in DEFAULTS.items()}
    for item in items or ():
        if "=" not in item:
            raise ConfigInvalid("tolerance override must be NAME=VALUE, got %r" % item)
        key, raw = (p.strip() for p in item.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigInvalid("unknown tolerance %r" % key)
        try:
            val = int(raw) if key in INTEGER_DEFAULTS else float(raw)
        except ValueError:
            raise ConfigInvalid("bad value for %s: %r" % (key, raw)) from None
        if not val > 0:
            raise ConfigInvalid("%s must be positive" % key)
        values[key] = val
    return values


def make_function(args, tol):
    kind = args.function
    if args.series_config and kind is None:
        kind = "series"
    kind = kind or "zeta"
    prec = tol["precision"]
    if kind == "zeta":
        return RiemannZeta(prec)
    if kind == "dh":
        return DavenportHeilbronn(prec)
    if kind == "hurwitz":
        if args.shift is None:
            raise ConfigInvalid("--function hurwitz needs --shift")
        return HurwitzZeta(args.shift, prec)
    if kind == "dirichlet":
        if not args.table:
            raise ConfigInvalid("--function dirichlet needs --table")
        table = [parse_point(tok) if "," in tok else complex(tok.replace("i", "j"))
                 for tok in args.table.split(";")]
        return DirichletL(len(table), table, prec)
    if kind == "series":
        return TruncatedGeneralSeries(load_series(args), args.cutoff)
    raise ConfigInvalid("unknown function %r" % kind)


def load_series(args):
    if args.series_config:
        return validate_series_config(args.series_config)
    return GeneralDirichletSeries.classical()


def make_constraint(text: str):
    if text in ("real", "real_axis"):
        return RealAxisPreimage()
    kind, _, value = text.partition(":")
    try:
        if kind == "circle":
            return CirclePreimage(float(value))
        if kind == "ray":
            return RayPreimage(float(value))
    except ValueError:
        pass
    raise ConfigInvalid("constraint must be real, circle:R or ray:THETA, got %r" % text)


# --- commands ---------------------------------------------------------------------

def cmd_eval(args, tol, out):
    f = make_function(args, tol)
    pts = [parse_point(p) for p in args.point or ["2,0"]]
    rows = []
    for s in pts:
        r = f.evaluate(s)
        rows.append({"s": s, "value": complex(r.value), "error_bound": float(r.error_bound),
                     "terms_used": int(r.terms_used)})
    io.write_json(out / "eval.json", {"function": f.describe(), "points": rows})
    return ["eval.json"]


def cmd_zeros(args, tol, out):
    f = make_function(args, tol)
    rect = parse_rect(args.rect)
    found = locate_zeros(f, rect, max_depth=tol["max_depth"], seed=args.seed,
                         raise_on_cluster=True, edge_nodes=tol["edge_nodes"])
    io.write_zeros_csv(out / "zeros.csv", found)
    io.write_zeros_json(out / "zeros.json", found)
    return ["zeros.csv", "zeros.json"]


def _classify_all(f, comps):
    for c in comps:
        try:
            classify_component(f, c)
        except InsufficientArc:
            pass


def cmd_trace(args, tol, out):
    f = make_function(args, tol)
    if args.derivative:
        f = DerivativeHandle(f, 1)
    window = parse_rect(args.rect)
    constraint = make_constraint(args.constraint)
    if args.start:
        comps = [trace_level_curve(f, parse_point(args.start), constraint, window,
                                   tol=tol["trace_tol"])]
    else:
        comps = trace_components(f, window, constraint, tol["grid_density"])
    if isinstance(constraint, RealAxisPreimage) and not args.derivative:
        _classify_all(f, comps)
    return io.write_curves(out, comps, bundle=args.bundle)


def cmd_strips(args, tol, out):
    f = make_function(args, tol)
    window = parse_rect(args.rect)
    comps = trace_components(f, window, grid_density=tol["grid_density"])
    zs = locate_zeros(f, window, max_depth=tol["max_depth"], seed=args.seed,
                      raise_on_cluster=True, edge_nodes=tol["edge_nodes"])
    strips = partition_strips(f, window, zs, components=comps)
    complete = sum(s.j_count for s in strips if s.complete)
    io.write_json(out / "strips.json", {
        "window": [window.sigma_min, window.sigma_max, window.t_min, window.t_max],
        "zero_count": sum(z.multiplicity for z in zs),
        "complete_j_sum": complete,
        "strips": [s.to_dict() for s in strips]})
    return ["strips.json"] + io.write_curves(out, comps, bundle=args.bundle)


def cmd_verify(args, tol, out):
    if args.synthetic:
        s0 = parse_point(args.synthetic)
        f = double_zero(s0)
        pair = s0
    else:
        f = make_function(args, tol)
        if not args.rect:
            raise ConfigInvalid("verify needs --rect (or --synthetic)")
        pair = locate_zeros(f, parse_rect(args.rect), max_depth=tol["max_depth"],
                            seed=args.seed, raise_on_cluster=True,
                            edge_nodes=tol["edge_nodes"])
        if sum(z.multiplicity for z in pair) != 2:
            raise ConfigInvalid("rectangle must hold exactly two zeros (with multiplicity), "
                                "found %d" % sum(z.multiplicity for z in pair))
    patch = build_domain_patch(f, pair, tol["extent"])
    radii = [float(r) for r in args.radii.split(",")]
    checks = args.checks.split(",")
    reports, extra = [], {"patch": patch.to_dict()}
    if "area" in checks:
        reports.append(area_integral_check(f, patch, radii, tol["area_tol"]))
    if "length" in checks:
        reports.append(length_integral_check(f, patch, radii, tol["length_tol"]))
    if "chain" in checks:
        inv = build_involution(f, patch, tol["involution_grid"])
        extra["involution_error"] = inv.involution_error()
        far = inv.nodes[np.abs(inv.nodes - patch.fixed_point)
                        >= tol["chain_distance"] * patch.separation]
        sample = far if far.size and patch.separation > 0 else None
        reports.append(check_chain_rule(f, inv, sample, tol["chain_tol"]))
    if "model" in checks:
        scale = patch.separation or patch.extent / 100
        model = local_model_fit(f, patch.fixed_point,
                                [scale * k for k in (0.25, 0.5, 1, 2, 5, 10, 20, 25)],
                                tol["model_order"], level=tol["model_level"])
        extra["local_model"] = model.to_dict()
    names = []
    for rep in reports:
        name = "report_%s.json" % rep.identity
        io.write_report_json(out / name, rep)
        names.append(name)
    io.write_report_csv(out / "summary.csv", reports)
    extra["all_passed"] = all(r.ok for r in reports)
    io.write_json(out / "verify.json", extra)
    return names + ["summary.csv", "verify.json"]


def cmd_ratio(args, tol, out):
    series = load_series(args)
    s, s_img = parse_point(args.point[0] if args.point else "2,0"), parse_point(args.image)
    diag = ratio_divergence_diagnostic(series, s, s_img, args.n_max, tol["ratio_tol"])
    rows = zip(diag.primes.tolist(), diag.log_abs.tolist(), diag.direct.tolist())
    io._write_rows(out / "ratio.csv", ("p", "log_abs_ratio", "direct_abs_ratio"), rows)
    io.write_json(out / "ratio.json", {"s": s, "s_image": s_img, "n_max": args.n_max,
                                      "trend": diag.trend(),
                                      "max_relative_gap": diag.max_relative_gap()})
    return ["ratio.csv", "ratio.json"]


COMMANDS = {"eval": cmd_eval, "zeros": cmd_zeros, "trace": cmd_trace, "strips": cmd_strips,
            "verify": cmd_verify, "ratio": cmd_ratio}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--function", choices=["zeta", "dh", "hurwitz", "dirichlet", "series"])
    common.add_argument("--shift", type=float, help="Hurwitz shift a in (0, 1]")
    common.add_argument("--table", help="character table, ';'-separated complex values")
    common.add_argument("--series-config", help="key = value series file")
    common.add_argument("--cutoff", type=int, default=1000, help="terms for --function series")
    common.add_argument("--out", help="output directory (default $%s or ./zeromult_out)"
                        % OUTPUT_ENV)
    common.add_argument("--seed", type=int, default=0, help="contour jitter seed")
    common.add_argument("--tol", action="append", metavar="NAME=VALUE",
                        help="override a default (see manifest.json)")

    parser = argparse.ArgumentParser(prog="zeromult", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="evaluate the function at points")
    p.add_argument("--point", action="append", help="re,im (repeatable)")

    p = sub.add_parser("zeros", parents=[common], help="locate zeros in a rectangle")
    p.add_argument("--rect", required=True, help="sigma_min,sigma_max,t_min,t_max")

    p = sub.add_parser("trace", parents=[common], help="trace constraint curves")
    p.add_argument("--rect", required=True)
    p.add_argument("--constraint", default="real", help="real | circle:R | ray:THETA")
    p.add_argument("--start", help="trace the single component through re,im")
    p.add_argument("--derivative", action="store_true", help="trace curves of f'")
    p.add_argument("--bundle", action="store_true", help="also write bundle.json")

    p = sub.add_parser("strips", parents=[common], help="partition a window into strips")
    p.add_argument("--rect", required=True)
    p.add_argument("--bundle", action="store_true")

    p = sub.add_parser("verify", parents=[common], help="conformal identity checks")
    p.add_argument("--rect", help="rectangle holding the zero pair")
    p.add_argument("--synthetic", help="use (s - s0)^2 e^s with s0 = re,im")
    p.add_argument("--radii", default="0.001,0.01")
    p.add_argument("--checks", default="area,length,chain,model")

    p = sub.add_parser("ratio", parents=[common], help="Euler partial product ratio")
    p.add_argument("--point", action="append", help="s as re,im")
    p.add_argument("--image", required=True, help="s' as re,im")
    p.add_argument("--n-max", type=int, default=10_000)
    return parser


def output_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "zeromult_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


COORDINATE_FLAGS = ("--rect", "--point", "--start", "--image", "--synthetic")


def _glue_negatives(argv):
    """'--rect -1,4,0,30' -> '--rect=-1,4,0,30' so argparse does not take the
    value for an option."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else ""
        if tok in COORDINATE_FLAGS and len(nxt) > 1 and nxt[0] == "-" and nxt[1] in "0123456789.":
            out.append(tok + "=" + nxt)
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_glue_negatives(list(sys.argv[1:] if argv is None else argv)))
    out = output_dir(args)
    start = time.perf_counter()
    manifest = {"schema": SCHEMA, "version": __version__, "command": args.command,
                "config": {k: v for k, v in sorted(vars(args).items())}}
    try:
        tol = parse_tolerances(args.tol)
        manifest["defaults"] = {k: {"value": tol[k], "default": v, "meaning": m}
                                for k, (v, m) in DEFAULTS.items()}
        outputs = COMMANDS[args.command](args, tol, out)
        status, code = "ok", 0
    except ValidationError as exc:
        status, code, outputs = "validation_error", 2, ["error.json"]
        io.write_json(out / "error.json", exc.to_dict())
    except NumericalError as exc:
        status, code, outputs = "numerical_error", 3, ["error.json"]
        io.write_json(out / "error.json", exc.to_dict())
    manifest.update(status=status, exit_code=code, outputs=outputs,
                    wall_time_s=time.perf_counter() - start)
    io.write_json(out / "manifest.json", manifest)
    print("%s: %s (%s)" % (args.command, status, out), file=sys.stderr)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
