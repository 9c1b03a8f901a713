"""Command-line front end: ``toruslyap <command> [options]``.

Exit codes: 0 every verdict holds, 1 usage or configuration error, 2 some
row is VIOLATED, 3 only hypothesis failures, 4 an estimator failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys as _sys
from dataclasses import replace

import numpy as np

from .cocycle import oseledec_frame, qr_spectrum
from .errors import TorusLyapError, ValidationError
from .forms import cohomology_action, entropy_estimate, total_spectral_radius, volume_growth
from .metric import lp_estimate, metric_at
from .systems import catalog_names, get_catalog, load_system, system_to_dict
from .verify import RunParams, exit_code, run_checks, sig12


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--system", metavar="FILE.json", help="system-spec JSON file")
    src.add_argument("--catalog", metavar="NAME", help="catalog system name")
    p.add_argument("--steps", type=int, help="iterates for long runs")
    p.add_argument("--samples", type=int, help="Monte Carlo samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser():
    parser = _Parser(prog="toruslyap", description="Lyapunov exponents and cohomology bounds on tori")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", help="QR Lyapunov spectrum; --out writes running means as CSV")
    _common(p)
    p.add_argument("--transient", type=int, default=1000)
    p.add_argument("--point", type=float, nargs="+")

    p = sub.add_parser("homology", help="induced action on cohomology per degree")
    _common(p)

    p = sub.add_parser("metric", help="Lyapunov metric at a point and L^p estimates")
    _common(p)
    p.add_argument("--point", type=float, nargs="+")
    p.add_argument("--p", type=float, nargs="+", dest="p_list")

    p = sub.add_parser("entropy", help="volume-growth entropy estimate")
    _common(p)

    p = sub.add_parser("verify", help="run inequality checks")
    p.add_argument("which", choices=("a", "acor", "b", "bc", "d", "f", "all"))
    _common(p)
    p.add_argument("--ensemble", type=int)
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("catalog", help="list catalog systems or print one as JSON")
    p.add_argument("name", nargs="?")
    return parser


def _system(args):
    if args.system:
        return load_system(args.system)
    if args.catalog:
        return get_catalog(args.catalog)
    raise UsageError("one of --system or --catalog is required")


def _point(sys, point, seed):
    if point is None:
        return np.random.default_rng([seed, 0]).random(sys.dim)
    if len(point) != sys.dim:
        raise ValidationError(f"--point needs {sys.dim} coordinates")
    return np.array(point)


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        _sys.stdout.write(text)


def _dump(obj):
    return json.dumps(obj, indent=2) + "\n"


def _rows_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if rows:
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow(list(r.values()))
    return buf.getvalue()


def cmd_spectrum(args):
    sys = _system(args)
    x0 = _point(sys, args.point, args.seed)
    spec = qr_spectrum(sys, x0, args.steps or 100_000, args.transient)
    result = {
        "system": sys.name,
        "exponents": [sig12(v) for v in spec.exponents],
        "sum": sig12(spec.sum),
        "sigma_plus": sig12(spec.sigma_plus),
        "half_width": [sig12(v) for v in spec.half_width],
        "n_steps": spec.n_steps,
        "n_transient": spec.n_transient,
        "x0": [sig12(v) for v in x0],
    }
    if args.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step"] + [f"lambda_{i + 1}" for i in range(sys.dim)])
        for s, row in zip(spec.history_steps, spec.history):
            w.writerow([int(s)] + [repr(sig12(v)) for v in row])
        _emit(buf.getvalue(), args.out)
    if args.format == "csv":
        _sys.stdout.write(_rows_csv([{"i": i + 1, "exponent": v} for i, v in enumerate(result["exponents"])]))
    else:
        _sys.stdout.write(_dump(result))
    return 0


def cmd_homology(args):
    sys = _system(args)
    degrees = []
    for k in range(sys.dim + 1):
        act = cohomology_action(sys, k)
        degrees.append({
            "k": k,
            "matrix": act.matrix.tolist(),
            "spectral_radius": sig12(act.spectral_radius),
            "exponents": [[sig12(e.exponent.real), sig12(e.exponent.imag)] for e in act.eigen],
        })
    sp, deg = total_spectral_radius(sys)
    result = {"system": sys.name, "degrees": degrees, "total_spectral_radius": sig12(sp), "argmax_degree": deg}
    if args.format == "csv":
        _emit(_rows_csv([{"k": d["k"], "spectral_radius": d["spectral_radius"]} for d in degrees]), args.out)
    else:
        _emit(_dump(result), args.out)
    return 0


def cmd_metric(args):
    sys = _system(args)
    x = _point(sys, args.point, args.seed)
    frame = oseledec_frame(sys, x)
    m = metric_at(sys, frame, args.epsilon)
    result = {
        "system": sys.name,
        "point": [sig12(v) for v in x],
        "epsilon": args.epsilon,
        "block_exponents": [sig12(v) for v in frame.block_exponents],
        "gram": [[sig12(v) for v in row] for row in m.gram],
        "truncation": list(m.truncation),
        "tail_bound": sig12(m.tail_bound),
        "lp": [],
    }
    for p in args.p_list or [k / 2 for k in range(1, sys.dim + 1)]:
        est = lp_estimate(sys, args.epsilon, p, args.samples or 64, args.seed)
        result["lp"].append({
            "p": p, "estimate": sig12(est.estimate), "stderr": sig12(est.stderr),
            "top1_mass": sig12(est.top1_mass), "excluded": est.n_excluded,
            "is_norm": est.is_norm,
        })
    if args.format == "csv":
        _emit(_rows_csv(result["lp"]), args.out)
    else:
        _emit(_dump(result), args.out)
    return 0


def cmd_entropy(args):
    sys = _system(args)
    n = args.steps or 50
    samples = args.samples or 10_000
    ent = entropy_estimate(sys, n, samples, args.seed)
    rows = [{"k": "all", "growth": sig12(ent.value), "stderr": sig12(ent.stderr)}]
    for k in range(1, sys.dim + 1):
        g = volume_growth(sys, k, n, samples, args.seed)
        rows.append({"k": k, "growth": sig12(g.value), "stderr": sig12(g.stderr)})
    if args.format == "csv":
        _emit(_rows_csv(rows), args.out)
    else:
        _emit(_dump({"system": sys.name, "n": n, "samples": samples, "entropy": rows[0], "by_degree": rows[1:]}),
              args.out)
    return 0


def cmd_verify(args):
    sys = _system(args)
    params = RunParams(seed=args.seed, epsilon=args.epsilon)
    overrides = {
        "steps": args.steps,
        "samples": args.samples,
        "ensemble": args.ensemble,
        "horizon": args.horizon,
    }
    params = replace(params, **{k: v for k, v in overrides.items() if v is not None})
    if params.epsilon <= 0:
        raise ValidationError("--epsilon must be positive")
    rep = run_checks(sys, args.which, params)
    _emit(rep.to_csv() if args.format == "csv" else rep.to_json(), args.out)
    return exit_code([rep])


def cmd_catalog(args):
    if args.name:
        sys = get_catalog(args.name)
        _sys.stdout.write(_dump(system_to_dict(sys)))
    else:
        _sys.stdout.write("\n".join(catalog_names()) + "\n")
    return 0


COMMANDS = {
    "spectrum": cmd_spectrum,
    "homology": cmd_homology,
    "metric": cmd_metric,
    "entropy": cmd_entropy,
    "verify": cmd_verify,
    "catalog": cmd_catalog,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=_sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1
    except TorusLyapError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 4


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
