"""``fact`` command line.

Machine output (JSON or CSV) goes to ``--out`` or stdout; the human summary
goes to stderr.  Every output carries a run manifest: inside the JSON
document, or for CSV as ``<out>.manifest.json`` (a JSON line on stderr when
the CSV itself goes to stdout).

Exit codes: 0 success, 1 domain error (infeasible, degenerate, ...),
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .data import SyntheticSpec, gen_synthetic, load_csv, train_baseline, write_csv, write_predictions
from .errors import DefinitionError, FactError
from .fairness import FairnessDef, gap, parse_defs, stack
from .frontier import CSV_COLUMNS, compare, model_point, parse_grid, sweep
from .incompat import condition_row, corollary_conditions, decide_compat, exact_check
from .lafop import solve_mlafop, solve_ms_lafop
from .postprocess import apply_mixing, expected_tensor, mixing_rates
from .tensor import CELL_NAMES, Marginals, from_counts

COMMANDS = ("tensor", "gaps", "check", "frontier", "mlafop", "postprocess", "synth")


@dataclass
class RunManifest:
    subcommand: str
    argv: list
    version: str = __version__
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def add_input(self, path):
        with open(path, "rb") as fh:
            self.inputs[str(path)] = hashlib.sha256(fh.read()).hexdigest()

    def to_dict(self):
        return asdict(self)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 2 and suggest the closest known option or command."""

    def error(self, message):
        hint = ""
        words = message.split()
        if "unrecognized arguments:" in message:
            known = [s for a in self._all_actions() for s in a.option_strings]
            bad = message.split("unrecognized arguments:")[1].split()
            for b in bad:
                close = difflib.get_close_matches(b.split("=")[0], known, n=1)
                if close:
                    hint = f" (did you mean {close[0]}?)"
                    break
        elif "invalid choice:" in message:
            bad = message.split("invalid choice:")[1].split("'")[1] if "'" in message else words[-1]
            close = difflib.get_close_matches(bad, COMMANDS, n=1)
            if close:
                hint = f" (did you mean {close[0]}?)"
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}{hint}\n")

    def _all_actions(self):
        acts = list(self._actions)
        for a in self._actions:
            if isinstance(a, argparse._SubParsersAction):
                for p in a.choices.values():
                    acts.extend(p._actions)
        return acts


def _defs_arg(text):
    try:
        defs = parse_defs(text)
    except FactError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not defs:
        raise argparse.ArgumentTypeError("empty definition list")
    return defs


def _marginals_arg(text):
    try:
        parts = [_number(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError
        return Marginals.from_inline(*parts)
    except (ValueError, FactError) as exc:
        raise argparse.ArgumentTypeError(f"marginals must be N,N1,M1,M0 ({exc})") from None


def _number(s):
    s = s.strip()
    try:
        return int(s)
    except ValueError:
        return float(s)


def _lambda_list(text):
    out = []
    for p in text.split(","):
        p = p.strip().lower()
        v = math.inf if p in ("inf", "infinity") else float(p)
        if v < 0:
            raise argparse.ArgumentTypeError("weights must be nonnegative")
        out.append(v)
    return out


def _lam(text):
    return _lambda_list(text)[0]


def build_parser():
    p = _Parser(prog="fact", description="Fairness-confusion tensor diagnostics.")
    p.add_argument("--version", action="version", version=f"fact {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, defs=True, marg=True):
        if defs:
            sp.add_argument("--defs", type=_defs_arg, help='definitions, e.g. "CG(v0=0.3,v1=0.8),EOd,DP"')
        if marg:
            sp.add_argument("--marginals", type=_marginals_arg, help="inline N,N1,M1,M0")
            sp.add_argument("--pred", help="prediction CSV with columns y,yhat,a")
            sp.add_argument("--protected", default="a", help="protected column name")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--problem", help="JSON file supplying any of these options")

    sp = sub.add_parser("tensor", help="tally a prediction file into the tensor")
    common(sp, defs=False)
    sp.add_argument("--counts", help="8 counts TP1,FN1,FP1,TN1,TP0,FN0,FP0,TN0")

    sp = sub.add_parser("gaps", help="fairness residuals of a classifier")
    common(sp)
    sp.add_argument("--counts", help="8 counts TP1,FN1,FP1,TN1,TP0,FN0,FP0,TN0")

    sp = sub.add_parser("check", help="decide compatibility of a definition set")
    common(sp)
    sp.add_argument("--exact", action="store_true", help="also run the exact rational check")

    sp = sub.add_parser("frontier", help="sweep an (epsilon, delta) frontier")
    common(sp)
    sp.add_argument("--grid", default="lam:1e-4:1e4:40", help="eps:LO:HI:COUNT or lam:LO:HI:COUNT")
    sp.add_argument("--mode", choices=("MA", "MS"), default="MA")

    sp = sub.add_parser("mlafop", help="solve with one weight per definition")
    common(sp)
    sp.add_argument("--lambdas", type=_lambda_list, help="comma-separated weights, inf allowed")

    sp = sub.add_parser("postprocess", help="repair a classifier by randomized mixing")
    common(sp, marg=False)
    sp.add_argument("--pred", help="prediction CSV with columns y,yhat,a")
    sp.add_argument("--protected", default="a")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--lam", type=_lam, default=math.inf, help="regularization weight (default inf)")
    sp.add_argument("--eps", type=float, help="fairness budget instead of a weight")

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--variant", choices=("U", "B"), default="U")
    sp.add_argument("--n", type=int, default=20_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--baseline", action="store_true", help="write baseline predictions instead of features")
    sp.add_argument("--out", help="output CSV (default stdout)")
    sp.add_argument("--format", choices=("csv",), default="csv")
    sp.add_argument("--problem", help=argparse.SUPPRESS)
    return p


def _apply_problem(args, parser, manifest):
    if not getattr(args, "problem", None):
        return
    manifest.add_input(args.problem)
    with open(args.problem) as fh:
        spec = json.load(fh)
    converters = {"defs": _defs_arg, "marginals": _marginals_arg, "lambdas": _lambda_list, "lam": _lam}
    for key, value in spec.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise UsageError(f"problem file: unknown option {key!r}")
        if getattr(args, dest) not in (None, parser.get_default(dest)):
            continue  # explicit flags win
        if dest in converters:
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            try:
                value = converters[dest](str(value))
            except argparse.ArgumentTypeError as exc:
                raise UsageError(f"problem file: {key}: {exc}") from None
        setattr(args, dest, value)


def _warn(msg):
    print(f"fact: warning: {msg}", file=sys.stderr)


def _info(msg):
    print(msg, file=sys.stderr)


def _counts_arg(text):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError("counts must be 8 numbers") from None
    if len(vals) != 8:
        raise UsageError("counts must be 8 numbers")
    return from_counts(vals)


def _tensor_from(args, manifest):
    if getattr(args, "counts", None):
        return _counts_arg(args.counts)
    if args.pred:
        manifest.add_input(args.pred)
        return load_csv(args.pred, "prediction", protected=args.protected).tensor()
    return None


def _marginals_from(args, manifest, tensor=None):
    if tensor is None and getattr(args, "pred", None):
        tensor = _tensor_from(args, manifest)
    derived = tensor.marginals if tensor is not None else None
    if args.marginals is not None:
        if derived is not None and derived.as_dict() != args.marginals.as_dict():
            _warn(f"inline marginals {args.marginals.as_dict()} override {derived.as_dict()} from the data")
        return args.marginals
    if derived is None:
        raise UsageError("give --marginals N,N1,M1,M0 or --pred FILE")
    return derived


def _need_defs(args):
    if not args.defs:
        raise UsageError("--defs is required")
    return args.defs


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return None
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "numerator") and hasattr(obj, "denominator") and not isinstance(obj, int):
        return float(obj)
    return obj


def _emit_json(args, manifest, payload):
    doc = _jsonable({**payload, "manifest": manifest.to_dict()})
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_csv(args, manifest, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_csv_cell(x) for x in r])
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(buf.getvalue())
        with open(f"{args.out}.manifest.json", "w") as fh:
            json.dump(manifest.to_dict(), fh, indent=2)
    else:
        sys.stdout.write(buf.getvalue())
        print(json.dumps({"manifest": manifest.to_dict()}), file=sys.stderr)


def _csv_cell(x):
    if isinstance(x, float):
        return repr(x)
    return x


# ---------------------------------------------------------------------------
# subcommands


def _plain_count(c):
    return int(c) if float(c).is_integer() else float(c)


def cmd_tensor(args, manifest):
    t = _tensor_from(args, manifest)
    if t is None:
        raise UsageError("give --pred FILE or --counts")
    r = t.rates()
    payload = {
        "cells": list(CELL_NAMES),
        "counts": [_plain_count(c) for c in t.counts],
        "z": t.z.tolist(),
        "marginals": t.marginals.as_dict(),
        "error_rate": t.error_rate(),
        "rates": {f"a={a}": asdict(r[a]) for a in (1, 0)},
    }
    _info(f"N={t.marginals.n_total} error rate {t.error_rate():.4f}")
    if args.format == "csv":
        _emit_csv(
            args, manifest, ["cell", "count", "z"], [(k, c, z) for k, c, z in zip(CELL_NAMES, payload["counts"], t.z)]
        )
    else:
        _emit_json(args, manifest, payload)


def cmd_gaps(args, manifest):
    defs = _need_defs(args)
    t = _tensor_from(args, manifest)
    if t is None:
        raise UsageError("give --pred FILE or --counts")
    m = args.marginals or t.marginals
    if args.marginals is not None and args.marginals.as_dict() != t.marginals.as_dict():
        raise UsageError("--marginals must match the classifier's own marginals for gaps")
    rep = gap(stack(defs, m), t.z)
    marker = model_point("classifier", t, defs)
    payload = {
        "defs": [str(d) for d in defs],
        **rep.to_dict(),
        "gap_norm": marker.gap_norm,
        "error_rate": marker.error_rate,
    }
    for k, v in rep.residuals.items():
        _info(f"{k:>10s}  {v:+.6g}")
    _info(f"epsilon (sum of squares) {rep.epsilon:.6g}, norm {marker.gap_norm:.6g}")
    if args.format == "csv":
        _emit_csv(args, manifest, ["label", "residual"], list(rep.residuals.items()) + [("epsilon", rep.epsilon)])
    else:
        _emit_json(args, manifest, payload)


def cmd_check(args, manifest):
    defs = _need_defs(args)
    m = _marginals_from(args, manifest)
    rep = decide_compat(defs, m)
    payload = {"set": [str(d) for d in defs], "marginals": m.as_dict(), **rep.to_dict()}
    tags = tuple(d.tag for d in defs)
    cg = [d for d in defs if d.tag == "CG"]
    conditions = None
    if cg and (
        condition_row(tags) is not None or frozenset(tags) in (frozenset(("CG", "PP")), frozenset(("CG", "EFOR")))
    ):
        cr = corollary_conditions(tags, m, cg[0].param("v0"), cg[0].param("v1"))
        conditions = cr.to_dict()
    payload["conditions"] = conditions
    if args.exact:
        payload["exact"] = exact_check(defs, m).to_dict()
    verdict = "compatible" if rep.compatible else "incompatible"
    _info(f"{', '.join(payload['set'])}: {verdict} ({rep.solution_count_class} solutions)")
    if rep.violated_condition:
        _info(f"  necessary condition violated: {rep.violated_condition}")
    if args.format == "csv":
        _emit_csv(
            args,
            manifest,
            ["set", "verdict", "solution_count_class", "violated_condition"],
            [(" ".join(payload["set"]), verdict, rep.solution_count_class, rep.violated_condition or "")],
        )
    else:
        _emit_json(args, manifest, payload)


def cmd_frontier(args, manifest):
    defs = _need_defs(args)
    base = None
    if args.mode == "MS":
        if not args.pred:
            raise UsageError("MS mode needs --pred")
        base = _tensor_from(args, manifest)
        m = base.marginals
        if args.marginals is not None:
            _warn("MS mode uses the classifier's own marginals; --marginals ignored")
    else:
        m = _marginals_from(args, manifest)
    try:
        spec = parse_grid(args.grid, mode=args.mode, base=base)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    curve = sweep(m, defs, spec)
    _info(f"{len(curve.points)} nondominated points; truncated at epsilon {curve.truncated_at:.3g}")
    if args.format == "csv":
        _emit_csv(args, manifest, CSV_COLUMNS, curve.csv_rows())
    else:
        _emit_json(args, manifest, {**curve.to_dict(), "comparison": compare({"curve": curve}).to_dict()})


def cmd_mlafop(args, manifest):
    defs = _need_defs(args)
    m = _marginals_from(args, manifest)
    lambdas = args.lambdas if args.lambdas is not None else [1.0] * len(defs)
    if len(lambdas) != len(defs):
        raise UsageError(f"--lambdas needs {len(defs)} values, got {len(lambdas)}")
    sol = solve_mlafop(m, defs, lambdas)
    payload = {
        "defs": [str(d) for d in defs],
        "lambdas": lambdas,
        "z_star": sol.z_star.tolist(),
        "epsilon": sol.epsilon,
        "delta": sol.delta,
        "error_rate": sol.error_rate,
        "per_definition": sol.per_definition,
        "residuals": sol.gaps.residuals,
        "approximate": sol.approximate,
    }
    _info(f"epsilon {sol.epsilon:.6g}  delta {sol.delta:.6g}  error rate {sol.error_rate:.6g}")
    if args.format == "csv":
        _emit_csv(
            args,
            manifest,
            ["definition", "lambda", "epsilon"],
            [(str(d), l, sol.per_definition[str(d)]) for d, l in zip(defs, lambdas)],
        )
    else:
        _emit_json(args, manifest, payload)


def cmd_postprocess(args, manifest):
    defs = args.defs or [FairnessDef("EOd")]
    if not args.pred:
        raise UsageError("--pred is required")
    manifest.add_input(args.pred)
    manifest.seeds["mixing"] = args.seed
    recs = load_csv(args.pred, "prediction", protected=args.protected)
    base = recs.tensor()
    if args.eps is not None:
        sol = solve_ms_lafop(base, defs, eps=args.eps)
    else:
        sol = solve_ms_lafop(base, defs, lam=args.lam)
    rates = mixing_rates(base, sol.z_star)
    post = apply_mixing(recs.yhat, recs.a, rates, seed=args.seed, ids=recs.ids)
    exp = expected_tensor(base, rates)
    _info(f"target epsilon {sol.epsilon:.3g}, error rate {sol.error_rate:.4f} (base {base.error_rate():.4f})")
    _info(f"mixing rates {json.dumps(rates.as_dict())}")
    if args.format == "json":
        _emit_json(
            args,
            manifest,
            {
                "rates": rates.as_dict(),
                "target_z": sol.z_star.tolist(),
                "expected_z": exp.z.tolist(),
                "epsilon": sol.epsilon,
                "error_rate": sol.error_rate,
                "yhat_post": post.tolist(),
            },
        )
        return
    rows = [
        (int(i), int(y), int(yh), int(a), int(p)) for i, y, yh, a, p in zip(recs.ids, recs.y, recs.yhat, recs.a, post)
    ]
    _emit_csv(args, manifest, ["id", "y", "yhat", "a", "yhat_post"], rows)


def cmd_synth(args, manifest):
    manifest.seeds["data"] = args.seed
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    ds = gen_synthetic(SyntheticSpec(n=args.n, variant=args.variant, seed=args.seed))
    if args.out is None:
        _write_synth(ds, sys.stdout, args)
        print(json.dumps({"manifest": manifest.to_dict()}), file=sys.stderr)
    else:
        _write_synth(ds, args.out, args)
        with open(f"{args.out}.manifest.json", "w") as fh:
            json.dump(manifest.to_dict(), fh, indent=2)
    _info(f"{args.n} records, variant {args.variant}, seed {args.seed}")


def _write_synth(ds, target, args):
    if args.baseline:
        bl = train_baseline(ds, seed=args.seed)
        write_predictions(target, ds.y, bl.yhat, ds.a, ds.ids, extra={"score": bl.scores})
    else:
        write_csv(ds, target)


HANDLERS = {
    "tensor": cmd_tensor,
    "gaps": cmd_gaps,
    "check": cmd_check,
    "frontier": cmd_frontier,
    "mlafop": cmd_mlafop,
    "postprocess": cmd_postprocess,
    "synth": cmd_synth,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    manifest = RunManifest(subcommand=args.command, argv=argv)
    try:
        _apply_problem(args, parser._subparsers._group_actions[0].choices[args.command], manifest)
        HANDLERS[args.command](args, manifest)
    except UsageError as exc:
        print(f"fact {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except DefinitionError as exc:
        print(f"fact {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except FactError as exc:
        print(f"fact {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"fact {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
