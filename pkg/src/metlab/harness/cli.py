"""Lyapunov spectra and Oseledets decompositions of matrix cocycles.

Exit codes: 0 when every enabled check passes, 1 on a check failure,
2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .checks import CHECKS
from .run import Report, emit_plotdata, run
from .scenarios import CATALOG, ScenarioSpec, build_scenario

EXPERIMENT_OF = {
    "spectrum": "spectrum",
    "decompose": "decompose",
    "kingman": "kingman_compare",
    "verify": "verify_lemmas",
}


class UsageError(Exception):
    pass


def _scenario_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", metavar="FILE", help="scenario JSON file (schema 1)")
    src.add_argument("--catalog", metavar="NAME", help=f"catalog scenario: {', '.join(CATALOG)}")
    p.add_argument("--seed", type=int, default=None, help="scenario seed (u64)")
    p.add_argument("--n-max", type=int, default=None, dest="n_max", help="horizon override")
    p.add_argument("--out", metavar="DIR", default=None, help="directory for report.json and traces/")
    p.add_argument("--threads", type=int, default=None, help="worker threads (fallback: METLAB_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "decompose", "kingman"):
        _scenario_args(sub.add_parser(name, help=f"run the {EXPERIMENT_OF[name]} experiment"))
    v = sub.add_parser("verify", help="operator-statistics checks on seeded instances, or acceptance checks")
    _scenario_args(v)
    v.add_argument("--instances", type=int, default=None, help="instances per suite (default 200)")
    v.add_argument("--acceptance", nargs="*", type=int, default=None, metavar="N",
                   help="run the numbered acceptance checks instead (all when no numbers are given)")
    pd = sub.add_parser("plotdata", help="print one trace of a report as CSV")
    pd.add_argument("report", help="report.json or the directory holding it")
    pd.add_argument("trace", help="trace id, e.g. mu_1, kingman_forward, gap_level1, temperedness")
    return ap


def _load_spec(args, experiment: str) -> ScenarioSpec:
    seed = 0 if args.seed is None else args.seed
    if args.scenario:
        try:
            with open(args.scenario, encoding="utf-8") as f:
                obj = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read scenario: {exc}") from exc
        if args.seed is not None:
            obj["seed"] = args.seed
        try:
            spec = ScenarioSpec.from_json(obj)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"invalid scenario: {exc}") from exc
    elif args.catalog:
        if args.catalog not in CATALOG:
            raise UsageError(f"unknown catalog scenario {args.catalog!r}; choose from {', '.join(CATALOG)}")
        spec = build_scenario(args.catalog, seed)
    elif experiment == "verify_lemmas":
        spec = ScenarioSpec("lemmas", seed, None, experiment="verify_lemmas")
    else:
        raise UsageError("one of --scenario or --catalog is required")
    spec.experiment = experiment
    if args.n_max is not None:
        if args.n_max < 8:
            raise UsageError("--n-max must be at least 8")
        spec.params["n_max"] = args.n_max
    if getattr(args, "instances", None) is not None:
        spec.params["instances"] = args.instances
    return spec


def _acceptance(ids, threads) -> int:
    ids = ids or sorted(CHECKS)
    bad = [i for i in ids if i not in CHECKS]
    if bad:
        raise UsageError(f"no acceptance check numbered {bad}")
    ok = True
    for i in ids:
        kw = {"threads": threads} if i in (2, 3) and threads else {}
        r = CHECKS[i](**kw)
        print(f"{i:2d} {r.line()} ({r.runtime:.1f}s)", flush=True)
        ok &= r.passed
    return 0 if ok else 1


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "plotdata":
            path = args.report
            if not path.endswith(".json"):
                path = f"{path.rstrip('/')}/report.json"
            try:
                with open(path, encoding="utf-8") as f:
                    rep = Report.from_json(json.load(f))
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read report: {exc}") from exc
            try:
                sys.stdout.write(emit_plotdata(rep, args.trace))
            except KeyError as exc:
                raise UsageError(str(exc.args[0])) from exc
            return 0
        if args.command == "verify" and args.acceptance is not None:
            return _acceptance(args.acceptance, args.threads)
        spec = _load_spec(args, EXPERIMENT_OF[args.command])
    except UsageError as exc:
        print(f"metlab: error: {exc}", file=sys.stderr)
        return 2
    rep = run(spec, args.out, args.threads)
    for name, ok in rep.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    if rep.error:
        print(f"ERROR {rep.error}", file=sys.stderr)
    print(f"digest {rep.digest()}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
