"""Command-line entry point: ``mrfcbr {dataset,retrieve,eval,mrf}``.

Exit codes: 0 success, 1 usage/config error, 2 data validation error,
3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

from .adaptation import AcceptanceModel, LevelMapping
from .dataset import ValidationError, generate_synthetic, load_csv, write_csv
from .evaluation import SweepConfig, cross_validate, write_results
from .model import Categorical, Cyclic, Ordinal, Query, TRAVEL_PROBLEM, load_schema
from .mrf import build_mrf, dump_edge_list
from .retrieval import AdaptationContext, CondSpec, agr_retrieve, knn_retrieve

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("mrfcbr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _probability(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1)")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def _digest(params: dict) -> str:
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _load(args):
    schema = load_schema(args.schema) if getattr(args, "schema", None) else None
    return load_csv(args.cases, schema)


def parse_query(text: str, schema) -> dict:
    """Parse ``Name=value,Name=value`` into a problem dict; absent features are missing."""
    problem = dict.fromkeys(TRAVEL_PROBLEM)
    for item in filter(None, (t.strip() for t in text.split(","))):
        if "=" not in item:
            raise UsageError(f"query item {item!r} is not Name=value")
        name, raw = (t.strip() for t in item.split("=", 1))
        if name not in problem:
            raise UsageError(f"unknown query feature {name!r}")
        kind = schema.feature(name).kind
        if raw == "":
            continue
        try:
            if isinstance(kind, Categorical):
                problem[name] = raw
            elif isinstance(kind, (Ordinal, Cyclic)):
                problem[name] = int(raw)
            else:
                problem[name] = float(raw)
        except ValueError:
            raise UsageError(f"bad value {raw!r} for {name}") from None
    return problem


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_dataset(args) -> int:
    if args.action == "gen":
        cb = generate_synthetic(args.n, args.seed)
        write_csv(cb, args.out)
        print(f"wrote {len(cb)} cases to {args.out} (seed={args.seed})")
        return EXIT_OK
    cb = _load(args)
    print(f"{args.cases}: {len(cb)} valid cases")
    return EXIT_OK


def cmd_retrieve(args) -> int:
    cb = _load(args)
    if args.k > len(cb):
        raise UsageError(f"k={args.k} exceeds case base size {len(cb)}")
    if args.query_case is not None:
        if args.query_case not in cb.index:
            raise UsageError(f"no case with id {args.query_case}")
        q = Query.from_case(cb.get(args.query_case), args.budget)
    else:
        try:
            q = Query(parse_query(args.query, cb.schema), args.budget, args.query_id)
        except ValueError as e:
            raise UsageError(str(e)) from None
    stats = cb.stats
    params = {k: v for k, v in vars(args).items() if k != "func"}
    if args.knn_only:
        ranked = knn_retrieve(q, cb, args.k)
    else:
        mapping = LevelMapping.BINARY if args.levels == 2 else LevelMapping.FOUR_LEVEL
        accept = AcceptanceModel("bernoulli", args.acceptance_p, args.seed)
        ctx = AdaptationContext(cb, q.budget or stats.mean_price, accept, mapping)
        mrf = build_mrf(cb, args.st, mapping.num_states)
        ranked = agr_retrieve(q, cb, mrf, args.k, CondSpec("threshold", 1, args.pt), ctx,
                              args.engine)
    buf = io.StringIO()
    buf.write(f"# config_hash={_digest(params)} seed={args.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("query_id", "rank", "case_id", "similarity", "source", "level"))
    for rank, r in enumerate(ranked, start=1):
        w.writerow((q.id, rank, r.case_id, repr(r.similarity), r.source,
                    "" if r.level is None else r.level))
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = SweepConfig.from_dict(raw)
    except (OSError, ValueError, TypeError) as e:
        raise UsageError(f"invalid sweep config: {e}") from None
    cb = _load(args)
    provenance = f"config_hash={cfg.digest()} seed={cfg.seed}"
    print(provenance)
    result = cross_validate(cb, cfg, jobs=args.jobs)
    for path in write_results(result, args.out, provenance):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_mrf(args) -> int:
    cb = _load(args)
    mrf = build_mrf(cb, args.st, args.levels)
    text = dump_edge_list(mrf)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mrfcbr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ds = sub.add_parser("dataset", help="generate or validate a case base CSV")
    ds_sub = ds.add_subparsers(dest="action", required=True, parser_class=_Parser)
    gen = ds_sub.add_parser("gen", help="write a synthetic case base")
    gen.add_argument("--n", type=int, default=1500)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    val = ds_sub.add_parser("validate", help="check a CSV against the schema")
    val.add_argument("cases")
    val.add_argument("--schema")
    ds.set_defaults(func=cmd_dataset)

    rt = sub.add_parser("retrieve", help="retrieve cases for one query")
    rt.add_argument("--cases", required=True)
    rt.add_argument("--schema")
    group = rt.add_mutually_exclusive_group(required=True)
    group.add_argument("--query", help="Name=value pairs, comma separated")
    group.add_argument("--query-case", type=int, help="use a stored case as the query")
    rt.add_argument("--query-id", type=int, default=0)
    rt.add_argument("--k", type=_positive_int, default=5)
    rt.add_argument("--st", type=_probability, default=0.9)
    rt.add_argument("--pt", type=_probability, default=0.9)
    rt.add_argument("--budget", type=float)
    rt.add_argument("--levels", type=int, choices=(2, 4), default=2)
    rt.add_argument("--engine", choices=("mean_field", "loopy_bp", "exact"),
                    default="mean_field")
    rt.add_argument("--acceptance-p", type=float, default=0.8)
    rt.add_argument("--seed", type=int, default=0)
    rt.add_argument("--knn-only", action="store_true")
    rt.add_argument("--out")
    rt.set_defaults(func=cmd_retrieve)

    ev = sub.add_parser("eval", help="cross-validated kNN vs kNN+MRF sweep")
    ev.add_argument("--cases", required=True)
    ev.add_argument("--schema")
    ev.add_argument("--config", required=True, help="JSON sweep configuration")
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--seed", type=int, help="override the config seed")
    ev.add_argument("--jobs", type=_positive_int, default=1)
    ev.set_defaults(func=cmd_eval)

    mrf = sub.add_parser("mrf", help="MRF inspection")
    mrf_sub = mrf.add_subparsers(dest="action", required=True, parser_class=_Parser)
    dump = mrf_sub.add_parser("dump", help="write the MRF edge list")
    dump.add_argument("--cases", required=True)
    dump.add_argument("--schema")
    dump.add_argument("--st", type=_probability, default=0.9)
    dump.add_argument("--levels", type=int, default=2)
    dump.add_argument("--out")
    mrf.set_defaults(func=cmd_mrf)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"mrfcbr: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        print("mrfcbr: validation failed:", file=sys.stderr)
        for problem in e.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"mrfcbr: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
