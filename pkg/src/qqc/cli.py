"""``qqc`` command line: JSON-lines reports, exit 0 accept, 1 reject, 2 error."""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import checkers, fixtures, search
from .compose import CompositionError, check_compositional, split
from .objects import get_object, is_spec
from .proxy import (
    FifoOracle,
    RandomOracle,
    ReplayOracle,
    derive_schedule,
    parse_service_schedule,
    run_proxy,
)
from .structures import (
    DEFAULT_STEP_BOUND,
    ExecutionRecord,
    StuckOp,
    emitted_spec,
    enumerate_schedules,
    make_machine,
    parse_ops,
    properly_popped,
    run_schedule,
)
from .trace import (
    Label,
    OperationalTrace,
    SequentialTrace,
    TraceError,
    from_tokens,
    parse_trp1,
)

ACCEPT, REJECT, ERROR = 0, 1, 2


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=False, default=str), flush=True)


def _read(arg: str) -> str:
    if arg == "-":
        return sys.stdin.read()
    p = Path(arg)
    return p.read_text(encoding="utf-8") if p.is_file() else arg


def load_trace(arg: str, cls=OperationalTrace) -> OperationalTrace:
    """A TRC1 file, a TRP1 file, or inline TRC1 tokens."""
    text = _read(arg)
    if text.lstrip().startswith("event "):
        return cls.of(parse_trp1(text))
    return from_tokens(text, cls=cls)


# -- check -----------------------------------------------------------------------------------


def _verdict_dict(source: str, v: checkers.CheckVerdict) -> dict:
    return {"input": source, **v.to_dict()}


def cmd_check(args) -> int:
    t = load_trace(args.trace)
    crit = args.criterion.upper()
    if args.spec is None:
        if args.type is None:
            raise TraceError("give --spec or --type")
        return _check_vs_type(args, t, crit)
    spec = load_trace(args.spec, SequentialTrace)
    if crit == "CLASSIFY":
        name, v = checkers.classify(t, spec)
        _emit({"input": args.trace, "criterion": "classify", "method": "counting", "verdict": name,
               "witness": None if v is None or v.witness is None else v.witness.to_dict()})
        return ACCEPT if name != "NONE" else REJECT
    if crit == "WEAK":
        obj = checkers.infer_object(spec) if args.type is None else get_object(args.type)
        v = checkers.weak_qc(t, obj)
        _emit(_verdict_dict(args.trace, v))
        return ACCEPT if v.accepted else REJECT
    methods = ["counting", "cutdef"] if args.method == "both" else [args.method]
    verdicts = [checkers.check(t, spec, crit, m) for m in methods]
    for v in verdicts:
        _emit(_verdict_dict(args.trace, v))
    if len({v.accepted for v in verdicts}) > 1:
        raise TraceError("counting and cut-based verdicts disagree")
    return ACCEPT if verdicts[0].accepted else REJECT


def _check_vs_type(args, t, crit) -> int:
    obj = get_object(args.type)
    if crit == "CLASSIFY":
        name, w = search.classify_vs_type(t, obj, args.extension_budget)
        _emit({"input": args.trace, "criterion": "classify", "method": "search", "verdict": name,
               "witness": None if w is None else str(w)})
        return ACCEPT if name != "NONE" else REJECT
    if crit == "WEAK":
        v = checkers.weak_qc(t, obj)
        _emit(_verdict_dict(args.trace, v))
        return ACCEPT if v.accepted else REJECT
    w = search.find_witness(t, obj, crit, args.extension_budget)
    _emit({"input": args.trace, "criterion": crit, "method": "search", "verdict": "accept" if w else "reject",
           "witness": None if w is None else str(w)})
    return ACCEPT if w else REJECT


# -- search ------------------------------------------------------------------------------------


def cmd_search(args) -> int:
    t = load_trace(args.trace)
    obj = get_object(args.type)
    crit = args.criterion.upper()
    w = search.find_witness(t, obj, crit, args.extension_budget)
    _emit({"input": args.trace, "criterion": crit, "method": "search", "verdict": "found" if w else "none",
           "witness": None if w is None else str(w)})
    return ACCEPT if w else REJECT


# -- simulate -----------------------------------------------------------------------------------


def _params(args) -> dict:
    if args.structure == "elim":
        return {"depth": args.depth}
    return {"N": args.N}


def _obj_for(structure: str):
    return get_object("counter" if structure == "ncounter" else "stack")


def _judge(r: ExecutionRecord, crit: str, budget: int) -> tuple[str, str, object]:
    t = r.trace
    if r.emitted is not None and r.complete:
        spec = emitted_spec(r)
        if is_spec(spec, _obj_for(r.kind)) and len(spec) == len(t):
            v = checkers.check(t, spec, crit)
            return v.verdict, "emitted", None if v.witness is None else v.witness.to_dict()
    w = search.find_witness(t, _obj_for(r.kind), crit, budget)
    return ("accept" if w else "reject"), "search", None if w is None else str(w)


def _random_schedule(kind, params, ops, rng) -> list[str]:
    m = make_machine(kind, **params)
    left = {o.id: m.steps(o) for o in ops}
    sched: list[str] = []
    while True:
        en = [k for k, v in left.items() if v]
        if not en:
            return sched
        rng.shuffle(en)
        for oid in en:
            try:
                run_schedule(kind, params, ops, sched + [oid])
            except StuckOp:
                continue
            sched.append(oid)
            left[oid] -= 1
            break
        else:
            raise StuckOp(f"every enabled op is stuck after {sched}")


def cmd_simulate(args) -> int:
    params = _params(args)
    ops = parse_ops(args.ops)
    if args.schedule:
        sched = [s for s in args.schedule.replace(",", " ").split()] if " " in args.schedule or "," in args.schedule \
            else list(args.schedule)
        records = [run_schedule(args.structure, params, ops, sched)]
    elif args.exhaustive:
        records = enumerate_schedules(args.structure, params, ops, args.bound, keep_states=args.states)
    else:
        rng = random.Random(args.seed)
        records = []
        for k in range(args.runs):
            seed = rng.randrange(2**31)
            sched = _random_schedule(args.structure, params, ops, random.Random(seed))
            records.append(run_schedule(args.structure, params, ops, sched, seed=seed))
    counts = {"runs": 0, "skipped": 0, "accept": 0, "reject": 0}
    worst = ACCEPT
    for idx, r in enumerate(records):
        counts["runs"] += 1
        row = {"input": idx, "schedule": "".join(r.schedule) if all(len(s) == 1 for s in r.schedule)
               else " ".join(r.schedule), "seed": r.seed, "trace": str(r.trace)}
        if r.emitted is not None:
            pp, pair = properly_popped(r)
            row["properly_popped"] = pp
            if pair:
                row["overtaken"] = list(pair)
            row["emitted"] = [("+" if k == "push" else "-") + v for k, _, v in r.emitted]
            if args.require_properly_popped and not pp:
                counts["skipped"] += 1
                continue
        if args.states:
            row["states"] = r.states()
        if args.check:
            crit = args.check.upper()
            verdict, method, wit = _judge(r, crit, args.extension_budget)
            row.update(criterion=crit, method=method, verdict=verdict, witness=wit)
            counts[verdict] += 1
            if verdict != "accept":
                worst = REJECT
        if not args.quiet:
            _emit(row)
    _emit({"summary": counts, "structure": args.structure, **params, "ops": args.ops})
    return worst


# -- proxy ----------------------------------------------------------------------------------------


def _parse_requests(text: str) -> list[tuple[str, Label]]:
    out = []
    for k, tok in enumerate(text.replace(",", " ").split()):
        name, eq, call = tok.partition("=")
        if not eq:
            name, call = f"t{k}", tok
        method, _, arg = call.partition("(")
        out.append((name, Label(method, arg.rstrip(")"))))
    return out


def cmd_proxy(args) -> int:
    obj = get_object(args.object)
    kind, _, param = args.oracle.partition(":")
    requests = _parse_requests(args.requests) if args.requests else None
    stream = [lab for _, lab in requests] if requests else []
    if kind == "replay":
        oracle = ReplayOracle(load_trace(param, SequentialTrace))
    elif kind == "fifo":
        oracle = FifoOracle()
    elif kind == "random":
        oracle = RandomOracle(int(param or 0), stream, args.lookahead)
    else:
        raise TraceError(f"unknown oracle {args.oracle!r}")
    if args.from_trace:
        schedule = derive_schedule(load_trace(args.from_trace))
    elif args.service_schedule:
        schedule = parse_service_schedule(_read(args.service_schedule))
    else:
        schedule = None
        if requests is None:
            raise TraceError("a seeded run needs --requests")
    run = run_proxy(obj, requests, oracle, schedule, causal_guard=args.causal_guard, seed=args.seed)
    crit = "LIN" if kind == "fifo" else "QQC"
    v = checkers.check(run.trace, run.spec, crit)
    row = {"input": args.requests or args.from_trace or args.service_schedule, "criterion": crit,
           "method": "counting", "verdict": v.verdict, "witness": None if v.witness is None else v.witness.to_dict(),
           "trace": str(run.trace), "spec": str(run.spec), "seed": args.seed, "stuck": run.stuck}
    if args.from_trace:
        row["reproduced"] = run.trace == load_trace(args.from_trace)
    _emit(row)
    if args.log:
        sys.stderr.write(run.to_text())
    return ACCEPT if v.accepted else REJECT


# -- fixtures / compose ---------------------------------------------------------------------------


def cmd_fixtures(args) -> int:
    chosen = fixtures.select(args.filter)
    results = fixtures.run_fixtures(chosen)
    for res in results:
        _emit(res.to_dict())
    _emit({"summary": {"fixtures": len(results), "passed": sum(r.passed for r in results)}})
    return ACCEPT if all(r.passed for r in results) else REJECT


def cmd_compose(args) -> int:
    alpha = load_trace(args.trace)
    first = set(args.first.replace(",", " ").split())
    first |= {alpha.ops[c] for c in first if c in alpha.ops and alpha.ops[c] is not None}
    pair = split(alpha, first)
    b1 = load_trace(args.spec1, SequentialTrace)
    b2 = load_trace(args.spec2, SequentialTrace)
    try:
        beta = check_compositional(alpha, pair, b1, b2, args.criterion)
    except CompositionError as exc:
        _emit({"input": args.trace, "criterion": args.criterion.upper(), "method": "compose", "verdict": "reject",
               "witness": None, "error": str(exc)})
        return REJECT
    _emit({"input": args.trace, "criterion": args.criterion.upper(), "method": "compose", "verdict": "accept",
           "witness": str(beta), "first": str(pair.first), "second": str(pair.second)})
    return ACCEPT


# -- parser -----------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qqc", description="Check concurrent traces against consistency criteria.")
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("check", help="check a trace against a spec or a data type")
    c.add_argument("trace", help="TRC1/TRP1 file, '-' for stdin, or inline tokens")
    c.add_argument("--spec")
    c.add_argument("--type", choices=["counter", "stack", "queue"])
    c.add_argument("--criterion", default="qqc", choices=["lin", "qqc", "qc", "weak", "classify"])
    c.add_argument("--method", default="counting", choices=["counting", "cutdef", "both"])
    c.add_argument("--extension-budget", type=int, default=2)
    c.set_defaults(fn=cmd_check)

    s = sub.add_parser("simulate", help="run a balancer structure under schedules")
    s.add_argument("--structure", required=True, choices=["ncounter", "nstack", "elim"])
    s.add_argument("--N", type=int, default=2)
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--ops", required=True, help="e.g. inc,inc,dec or push:a,pop")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--schedule", help="op ids, e.g. aabbcc")
    g.add_argument("--exhaustive", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--runs", type=int, default=1)
    s.add_argument("--bound", type=int, default=DEFAULT_STEP_BOUND)
    s.add_argument("--check", choices=["lin", "qqc", "qc"])
    s.add_argument("--extension-budget", type=int, default=1)
    s.add_argument("--require-properly-popped", action="store_true")
    s.add_argument("--states", action="store_true", help="include the per-step state table")
    s.add_argument("--quiet", action="store_true", help="print only the summary line")
    s.set_defaults(fn=cmd_simulate)

    x = sub.add_parser("proxy", help="run the speculative proxy")
    x.add_argument("--object", default="counter", choices=["counter", "stack", "queue"])
    x.add_argument("--oracle", default="fifo", help="replay:<spec>, fifo, random:<seed>")
    x.add_argument("--requests", help="e.g. a=inc(),b=inc()")
    x.add_argument("--service-schedule", help="e.g. 'req:a=inc() consume:a deliver:a:0'")
    x.add_argument("--from-trace", help="derive the service schedule from this trace's arrangement")
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--lookahead", type=int, default=2)
    x.add_argument("--causal-guard", action="store_true")
    x.add_argument("--log", action="store_true", help="write the step log to stderr")
    x.set_defaults(fn=cmd_proxy)

    w = sub.add_parser("search", help="search for a witness specification")
    w.add_argument("trace")
    w.add_argument("--type", required=True, choices=["counter", "stack", "queue"])
    w.add_argument("--criterion", default="qqc", choices=["lin", "qqc", "qc"])
    w.add_argument("--extension-budget", type=int, default=2)
    w.set_defaults(fn=cmd_search)

    f = sub.add_parser("fixtures", help="run the worked-example catalog")
    f.add_argument("--filter", help="tag or fixture name")
    f.set_defaults(fn=cmd_fixtures)

    m = sub.add_parser("compose", help="merge per-object witnesses")
    m.add_argument("trace")
    m.add_argument("--first", required=True, help="call names of the first object")
    m.add_argument("--spec1", required=True)
    m.add_argument("--spec2", required=True)
    m.add_argument("--criterion", default="qqc", choices=["qqc", "lin"])
    m.set_defaults(fn=cmd_compose)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ERROR if exc.code else ACCEPT
    try:
        return args.fn(args)
    except (TraceError, ValueError, KeyError, OSError) as exc:
        _emit({"error": type(exc).__name__, "message": str(exc)})
        return ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
