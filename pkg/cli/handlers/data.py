"""Subcommands producing and preparing data: gen, slice, infer."""

import argparse

from cli.common import (
    UsageError,
    add_slice_inputs,
    begin,
    finish,
    load_slice_inputs,
    seed_of,
    slice_input_paths,
    write_output,
)
from core.logger import log
from services.efsm import export
from services.invariants import EmptyPool, build_predicate_pool, conditions_to_file, infer_conditions
from services.simgen import GenProtocol, enumerate_sessions, fixture_names, get_fixture, simulate
from services.slicer import (
    infer_binding_hint,
    load_slice_config,
    slice_config_to_file,
    slice_trace,
    slices_to_file,
    split_holdout,
)
from services.trace_model import load_history, load_schema, schema_to_file, serialize_history


def cmd_gen(args: argparse.Namespace) -> int:
    """Synthesise a history from a reference contract."""
    if args.list:
        for name in fixture_names():
            if name.startswith("random:"):
                write_output(f"{name}\tRandom phase machine for the given seed\n", None)
            else:
                write_output(f"{name}\t{get_fixture(name).description}\n", None)
        return 0
    if not args.fixture:
        raise UsageError("gen needs --fixture NAME (or --list)")

    rc = get_fixture(args.fixture)
    run = begin(args, {}, {
        "fixture": args.fixture,
        "instances": args.instances,
        "txs": args.txs,
        "exhaustive": args.exhaustive,
    })
    with run.stage("gen"):
        if args.exhaustive:
            trace = enumerate_sessions(rc, args.exhaustive)
        else:
            trace = simulate(rc, GenProtocol(args.instances, args.txs, seed_of(args)))

    write_output(serialize_history(trace), args.output)
    if args.schema_out:
        write_output(schema_to_file(rc.schema).model_dump_json(indent=2) + "\n", args.schema_out)
    if args.slice_config_out:
        write_output(slice_config_to_file(rc.slice_config).model_dump_json(indent=2) + "\n", args.slice_config_out)
    if args.truth_out:
        write_output(export(rc.ground_truth, "json", manifest=run.hash), args.truth_out)
    return finish(args, run)


def cmd_slice(args: argparse.Namespace) -> int:
    """Split a history into sessions, optionally holding some out for testing."""
    if not args.trace or not args.schema:
        raise UsageError("slice needs --trace and --schema")
    if not args.slice_config and not args.hint_traces:
        raise UsageError("slice needs --slice-config or --hint-traces")
    if args.holdout and not args.test_out:
        raise UsageError("--holdout needs --test-out")

    inputs = {"trace": args.trace, "schema": args.schema, "slice_config": args.slice_config}
    inputs.update({f"hint_{i}": path for i, path in enumerate(args.hint_traces or ())})
    run = begin(args, inputs, {"holdout": args.holdout})

    schema = load_schema(args.schema)
    with run.stage("slice"):
        trace = load_history(args.trace, schema)
        if args.slice_config:
            cfg = load_slice_config(args.slice_config)
        else:
            cfg = infer_binding_hint([load_history(path, schema) for path in args.hint_traces])
        slices = slice_trace(trace, cfg)
        train, test = split_holdout(slices, args.holdout or 0.0, seed_of(args))

    write_output(slices_to_file(train, schema, cfg, run.hash).model_dump_json(indent=2) + "\n", args.output)
    if args.test_out:
        write_output(slices_to_file(test, schema, cfg, run.hash).model_dump_json(indent=2) + "\n", args.test_out)
        log.info(f"Held out {len(test)} of {len(slices)} sessions")
    return finish(args, run)


def cmd_infer(args: argparse.Namespace) -> int:
    """Infer per-event guards and updates from sliced sessions."""
    run = begin(args, slice_input_paths(args), {
        "split_on": ",".join(args.split_on or ()),
        "min_support": args.min_support,
    })
    schema, _, slices = load_slice_inputs(args)
    with run.stage("infer"):
        conditions = infer_conditions(slices, schema, args.split_on or (), args.min_support)
        try:
            pool = build_predicate_pool(conditions, schema)
        except EmptyPool as e:
            log.warning(e.describe())
            pool = None
    report = conditions_to_file(conditions, schema, args.split_on or (), pool, run.hash)
    write_output(report.model_dump_json(indent=2) + "\n", args.output)
    return finish(args, run)


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    gen = subparsers.add_parser("gen", parents=[common], help="Generate a synthetic history")
    gen.add_argument("--fixture", help="Fixture name, or random:<seed>")
    gen.add_argument("--list", action="store_true", help="List fixture names and exit")
    gen.add_argument("--instances", type=int, default=100)
    gen.add_argument("--txs", type=int, default=100, help="Transactions per instance")
    gen.add_argument("--exhaustive", type=int, metavar="LEN", help="Enumerate every session up to LEN calls")
    gen.add_argument("-o", "--output", help="Trace path (default: standard output)")
    gen.add_argument("--schema-out", dest="schema_out")
    gen.add_argument("--slice-config-out", dest="slice_config_out")
    gen.add_argument("--truth-out", dest="truth_out", help="Write the ground-truth automaton")
    gen.set_defaults(handler=cmd_gen)

    slicer = subparsers.add_parser("slice", parents=[common], help="Slice a history into sessions")
    slicer.add_argument("--trace")
    slicer.add_argument("--schema")
    slicer.add_argument("--slice-config", dest="slice_config")
    slicer.add_argument("--hint-traces", dest="hint_traces", nargs="+", metavar="TRACE",
                        help="Unit-test traces (one session each) to infer binding parameters from")
    slicer.add_argument("--holdout", type=float, metavar="R", help="Share of sessions held out for testing")
    slicer.add_argument("--test-out", dest="test_out")
    slicer.add_argument("-o", "--output")
    slicer.set_defaults(handler=cmd_slice)

    infer = subparsers.add_parser("infer", parents=[common], help="Infer function pre-/post-conditions")
    add_slice_inputs(infer)
    infer.add_argument("--split-on", dest="split_on", action="append", metavar="VAR",
                       help="Case-split conditions on a state variable (repeatable)")
    infer.add_argument("--min-support", dest="min_support", type=int, default=1)
    infer.add_argument("-o", "--output")
    infer.set_defaults(handler=cmd_infer)
