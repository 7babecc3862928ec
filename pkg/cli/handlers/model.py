"""Subcommands building and exporting automata: mine, ktail, export."""

import argparse

from cli.common import add_slice_inputs, begin, finish, load_slice_inputs, seed_of, slice_input_paths, write_output
from core.logger import log
from services.baselines import ktail
from services.efsm import describe, export, load_model
from services.invariants import infer_conditions, load_conditions
from services.miner import MinerConfig, mine


def cmd_mine(args: argparse.Namespace) -> int:
    """Mine an EFSM from sessions and (given or freshly inferred) conditions."""
    inputs = {**slice_input_paths(args), "conds": args.conds}
    run = begin(args, inputs, {
        "allow_loops": args.allow_loops,
        "max_actions": args.max_actions,
        "max_paths": args.max_paths,
        "split_on": ",".join(args.split_on or ()),
        "min_support": args.min_support,
        "format": args.format,
    })
    schema, _, slices = load_slice_inputs(args)
    with run.stage("infer"):
        if args.conds:
            _, conditions = load_conditions(args.conds)
        else:
            conditions = infer_conditions(slices, schema, args.split_on or (), args.min_support)

    cfg = MinerConfig(
        allow_loops=args.allow_loops,
        max_rmpath_actions=args.max_actions,
        seed=seed_of(args),
        max_paths=args.max_paths,
    )
    with run.stage("mine"):
        model, report = mine(slices, conditions, schema, cfg)
    log.debug(f"Mined model:\n{describe(model)}")

    write_output(export(model, args.format, manifest=run.hash), args.output)
    if args.report:
        write_output(report.to_file(model, run.hash).model_dump_json(indent=2) + "\n", args.report)
    return finish(args, run)


def cmd_ktail(args: argparse.Namespace) -> int:
    """k-tail baseline over the event projection of the sessions."""
    run = begin(args, slice_input_paths(args), {"k": args.k, "format": args.format})
    _, _, slices = load_slice_inputs(args)
    with run.stage("ktail"):
        fsm = ktail([s.events() for s in slices], args.k)
    write_output(export(fsm, args.format, manifest=run.hash), args.output)
    return finish(args, run)


def cmd_export(args: argparse.Namespace) -> int:
    run = begin(args, {"model": args.model}, {"format": args.format})
    with run.stage("export"):
        text = export(load_model(args.model), args.format, manifest=run.hash)
    write_output(text, args.output)
    return finish(args, run)


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    miner = subparsers.add_parser("mine", parents=[common], help="Mine an EFSM specification")
    add_slice_inputs(miner)
    miner.add_argument("--conds", help="Conditions file written by `infer`")
    miner.add_argument("--split-on", dest="split_on", action="append", metavar="VAR")
    miner.add_argument("--min-support", dest="min_support", type=int, default=1)
    miner.add_argument("--allow-loops", dest="allow_loops", action=argparse.BooleanOptionalAction, default=True,
                       help="Allow self-loop transitions (--no-loops to forbid)")
    miner.add_argument("--no-loops", dest="allow_loops", action="store_false", help=argparse.SUPPRESS)
    miner.add_argument("--max-actions", dest="max_actions", type=int, help="Override the refinement budget")
    miner.add_argument("--max-paths", dest="max_paths", type=int, help="Path search limit before sampling")
    miner.add_argument("--format", choices=("json", "dot"), default="json")
    miner.add_argument("-o", "--output")
    miner.add_argument("--report", help="Mining report path")
    miner.set_defaults(handler=cmd_mine)

    baseline = subparsers.add_parser("ktail", parents=[common], help="k-tail baseline automaton")
    add_slice_inputs(baseline)
    baseline.add_argument("-k", type=int, choices=(1, 2), default=1)
    baseline.add_argument("--format", choices=("json", "dot"), default="json")
    baseline.add_argument("-o", "--output")
    baseline.set_defaults(handler=cmd_ktail)

    exporter = subparsers.add_parser("export", parents=[common], help="Convert a model file")
    exporter.add_argument("--model", required=True)
    exporter.add_argument("--format", choices=("json", "dot"), default="dot")
    exporter.add_argument("-o", "--output")
    exporter.set_defaults(handler=cmd_export)
