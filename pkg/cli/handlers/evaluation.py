"""Subcommands comparing models and listing recorded runs: eval, runs."""

import argparse
from dataclasses import replace

from cli.common import begin, finish, seed_of, write_output
from core.config import settings
from core.errors import SpecMineError
from core.logger import log
from services.efsm import load_model
from services.metrics import GenPolicy, accuracy, score
from services.slicer import load_slices
from utils.formatters import format_score, format_seconds


def cmd_eval(args: argparse.Namespace) -> int:
    """Precision, recall and F1 against a reference model; accuracy on held-out sessions."""
    run = begin(args, {"mined": args.mined, "truth": args.truth, "test_slices": args.test_slices}, {
        "max_sentences": args.max_sentences,
        "min_coverage": args.min_coverage,
        "max_len_factor": args.max_len_factor,
        "exhaustive": args.exhaustive,
        "dedup": args.dedup,
    })
    mined = load_model(args.mined)
    truth = load_model(args.truth)
    pol = GenPolicy(
        max_sentences=args.max_sentences or settings.SPECMINE_MAX_SENTENCES,
        min_transition_coverage=args.min_coverage or settings.SPECMINE_MIN_COVERAGE,
        max_len_factor=args.max_len_factor or settings.SPECMINE_MAX_LEN_FACTOR,
        seed=seed_of(args),
    )
    with run.stage("eval"):
        result = score(mined, truth, pol, exhaustive=args.exhaustive, dedup=args.dedup)
        if args.test_slices:
            _, _, test = load_slices(args.test_slices)
            result = replace(result, acc=accuracy(mined, test))

    log.info(format_score(result))
    write_output(result.to_file(run.hash).model_dump_json(indent=2) + "\n", args.output)
    return finish(args, run)


def cmd_runs(args: argparse.Namespace) -> int:
    """List the most recent ledger entries."""
    url = args.ledger or settings.SPECMINE_LEDGER_URL
    if not url:
        raise SpecMineError("No ledger configured; pass --ledger URL or set SPECMINE_LEDGER_URL", stage="runs")

    from database.database import get_session, init_db, make_engine
    from database.repositories import RunRepository

    factory = init_db(make_engine(url))
    for session in get_session(factory):
        runs = RunRepository(session).get_recent(args.limit)
        for record in runs:
            total = sum(t.seconds for t in record.timings)
            write_output(
                f"{record.id}\t{record.created_at:%Y-%m-%d %H:%M:%S}\t{record.command}\t"
                f"{record.manifest_hash[:12]}\t{record.status}\t{format_seconds(total)}\n",
                None,
            )
        if not runs:
            log.info("Ledger is empty")
    return 0


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    evaluate = subparsers.add_parser("eval", parents=[common], help="Score a mined model")
    evaluate.add_argument("--mined", "--model", dest="mined", required=True)
    evaluate.add_argument("--truth", required=True)
    evaluate.add_argument("--test-slices", dest="test_slices", help="Held-out slices for accuracy")
    evaluate.add_argument("--max-sentences", dest="max_sentences", type=int)
    evaluate.add_argument("--min-coverage", dest="min_coverage", type=int)
    evaluate.add_argument("--max-len-factor", dest="max_len_factor", type=int)
    evaluate.add_argument("--exhaustive", action="store_true", help="Compare full word sets up to the length bound")
    evaluate.add_argument("--dedup", action="store_true", help="Deduplicate sampled sentences")
    evaluate.add_argument("-o", "--output")
    evaluate.set_defaults(handler=cmd_eval)

    runs = subparsers.add_parser("runs", parents=[common], help="List recorded runs")
    runs.add_argument("--limit", type=int, default=20)
    runs.set_defaults(handler=cmd_runs)
