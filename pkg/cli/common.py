"""Helpers shared by the subcommand handlers."""

import argparse
import sys
from pathlib import Path
from typing import List, Mapping, Optional, Tuple

from core.config import settings
from core.logger import log
from services.pipeline_service import PipelineRun
from services.slicer import Slice, SliceConfig, load_slice_config, load_slices, slice_trace
from services.trace_model import ContractSchema, load_history, load_schema


class UsageError(Exception):
    """Flags that parse but do not make sense together; exit code 2."""


def seed_of(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else settings.SPECMINE_SEED


def begin(
    args: argparse.Namespace,
    inputs: Mapping[str, Optional[str]],
    params: Optional[Mapping[str, object]] = None
) -> PipelineRun:
    """Start the run of this invocation; main closes it."""
    run = PipelineRun(args.command, seed_of(args), inputs, params, ledger_url=args.ledger)
    run.open_ledger()
    args.run = run
    return run


def finish(args: argparse.Namespace, run: PipelineRun) -> int:
    if args.manifest:
        run.write_manifest(args.manifest)
    log.debug(f"Manifest {run.hash}")
    return 0


def write_output(text: str, path: Optional[str]) -> None:
    """Write an artifact to a file, or to standard output when no path (or "-") is given."""
    if not path or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")
    log.info(f"Wrote {target}")


def add_slice_inputs(parser: argparse.ArgumentParser) -> None:
    """Either a slices file, or a raw trace with its schema and slice configuration."""
    parser.add_argument("--slices", help="Slices file written by `slice`")
    parser.add_argument("--trace", help="JSONL transaction history")
    parser.add_argument("--schema", help="Contract schema JSON")
    parser.add_argument("--slice-config", dest="slice_config", help="Slice configuration JSON")


def slice_input_paths(args: argparse.Namespace) -> Mapping[str, Optional[str]]:
    return {
        "slices": args.slices,
        "trace": args.trace,
        "schema": args.schema,
        "slice_config": args.slice_config,
    }


def load_slice_inputs(args: argparse.Namespace) -> Tuple[ContractSchema, SliceConfig, List[Slice]]:
    if args.slices:
        return load_slices(args.slices)
    if args.trace and args.schema and args.slice_config:
        schema = load_schema(args.schema)
        cfg = load_slice_config(args.slice_config)
        return schema, cfg, slice_trace(load_history(args.trace, schema), cfg)
    raise UsageError("Give --slices, or all of --trace, --schema and --slice-config")
