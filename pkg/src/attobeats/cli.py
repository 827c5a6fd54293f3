"""Scenario-driven command line.

Every command reads one INI scenario and writes its products (plus a
manifest with checksums) into --out.  Exit codes: 0 success, 1 usage or
configuration problem, 2 scan finished but some delays failed, 3 an
engine stage failed outright.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_scenario
from .pipeline import (
    EngineError,
    run_compare,
    run_find_resonances,
    run_fit_beats,
    run_model_scan,
    run_tdse_scan,
)

PARALLEL_ENV = "ATTOBEATS_PARALLEL"


class _Parser(argparse.ArgumentParser):
    # the exit-code contract reserves 2 for partial scans; argparse
    # would use it for usage errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(sub: argparse.ArgumentParser, scan: bool) -> None:
    sub.add_argument("--config", required=True, help="scenario INI file")
    sub.add_argument("--out", required=True, help="output directory")
    if scan:
        sub.add_argument(
            "--parallel",
            type=int,
            default=None,
            help=f"worker processes (default: ${PARALLEL_ENV} or 1)",
        )
        sub.add_argument(
            "--resume",
            action="store_true",
            help="skip delays already present in the output scan",
        )
        sub.add_argument(
            "--spectra",
            type=int,
            default=0,
            metavar="N",
            help="write a rebinned energy spectrum every N-th delay (grid engine)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="attobeats",
        description="Pump-probe interferometry of autoionizing states.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate_model = sub.add_parser(
        "simulate-model", help="delay scan with the interference model"
    )
    _add_common(simulate_model, scan=True)

    simulate_tdse = sub.add_parser(
        "simulate-tdse", help="delay scan on the two-electron grid"
    )
    _add_common(simulate_tdse, scan=True)

    scan_delay = sub.add_parser(
        "scan-delay", help="delay scan; engine chosen by the scenario sections"
    )
    _add_common(scan_delay, scan=True)

    find = sub.add_parser(
        "find-resonances", help="complex-scaling resonance table"
    )
    _add_common(find, scan=False)

    fit = sub.add_parser("fit-beats", help="damped-cosine fit of a scan column")
    _add_common(fit, scan=False)

    compare = sub.add_parser(
        "compare", help="confront a grid scan with the model prediction"
    )
    _add_common(compare, scan=False)
    return parser


def _resolve_parallel(value: int | None) -> int:
    if value is None:
        raw = os.environ.get(PARALLEL_ENV, "1")
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(
                f"{PARALLEL_ENV}={raw!r} is not an integer"
            ) from None
    if value < 1:
        raise ConfigError(f"worker count must be >= 1, got {value}")
    return value


def _pick_engine(scenario) -> str:
    has_model = scenario.model is not None
    has_tdse = scenario.tdse is not None
    if has_model and has_tdse:
        raise ConfigError(
            f"{scenario.path}: both [model] and [tdse] present; use "
            f"simulate-model or simulate-tdse to pick one"
        )
    if has_model:
        return "model"
    if has_tdse:
        return "tdse"
    raise ConfigError(f"{scenario.path}: needs a [model] or [tdse] section")


def _run_scan(args, engine: str) -> int:
    scenario = load_scenario(args.config)
    if engine == "auto":
        engine = _pick_engine(scenario)
    parallel = _resolve_parallel(args.parallel)
    if engine == "model":
        outcome = run_model_scan(
            scenario, args.out, parallel=parallel, resume=args.resume
        )
    else:
        outcome = run_tdse_scan(
            scenario,
            args.out,
            parallel=parallel,
            resume=args.resume,
            spectra_every=args.spectra,
        )
    print(
        f"{outcome.engine} scan: {outcome.n_computed} computed, "
        f"{outcome.n_skipped} skipped, {len(outcome.failed_delays_as)} failed "
        f"-> {outcome.outputs['scan']}"
    )
    return 0 if outcome.ok else 2


def _run_find(args) -> int:
    scenario = load_scenario(args.config)
    outputs = run_find_resonances(scenario, args.out)
    print(f"resonance table -> {outputs['resonances']}")
    return 0


def _run_fit(args) -> int:
    scenario = load_scenario(args.config)
    fit, outputs = run_fit_beats(scenario, args.out)
    freqs = ", ".join(f"{c.frequency:.6g}" for c in fit.components)
    print(
        f"beat fit: {len(fit.components)} components "
        f"[{freqs}] a.u., residual {fit.residual:.3g} -> {outputs['beatfit']}"
    )
    return 0


def _run_compare(args) -> int:
    scenario = load_scenario(args.config)
    outcome = run_compare(scenario, args.out)
    print(
        f"compare: pearson_r={outcome.report.pearson_r:.4f} "
        f"nrmsd={outcome.report.nrmsd:.4f} -> {outcome.outputs['correlation']}"
    )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate-model":
            return _run_scan(args, "model")
        if args.command == "simulate-tdse":
            return _run_scan(args, "tdse")
        if args.command == "scan-delay":
            return _run_scan(args, "auto")
        if args.command == "find-resonances":
            return _run_find(args)
        if args.command == "fit-beats":
            return _run_fit(args)
        return _run_compare(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"attobeats: {exc}", file=sys.stderr)
        return 1
    except EngineError as exc:
        print(f"attobeats: engine error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - contract maps everything else to 3
        print(f"attobeats: engine error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
