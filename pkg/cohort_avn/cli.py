"""
Command-line interface: ``cohort-avn <command> ...``.

Exit codes: 0 on success, 1 when an attack suite fails or a command errors,
2 on scenario validation failure, 3 on a checked-mode invariant breach.
"""

import argparse
import json
import logging
import random
import sys
from collections.abc import Sequence

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from terminal_style import sprint

from cohort_avn import __version__
from cohort_avn.analysis import (
    CrowdsourceConfig,
    CrowdsourceMode,
    crowdsource_round,
    ldm_sweep,
    pki_load,
    pseudo_autonomy,
    wave_margin_comparison,
)
from cohort_avn.cohort.cohort import Cohort
from cohort_avn.errors import CohortAVNError, InvariantViolation, ScenarioError
from cohort_avn.recording.trace_analysis import quick_trace_view
from cohort_avn.security.attacks import AttackKind
from cohort_avn.sim.runner import run_attack_suite, run_scenario
from cohort_avn.sim.scenario import bundled_scenarios, load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_INVARIANT = 3

console = Console()


def _print_issues(issues: Sequence[str]):
    sprint("Scenario validation failed:", color="red")
    for issue in issues:
        sprint(f"  - {issue}", color="red")


def _metrics_table(title: str, metrics: dict) -> Table:
    table = Table(title=title)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green", justify="right")
    for key, value in metrics.items():
        table.add_row(key, str(value))
    return table


def cmd_run(args) -> int:
    result = run_scenario(args.scenario, seed=args.seed, checked=args.checked)
    result.save(args.trace, args.metrics)
    if args.json:
        console.print_json(json.dumps(result.metrics))
    else:
        console.print(
            Panel(
                f"{len(result.events)} events, seed {result.seed}\n"
                f"trace hash {result.trace_hash}",
                title=result.scenario.name,
                title_align="left",
            )
        )
        console.print(_metrics_table("Metrics", result.metrics))
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    console.print(
        f"[green]{scenario.name}[/green] is valid: {len(scenario.vehicles)} vehicles, "
        f"{len(scenario.cohorts)} cohorts, {len(scenario.events)} events, "
        f"{len(scenario.attacks)} attacks"
    )
    return EXIT_OK


def cmd_list(args) -> int:
    table = Table(title="Bundled scenarios")
    table.add_column("Name", style="cyan")
    table.add_column("Description")
    for name in bundled_scenarios():
        table.add_row(name, load_scenario(name).description)
    console.print(table)
    return EXIT_OK


def cmd_attack_suite(args) -> int:
    report = run_attack_suite(
        args.scenario,
        args.kinds,
        seed=args.seed,
        parallel=args.parallel,
        mode=args.mode,
    )
    if args.json:
        console.print_json(json.dumps(report.as_dict()))
    else:
        table = Table(title=f"Attack suite on {report.scenario}")
        for column in ("Kind", "Events", "Detected", "Rate", "FP", "Forged accepted"):
            table.add_column(column, justify="right" if column != "Kind" else "left")
        for row in report.rows:
            rate = "-" if row.detection_rate is None else f"{row.detection_rate:.0%}"
            table.add_row(
                row.kind.value,
                str(row.events),
                str(row.detected),
                rate,
                str(row.false_positives),
                str(row.forged_accepted),
            )
        console.print(table)
        console.print(
            f"attack-free twin: {report.twin_violations} violations, "
            f"{report.twin_false_positives} false positives"
        )
    if not report.passed:
        sprint("Attack suite failed", color="red")
        return EXIT_FAILED
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.model == "ldm":
        table = Table(title=f"LDM discrepancy at {args.velocity} m/s, {args.frequency} Hz")
        table.add_column("Lost beacons", justify="right")
        table.add_column("Discrepancy (m)", justify="right")
        for lost, gap in ldm_sweep(args.velocity, args.frequency, args.lost):
            table.add_row(str(lost), f"{gap:.2f}")
        console.print(table)
    elif args.model == "pki":
        load = pki_load(args.vehicles, args.frequency, args.verify_time)
        verdict = "[red]thrashing[/red]" if load.thrashing else "[green]ok[/green]"
        console.print(f"utilization {load.utilization:.3f}: {verdict}")
    elif args.model == "crowd":
        config = CrowdsourceConfig(CrowdsourceMode(args.mode), args.p)
        cohort = Cohort(0, 1, list(range(args.size)), 20.0, 0, 5, dict.fromkeys(range(args.size), 4))
        rng = random.Random(args.seed)
        table = Table(title=f"{args.mode} crowdsourcing, cohort of {args.size}")
        table.add_column("Round", justify="right")
        table.add_column("Broadcasting ranks")
        for index in range(args.rounds):
            ranks = crowdsource_round(cohort, index, config, rng)
            table.add_row(str(index), ", ".join(map(str, ranks)) or "-")
        console.print(table)
    elif args.model == "margin":
        table = Table(title=f"Safety margin, {args.velocity} m/s, iv-gap {args.iv_gap} m")
        for column in ("Access", "Distance (m)", "Ratio", "Passes"):
            table.add_column(column)
        for label, margin in wave_margin_comparison(args.velocity, args.iv_gap):
            table.add_row(
                label,
                f"{margin.distance_in_lambda:.2f}",
                f"{margin.ratio:.1f}",
                "yes" if margin.passed else "no",
            )
        console.print(table)
    else:
        autonomy = pseudo_autonomy(args.pool, args.joins_per_day)
        console.print(
            f"{args.pool} pseudonyms last {autonomy.days:g} days; "
            f"same-day reuse: {'yes' if autonomy.same_day_reuse else 'no'}"
        )
    return EXIT_OK


def cmd_inspect(args) -> int:
    quick_trace_view(args.trace, args.subject, args.view)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cohort-avn",
        description="Cohort-based autonomic vehicular network simulator",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a scenario")
    run.add_argument("scenario", help="Scenario name or path")
    run.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    run.add_argument("--checked", action="store_true", default=None, help="Assert invariants at every event")
    run.add_argument("--trace", default=None, help="Write the trace as JSON lines")
    run.add_argument("--metrics", default=None, help="Write the metrics as JSON")
    run.add_argument("--json", action="store_true", help="Print metrics as JSON")
    run.set_defaults(handler=cmd_run)

    validate = commands.add_parser("validate", help="Validate a scenario")
    validate.add_argument("scenario")
    validate.set_defaults(handler=cmd_validate)

    listing = commands.add_parser("list", help="List bundled scenarios")
    listing.set_defaults(handler=cmd_list)

    suite = commands.add_parser("attack-suite", help="Run the attack corpus on a scenario")
    suite.add_argument("scenario")
    suite.add_argument(
        "--kinds",
        nargs="+",
        choices=[kind.value for kind in AttackKind],
        default=None,
        help="Attack kinds to run (all by default)",
    )
    suite.add_argument("--seed", type=int, default=None)
    suite.add_argument("--parallel", action="store_true", help="Run the attack runs concurrently")
    suite.add_argument("--mode", choices=["asyncio", "threading"], default="asyncio")
    suite.add_argument("--json", action="store_true")
    suite.set_defaults(handler=cmd_attack_suite)

    analyze = commands.add_parser("analyze", help="Standalone quantitative models")
    models = analyze.add_subparsers(dest="model", required=True)
    ldm = models.add_parser("ldm", help="LDM discrepancy after lost beacons")
    ldm.add_argument("--velocity", type=float, default=25.0)
    ldm.add_argument("--frequency", type=float, default=1.0)
    ldm.add_argument("--lost", type=int, default=3)
    pki = models.add_parser("pki", help="Verification load of signed beacons")
    pki.add_argument("--vehicles", type=float, default=70)
    pki.add_argument("--frequency", type=float, default=7.0)
    pki.add_argument("--verify-time", type=float, default=0.002)
    crowd = models.add_parser("crowd", help="Crowdsourcing broadcasters per round")
    crowd.add_argument("--size", type=int, default=8)
    crowd.add_argument("--rounds", type=int, default=8)
    crowd.add_argument("--mode", choices=[m.value for m in CrowdsourceMode], default="deterministic")
    crowd.add_argument("--p", type=float, default=None)
    crowd.add_argument("--seed", type=int, default=0)
    margin = models.add_parser("margin", help="Access delay against the iv-gap")
    margin.add_argument("--velocity", type=float, default=25.0)
    margin.add_argument("--iv-gap", type=float, default=8.0)
    pseudo = models.add_parser("pseudo", help="Pseudonym pool autonomy")
    pseudo.add_argument("--pool", type=int, default=5000)
    pseudo.add_argument("--joins-per-day", type=float, default=20)
    analyze.set_defaults(handler=cmd_analyze)

    inspect = commands.add_parser("inspect", help="Explore a saved trace")
    inspect.add_argument("trace")
    inspect.add_argument("--subject", type=int, default=None)
    inspect.add_argument(
        "--view",
        choices=["info", "summary", "timeline", "n2n", "security"],
        default="summary",
    )
    inspect.set_defaults(handler=cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )
    try:
        return args.handler(args)
    except ScenarioError as exc:
        _print_issues(exc.issues)
        return EXIT_INVALID
    except InvariantViolation as exc:
        sprint(f"Invariant violated at {exc.event!r}: {exc}", color="red")
        return EXIT_INVARIANT
    except (CohortAVNError, ValueError, OSError) as exc:
        sprint(f"Error: {exc}", color="red")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
