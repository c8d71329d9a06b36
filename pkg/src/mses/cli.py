import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from . import bench, harness, plotting, stats
from .config import ExperimentSpec, load_spec, schema_rows
from .constants import APP_NAME, COMPARISON_STEM, EVENTS_FILE, SWEEP_PARAMS
from .errors import InvalidArgumentError, MsesError

logger = logging.getLogger(APP_NAME)
console = Console()

EXIT_RUN_FAILED = 1
EXIT_USAGE = 2


class MsesHelpFormatter(argparse.HelpFormatter):
    """Groups the subcommands under headers instead of one flat list."""

    def _format_action(self, action: argparse.Action) -> str:
        if isinstance(action, argparse._SubParsersAction):
            parts = []
            groups = {
                "Experiments": ["run", "sweep"],
                "Analysis": ["compare", "plot"],
                "Reference": ["problems", "schema"],
                "General": ["help"],
            }
            subactions = list(self._iter_indented_subactions(action))
            for group_name, commands in groups.items():
                group_actions = [a for a in subactions if a.dest in commands]
                if not group_actions:
                    continue
                parts.append(f"\n  {group_name}:\n")
                self._indent()
                for subaction in group_actions:
                    parts.append(self._format_action(subaction))
                self._dedent()
            return self._join_parts(parts)

        return super()._format_action(action)


def show_schema() -> None:
    """Displays the experiment spec reference."""
    table = Table(title="MSES Experiment Spec", show_lines=True)
    table.add_column("Table", style="cyan", justify="right")
    table.add_column("Key", style="green")
    table.add_column("Default", style="yellow")
    table.add_column("Description")
    previous = None
    for section, key, default, description in schema_rows():
        table.add_row(section if section != previous else "", key, default, description)
        previous = section
    console.print(table)
    console.print(
        "[dim]Counts accept integers or '<x>*NP' / '<x>*dim' (rounded up).[/dim]"
    )


def list_problems(dim: int, seed: int) -> None:
    """Lists the reference suite at the given dimension."""
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Name", style="cyan")
    table.add_column("Problem id")
    table.add_column("Bounds", style="dim")
    for name, pid in bench.reference_suite(dim, seed).items():
        spec = bench.parse_problem_id(pid)
        half = bench.BASE_BOUNDS[spec.base]
        table.add_row(name, pid, f"[-{half:g}, {half:g}]")
    console.print(table)


def _print_summary(result: harness.ExperimentResult) -> None:
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Arm", style="cyan")
    table.add_column("Problem")
    table.add_column("Runs", justify="right")
    table.add_column("Median", justify="right")
    arms = sorted({r.arm for r in result.records})
    for arm in arms:
        for pid, finals in result.finals(arm).items():
            median = float(np.median(finals))
            table.add_row(arm, pid, str(len(finals)), f"{median:.6e}")
    console.print(table)
    for failure in result.failures:
        console.print(
            f"[red]✘ {failure.arm} / {failure.problem_id} run {failure.run_index}: "
            f"{escape(failure.error)}[/red]"
        )


def _load(args: argparse.Namespace) -> ExperimentSpec:
    spec = load_spec(args.spec)
    return spec.with_overrides(seed=args.seed, workers=args.workers, out_dir=args.out_dir)


def run_command(args: argparse.Namespace) -> int:
    spec = _load(args)
    harness.setup_logging(spec.out_dir, args.verbose)
    total = len(harness.plan(spec))
    done = 0

    with console.status(f"Running {total} runs...", spinner="dots") as status:

        def progress(_: object) -> None:
            nonlocal done
            done += 1
            status.update(f"Running {total} runs... ({done}/{total})")

        result = harness.run_experiment(spec, on_result=progress)

    _print_summary(result)
    console.print(f"Results written to [cyan]{spec.out_dir}[/cyan].")
    if not result.ok:
        console.print(f"[bold red]{len(result.failures)} run(s) failed.[/bold red]")
        return EXIT_RUN_FAILED
    console.print("[bold green]✔ All runs finished.[/bold green]")
    return 0


def sweep_command(args: argparse.Namespace) -> int:
    spec = _load(args)
    values: list[int | str] = [v for v in args.values.split(",") if v.strip()]
    harness.setup_logging(spec.out_dir, args.verbose)
    with console.status(f"Sweeping {args.param}...", spinner="dots"):
        result = harness.sweep(spec, args.param, values)

    table = Table(title=f"Normalized objective, sweep over {args.param}")
    table.add_column("Arm", style="cyan")
    table.add_column(args.param)
    table.add_column("Problem")
    table.add_column("Normalized", justify="right")
    for arm, value, pid, x in result.normalized:
        table.add_row(arm, value, pid, f"{x:.4f}")
    console.print(table)
    if not result.experiment.ok:
        console.print(
            f"[bold red]{len(result.experiment.failures)} run(s) failed.[/bold red]"
        )
        return EXIT_RUN_FAILED
    return 0


def compare_command(args: argparse.Namespace) -> int:
    dir_a, dir_b = Path(args.dir_a), Path(args.dir_b)
    report = stats.compare(
        harness.load_arm(dir_a),
        harness.load_arm(dir_b),
        name_a=dir_a.name,
        name_b=dir_b.name,
    )
    out_dir = Path(args.out_dir) if args.out_dir else Path.cwd()
    harness.atomic_write(out_dir / f"{COMPARISON_STEM}.csv", report.to_csv())
    harness.atomic_write(out_dir / f"{COMPARISON_STEM}.txt", report.to_text())
    console.print(report.to_table())
    tally = report.tally()
    console.print(f"+ / - / ≈ : {tally['+']} / {tally['-']} / {tally['≈']}")
    return 0


def _arm_dirs(root: Path) -> dict[str, Path]:
    """Arm directories under an experiment root, or `root` itself if it is one."""

    def has_runs(d: Path) -> bool:
        return any(harness.run_files(p) for p in d.iterdir() if p.is_dir())

    if has_runs(root):
        return {root.name: root}
    return {d.name: d for d in sorted(root.iterdir()) if d.is_dir() and has_runs(d)}


def plot_command(args: argparse.Namespace) -> int:
    root = Path(args.dir)
    out = Path(args.out)
    if not root.is_dir():
        raise InvalidArgumentError(f"{root} is not a directory")

    if args.transfers:
        events = harness.read_events(root / EVENTS_FILE)
        arms = sorted({e["arm"] for e in events if e.get("event") == "transfer"})
        if not arms:
            raise InvalidArgumentError(f"no transfer events in {root / EVENTS_FILE}")
        arm = args.arm or arms[0]
        problems = sorted({e["problem"] for e in events if e["arm"] == arm})
        problem = args.problem or (problems[0] if problems else "")
        selected = [
            e
            for e in events
            if e["arm"] == arm and e["problem"] == problem and e["run"] == args.run
        ]
        count = plotting.emit_transfer_plot(selected, out, title=f"{arm} / {problem}")
        console.print(f"✔ Plotted {count} transfers to [cyan]{out}[/cyan]", style="green")
        return 0

    logs = {name: harness.load_logs(d) for name, d in _arm_dirs(root).items()}
    if not logs:
        raise InvalidArgumentError(f"no run files under {root}")
    problems = sorted({pid for per_arm in logs.values() for pid in per_arm})
    if args.problem:
        problems = [args.problem]
    for pid in problems:
        target = out if len(problems) == 1 else out.with_name(f"{out.stem}-{pid}{out.suffix}")
        runs = {arm: per_arm.get(pid, []) for arm, per_arm in logs.items()}
        plotting.emit_plot(runs, target, title=pid)
        console.print(f"✔ Wrote [cyan]{target}[/cyan]", style="green")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="Base seed (overrides the spec)")
    p.add_argument("--workers", type=int, help="Concurrent runs (overrides the spec)")
    p.add_argument("--out-dir", type=Path, help="Output directory (overrides the spec)")
    p.add_argument("--verbose", "-v", action="store_true", help="Log engine events")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        usage=argparse.SUPPRESS,
        formatter_class=MsesHelpFormatter,
        add_help=False,
    )
    parser.add_argument(
        "-h",
        "--help",
        action="help",
        default=argparse.SUPPRESS,
        help=argparse.SUPPRESS,
    )
    subparsers = parser.add_subparsers(dest="command")

    run_parser = subparsers.add_parser("run", help="Run an experiment spec")
    run_parser.add_argument("spec", help="Path to the TOML spec")
    _add_common(run_parser)

    sweep_parser = subparsers.add_parser("sweep", help="Sensitivity sweep of one parameter")
    sweep_parser.add_argument("spec", help="Path to the TOML spec")
    sweep_parser.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sweep_parser.add_argument(
        "--values", required=True, help="Comma-separated values, e.g. 0.1*NP,0.2*NP"
    )
    _add_common(sweep_parser)

    compare_parser = subparsers.add_parser("compare", help="Wilcoxon comparison of two arms")
    compare_parser.add_argument("dir_a", help="Arm directory A")
    compare_parser.add_argument("dir_b", help="Arm directory B")
    compare_parser.add_argument("--out-dir", type=Path, help="Where to write the report")

    plot_parser = subparsers.add_parser("plot", help="Plot averaged convergence curves")
    plot_parser.add_argument("dir", help="Experiment or arm directory")
    plot_parser.add_argument("--out", required=True, help="SVG file to write")
    plot_parser.add_argument("--problem", help="Plot only this problem id")
    plot_parser.add_argument(
        "--transfers", action="store_true", help="Plot transferred objectives instead"
    )
    plot_parser.add_argument("--arm", help="Arm for --transfers")
    plot_parser.add_argument("--run", type=int, default=0, help="Run index for --transfers")

    problems_parser = subparsers.add_parser("problems", help="List the reference suite")
    problems_parser.add_argument("--dim", type=int, default=1000)
    problems_parser.add_argument("--seed", type=int, default=0)

    subparsers.add_parser("schema", help="Show the experiment spec reference")
    subparsers.add_parser("help", help="Show this help message")
    return parser


def main(argv: list[str] | None = None) -> None:
    """Main entry point for the MSES CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)

    handlers = {
        "run": run_command,
        "sweep": sweep_command,
        "compare": compare_command,
        "plot": plot_command,
    }
    try:
        if args.command in handlers:
            code = handlers[args.command](args)
        elif args.command == "problems":
            list_problems(args.dim, args.seed)
            code = 0
        elif args.command == "schema":
            show_schema()
            code = 0
        else:
            parser.print_help()
            code = 0
    except MsesError as e:
        console.print(f"[bold red]Error:[/bold red] {escape(str(e))}")
        sys.exit(EXIT_USAGE)
    if code:
        sys.exit(code)


if __name__ == "__main__":
    main()
