"""Command line front end: ``orienteer gen|solve|bench|calibrate|decompose|verify``.

Exit codes: 0 success, 2 infeasible request, 1 bad input (including usage errors).
"""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from . import harness
from .deadline import DeadlineInputError
from .decomposition import DecompositionError
from .doubling import InfeasibleError
from .generators import KINDS, generate
from .instance import dumps, load, num_in
from .metric import MetricError
from .oracle import OracleError
from .paths import WalkError
from .treewidth import DecompositionInvalid, TwInfeasible

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2
INPUT_ERRORS = (MetricError, DeadlineInputError, harness.InputError, DecompositionInvalid, DecompositionError,
                WalkError, OracleError, OSError, json.JSONDecodeError, KeyError)
INFEASIBLE = (InfeasibleError, TwInfeasible, harness.Infeasible)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def _seed(seed: Optional[int]) -> int:
    return harness.default_seed() if seed is None else seed


@click.group()
def cli():
    """Orienteering and k-stroll solvers with exact oracles."""


@cli.command()
@click.argument("kind", type=click.Choice(KINDS))
@click.option("--n", type=int)
@click.option("--seed", type=int)
@click.option("--side", type=int, default=10, show_default=True)
@click.option("--dim", type=int, default=2, show_default=True)
@click.option("--width", type=int, default=2, show_default=True)
@click.option("--rows", type=int)
@click.option("--cols", type=int)
@click.option("--max-weight", type=int, default=8, show_default=True)
@click.option("--deadlines", is_flag=True, help="Attach deadlines from a jittered random tour.")
@click.option("--out", type=click.Path(dir_okay=False))
def gen(kind, n, seed, side, dim, width, rows, cols, max_weight, deadlines, out):
    """Generate a seeded instance as JSON."""
    inst = generate(kind, _seed(seed), n=n, side=side, dim=dim, max_weight=max_weight, width=width,
                    rows=rows, cols=cols, deadlines=deadlines)
    _emit(inst.dumps(), out)


@cli.command()
@click.argument("command", type=click.Choice(harness.COMMANDS))
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int)
@click.option("--budget", help="Length budget in instance units (int or p/q).")
@click.option("--budget-factor", help="Budget as a multiple of d(start, end).")
@click.option("--start")
@click.option("--end")
@click.option("--epsilon", default="1/2", show_default=True)
@click.option("--solver", type=click.Choice(["dbl", "tw"]))
@click.option("--mode", type=click.Choice(["exact-deadlines", "bicriteria"]), default="exact-deadlines",
              show_default=True)
@click.option("--gamma", type=int)
@click.option("--m-max", type=int, default=4, show_default=True)
@click.option("--seed", type=int)
@click.option("--oracle-guess", type=click.Path(exists=True, dir_okay=False),
              help="Fix the deadline skeleton to the one induced by this path.")
@click.option("--oracle", is_flag=True, help="Also run the exact oracle and report the ratio.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="Calibration output with kappa_prime.")
@click.option("--exclude-endpoints", is_flag=True)
@click.option("--no-exact-groups", is_flag=True,
              help="Route small deadline groups through the leg DP instead of keeping their guessed path.")
@click.option("--out", type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="Print the full JSON report (default prints a summary).")
@click.option("--timing", is_flag=True, help="Include wall time in the report.")
def solve(command, instance, k, budget, budget_factor, start, end, epsilon, solver, mode, gamma, m_max, seed,
          oracle_guess, oracle, config, exclude_endpoints, no_exact_groups, out, as_json, timing):
    """Solve COMMAND on INSTANCE and write a run report."""
    inst = load(instance)
    report = harness.solve(inst, command, k=k, budget=budget, budget_factor=budget_factor, start=start, end=end,
                           eps=num_in(epsilon), solver=solver, mode=mode, gamma=gamma, m_max=m_max,
                           seed=seed, oracle=oracle, oracle_guess=oracle_guess,
                           kappa_prime=harness.load_kappa_prime(config), exclude_endpoints=exclude_endpoints,
                           small_group_exhaustive=not no_exact_groups, timing=timing)
    text = dumps(report)
    if out:
        Path(out).write_text(text)
    if as_json or not out:
        if as_json:
            click.echo(text, nl=False)
        else:
            res = report["result"]
            line = f"{command} {inst.id}: value={res['value']} length={res['length']} certified={res['certified']}"
            if report["oracle"] is not None:
                line += f" oracle={report['oracle']} ratio={report['ratio']}"
            click.echo(line)


@cli.command()
@click.argument("suite", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--no-timing", is_flag=True, help="Drop the mean_time column for byte-stable output.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False))
def bench(suite, fmt, no_timing, workers, out):
    """Run a benchmark suite and print one row per cell."""
    rows = harness.bench(json.loads(Path(suite).read_text()), timing=not no_timing, workers=workers)
    _emit(harness.rows_to_csv(rows) if fmt == "csv" else dumps(rows), out)


@cli.command()
@click.option("--family", type=click.Choice(["1d", "euclidean", "uniform"]), default="1d", show_default=True)
@click.option("--n", type=int, default=8, show_default=True)
@click.option("--trials", type=int, default=2000, show_default=True)
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(dir_okay=False), help="Write a solver config holding kappa_prime.")
def calibrate(family, n, trials, seed, out):
    """Fit the partition separation constant by Monte Carlo."""
    rep = harness.calibrate(family, n, trials, _seed(seed))
    if out:
        Path(out).write_text(dumps(rep))
    click.echo(dumps(rep), nl=False)


@cli.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(["auto", "split-tree", "td"]), default="auto", show_default=True)
@click.option("--gamma", type=int)
@click.option("--epsilon", default="1/2", show_default=True)
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(dir_okay=False))
def decompose(instance, kind, gamma, epsilon, seed, out):
    """Emit the split tree (metric instances) or tree decomposition (graphs) as JSON."""
    data = harness.decompose(load(instance), kind, gamma, num_in(epsilon), _seed(seed))
    _emit(dumps(data), out)


@cli.command()
@click.argument("report", type=click.Path(exists=True, dir_okay=False))
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
def verify(report, instance):
    """Re-simulate REPORT's walk on INSTANCE; exit 1 on any mismatch."""
    problems = harness.verify(json.loads(Path(report).read_text()), load(instance))
    for p in problems:
        click.echo(f"mismatch: {p}")
    if problems:
        sys.exit(EXIT_INPUT)
    click.echo("ok")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="orienteer", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INPUT
    except click.exceptions.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except INFEASIBLE as exc:
        click.echo(dumps({"status": "infeasible", "reason": str(exc)}), nl=False)
        return EXIT_INFEASIBLE
    except INPUT_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
