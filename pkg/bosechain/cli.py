"""
bosechain: disordered Bose-Hubbard chain simulations from the command line.

Usage:
    bosechain dims L N [--n-max K]
    bosechain spectrum --L 8 --N 4 --U 3.5 --W 10 [--out spectrum.csv]
    bosechain dos --L 10 --N 5 --U 3.5 --W 10 [--method ldl] [--out dos.csv]
    bosechain eigenstate-scan CONFIG [--out DIR] [--workers K]
    bosechain gap-ratio CONFIG
    bosechain quench-ed CONFIG | quench-mps CONFIG
    bosechain collapse RECORDS --observable entropy [--U 3.5]
    bosechain phase-diagram CONFIG
    bosechain validate CONFIG [CONFIG ...]
    bosechain list [CONFIG ...]
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np
import yaml
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from bosechain import __version__
from bosechain.basis import capped_sector_dimension, enumerate_sector, sector_dimension
from bosechain.config import RunConfig, Task, bundled_configs, load_config
from bosechain.dos import ChebyshevConfig, DosMethod, dos_histogram, dos_maximum
from bosechain.errors import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, ConfigurationError, NumericalError
from bosechain.model import (
    DisorderKind,
    DisorderModel,
    ModelParams,
    anharmonicity_operator,
    build_hamiltonian,
    sample_disorder,
)
from bosechain.output import prepare_run_dir, read_jsonl, write_csv, write_json, write_jsonl
from bosechain.pipeline import (
    EnsembleRecord,
    finite_size_collapse,
    run_eigenstate_ensemble,
    run_gap_ratio_ensemble,
    run_phase_diagram,
    run_quench_ensemble,
    summarize,
)
from bosechain.spectral import full_diagonalize, normalized_energy

# Rich logging to stderr; stdout carries the result tables
console = Console(stderr=True)

_stderr_handler = RichHandler(console=console, rich_tracebacks=True, show_path=False)

logging.basicConfig(
    level=logging.WARNING,
    format="%(message)s",
    datefmt="[%X]",
    handlers=[_stderr_handler],
)
logger = logging.getLogger("bosechain")

# Optional file log: set BOSECHAIN_LOG_FILE to enable persistent logging
_log_file = os.environ.get("BOSECHAIN_LOG_FILE")
if _log_file:
    _file_handler = logging.FileHandler(_log_file)
    _file_handler.setFormatter(logging.Formatter(
        "%(asctime)s %(levelname)-8s %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
    ))
    _file_handler.setLevel(logging.DEBUG)
    logger.addHandler(_file_handler)


def _report_validation(console: Console, label: str, err: ValidationError) -> None:
    console.print(f"  [red]✗[/red] {label}")
    for item in err.errors():
        loc = " → ".join(str(l) for l in item["loc"])
        console.print(f"    {loc}: {item['msg']}")


def _guarded(fn: Callable[[argparse.Namespace, Console], int], args, console: Console) -> int:
    """Map library failures onto exit codes."""
    try:
        return fn(args, console)
    except ValidationError as e:
        _report_validation(console, "invalid configuration", e)
        return EXIT_VALIDATION
    except ConfigurationError as e:
        console.print(f"[red]Configuration error:[/red] {e}")
        return EXIT_VALIDATION
    except yaml.YAMLError as e:
        console.print(f"[red]Malformed config:[/red] {e}")
        return EXIT_VALIDATION
    except OSError as e:
        console.print(f"[red]Cannot access file:[/red] {e}")
        return EXIT_VALIDATION
    except NumericalError as e:
        console.print(f"[red]Numerical failure:[/red] {e}")
        return EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# Single-realization commands
# ---------------------------------------------------------------------------

def cmd_dims(args, console: Console | None = None) -> int:
    """Sector dimension of (L, N), plus the half-filling table up to L."""
    console = console or Console()

    def dim(L: int, N: int) -> int:
        if args.n_max is not None:
            return capped_sector_dimension(L, N, args.n_max)
        return sector_dimension(L, N, checked=True)

    def run(args, console):
        cap = "" if args.n_max is None else f", n_max={args.n_max}"
        console.print(f"[bold]dim(L={args.L}, N={args.N}{cap})[/bold] = {dim(args.L, args.N)}\n")
        table = Table(show_header=True, header_style="bold", title="Half filling")
        table.add_column("L", justify="right")
        table.add_column("N", justify="right")
        table.add_column("dim", justify="right")
        for L in range(2, args.L + 1, 2):
            table.add_row(str(L), str(L // 2), str(dim(L, L // 2)))
        console.print(table)
        return EXIT_OK

    return _guarded(run, args, console)


def _single_hamiltonian(args):
    kind = DisorderKind(args.disorder)
    disorder_model = DisorderModel(kind=kind).with_strength(args.W)
    params = ModelParams(L=args.L, U=args.U, U2=args.U2, J2=args.J2)
    sector = enumerate_sector(args.L, args.N, args.n_max)
    disorder = sample_disorder(disorder_model, args.L, args.seed, params)
    return sector, build_hamiltonian(params, disorder, sector)


def cmd_spectrum(args, console: Console | None = None) -> int:
    """Full spectrum with normalized energies and total anharmonicity per eigenstate."""
    console = console or Console()

    def run(args, console):
        sector, H = _single_hamiltonian(args)
        spectrum = full_diagonalize(H)
        E_min, E_max = float(spectrum.values[0]), float(spectrum.values[-1])
        eps = normalized_energy(spectrum.values, E_min, E_max)
        anharmonicity = anharmonicity_operator(sector).diagonal()
        weight = np.abs(spectrum.vectors) ** 2
        total_anharmonicity = anharmonicity @ weight

        console.print(
            f"[bold]L={args.L} N={args.N}[/bold] dim={sector.dim} "
            f"E ∈ [{E_min:.6g}, {E_max:.6g}], max residual {spectrum.residuals.max():.2e}"
        )
        if args.out:
            write_csv(
                args.out,
                ["index", "energy", "normalized_energy", "anharmonicity", "residual"],
                (
                    [i, float(spectrum.values[i]), float(eps[i]), float(total_anharmonicity[i]),
                     float(spectrum.residuals[i])]
                    for i in range(len(spectrum))
                ),
            )
            console.print(f"Wrote {args.out}")
        return EXIT_OK

    return _guarded(run, args, console)


def cmd_dos(args, console: Console | None = None) -> int:
    """DOS histogram, its maximum and the ambiguity flag."""
    console = console or Console()

    def run(args, console):
        _, H = _single_hamiltonian(args)
        cfg = ChebyshevConfig(p=args.p, n_v=args.nv, seed=args.seed)
        hist = dos_histogram(H, args.bins, DosMethod(args.method), cfg)
        sigma = dos_maximum(hist)
        console.print(f"[bold]method[/bold]   {hist.method.value}")
        console.print(f"[bold]maximum[/bold]  {sigma:.10g}")
        console.print(f"[bold]ambiguous[/bold] {'yes' if hist.ambiguous else 'no'}")
        if hist.nudged_edges:
            console.print(f"[yellow]⚠ {len(hist.nudged_edges)} bin edge(s) nudged off eigenvalues[/yellow]")
        if args.out:
            hist.to_csv(args.out)
            console.print(f"Wrote {args.out}")
        return EXIT_OK

    return _guarded(run, args, console)


# ---------------------------------------------------------------------------
# Ensemble commands
# ---------------------------------------------------------------------------

def _load_run(args, tasks: tuple[Task, ...]) -> RunConfig:
    config = load_config(args.config)
    if config.task not in tasks:
        raise ConfigurationError(
            f"Config {config.name} has task {config.task.value}; expected {', '.join(t.value for t in tasks)}"
        )
    if getattr(args, "workers", None):
        config.ensemble = config.ensemble.model_copy(update={"workers": args.workers})
    return config


def _summary_table(console: Console, summaries, title: str) -> None:
    table = Table(show_header=True, header_style="bold", title=title)
    for column in ("L", "U", "W", "mean", "sem", "n", "failed", "excluded"):
        table.add_column(column, justify="right")
    for s in summaries:
        table.add_row(
            str(s.L), f"{s.U:g}", f"{s.W:g}", f"{s.mean:.4f}", f"{s.sem:.4f}",
            str(s.count), str(s.failures), str(s.excluded),
        )
    console.print(table)


def _write_summaries(path: Path, summaries) -> None:
    write_csv(
        path,
        ["L", "U", "W", "observable", "mean", "sem", "count", "failures", "excluded"],
        ([s.L, s.U, s.W, s.observable, s.mean, s.sem, s.count, s.failures, s.excluded] for s in summaries),
    )


def _spectral_command(args, console: Console, task: Task, observables: tuple[str, ...]) -> int:
    config = _load_run(args, (task,))
    out = prepare_run_dir(config, args.out)
    runner = run_eigenstate_ensemble if task == Task.eigenstate else run_gap_ratio_ensemble
    run = runner(config.ensemble, progress=True)
    write_jsonl(out / "records.jsonl", run.records)
    summaries = [s for name in observables for s in run.summary(name)]
    _write_summaries(out / "summary.csv", summaries)
    for name in observables:
        _summary_table(console, run.summary(name), name)
    console.print(f"\nResults in [bold]{out}[/bold]")
    return EXIT_OK


def cmd_eigenstate_scan(args, console: Console | None = None) -> int:
    """Entanglement entropy and number uncertainty at the DOS maximum."""
    console = console or Console()
    return _guarded(
        lambda a, c: _spectral_command(a, c, Task.eigenstate, ("entropy", "number_uncertainty")),
        args, console,
    )


def cmd_gap_ratio(args, console: Console | None = None) -> int:
    """Mean adjacent gap ratio in a window at the DOS maximum."""
    console = console or Console()
    return _guarded(lambda a, c: _spectral_command(a, c, Task.gap_ratio, ("gap_ratio",)), args, console)


def _quench_command(args, console: Console, task: Task) -> int:
    config = _load_run(args, (task,))
    out = prepare_run_dir(config, args.out)
    run = run_quench_ensemble(config.ensemble, progress=True)
    write_jsonl(out / "records.jsonl", run.records)

    table = Table(show_header=True, header_style="bold", title=task.value)
    for column in ("L", "U", "W", "n", "S(t_end)", "T_even(t_end)", "T_odd(t_end)", "light cone", "bond growth"):
        table.add_column(column, justify="right")
    crossings = {}
    for s in run.summaries:
        stem = f"L{s.L}_U{s.U:g}_W{s.W:g}"
        r_values = sorted(s.correlations)
        header = ["t", "S", "S_sem", "T_even", "T_even_sem", "T_odd", "T_odd_sem"] + [f"C_{r}" for r in r_values]
        rows = (
            [s.times[k], s.entropy.mean[k], s.entropy.sem[k], s.T_even.mean[k], s.T_even.sem[k],
             s.T_odd.mean[k], s.T_odd.sem[k], *(s.correlations[r].mean[k] for r in r_values)]
            for k in range(len(s.times))
        )
        write_csv(out / f"curves_{stem}.csv", header, rows)
        crossings[stem] = {"crossings": s.crossings, "spacing": s.spacing, "bond_growth": s.bond_growth}
        last = int(np.flatnonzero(np.isfinite(s.entropy.mean))[-1])
        table.add_row(
            str(s.L), f"{s.U:g}", f"{s.W:g}", str(s.count),
            f"{s.entropy.mean[last]:.4f}", f"{s.T_even.mean[last]:.4f}", f"{s.T_odd.mean[last]:.4f}",
            s.spacing, s.bond_growth or "-",
        )
    write_json(out / "crossings.json", crossings)

    if task == Task.quench_mps:
        write_csv(
            out / "bonds.csv",
            ["L", "U", "W", "realization", "t", "max_bond"],
            (
                [r.L, r.U, r.W, r.realization, t, D]
                for r in run.records if r.status == "ok"
                for t, D in zip(r.bond_times, r.max_bond)
            ),
        )
    console.print(table)
    console.print(f"\nResults in [bold]{out}[/bold]")
    return EXIT_OK


def cmd_quench_ed(args, console: Console | None = None) -> int:
    """Neel-state quench ensembles with the Krylov propagator."""
    console = console or Console()
    return _guarded(lambda a, c: _quench_command(a, c, Task.quench_ed), args, console)


def cmd_quench_mps(args, console: Console | None = None) -> int:
    """Neel-state quench ensembles with TEBD."""
    console = console or Console()
    return _guarded(lambda a, c: _quench_command(a, c, Task.quench_mps), args, console)


def cmd_collapse(args, console: Console | None = None) -> int:
    """Finite-size scaling fit of a records file."""
    console = console or Console()

    def run(args, console):
        path = Path(args.records)
        records = [EnsembleRecord.model_validate(row) for row in read_jsonl(path)]
        fit = finite_size_collapse(records, args.observable, U=args.U)
        console.print(
            f"[bold]{fit.observable}[/bold] U={fit.U:g}: "
            f"W_c = {fit.W_c:.3f} ± {fit.W_c_sd:.3f}, ν = {fit.nu:.3f} ± {fit.nu_sd:.3f} "
            f"(sizes {fit.sizes}, cost {fit.cost:.3g})"
        )
        out = Path(args.out) if args.out else path.with_name(f"collapse_{args.observable}.json")
        write_json(out, fit)
        console.print(f"Wrote {out}")
        return EXIT_OK

    return _guarded(run, args, console)


def cmd_phase_diagram(args, console: Console | None = None) -> int:
    """Critical disorder W_c(U) from collapses of S and F at every U."""
    console = console or Console()

    def run(args, console):
        config = _load_run(args, (Task.phase_diagram,))
        out = prepare_run_dir(config, args.out)
        ensemble, fits, table_rows = run_phase_diagram(config.ensemble, progress=True)
        write_jsonl(out / "records.jsonl", ensemble.records)
        write_json(out / "fits.json", {f"{U:g}": pair for U, pair in fits.items()})
        write_csv(
            out / "phase_diagram.csv",
            ["U", "W_c", "error", "W_c_entropy", "W_c_number_uncertainty"],
            ([p.U, p.W_c, p.error, p.W_c_entropy, p.W_c_number_uncertainty] for p in table_rows),
        )
        table = Table(show_header=True, header_style="bold", title="Phase diagram")
        for column in ("U", "W_c", "±", "W_c(S)", "W_c(F)"):
            table.add_column(column, justify="right")
        for p in table_rows:
            table.add_row(f"{p.U:g}", f"{p.W_c:.3f}", f"{p.error:.3f}",
                          f"{p.W_c_entropy:.3f}", f"{p.W_c_number_uncertainty:.3f}")
        console.print(table)
        console.print(f"\nResults in [bold]{out}[/bold]")
        return EXIT_OK

    return _guarded(run, args, console)


# ---------------------------------------------------------------------------
# Config commands
# ---------------------------------------------------------------------------

def cmd_validate(args, console: Console | None = None) -> int:
    """Validate one or more run configs. Returns 0 if all valid, 2 otherwise."""
    console = console or Console()
    valid = 0
    invalid = 0

    for path in args.configs:
        try:
            config = load_config(path)
            console.print(
                f"  [green]✓[/green] {config.name} — {config.task.value}, "
                f"{len(config.ensemble.cells())} cell(s) x {config.ensemble.realizations} realization(s)"
            )
            valid += 1
        except ValidationError as e:
            _report_validation(console, str(path), e)
            invalid += 1
        except Exception as e:
            console.print(f"  [red]✗[/red] {path}: {e}")
            invalid += 1

    if invalid == 0:
        console.print(f"\nAll {valid} config(s) valid")
    else:
        console.print(f"\n{valid} valid, {invalid} invalid")

    return EXIT_OK if invalid == 0 else EXIT_VALIDATION


def cmd_list(args, console: Console | None = None) -> int:
    """List bundled configs, or the grid of the given config files."""
    console = console or Console()

    if not args.configs:
        names = bundled_configs()
        if names:
            console.print("[bold]Bundled configs:[/bold]\n")
            for name in names:
                console.print(f"  {name}")
        else:
            console.print("[dim]No bundled configs found.[/dim]")
        return EXIT_OK

    table = Table(show_header=True, header_style="bold")
    table.add_column("Config")
    table.add_column("Task")
    table.add_column("Sizes")
    table.add_column("U")
    table.add_column("Disorder")
    table.add_column("Realizations", justify="right")

    for path in args.configs:
        try:
            config = load_config(path)
        except (ValidationError, OSError, ValueError) as e:
            console.print(f"[red]Error loading config:[/red] {path}: {e}")
            return EXIT_VALIDATION
        spec = config.ensemble
        W = spec.W
        table.add_row(
            config.name,
            config.task.value,
            ", ".join(str(L) for L in spec.sizes),
            ", ".join(f"{u:g}" for u in spec.U),
            f"{spec.disorder.kind.value} {W[0]:g}..{W[-1]:g} ({len(W)})",
            str(spec.realizations),
        )

    console.print(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--L", type=int, required=True, help="Number of sites")
    parser.add_argument("--N", type=int, required=True, help="Number of bosons")
    parser.add_argument("--U", type=float, default=0.0, help="Attractive interaction (default: 0)")
    parser.add_argument("--U2", type=float, default=0.0, help="Higher-order anharmonicity (default: 0)")
    parser.add_argument("--J2", type=float, default=0.0, help="Next-nearest-neighbour hopping (default: 0)")
    parser.add_argument("--W", type=float, default=0.0, help="Disorder strength W, B or delta (default: 0)")
    parser.add_argument("--disorder", choices=[k.value for k in DisorderKind], default="uniform")
    parser.add_argument("--n-max", type=int, default=None, help="Occupation cap per site")
    parser.add_argument("--seed", type=int, default=0, help="Realization seed (default: 0)")
    parser.add_argument("--out", default=None, help="CSV output path")


def _add_run_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", metavar="CONFIG")
    parser.add_argument("--out", default=None, help="Output directory (default: output.directory)")
    parser.add_argument("--workers", type=int, default=None, help="Worker processes")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default="WARNING", help="Logging level"
    )

    parser = argparse.ArgumentParser(
        prog="bosechain",
        description="Disordered attractive Bose-Hubbard chain: eigenstate and quench studies",
    )
    parser.add_argument("--version", action="version", version=f"bosechain {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    p_dims = subparsers.add_parser("dims", parents=[common], help="Fock sector dimension")
    p_dims.add_argument("L", type=int)
    p_dims.add_argument("N", type=int)
    p_dims.add_argument("--n-max", type=int, default=None)
    p_dims.set_defaults(handler=cmd_dims)

    p_spectrum = subparsers.add_parser("spectrum", parents=[common], help="Full spectrum of one realization")
    _add_model_args(p_spectrum)
    p_spectrum.set_defaults(handler=cmd_spectrum)

    p_dos = subparsers.add_parser("dos", parents=[common], help="Density of states of one realization")
    _add_model_args(p_dos)
    p_dos.add_argument("--bins", type=int, default=100)
    p_dos.add_argument("--method", choices=[m.value for m in DosMethod], default="auto")
    p_dos.add_argument("--p", type=int, default=50, help="Chebyshev expansion order")
    p_dos.add_argument("--nv", type=int, default=30, help="Chebyshev random vectors")
    p_dos.set_defaults(handler=cmd_dos)

    for name, handler, text in (
        ("eigenstate-scan", cmd_eigenstate_scan, "S and F ensemble at the DOS maximum"),
        ("gap-ratio", cmd_gap_ratio, "Mean gap ratio ensemble"),
        ("quench-ed", cmd_quench_ed, "Krylov quench ensemble"),
        ("quench-mps", cmd_quench_mps, "TEBD quench ensemble"),
        ("phase-diagram", cmd_phase_diagram, "W_c(U) from finite-size collapses"),
    ):
        p_run = subparsers.add_parser(name, parents=[common], help=text)
        _add_run_args(p_run)
        p_run.set_defaults(handler=handler)

    p_collapse = subparsers.add_parser("collapse", parents=[common], help="Scaling collapse of a records file")
    p_collapse.add_argument("records", metavar="RECORDS")
    p_collapse.add_argument("--observable", choices=["entropy", "number_uncertainty"], required=True)
    p_collapse.add_argument("--U", type=float, default=None)
    p_collapse.add_argument("--out", default=None, help="JSON output path")
    p_collapse.set_defaults(handler=cmd_collapse)

    p_validate = subparsers.add_parser("validate", parents=[common], help="Validate config file(s)")
    p_validate.add_argument("configs", nargs="+", metavar="CONFIG")
    p_validate.set_defaults(handler=cmd_validate)

    p_list = subparsers.add_parser("list", parents=[common], help="List bundled configs or config grids")
    p_list.add_argument("configs", nargs="*", metavar="CONFIG")
    p_list.set_defaults(handler=cmd_list)

    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv if argv is not None else sys.argv[1:])
    logger.setLevel(getattr(logging, args.log_level))
    sys.exit(args.handler(args))


if __name__ == "__main__":
    main()
