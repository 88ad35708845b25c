"""
Disorder ensembles, finite-size scaling and the phase diagram.

Work is split into (cell, realization) tasks. Each task derives its own
seed from (master_seed, L, realization), so the same disorder shape is
reused across U and W and results do not depend on scheduling. Tasks run
serially or on a process pool and are re-sorted before any reduction.
"""

import concurrent.futures
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn
from scipy.optimize import minimize

from bosechain import __version__
from bosechain.basis import enumerate_sector, neel_occupations, fock_state
from bosechain.config import CollapseConfig, EnsembleSpec, Task
from bosechain.dos import DosMethod, dos_histogram, dos_maximum, spectrum_histogram
from bosechain.errors import (
    BosechainError,
    CollapseError,
    ConfigurationError,
    FailureBudgetExceeded,
    NumericalError,
)
from bosechain.krylov import evolve, sector_measure
from bosechain.model import build_hamiltonian, derive_seed, sample_disorder
from bosechain.mps import fit_bond_growth, mps_from_product, pair_hamiltonians, tebd_evolve
from bosechain.observables import (
    crossing_spacing,
    entanglement_entropy,
    gap_ratio_mean,
    number_uncertainty,
    parity_fluctuations,
    reference_crossing_times,
    schmidt_spectrum,
)
from bosechain.spectral import (
    DENSE_LIMIT,
    extremal_eigenvalues,
    full_diagonalize,
    normalized_energy,
    shift_invert_eigenpairs,
)

logger = logging.getLogger("bosechain.pipeline")

KRYLOV_MAX_L = 14
OBSERVABLES = ("entropy", "number_uncertainty", "gap_ratio")
Status = Literal["ok", "failed", "excluded"]


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

class EnsembleRecord(BaseModel):
    """One realization of an eigenstate or gap-ratio cell."""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    task: Task
    L: int
    N: int
    U: float
    W: float
    realization: int
    seed: int
    status: Status = "ok"
    error: str | None = None
    values: dict[str, float] = Field(default_factory=dict)
    ambiguous: bool = False
    dos_method: str | None = None
    version: str = __version__

    @property
    def cell(self) -> tuple[int, float, float]:
        return (self.L, self.U, self.W)


class QuenchRecord(BaseModel):
    """Per-realization curves of a quench (NaN after an early stop)."""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    task: Task
    L: int
    U: float
    W: float
    realization: int
    seed: int
    status: Status = "ok"
    error: str | None = None
    times: list[float] = Field(default_factory=list)
    entropy: list[float] = Field(default_factory=list)
    T_even: list[float] = Field(default_factory=list)
    T_odd: list[float] = Field(default_factory=list)
    correlations: dict[int, list[float]] = Field(default_factory=dict)
    bond_times: list[float] = Field(default_factory=list)
    max_bond: list[int] = Field(default_factory=list)
    saturated_at: float | None = None
    norm_drift: float = 0.0
    energy_drift: float = 0.0
    discarded_weight: float = 0.0
    version: str = __version__


class CellSummary(BaseModel):
    """Ensemble mean and standard error of one observable in one cell."""
    L: int
    U: float
    W: float
    observable: str
    mean: float
    sem: float
    count: int
    failures: int
    excluded: int


class ScalingFit(BaseModel):
    """Collapse of y(L, W) onto g[L^(1/nu) (W - W_c)]."""
    observable: str
    U: float
    W_c: float
    nu: float = Field(gt=0)
    cost: float
    W_c_sd: float = float("nan")
    nu_sd: float = float("nan")
    sizes: list[int]
    n_boot: int = 0


class PhasePoint(BaseModel):
    U: float
    W_c: float
    error: float
    W_c_entropy: float
    W_c_number_uncertainty: float


# ---------------------------------------------------------------------------
# Scheduling
# ---------------------------------------------------------------------------

def _execute(
    fn: Callable[..., Any],
    tasks: Sequence[tuple],
    workers: int,
    label: str,
    progress: bool = False,
) -> list[Any]:
    """Run ``fn(*task)`` for every task; results come back in task order."""
    results: list[Any] = [None] * len(tasks)
    columns = (
        TextColumn("[bold]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
    )
    with Progress(*columns, console=Console(stderr=True), disable=not progress, transient=True) as bar:
        handle = bar.add_task(label, total=len(tasks))
        if workers <= 1:
            for i, task in enumerate(tasks):
                results[i] = fn(*task)
                bar.advance(handle)
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
                future_to_index = {executor.submit(fn, *task): i for i, task in enumerate(tasks)}
                for future in concurrent.futures.as_completed(future_to_index):
                    results[future_to_index[future]] = future.result()
                    bar.advance(handle)
    return results


def _check_budget(records: Sequence[EnsembleRecord | QuenchRecord], budget: float) -> None:
    by_cell: dict[tuple, list] = defaultdict(list)
    for record in records:
        by_cell[(record.L, record.U, record.W)].append(record)
    for cell, group in sorted(by_cell.items()):
        failed = sum(r.status == "failed" for r in group)
        if failed:
            logger.warning("Cell L=%d U=%g W=%g: %d of %d realizations failed", *cell, failed, len(group))
        if failed > budget * len(group):
            raise FailureBudgetExceeded(
                f"Cell L={cell[0]} U={cell[1]} W={cell[2]}: {failed}/{len(group)} realizations failed "
                f"(budget {budget:.0%})"
            )


# ---------------------------------------------------------------------------
# Eigenstate and gap-ratio ensembles
# ---------------------------------------------------------------------------

def _eigenstate_realization(spec: EnsembleSpec, L: int, U: float, W: float, realization: int) -> EnsembleRecord:
    N = spec.particles(L)
    seed = derive_seed(spec.master_seed, L, realization)
    record = EnsembleRecord(task=spec.task, L=L, N=N, U=U, W=W, realization=realization, seed=seed)
    try:
        sector = enumerate_sector(L, N, spec.n_max)
        params = spec.params(L, U)
        disorder = sample_disorder(spec.disorder_at(W), L, seed, params)
        H = build_hamiltonian(params, disorder, sector)
        k = 1 if spec.task == Task.eigenstate else min(spec.window, sector.dim)

        method = DosMethod(spec.dos_method)
        if sector.dim <= DENSE_LIMIT and method in (DosMethod.auto, DosMethod.full_ed):
            full = full_diagonalize(H)
            bounds = (float(full.values[0]), float(full.values[-1]))
            hist = spectrum_histogram(full.values, spec.n_bins, bounds)
            sigma = dos_maximum(hist)
            pairs = full.nearest(sigma, k)
        else:
            bounds = extremal_eigenvalues(H)
            chebyshev = spec.chebyshev.model_copy(update={"seed": derive_seed(seed, 1)})
            hist = dos_histogram(H, spec.n_bins, method, chebyshev, bounds=bounds)
            sigma = dos_maximum(hist)
            pairs = shift_invert_eigenpairs(H, sigma, k, bounds=bounds)

        record.ambiguous = hist.ambiguous
        record.dos_method = hist.method.value
        record.values["sigma"] = sigma
        record.values["span"] = bounds[1] - bounds[0]
        if spec.task == Task.eigenstate:
            pair = pairs[0]
            record.values["energy"] = pair.value
            record.values["normalized_energy"] = float(normalized_energy(pair.value, *bounds))
            record.values["residual"] = pair.residual
            record.values["entropy"] = entanglement_entropy(schmidt_spectrum(sector, pair.vector, L // 2))
            record.values["number_uncertainty"] = number_uncertainty(sector, pair.vector, L // 2)
        else:
            window = np.sort([p.value for p in pairs])
            record.values["gap_ratio"] = gap_ratio_mean(window, span=bounds[1] - bounds[0])
            record.values["normalized_energy"] = float(normalized_energy(window.mean(), *bounds))
    except (BosechainError, RuntimeError, np.linalg.LinAlgError) as exc:
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
    return record


def _exclude_ambiguous(records: list[EnsembleRecord]) -> None:
    """Drop a realization from every W cell of its (L, U) when any of them was ambiguous."""
    flagged = {(r.L, r.U, r.realization) for r in records if r.status == "ok" and r.ambiguous}
    for record in records:
        if record.status == "ok" and (record.L, record.U, record.realization) in flagged:
            record.status = "excluded"
    if flagged:
        logger.warning("Excluded %d ambiguous (L, U, realization) triples across all W", len(flagged))


@dataclass
class EnsembleRun:
    """Records of a finished ensemble with per-cell reductions."""
    spec: EnsembleSpec
    records: list[EnsembleRecord]

    def summary(self, observable: str) -> list[CellSummary]:
        return summarize(self.records, observable)


def _run_spectral_ensemble(spec: EnsembleSpec, progress: bool) -> EnsembleRun:
    tasks = [(spec, L, U, W, i) for (L, U, W) in spec.cells() for i in range(spec.realizations)]
    logger.info(
        "Running [bold]%s[/bold] ensemble: %d cells x %d realizations on %d worker(s)",
        spec.task.value, len(spec.cells()), spec.realizations, spec.workers,
        extra={"markup": True},
    )
    records = _execute(_eigenstate_realization, tasks, spec.workers, spec.task.value, progress)
    _check_budget(records, spec.failure_budget)
    if spec.exclude_ambiguous:
        _exclude_ambiguous(records)
    return EnsembleRun(spec, records)


def run_eigenstate_ensemble(spec: EnsembleSpec, progress: bool = False) -> EnsembleRun:
    """S and F of the eigenstate nearest the DOS maximum, per realization."""
    return _run_spectral_ensemble(spec.model_copy(update={"task": Task.eigenstate}), progress)


def run_gap_ratio_ensemble(spec: EnsembleSpec, progress: bool = False) -> EnsembleRun:
    """Mean gap ratio over the window of levels nearest the DOS maximum."""
    return _run_spectral_ensemble(spec.model_copy(update={"task": Task.gap_ratio}), progress)


def summarize(records: Sequence[EnsembleRecord], observable: str) -> list[CellSummary]:
    """Mean and standard error per (L, U, W) over successful realizations."""
    groups: dict[tuple, list[EnsembleRecord]] = defaultdict(list)
    for record in records:
        groups[record.cell].append(record)
    summaries = []
    for (L, U, W), group in sorted(groups.items()):
        group = sorted(group, key=lambda r: r.realization)
        values = np.array([r.values[observable] for r in group if r.status == "ok" and observable in r.values])
        n = len(values)
        summaries.append(CellSummary(
            L=L, U=U, W=W, observable=observable,
            mean=float(values.mean()) if n else float("nan"),
            sem=float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
            count=n,
            failures=sum(r.status == "failed" for r in group),
            excluded=sum(r.status == "excluded" for r in group),
        ))
    return summaries


# ---------------------------------------------------------------------------
# Finite-size collapse
# ---------------------------------------------------------------------------

ScalingPoints = dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]


def _points_from_samples(samples: dict[tuple[int, float], np.ndarray]) -> ScalingPoints:
    by_size: dict[int, list[tuple[float, float, float]]] = defaultdict(list)
    for (L, W), values in sorted(samples.items()):
        if values.size == 0:
            continue
        sem = values.std(ddof=1) / math.sqrt(values.size) if values.size > 1 else float("nan")
        by_size[L].append((W, float(values.mean()), sem))
    points = {}
    for L, rows in by_size.items():
        arr = np.array(rows)
        points[L] = (arr[:, 0], arr[:, 1], arr[:, 2])
    return points


def collapse_cost(points: ScalingPoints, W_c: float, nu: float) -> float:
    """Inverse-variance weighted deviation of every size from the master curve of the others.

    The master curve for size L is the piecewise-linear interpolation of the
    pooled, x-sorted points of all other sizes. Each size contributes its own
    weighted mean with equal weight; only points inside the master curve's
    range count. The cost is inf when no size overlaps the others.
    """
    if nu <= 0:
        return math.inf
    scaled = {L: (L ** (1.0 / nu) * (W - W_c), y, err) for L, (W, y, err) in points.items()}
    finite = np.concatenate([e[np.isfinite(e) & (e > 0)] for _, _, e in scaled.values()])
    fallback = float(np.median(finite)) if finite.size else 1.0
    variance = {L: np.where(np.isfinite(e) & (e > 0), e, fallback) ** 2 for L, (_, _, e) in scaled.items()}

    per_size = []
    for L, (x, y, _) in scaled.items():
        others = [other for other in scaled if other != L]
        xo = np.concatenate([scaled[o][0] for o in others])
        yo = np.concatenate([scaled[o][1] for o in others])
        vo = np.concatenate([variance[o] for o in others])
        order = np.argsort(xo, kind="stable")
        xo, yo, vo = xo[order], yo[order], vo[order]
        inside = (x >= xo[0]) & (x <= xo[-1])
        if not np.any(inside):
            continue
        master = np.interp(x[inside], xo, yo)
        w = 1.0 / (variance[L][inside] + np.interp(x[inside], xo, vo))
        per_size.append(float(np.sum(w * (y[inside] - master) ** 2) / np.sum(w)))
    return float(np.mean(per_size)) if per_size else math.inf


def _fit_points(
    points: ScalingPoints, cfg: CollapseConfig, start: tuple[float, float] | None = None
) -> tuple[float, float, float]:
    W_all = np.concatenate([W for W, _, _ in points.values()])
    W_lo, W_hi = float(W_all.min()), float(W_all.max())

    def objective(theta: np.ndarray) -> float:
        W_c, nu = theta
        if not (W_lo <= W_c <= W_hi and cfg.nu_min <= nu <= cfg.nu_max):
            return 1e300
        cost = collapse_cost(points, W_c, nu)
        return cost if math.isfinite(cost) else 1e300

    if start is None:
        best = (math.inf, W_lo, cfg.nu_min)
        for W_c in np.linspace(W_lo, W_hi, cfg.grid_points):
            for nu in np.geomspace(cfg.nu_min, cfg.nu_max, cfg.grid_points):
                cost = objective(np.array([W_c, nu]))
                if cost < best[0]:
                    best = (cost, float(W_c), float(nu))
        if best[0] >= 1e300:
            raise CollapseError("Scaled data of different sizes never overlap")
        start = (best[1], best[2])

    result = minimize(objective, np.array(start), method="Nelder-Mead",
                      options={"xatol": 1e-4, "fatol": 1e-10, "maxiter": 2000})
    W_c, nu = (float(v) for v in result.x)
    cost = float(result.fun)
    if cost >= 1e300:
        raise CollapseError("Collapse optimizer left the admissible region")
    return W_c, nu, cost


def _collapse_samples(
    records: Sequence[EnsembleRecord], observable: str, U: float | None
) -> tuple[float, dict[tuple[int, float], np.ndarray]]:
    if observable not in OBSERVABLES:
        raise ConfigurationError(f"Unknown observable {observable!r}; expected one of {OBSERVABLES}")
    U_values = sorted({r.U for r in records})
    if U is None:
        if len(U_values) != 1:
            raise ConfigurationError(f"Records span several U values {U_values}; choose one")
        U = U_values[0]
    samples: dict[tuple[int, float], list[tuple[int, float]]] = defaultdict(list)
    for r in records:
        if r.U == U and r.status == "ok" and observable in r.values:
            samples[(r.L, r.W)].append((r.realization, r.values[observable]))
    ordered = {key: np.array([v for _, v in sorted(rows)]) for key, rows in sorted(samples.items())}
    return U, ordered


def finite_size_collapse(
    records: Sequence[EnsembleRecord],
    observable: str,
    cfg: CollapseConfig | None = None,
    U: float | None = None,
) -> ScalingFit:
    """Fit (W_c, nu) by grid search plus Nelder-Mead, with a bootstrap over realizations."""
    cfg = cfg or CollapseConfig()
    U, samples = _collapse_samples(records, observable, U)
    points = _points_from_samples(samples)
    if len(points) < 2:
        raise CollapseError(f"Collapse needs at least two system sizes, got {sorted(points)}")
    short = [L for L, (W, _, _) in points.items() if len(W) < 5]
    if short:
        raise CollapseError(f"Sizes {short} have fewer than five disorder strengths")

    W_c, nu, cost = _fit_points(points, cfg)
    W_all = np.concatenate([W for W, _, _ in points.values()])
    if not W_all.min() <= W_c <= W_all.max():
        raise CollapseError(f"W_c={W_c} outside the scanned range")

    boot = []
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    for _ in range(cfg.n_boot):
        resampled = {key: v[rng.integers(0, v.size, v.size)] for key, v in samples.items()}
        try:
            boot.append(_fit_points(_points_from_samples(resampled), cfg, start=(W_c, nu))[:2])
        except CollapseError:
            continue
    boot_arr = np.array(boot) if boot else np.full((1, 2), np.nan)
    fit = ScalingFit(
        observable=observable,
        U=U,
        W_c=W_c,
        nu=nu,
        cost=cost,
        W_c_sd=float(np.std(boot_arr[:, 0], ddof=1)) if len(boot) > 1 else float("nan"),
        nu_sd=float(np.std(boot_arr[:, 1], ddof=1)) if len(boot) > 1 else float("nan"),
        sizes=sorted(points),
        n_boot=len(boot),
    )
    logger.info(
        "Collapse [bold]%s[/bold] at U=%g: W_c=%.3f +- %.3f, nu=%.3f +- %.3f",
        observable, U, fit.W_c, fit.W_c_sd, fit.nu, fit.nu_sd,
        extra={"markup": True},
    )
    return fit


def build_phase_diagram(U_grid: Sequence[float], fits: dict[float, dict[str, ScalingFit]]) -> list[PhasePoint]:
    """W_c(U) as the mean of the entropy and number-uncertainty fits, error half their difference."""
    table = []
    for U in U_grid:
        pair = fits.get(U, {})
        missing = [name for name in ("entropy", "number_uncertainty") if name not in pair]
        if missing:
            raise ConfigurationError(f"Missing {', '.join(missing)} fit at U={U}")
        a, b = pair["entropy"].W_c, pair["number_uncertainty"].W_c
        table.append(PhasePoint(
            U=U, W_c=0.5 * (a + b), error=0.5 * abs(a - b),
            W_c_entropy=a, W_c_number_uncertainty=b,
        ))
    return table


def run_phase_diagram(
    spec: EnsembleSpec, progress: bool = False
) -> tuple[EnsembleRun, dict[float, dict[str, ScalingFit]], list[PhasePoint]]:
    """Eigenstate ensembles over the full U grid, both collapses per U, and the table."""
    run = run_eigenstate_ensemble(spec, progress)
    fits: dict[float, dict[str, ScalingFit]] = {}
    for U in spec.U:
        fits[U] = {
            name: finite_size_collapse(run.records, name, spec.collapse, U=U)
            for name in ("entropy", "number_uncertainty")
        }
    return run, fits, build_phase_diagram(spec.U, fits)


# ---------------------------------------------------------------------------
# Quench ensembles
# ---------------------------------------------------------------------------

def _pad(values: np.ndarray, length: int) -> list[float]:
    out = np.full(length, np.nan)
    out[: len(values)] = values
    return out.tolist()


def _quench_realization(spec: EnsembleSpec, L: int, U: float, W: float, realization: int) -> QuenchRecord:
    seed = derive_seed(spec.master_seed, L, realization)
    record = QuenchRecord(task=spec.task, L=L, U=U, W=W, realization=realization, seed=seed)
    times = spec.times.grid()
    record.times = times.tolist()
    occupations = neel_occupations(L)
    params = spec.params(L, U)
    try:
        disorder = sample_disorder(spec.disorder_at(W), L, seed, params)
        if spec.task == Task.quench_ed:
            sector = enumerate_sector(L, sum(occupations), spec.n_max)
            H = build_hamiltonian(params, disorder, sector)
            trajectory = evolve(
                H, fock_state(sector, occupations), times, spec.krylov,
                sector_measure(sector, (L // 2,), spec.r_max), cuts=(L // 2,),
            )
            record.norm_drift = trajectory.norm_drift
            record.energy_drift = trajectory.energy_drift
        else:
            state = mps_from_product(occupations, spec.tebd.n_max, conserve=spec.tebd.conserve)
            terms = pair_hamiltonians(params, disorder, spec.tebd.n_max)
            trajectory, bonds = tebd_evolve(state, terms, spec.tebd, times, (L // 2,), spec.r_max)
            record.bond_times = bonds.times
            record.max_bond = bonds.max_bond
            record.saturated_at = bonds.saturated_at
            record.discarded_weight = trajectory.discarded_weight

        T_even, T_odd = parity_fluctuations(trajectory, tail_fraction=spec.tail_fraction)
        length = len(times)
        record.entropy = _pad(trajectory.entropy(L // 2), length)
        record.T_even = _pad(T_even, length)
        record.T_odd = _pad(T_odd, length)
        record.correlations = {r: _pad(trajectory.correlation(r)[1], length) for r in sorted(trajectory.correlations)}
    except (BosechainError, RuntimeError, np.linalg.LinAlgError) as exc:
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
    return record


class CurveStats(BaseModel):
    mean: list[float]
    sem: list[float]


class QuenchSummary(BaseModel):
    """Ensemble-averaged quench curves of one (L, U, W) cell."""
    L: int
    U: float
    W: float
    count: int
    failures: int
    times: list[float]
    entropy: CurveStats
    T_even: CurveStats
    T_odd: CurveStats
    correlations: dict[int, CurveStats]
    crossings: dict[int, float]
    spacing: str
    bond_growth: str | None = None


def _curve_stats(rows: list[list[float]]) -> CurveStats:
    arr = np.array(rows, dtype=np.float64)
    count = np.sum(np.isfinite(arr), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, np.nansum(arr, axis=0) / np.maximum(count, 1), np.nan)
        sd = np.sqrt(np.nansum((arr - mean) ** 2, axis=0) / np.maximum(count - 1, 1))
        sem = np.where(count > 1, sd / np.sqrt(np.maximum(count, 1)), np.nan)
    return CurveStats(mean=mean.tolist(), sem=sem.tolist())


def summarize_quench(records: Sequence[QuenchRecord], reference: float = 1e-2) -> list[QuenchSummary]:
    groups: dict[tuple, list[QuenchRecord]] = defaultdict(list)
    for record in records:
        groups[(record.L, record.U, record.W)].append(record)
    summaries = []
    for (L, U, W), group in sorted(groups.items()):
        ok = sorted((r for r in group if r.status == "ok"), key=lambda r: r.realization)
        if not ok:
            raise NumericalError(f"No successful quench realizations in cell L={L} U={U} W={W}")
        times = ok[0].times
        correlations = {r: _curve_stats([rec.correlations[r] for rec in ok]) for r in sorted(ok[0].correlations)}
        crossings = reference_crossing_times(
            np.array(times), {r: np.array(c.mean) for r, c in correlations.items()}, reference
        )
        bond_growth = None
        if ok[0].max_bond:
            n = min(len(r.max_bond) for r in ok)
            mean_bond = np.mean([r.max_bond[:n] for r in ok], axis=0)
            try:
                bond_growth = fit_bond_growth(ok[0].bond_times[:n], mean_bond).preferred
            except ConfigurationError:
                bond_growth = None
        summaries.append(QuenchSummary(
            L=L, U=U, W=W, count=len(ok), failures=len(group) - len(ok), times=times,
            entropy=_curve_stats([r.entropy for r in ok]),
            T_even=_curve_stats([r.T_even for r in ok]),
            T_odd=_curve_stats([r.T_odd for r in ok]),
            correlations=correlations,
            crossings=crossings,
            spacing=crossing_spacing(crossings).kind,
            bond_growth=bond_growth,
        ))
    return summaries


@dataclass
class QuenchRun:
    spec: EnsembleSpec
    records: list[QuenchRecord]
    summaries: list[QuenchSummary]


def run_quench_ensemble(spec: EnsembleSpec, progress: bool = False) -> QuenchRun:
    """Neel-state quenches for every cell with Krylov (ED) or TEBD (MPS)."""
    if spec.task not in (Task.quench_ed, Task.quench_mps):
        raise ConfigurationError(f"Task {spec.task.value} is not a quench")
    if spec.task == Task.quench_ed and max(spec.sizes) > KRYLOV_MAX_L:
        raise ConfigurationError(
            f"quench_ed supports L <= {KRYLOV_MAX_L}; use quench_mps for L={max(spec.sizes)}"
        )
    tasks = [(spec, L, U, W, i) for (L, U, W) in spec.cells() for i in range(spec.realizations)]
    logger.info(
        "Running [bold]%s[/bold]: %d cells x %d realizations on %d worker(s)",
        spec.task.value, len(spec.cells()), spec.realizations, spec.workers,
        extra={"markup": True},
    )
    records = _execute(_quench_realization, tasks, spec.workers, spec.task.value, progress)
    _check_budget(records, spec.failure_budget)
    return QuenchRun(spec, records, summarize_quench(records, spec.reference))
