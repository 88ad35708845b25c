"""
Eigenstate and dynamical observables.

State vectors are amplitudes over a BasisSector. Entanglement uses a
Schmidt decomposition that is block diagonal in the particle number of the
left subsystem; number-resolved quantities are diagonal in the Fock basis
and need only |psi|^2.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.integrate import trapezoid

from bosechain.basis import BasisSector, enumerate_sector
from bosechain.errors import ConfigurationError

logger = logging.getLogger("bosechain.observables")

NORM_TOLERANCE = 1e-8
GAP_CUTOFF = 1e-13
STATIONARITY_FRACTION = 0.3
STATIONARITY_TOLERANCE = 0.02


# ---------------------------------------------------------------------------
# Entanglement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BipartiteSpectrum:
    """Schmidt values across the bond after site ``cut`` (sites [0, cut) vs [cut, L))."""
    cut: int
    schmidt_values: np.ndarray

    def __post_init__(self) -> None:
        weight = float(np.sum(self.schmidt_values ** 2))
        if abs(weight - 1.0) > 1e-10:
            raise ConfigurationError(f"Schmidt weights sum to {weight}, expected 1")

    @property
    def probabilities(self) -> np.ndarray:
        return self.schmidt_values ** 2


def _check_state(sector: BasisSector, state: np.ndarray) -> np.ndarray:
    psi = np.asarray(state)
    if psi.shape != (sector.dim,):
        raise ConfigurationError(f"State has shape {psi.shape}, sector dim is {sector.dim}")
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise ConfigurationError(f"State is not normalized (norm={norm:.12g})")
    return psi / norm


def _check_cut(L: int, cut: int) -> None:
    if not 1 <= cut < L:
        raise ConfigurationError(f"Cut must satisfy 1 <= cut < L={L}, got {cut}")


def schmidt_spectrum(sector: BasisSector, state: np.ndarray, cut: int) -> BipartiteSpectrum:
    """Schmidt values of a sector state, computed block by block in N_A."""
    _check_cut(sector.L, cut)
    psi = _check_state(sector, state)
    states = sector.states
    n_left = states[:, :cut].sum(axis=1)
    cap = sector.n_max
    values = []
    for q in np.unique(n_left):
        rows = np.flatnonzero(n_left == q)
        left = enumerate_sector(cut, int(q), cap)
        right = enumerate_sector(sector.L - cut, sector.N - int(q), cap)
        block = np.zeros((left.dim, right.dim), dtype=psi.dtype)
        block[left.rank_many(states[rows, :cut]), right.rank_many(states[rows, cut:])] = psi[rows]
        values.append(np.linalg.svd(block, compute_uv=False))
    schmidt = np.sort(np.concatenate(values))[::-1]
    return BipartiteSpectrum(cut, schmidt)


def schmidt_spectrum_unblocked(sector: BasisSector, state: np.ndarray, cut: int) -> BipartiteSpectrum:
    """Schmidt values from one dense reshape over the full local product space."""
    _check_cut(sector.L, cut)
    psi = _check_state(sector, state)
    d = sector.n_max + 1
    states = sector.states
    left_weights = d ** np.arange(cut - 1, -1, -1)
    right_weights = d ** np.arange(sector.L - cut - 1, -1, -1)
    matrix = np.zeros((d ** cut, d ** (sector.L - cut)), dtype=psi.dtype)
    matrix[states[:, :cut] @ left_weights, states[:, cut:] @ right_weights] = psi
    schmidt = np.linalg.svd(matrix, compute_uv=False)
    return BipartiteSpectrum(cut, np.sort(schmidt)[::-1])


def entanglement_entropy(spectrum: BipartiteSpectrum | np.ndarray) -> float:
    """von Neumann entropy S = -sum lambda^2 ln lambda^2 in nats."""
    values = spectrum.schmidt_values if isinstance(spectrum, BipartiteSpectrum) else np.asarray(spectrum)
    p = values ** 2
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def number_uncertainty(sector: BasisSector, state: np.ndarray, cut: int | None = None) -> float:
    """Variance of the particle number on the first ``cut`` sites (default L // 2)."""
    cut = sector.L // 2 if cut is None else cut
    _check_cut(sector.L, cut)
    p = np.abs(_check_state(sector, state)) ** 2
    n_left = sector.states[:, :cut].sum(axis=1).astype(np.float64)
    mean = p @ n_left
    return float(max(p @ n_left ** 2 - mean ** 2, 0.0))


# ---------------------------------------------------------------------------
# Level statistics
# ---------------------------------------------------------------------------

def gap_ratios(values: Sequence[float], span: float | None = None) -> tuple[np.ndarray, int]:
    """Adjacent gap ratios min(d_n, d_n+1) / max(d_n, d_n+1) and the number of dropped gaps.

    Gaps below 1e-13 * span are treated as numerical degeneracies and dropped.
    """
    levels = np.asarray(values, dtype=np.float64)
    if levels.size < 3:
        raise ConfigurationError(f"Gap ratios need at least 3 levels, got {levels.size}")
    if np.any(np.diff(levels) < 0):
        raise ConfigurationError("Levels must be sorted ascending")
    span = float(levels[-1] - levels[0]) if span is None else float(span)
    gaps = np.diff(levels)
    usable = gaps >= GAP_CUTOFF * span
    dropped = int(np.count_nonzero(~usable))
    gaps = gaps[usable]
    if gaps.size < 2:
        raise ConfigurationError(f"Only {gaps.size} usable gaps after dropping {dropped} degenerate ones")
    ratios = np.minimum(gaps[:-1], gaps[1:]) / np.maximum(gaps[:-1], gaps[1:])
    if dropped:
        logger.debug("Dropped %d degenerate gaps", dropped)
    return ratios, dropped


def gap_ratio_mean(values: Sequence[float], span: float | None = None) -> float:
    """Mean adjacent gap ratio of a sorted window of levels."""
    ratios, _ = gap_ratios(values, span)
    return float(ratios.mean())


# ---------------------------------------------------------------------------
# State measurements and trajectories
# ---------------------------------------------------------------------------

@dataclass
class StateMeasurement:
    """Occupations, entanglement at selected cuts and C_{l,r} of one state."""
    occupations: np.ndarray
    entropies: np.ndarray
    correlations: dict[int, np.ndarray]


def _density_moments(sector: BasisSector, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    S = sector.states.astype(np.float64)
    return p @ S, (S * p[:, None]).T @ S


def two_site_correlations(sector: BasisSector, state: np.ndarray, r: int) -> tuple[np.ndarray, float]:
    """C_{l,r} = |<n_l n_l+r> - <n_l><n_l+r>| for every l, and their mean C_r."""
    if not 1 <= r <= sector.L - 1:
        raise ConfigurationError(f"Distance r must lie in [1, {sector.L - 1}], got {r}")
    p = np.abs(_check_state(sector, state)) ** 2
    n, nn = _density_moments(sector, p)
    sites = np.arange(sector.L - r)
    C = np.abs(nn[sites, sites + r] - n[sites] * n[sites + r])
    return C, float(C.mean())


def measure_state(
    sector: BasisSector,
    state: np.ndarray,
    cuts: Sequence[int],
    r_max: int,
) -> StateMeasurement:
    """All per-sample quantities of a quench trajectory in one pass."""
    psi = _check_state(sector, state)
    p = np.abs(psi) ** 2
    n, nn = _density_moments(sector, p)
    entropies = np.array([entanglement_entropy(schmidt_spectrum(sector, psi, c)) for c in cuts])
    correlations = {}
    for r in range(1, min(r_max, sector.L - 1) + 1):
        sites = np.arange(sector.L - r)
        correlations[r] = np.abs(nn[sites, sites + r] - n[sites] * n[sites + r])
    return StateMeasurement(n, entropies, correlations)


@dataclass
class Trajectory:
    """Sampled observables of one quench realization.

    ``occupations`` is (T, L), ``entropies`` is (T, len(cuts)) and
    ``correlations[r]`` is (T, L - r).
    """
    times: np.ndarray
    occupations: np.ndarray
    cuts: tuple[int, ...]
    entropies: np.ndarray
    correlations: dict[int, np.ndarray] = field(default_factory=dict)
    norm_drift: float = 0.0
    energy_drift: float = 0.0
    discarded_weight: float = 0.0

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ConfigurationError("Trajectory needs a non-empty 1-D time grid")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("Trajectory times must be strictly increasing")

    @classmethod
    def from_measurements(
        cls,
        times: Sequence[float],
        cuts: Sequence[int],
        samples: Sequence[StateMeasurement],
        **drifts: float,
    ) -> "Trajectory":
        r_values = sorted(samples[0].correlations) if samples else []
        return cls(
            times=np.asarray(times, dtype=np.float64),
            occupations=np.array([s.occupations for s in samples]),
            cuts=tuple(cuts),
            entropies=np.array([s.entropies for s in samples]).reshape(len(samples), len(cuts)),
            correlations={r: np.array([s.correlations[r] for s in samples]) for r in r_values},
            **drifts,
        )

    @property
    def L(self) -> int:
        return self.occupations.shape[1]

    def entropy(self, cut: int | None = None) -> np.ndarray:
        cut = self.L // 2 if cut is None else cut
        if cut not in self.cuts:
            raise ConfigurationError(f"Cut {cut} was not recorded (recorded: {self.cuts})")
        return self.entropies[:, self.cuts.index(cut)]

    def correlation(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        """C_{l,r}(t) for every l and the distance average C_r(t)."""
        if r not in self.correlations:
            raise ConfigurationError(f"Distance r={r} was not recorded")
        C = self.correlations[r]
        return C, C.mean(axis=1)

    def to_csv(self, path: str | Path, cut: int | None = None) -> None:
        cut = self.L // 2 if cut is None else cut
        r_values = sorted(self.correlations)
        header = ["t", f"S_{cut}"] + [f"n_{i + 1}" for i in range(self.L)] + [f"C_{r}" for r in r_values]
        entropy = self.entropy(cut)
        averages = [self.correlation(r)[1] for r in r_values]
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k, t in enumerate(self.times):
                row = [t, entropy[k], *self.occupations[k], *(c[k] for c in averages)]
                writer.writerow([repr(float(x)) for x in row])


# ---------------------------------------------------------------------------
# Temporal fluctuations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TemporalFluctuation:
    """Squared deviation of <n_l(t)> from its late-time mean."""
    site: int
    series: np.ndarray
    long_time_mean: float
    stationary: bool


def _time_average(times: np.ndarray, values: np.ndarray, start: float, stop: float) -> np.ndarray:
    mask = (times >= start) & (times <= stop)
    if np.count_nonzero(mask) < 2:
        raise ConfigurationError(f"Fewer than two samples in averaging window [{start}, {stop}]")
    t = times[mask]
    return trapezoid(values[mask], t, axis=0) / (t[-1] - t[0])


def long_time_average(
    trajectory: Trajectory,
    window: tuple[float, float] | None = None,
    tail_fraction: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoidal late-time mean of every occupation and the stationarity flags."""
    times = trajectory.times
    t0, t1 = float(times[0]), float(times[-1])
    if window is None:
        window = (t1 - tail_fraction * (t1 - t0), t1)
    start, stop = window
    if start < t0 - 1e-12 or stop > t1 + 1e-12 or not start < stop:
        raise ConfigurationError(f"Window {window} lies outside trajectory [{t0}, {t1}]")
    n = trajectory.occupations
    n_bar = np.atleast_1d(_time_average(times, n, start, stop))
    guard_start = max(stop - STATIONARITY_FRACTION * (t1 - t0), start)
    try:
        n_guard = np.atleast_1d(_time_average(times, n, guard_start, stop))
    except ConfigurationError:
        n_guard = n_bar
    scale = np.maximum(np.abs(n_bar), n.mean())
    stationary = np.abs(n_guard - n_bar) <= STATIONARITY_TOLERANCE * scale
    return n_bar, stationary


def temporal_fluctuation(
    trajectory: Trajectory,
    site: int,
    window: tuple[float, float] | None = None,
    tail_fraction: float = 0.5,
) -> TemporalFluctuation:
    """T_l(t) = (<n_l(t)> - n_bar_l)^2 for a single realization (0-based site)."""
    if not 0 <= site < trajectory.L:
        raise ConfigurationError(f"Site {site} out of range for L={trajectory.L}")
    n_bar, stationary = long_time_average(trajectory, window, tail_fraction)
    if not stationary[site]:
        logger.warning("Late-time mean of site %d is not stationary within 2%%", site)
    series = (trajectory.occupations[:, site] - n_bar[site]) ** 2
    return TemporalFluctuation(site, series, float(n_bar[site]), bool(stationary[site]))


def parity_fluctuations(
    trajectory: Trajectory,
    window: tuple[float, float] | None = None,
    tail_fraction: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Site-averaged T(t) over even and odd sites, labelled 1..L.

    The Neel state |1010...> occupies the odd labels (0-based even indices).
    """
    n_bar, stationary = long_time_average(trajectory, window, tail_fraction)
    if not np.all(stationary):
        logger.warning(
            "%d of %d sites fail the stationarity guard", int(np.count_nonzero(~stationary)), trajectory.L
        )
    deviation = (trajectory.occupations - n_bar[None, :]) ** 2
    odd_labels = np.arange(0, trajectory.L, 2)
    even_labels = np.arange(1, trajectory.L, 2)
    T_even = deviation[:, even_labels].mean(axis=1) if even_labels.size else np.zeros(len(trajectory.times))
    T_odd = deviation[:, odd_labels].mean(axis=1)
    return T_even, T_odd


def diagonal_ensemble_occupations(
    vectors: np.ndarray, psi0: np.ndarray, sector: BasisSector
) -> np.ndarray:
    """Infinite-time occupations sum_a |<a|psi0>|^2 <a|n_l|a> (non-degenerate spectrum)."""
    weights = np.abs(vectors.conj().T @ psi0) ** 2
    per_state = (np.abs(vectors) ** 2).T @ sector.states.astype(np.float64)
    return weights @ per_state


# ---------------------------------------------------------------------------
# Correlation light cone
# ---------------------------------------------------------------------------

def reference_crossing_times(
    times: np.ndarray, curves: dict[int, np.ndarray], reference: float = 1e-2
) -> dict[int, float]:
    """First time each C_r(t) reaches ``reference`` (linear interpolation; nan if never)."""
    times = np.asarray(times, dtype=np.float64)
    crossings: dict[int, float] = {}
    for r, curve in sorted(curves.items()):
        c = np.asarray(curve, dtype=np.float64)
        above = np.flatnonzero(c >= reference)
        if above.size == 0:
            crossings[r] = float("nan")
            continue
        k = int(above[0])
        if k == 0:
            crossings[r] = float(times[0])
            continue
        frac = (reference - c[k - 1]) / (c[k] - c[k - 1])
        crossings[r] = float(times[k - 1] + frac * (times[k] - times[k - 1]))
    return crossings


@dataclass(frozen=True)
class CrossingSpacing:
    """Whether crossing times grow linearly or exponentially with distance."""
    kind: Literal["logarithmic", "linear", "undetermined"]
    linear_r2: float
    log_r2: float


def _r_squared(x: np.ndarray, y: np.ndarray) -> float:
    coeffs = np.polyfit(x, y, 1)
    residual = y - np.polyval(coeffs, x)
    total = np.sum((y - y.mean()) ** 2)
    return 1.0 - float(np.sum(residual ** 2) / total) if total > 0 else 1.0


def crossing_spacing(crossings: dict[int, float]) -> CrossingSpacing:
    """Classify crossing times t_r: log t_r linear in r means logarithmic spacing."""
    items = [(r, t) for r, t in sorted(crossings.items()) if np.isfinite(t) and t > 0]
    if len(items) < 3:
        return CrossingSpacing("undetermined", float("nan"), float("nan"))
    r = np.array([i[0] for i in items], dtype=np.float64)
    t = np.array([i[1] for i in items], dtype=np.float64)
    linear = _r_squared(r, t)
    logarithmic = _r_squared(r, np.log(t))
    kind = "logarithmic" if logarithmic > linear else "linear"
    return CrossingSpacing(kind, linear, logarithmic)

