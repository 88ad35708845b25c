"""
Density of states and its maximum.

Three methods share one histogram type:

- ``full_ed``: bin the dense spectrum (small sectors).
- ``ldl``: exact counts from Sylvester's law of inertia. Each edge e of the
  grid is factorized once as LDL^T(H - eI); the number of positive pivots
  is the number of eigenvalues above e.
- ``chebyshev``: stochastic counts from a boxcar Chebyshev series with a
  Hutchinson trace over Rademacher vectors. The maximum is taken on the
  Jackson-damped series, a kernel-density estimate about pi / (p + 1)
  wide in scaled energy; near-tied maxima trigger extra vector sets.

The maximum of the histogram is the target energy for shift-and-invert.
"""

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from pydantic import BaseModel, ConfigDict, Field

from bosechain.errors import ConfigurationError, NumericalError
from bosechain.spectral import DENSE_LIMIT, extremal_eigenvalues

logger = logging.getLogger("bosechain.dos")

LDL_LIMIT = 80_000
DENSE_LDL_LIMIT = 6000
EDGE_PAD = 1e-6
NUDGE = 1e-10
MAX_NUDGES = 4
AMBIGUITY_RATIO = 0.95


class DosMethod(str, Enum):
    auto = "auto"
    full_ed = "full_ed"
    ldl = "ldl"
    chebyshev = "chebyshev"


class ChebyshevConfig(BaseModel):
    """Stochastic Chebyshev expansion settings."""
    model_config = ConfigDict(frozen=True)

    p: int = Field(default=50, ge=1, description="Expansion order")
    n_v: int = Field(default=30, ge=1, description="Number of Rademacher vectors")
    seed: int = Field(default=0, ge=0)
    exact_trace: bool = Field(
        default=False,
        description="Trace over all basis vectors instead of random ones (small dims only)",
    )
    max_refinements: int = Field(
        default=2, ge=0,
        description="Extra vector sets averaged in while the damped profile has a near-tied maximum",
    )


# ---------------------------------------------------------------------------
# Histogram
# ---------------------------------------------------------------------------

@dataclass
class DosHistogram:
    """Equal-width eigenvalue histogram over [E_min, E_max].

    Stochastic histograms also carry a ``smoothed`` profile (the same counts
    with Jackson-damped moments) and its kernel width in bins; the maximum is
    located on that profile. Exact histograms locate it on the raw counts.
    """
    edges: np.ndarray
    counts: np.ndarray
    method: DosMethod
    nudged_edges: list[tuple[float, float]] = field(default_factory=list)
    smoothed: np.ndarray | None = None
    kernel_width: float = 0.0

    @property
    def profile(self) -> np.ndarray:
        """Counts the maximum is searched on."""
        return self.counts if self.smoothed is None else self.smoothed

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def E_min(self) -> float:
        return float(self.edges[0])

    @property
    def E_max(self) -> float:
        return float(self.edges[-1])

    @property
    def ambiguous(self) -> bool:
        """True when a second local maximum reaches 95% of the global one."""
        return secondary_peak_ratio(self) >= AMBIGUITY_RATIO

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """Edges mapped to normalized energy together with the counts."""
        span = self.E_max - self.E_min
        return (self.edges - self.E_min) / span, self.counts

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_left", "bin_right", "count", "method"])
            for left, right, count in zip(self.edges[:-1], self.edges[1:], self.counts):
                writer.writerow([repr(float(left)), repr(float(right)), repr(float(count)), self.method.value])


# ---------------------------------------------------------------------------
# Inertia counts
# ---------------------------------------------------------------------------

def _dense_positive_pivots(A: np.ndarray) -> int:
    """Positive eigenvalues of the block-diagonal D in a Bunch-Kaufman LDL^T."""
    _, d, _ = la.ldl(A, lower=True)
    n = d.shape[0]
    positive = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            block_values = np.linalg.eigvalsh(d[i:i + 2, i:i + 2])
            if np.any(block_values == 0.0):
                raise ZeroDivisionError("zero eigenvalue in 2x2 pivot")
            positive += int(np.sum(block_values > 0))
            i += 2
        else:
            if d[i, i] == 0.0:
                raise ZeroDivisionError("zero pivot")
            positive += int(d[i, i] > 0)
            i += 1
    return positive


def _sparse_positive_pivots(A: sp.csc_matrix) -> int:
    """Positive pivots of a symmetric-mode SuperLU factorization.

    With a symmetric permutation (perm_r == perm_c) and diagonal pivoting,
    P^T A P = L U with U = D L^T, so the signs of diag(U) are the inertia.
    """
    lu = spla.splu(
        A,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options=dict(SymmetricMode=True),
    )
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise ZeroDivisionError("off-diagonal pivot chosen")
    pivots = lu.U.diagonal()
    if not np.all(np.isfinite(pivots)) or np.any(pivots == 0.0):
        raise ZeroDivisionError("singular pivot")
    return int(np.count_nonzero(pivots > 0))


class InertiaCounter:
    """Counts eigenvalues above a shift, nudging shifts that break down."""

    def __init__(self, H, span: float | None = None) -> None:
        self.H = sp.csc_matrix(H)
        self.dim = self.H.shape[0]
        if span is None:
            E_min, E_max = extremal_eigenvalues(self.H)
            span = E_max - E_min
        self.span = span if span > 0 else 1.0
        self._identity = sp.identity(self.dim, format="csc")
        self.nudged: list[tuple[float, float]] = []

    def count_above(self, shift: float) -> int:
        """Number of eigenvalues strictly greater than ``shift``."""
        current = float(shift)
        for attempt in range(MAX_NUDGES + 1):
            A = (self.H - current * self._identity).tocsc()
            try:
                count = _sparse_positive_pivots(A)
            except (RuntimeError, ZeroDivisionError) as exc:
                if self.dim <= DENSE_LDL_LIMIT:
                    try:
                        count = _dense_positive_pivots(A.toarray())
                    except ZeroDivisionError:
                        pass
                    else:
                        self._record(shift, current)
                        return count
                logger.debug("LDL breakdown at shift %.12g (%s)", current, exc)
                current = float(shift) + NUDGE * self.span * (attempt + 1)
                continue
            self._record(shift, current)
            return count
        raise NumericalError(
            f"LDL factorization broke down at shift {shift:.12g} after {MAX_NUDGES} nudges"
        )

    def _record(self, requested: float, used: float) -> None:
        if used != requested:
            logger.warning("Nudged histogram edge %.12g -> %.12g", requested, used)
            self.nudged.append((requested, used))


def count_above(H, shift: float, span: float | None = None) -> int:
    """Positive-pivot count of LDL^T(H - shift I)."""
    return InertiaCounter(H, span).count_above(shift)


def inertia_count(H, a: float, b: float, span: float | None = None) -> int:
    """Exact number of eigenvalues in (a, b]."""
    if not a < b:
        raise ConfigurationError(f"Interval needs a < b, got [{a}, {b}]")
    counter = InertiaCounter(H, span)
    return counter.count_above(a) - counter.count_above(b)


# ---------------------------------------------------------------------------
# Chebyshev / Hutchinson
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaledHamiltonian:
    """H mapped affinely so that its spectrum lies in [-1, 1]."""
    H: sp.csr_matrix
    center: float
    half_width: float

    def scale(self, energy):
        return (np.asarray(energy, dtype=float) - self.center) / self.half_width


def scale_to_unit_interval(H, bounds: tuple[float, float], margin: float = EDGE_PAD) -> ScaledHamiltonian:
    """(H - c I) / h with c the spectral midpoint and h the half-span widened by ``margin``."""
    E_min, E_max = bounds
    if not E_max > E_min:
        raise ConfigurationError(f"Spectral bounds must satisfy E_min < E_max, got {bounds}")
    center = 0.5 * (E_max + E_min)
    half = 0.5 * (E_max - E_min) * (1.0 + margin)
    dim = H.shape[0]
    scaled = (sp.csr_matrix(H) - center * sp.identity(dim, format="csr")) / half
    return ScaledHamiltonian(sp.csr_matrix(scaled), center, half)


def chebyshev_coefficients(edges: np.ndarray, p: int) -> np.ndarray:
    """Boxcar coefficients gamma_j for each interval, shape (n_intervals, p + 1).

    Edges are in scaled units and clipped into [-1, 1].
    """
    theta = np.arccos(np.clip(np.asarray(edges, dtype=float), -1.0, 1.0))
    left, right = theta[:-1], theta[1:]
    gamma = np.empty((len(left), p + 1))
    gamma[:, 0] = (left - right) / np.pi
    j = np.arange(1, p + 1)
    gamma[:, 1:] = 2.0 * (np.sin(np.outer(left, j)) - np.sin(np.outer(right, j))) / (j * np.pi)
    return gamma


def jackson_damping(p: int) -> np.ndarray:
    """Jackson kernel factors g_0..g_p (g_0 = 1)."""
    n = p + 2
    j = np.arange(p + 1)
    q = np.pi / n
    return ((n - j) * np.cos(q * j) + np.sin(q * j) / np.tan(q)) / n


def jackson_width(p: int, n_bins: int) -> float:
    """Kernel standard deviation, in bins, at the band center."""
    return float(np.pi * n_bins / (2.0 * (p + 1)))


def chebyshev_moments(Hs: ScaledHamiltonian, cfg: ChebyshevConfig) -> np.ndarray:
    """Trace estimates of T_j(H) for j = 0..p."""
    H = Hs.H
    dim = H.shape[0]
    if cfg.exact_trace:
        V = np.eye(dim)
        scale = 1.0
    else:
        rng = np.random.Generator(np.random.Philox(cfg.seed))
        V = rng.integers(0, 2, size=(dim, cfg.n_v)).astype(np.float64) * 2.0 - 1.0
        scale = 1.0 / cfg.n_v

    moments = np.empty(cfg.p + 1)
    w_prev = V
    moments[0] = np.einsum("ij,ij->", V, w_prev) * scale
    if cfg.p >= 1:
        w = H @ V
        moments[1] = np.einsum("ij,ij->", V, w) * scale
        for j in range(2, cfg.p + 1):
            w_prev, w = w, 2.0 * (H @ w) - w_prev
            moments[j] = np.einsum("ij,ij->", V, w) * scale
    return moments


def chebyshev_count(Hs: ScaledHamiltonian, intervals: np.ndarray, cfg: ChebyshevConfig | None = None) -> np.ndarray:
    """Stochastic eigenvalue counts for consecutive intervals.

    ``intervals`` is the edge grid in unscaled energy units; the same affine
    map as the Hamiltonian is applied before expanding.
    """
    if not isinstance(Hs, ScaledHamiltonian):
        raise ConfigurationError("chebyshev_count needs a ScaledHamiltonian (call scale_to_unit_interval)")
    cfg = cfg or ChebyshevConfig()
    edges = Hs.scale(intervals)
    if np.any(np.diff(edges) <= 0):
        raise ConfigurationError("Interval edges must be strictly increasing")
    gamma = chebyshev_coefficients(edges, cfg.p)
    moments = chebyshev_moments(Hs, cfg)
    return gamma @ moments


# ---------------------------------------------------------------------------
# Histogram and maximum
# ---------------------------------------------------------------------------

def spectrum_histogram(
    values: np.ndarray, n_bins: int = 100, bounds: tuple[float, float] | None = None
) -> DosHistogram:
    """Bin an exactly known spectrum."""
    values = np.asarray(values, dtype=np.float64)
    E_min, E_max = (float(values.min()), float(values.max())) if bounds is None else bounds
    if E_max <= E_min:
        E_max = E_min + 1.0
    edges = np.linspace(E_min, E_max, n_bins + 1)
    counts, _ = np.histogram(np.clip(values, E_min, E_max), bins=edges)
    return DosHistogram(edges, counts.astype(np.int64), DosMethod.full_ed)


def _select_method(dim: int, method: DosMethod, dense_limit: int) -> DosMethod:
    if method is not DosMethod.auto:
        return method
    if dim <= dense_limit:
        return DosMethod.full_ed
    if dim <= LDL_LIMIT:
        return DosMethod.ldl
    return DosMethod.chebyshev


def dos_histogram(
    H,
    n_bins: int = 100,
    method: DosMethod | str = DosMethod.auto,
    cfg: ChebyshevConfig | None = None,
    bounds: tuple[float, float] | None = None,
    dense_limit: int = DENSE_LIMIT,
) -> DosHistogram:
    """Histogram of eigenvalues in ``n_bins`` equal bins over the spectrum."""
    if n_bins < 1:
        raise ConfigurationError(f"n_bins must be positive, got {n_bins}")
    dim = H.shape[0]
    chosen = _select_method(dim, DosMethod(method), dense_limit)
    logger.debug("DOS method %s for dim=%d", chosen.value, dim)

    if chosen is DosMethod.full_ed:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        return spectrum_histogram(la.eigvalsh(dense), n_bins, bounds)

    E_min, E_max = bounds if bounds is not None else extremal_eigenvalues(H)
    span = E_max - E_min
    if span <= 0:
        raise NumericalError(f"Degenerate spectrum span {span}")
    edges = np.linspace(E_min, E_max, n_bins + 1)
    # outer edges padded so every eigenvalue falls inside
    padded = edges.copy()
    padded[0] -= EDGE_PAD * span
    padded[-1] += EDGE_PAD * span

    if chosen is DosMethod.ldl:
        counter = InertiaCounter(H, span)
        above = np.array([counter.count_above(e) for e in padded], dtype=np.int64)
        counts = above[:-1] - above[1:]
        if int(counts.sum()) != dim:
            raise NumericalError(f"Inertia counts sum to {int(counts.sum())}, expected {dim}")
        if np.any(counts < 0):
            raise NumericalError("Negative inertia count; factorization is inconsistent")
        return DosHistogram(edges, counts, chosen, counter.nudged)

    Hs = scale_to_unit_interval(H, (E_min, E_max))
    cfg = cfg or ChebyshevConfig()
    gamma = chebyshev_coefficients(Hs.scale(padded), cfg.p)
    damping = jackson_damping(cfg.p)
    moment_sets = [chebyshev_moments(Hs, cfg)]
    while True:
        moments = np.mean(moment_sets, axis=0)
        hist = DosHistogram(
            edges, gamma @ moments, chosen,
            smoothed=gamma @ (damping * moments),
            kernel_width=jackson_width(cfg.p, n_bins),
        )
        refinements = len(moment_sets) - 1
        if cfg.exact_trace or refinements >= cfg.max_refinements or not hist.ambiguous:
            break
        seed = int(np.random.SeedSequence([cfg.seed, refinements + 1]).generate_state(1)[0])
        logger.info("Near-tied DOS maximum; averaging in vector set %d", refinements + 2)
        moment_sets.append(chebyshev_moments(Hs, cfg.model_copy(update={"seed": seed})))

    total = hist.total
    if abs(total - dim) > 0.01 * dim:
        logger.warning("Chebyshev DOS total %.1f deviates from dim=%d by more than 1%%", total, dim)
    return hist


def _local_maxima(counts: np.ndarray) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    left = np.concatenate([[-np.inf], c[:-1]])
    right = np.concatenate([c[1:], [-np.inf]])
    return np.flatnonzero((c > left) & (c >= right))


def secondary_peak_ratio(hist: DosHistogram) -> float:
    """Height of the second highest local maximum relative to the global one."""
    counts = np.asarray(hist.profile, dtype=float)
    peak = int(np.argmax(counts))
    top = counts[peak]
    if top <= 0:
        return 0.0
    others = [i for i in _local_maxima(counts) if i != peak]
    if not others:
        return 0.0
    return float(counts[others].max() / top)


def dos_maximum(hist: DosHistogram) -> float:
    """Energy of the DOS maximum with a three-point parabolic refinement.

    Searched on ``hist.profile``: raw counts for exact histograms, the
    Jackson-smoothed counts for stochastic ones.
    """
    counts = np.asarray(hist.profile, dtype=float)
    if counts.size == 0:
        raise ConfigurationError("Empty histogram")
    if not np.any(counts > 0):
        raise ConfigurationError("All-zero histogram has no maximum")

    i = int(np.argmax(counts))  # first occurrence: lowest energy wins ties
    centers = hist.centers
    sigma = float(centers[i])
    if 0 < i < len(counts) - 1:
        c_minus, c0, c_plus = counts[i - 1], counts[i], counts[i + 1]
        denom = c_minus - 2.0 * c0 + c_plus
        if denom != 0.0:
            delta = float(np.clip(0.5 * (c_minus - c_plus) / denom, -0.5, 0.5))
            sigma += delta * hist.bin_width
    ratio = secondary_peak_ratio(hist)
    if ratio >= AMBIGUITY_RATIO:
        logger.warning("DOS has a secondary maximum at %.1f%% of the peak; target is ambiguous", 100 * ratio)
    return sigma
