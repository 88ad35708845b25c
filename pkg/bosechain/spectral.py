"""
Eigenpairs of sector Hamiltonians.

Small sectors are diagonalized densely. Interior eigenpairs near a target
energy sigma use shift-and-invert: H - sigma I is factorized once (sparse
LU). An implicitly restarted Lanczos run on the inverse map (k > 1) or a
random block (k = 1) is polished by block inverse iteration with
Rayleigh-Ritz, carrying a few guard vectors beyond the k requested.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from bosechain.errors import ConfigurationError, NumericalError

logger = logging.getLogger("bosechain.spectral")

DENSE_LIMIT = 4000
_DENSE_EXTREMAL_LIMIT = 64
REFINE_TOL = 1e-13
_GUARD = 4


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenPair:
    """Eigenvalue, unit eigenvector and its residual norm ||Hv - lambda v||."""
    value: float
    vector: np.ndarray
    residual: float


@dataclass(frozen=True)
class FullSpectrum:
    """Complete sorted spectrum with orthonormal eigenvectors as columns."""
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> EigenPair:
        return EigenPair(float(self.values[i]), self.vectors[:, i], float(self.residuals[i]))

    def nearest(self, sigma: float, k: int = 1) -> list[EigenPair]:
        """The k pairs closest to sigma, ties resolved towards lower energy."""
        order = _order_by_distance(self.values, sigma)
        return [self[int(i)] for i in order[:k]]


@dataclass(frozen=True)
class SpectrumWindow:
    """Sorted eigenvalues together with the spectral edges and target."""
    values: np.ndarray
    E_min: float
    E_max: float
    sigma: float

    def __post_init__(self) -> None:
        if np.any(np.diff(self.values) < 0):
            raise ConfigurationError("SpectrumWindow values must be sorted ascending")

    def normalized(self, energy: float | np.ndarray) -> float | np.ndarray:
        """Normalized energy (E - E_min) / (E_max - E_min)."""
        return normalized_energy(energy, self.E_min, self.E_max)


def normalized_energy(energy, E_min: float, E_max: float):
    """Map energies onto [0, 1] across the spectral span."""
    return (np.asarray(energy) - E_min) / (E_max - E_min)


def operator_norm_bound(H) -> float:
    """Upper bound on ||H||_2 from the max row sum."""
    if sp.issparse(H):
        bound = float(spla.norm(H, ord=np.inf))
    else:
        bound = float(np.abs(np.asarray(H)).sum(axis=1).max())
    return bound if bound > 0 else 1.0


def _order_by_distance(values: np.ndarray, sigma: float) -> np.ndarray:
    # lexsort: primary key last -> distance, then energy for ties
    distance = np.round(np.abs(values - sigma) / 1e-12) * 1e-12
    return np.lexsort((values, distance))


def _residuals(H, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.linalg.norm(H @ vectors - vectors * values[None, :], axis=0)


# ---------------------------------------------------------------------------
# Full diagonalization
# ---------------------------------------------------------------------------

def full_diagonalize(H, dense_limit: int = DENSE_LIMIT) -> FullSpectrum:
    """Dense eigendecomposition of a Hermitian sector matrix."""
    dim = H.shape[0]
    if dim > dense_limit:
        raise ConfigurationError(
            f"Dimension {dim} above dense diagonalization limit {dense_limit}"
        )
    dense = H.toarray() if sp.issparse(H) else np.asarray(H)
    values, vectors = la.eigh(dense)
    residuals = _residuals(dense, values, vectors)
    tolerance = 1e-10 * operator_norm_bound(dense)
    if residuals.size and residuals.max() > tolerance:
        raise NumericalError(
            f"Dense eigensolver residual {residuals.max():.3e} exceeds {tolerance:.3e}"
        )
    return FullSpectrum(values, vectors, residuals)


def extremal_eigenvalues(H, tol: float = 1e-9, max_iter: int | None = None) -> tuple[float, float]:
    """Smallest and largest eigenvalue via Lanczos, each residual-certified."""
    dim = H.shape[0]
    if dim <= _DENSE_EXTREMAL_LIMIT:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        values = la.eigvalsh(dense)
        return float(values[0]), float(values[-1])

    norm = operator_norm_bound(H)
    v0 = np.ones(dim) / np.sqrt(dim)
    edges = []
    for which in ("SA", "LA"):
        try:
            value, vector = spla.eigsh(H, k=1, which=which, tol=tol, v0=v0, maxiter=max_iter)
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(f"Lanczos for {which} edge did not converge") from exc
        residual = float(np.linalg.norm(H @ vector[:, 0] - value[0] * vector[:, 0]))
        if residual > max(tol, 1e-10) * norm * 10:
            raise NumericalError(f"{which} edge residual {residual:.3e} too large")
        edges.append(float(value[0]))
    logger.debug("Spectral edges: [%.10g, %.10g]", edges[0], edges[1])
    return edges[0], edges[1]


# ---------------------------------------------------------------------------
# Shift-and-invert
# ---------------------------------------------------------------------------

class ShiftInvertSolver:
    """One sparse LU factorization of H - sigma I, reused by every request."""

    def __init__(self, H, sigma: float, span: float | None = None) -> None:
        self.H = sp.csc_matrix(H)
        self.dim = self.H.shape[0]
        self.norm = operator_norm_bound(self.H)
        span = span if span is not None else 2.0 * self.norm
        self.requested_sigma = float(sigma)
        self.sigma = float(sigma)
        self._lu = None
        identity = sp.identity(self.dim, format="csc")
        for attempt in range(3):
            try:
                lu = spla.splu(self.H - self.sigma * identity)
            except RuntimeError as exc:
                logger.warning(
                    "Factorization of H - sigma I failed at sigma=%.12g (%s); perturbing shift",
                    self.sigma, exc,
                )
                self.sigma += 1e-10 * span * (attempt + 1)
                continue
            if not np.all(np.isfinite(lu.U.diagonal())):
                self.sigma += 1e-10 * span * (attempt + 1)
                continue
            self._lu = lu
            break
        if self._lu is None:
            raise NumericalError(f"Could not factorize H - sigma I near sigma={sigma}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)

    def inverse_iteration(self, tol: float = 1e-9, max_iter: int = 500) -> EigenPair:
        """Eigenpair closest to sigma by (guarded) block inverse iteration."""
        rng = np.random.default_rng(0)
        block = rng.standard_normal((self.dim, min(self.dim, 1 + _GUARD)))
        return self._refine(block, 1, tol, max_iter)[0]

    def eigenpairs(self, k: int, tol: float = 1e-9) -> list[EigenPair]:
        """The k eigenpairs closest to sigma, sorted by distance."""
        if k < 1:
            raise ConfigurationError(f"k must be positive, got {k}")
        if k == 1:
            return [self.inverse_iteration(tol)]
        if k + _GUARD >= self.dim - 1:
            dense = full_diagonalize(self.H, dense_limit=max(self.dim, DENSE_LIMIT))
            return dense.nearest(self.requested_sigma, k)

        OPinv = spla.LinearOperator(self.H.shape, matvec=self.solve, dtype=np.float64)
        v0 = np.ones(self.dim) / np.sqrt(self.dim)
        try:
            _, vectors = spla.eigsh(
                self.H, k=k + _GUARD, sigma=self.sigma, OPinv=OPinv, which="LM", v0=v0, tol=1e-13
            )
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(f"Shift-invert Lanczos did not converge for k={k}") from exc
        return self._refine(vectors, k, tol)

    def _refine(self, block: np.ndarray, k: int, tol: float, max_iter: int = 200) -> list[EigenPair]:
        """Block inverse iteration with Rayleigh-Ritz until residuals reach REFINE_TOL ||H||.

        The block carries guard vectors beyond the k wanted pairs so that a
        near-degenerate pair straddling the window edge is still resolved.
        Refinement stops early once the residual stagnates below tol ||H||.
        """
        limit = tol * self.norm
        floor = REFINE_TOL * self.norm
        best, stalled = np.inf, 0
        V = block
        for iteration in range(1, max_iter + 1):
            X = self.solve(V)
            if not np.all(np.isfinite(X)):
                raise NumericalError("Inverse iteration produced a non-finite iterate")
            Q, _ = np.linalg.qr(X)
            T = Q.T @ (self.H @ Q)
            theta, S = np.linalg.eigh(0.5 * (T + T.T))
            order = _order_by_distance(theta, self.requested_sigma)
            theta, V = theta[order], (Q @ S)[:, order]
            residuals = _residuals(self.H, theta[:k], V[:, :k])
            worst = float(residuals.max())
            if worst < floor:
                break
            if worst < 0.9 * best:
                best, stalled = worst, 0
            else:
                stalled += 1
            if stalled >= 3 and worst < limit:
                break
        logger.debug("Shift-invert refinement: %d sweeps, residual %.3e", iteration, worst)
        if worst >= limit:
            raise NumericalError(f"Shift-invert residual {worst:.3e} exceeds {limit:.3e}")
        return [EigenPair(float(theta[i]), V[:, i], float(residuals[i])) for i in range(k)]


def shift_invert_eigenpairs(
    H,
    sigma: float,
    k: int = 1,
    bounds: tuple[float, float] | None = None,
    tol: float = 1e-9,
) -> list[EigenPair]:
    """Eigenpairs of H nearest to ``sigma``, closest first."""
    span = None
    if bounds is not None:
        E_min, E_max = bounds
        if not E_min <= sigma <= E_max:
            raise ConfigurationError(f"Target {sigma} outside spectrum [{E_min}, {E_max}]")
        span = E_max - E_min
    solver = ShiftInvertSolver(H, sigma, span=span)
    return solver.eigenpairs(k, tol=tol)
