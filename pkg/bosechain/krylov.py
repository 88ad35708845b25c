"""
Lanczos-Krylov propagation of quench states.

Each step projects H onto the m-dimensional Krylov space of the current
state, exponentiates the tridiagonal projection through its eigenbasis and
lifts the result back. Steps are subdivided so that every sample time is
hit exactly.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np
import scipy.linalg as la
from pydantic import BaseModel, ConfigDict, Field

from bosechain.basis import BasisSector
from bosechain.errors import ConfigurationError, NumericalError
from bosechain.observables import StateMeasurement, Trajectory, measure_state
from bosechain.spectral import FullSpectrum, operator_norm_bound

logger = logging.getLogger("bosechain.krylov")

BREAKDOWN = 1e-14
NORM_DRIFT = 1e-12

Measure = Callable[[np.ndarray], StateMeasurement]


class KrylovConfig(BaseModel):
    """Krylov propagator settings (times in units of 1/J)."""
    model_config = ConfigDict(frozen=True)

    m: int = Field(default=5, ge=2, description="Krylov subspace dimension")
    dt: float = Field(default=0.1, gt=0, description="Maximum step length")
    reorthogonalize: bool = False


@dataclass(frozen=True)
class LanczosResult:
    """Orthonormal Krylov basis (columns) and the tridiagonal projection."""
    basis: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def m(self) -> int:
        return len(self.alpha)

    def tridiagonal(self) -> np.ndarray:
        return np.diag(self.alpha) + np.diag(self.beta, 1) + np.diag(self.beta, -1)


def lanczos_tridiagonalize(H, v0: np.ndarray, m: int, reorthogonalize: bool = False) -> LanczosResult:
    """m steps of Lanczos from a unit vector, stopping early on breakdown."""
    v = np.asarray(v0)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ConfigurationError("Lanczos start vector must be normalized")
    dtype = np.result_type(v.dtype, np.float64)
    m = min(m, v.shape[0])
    V = np.zeros((v.shape[0], m), dtype=dtype)
    alpha = np.zeros(m)
    beta = np.zeros(max(m - 1, 0))
    V[:, 0] = v
    for j in range(m):
        w = H @ V[:, j]
        if j > 0:
            w = w - beta[j - 1] * V[:, j - 1]
        alpha[j] = float(np.real(np.vdot(V[:, j], w)))
        w = w - alpha[j] * V[:, j]
        if reorthogonalize:
            w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        if not np.all(np.isfinite(w)):
            raise NumericalError("Non-finite Lanczos vector")
        if j == m - 1:
            break
        b = float(np.linalg.norm(w))
        if b < BREAKDOWN:
            logger.debug("Lanczos breakdown at step %d (beta=%.3e)", j + 1, b)
            return LanczosResult(V[:, : j + 1], alpha[: j + 1], beta[:j])
        beta[j] = b
        V[:, j + 1] = w / b
    return LanczosResult(V, alpha, beta)


class KrylovPropagator:
    """Fixed-H Krylov stepper that tracks the norm drift it corrects."""

    def __init__(self, H, cfg: KrylovConfig | None = None) -> None:
        self.H = H
        self.cfg = cfg or KrylovConfig()
        self.norm_drift = 0.0

    def step(self, psi: np.ndarray, tau: float) -> np.ndarray:
        norm = float(np.linalg.norm(psi))
        if norm == 0.0:
            raise NumericalError("Cannot propagate the zero vector")
        result = lanczos_tridiagonalize(self.H, psi / norm, self.cfg.m, self.cfg.reorthogonalize)
        if result.m == 1:
            coeffs = np.array([np.exp(-1j * tau * result.alpha[0])])
        else:
            theta, S = la.eigh_tridiagonal(result.alpha, result.beta)
            coeffs = S @ (np.exp(-1j * tau * theta) * S[0, :])
        out = (result.basis @ coeffs) * norm
        drift = abs(float(np.linalg.norm(out)) - 1.0)
        self.norm_drift = max(self.norm_drift, drift)
        if drift > NORM_DRIFT:
            out /= np.linalg.norm(out)
        return out


def krylov_step(H, psi: np.ndarray, tau: float, cfg: KrylovConfig | None = None) -> np.ndarray:
    """psi(t + tau) = K exp(-i tau M) e_1 ||psi||."""
    return KrylovPropagator(H, cfg).step(psi, tau)


def time_grid(
    t_max: float,
    n: int,
    spacing: Literal["linear", "log"] = "linear",
    t_min: float = 0.1,
) -> np.ndarray:
    """Sample times starting at 0; ``log`` places n - 1 points geometrically in [t_min, t_max]."""
    if t_max <= 0 or n < 2:
        raise ConfigurationError(f"Time grid needs t_max > 0 and n >= 2, got {t_max}, {n}")
    if spacing == "linear":
        return np.linspace(0.0, t_max, n)
    if spacing == "log":
        if not 0 < t_min < t_max:
            raise ConfigurationError(f"Log grid needs 0 < t_min < t_max, got {t_min}, {t_max}")
        return np.concatenate([[0.0], np.geomspace(t_min, t_max, n - 1)])
    raise ConfigurationError(f"Unknown spacing {spacing!r}")


def sector_measure(sector: BasisSector, cuts: Sequence[int], r_max: int) -> Measure:
    """Hook measuring occupations, entropies and correlations of sector states."""
    return lambda psi: measure_state(sector, psi, cuts, r_max)


def evolve(
    H,
    psi0: np.ndarray,
    sample_times: Sequence[float],
    cfg: KrylovConfig | None,
    measure: Measure,
    cuts: Sequence[int] = (),
) -> Trajectory:
    """Propagate psi0 and evaluate ``measure`` at every sample time."""
    cfg = cfg or KrylovConfig()
    times = np.asarray(sample_times, dtype=np.float64)
    if times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ConfigurationError("Sample times must be non-negative and strictly increasing")

    propagator = KrylovPropagator(H, cfg)
    psi = np.asarray(psi0, dtype=np.complex128)
    E0 = float(np.real(np.vdot(psi, H @ psi)))
    energy_drift = 0.0
    samples = []
    t = 0.0
    for target in times:
        gap = target - t
        if gap > 0:
            n_steps = max(1, math.ceil(gap / cfg.dt - 1e-9))
            tau = gap / n_steps
            for _ in range(n_steps):
                psi = propagator.step(psi, tau)
            t = float(target)
        energy_drift = max(energy_drift, abs(float(np.real(np.vdot(psi, H @ psi))) - E0))
        samples.append(measure(psi))

    tolerance = 1e-8 * operator_norm_bound(H)
    if energy_drift > tolerance:
        logger.warning("Energy drift %.3e exceeds %.3e; consider a smaller dt or larger m", energy_drift, tolerance)
    logger.debug("Krylov run finished: norm drift %.3e, energy drift %.3e", propagator.norm_drift, energy_drift)
    return Trajectory.from_measurements(
        times, cuts, samples, norm_drift=propagator.norm_drift, energy_drift=energy_drift
    )


def exact_evolve(spectrum: FullSpectrum, psi0: np.ndarray, times: Sequence[float]) -> np.ndarray:
    """States sum_a exp(-i E_a t) <a|psi0> |a> at every time, shape (T, dim)."""
    V = spectrum.vectors
    overlaps = V.conj().T @ np.asarray(psi0, dtype=np.complex128)
    phases = np.exp(-1j * np.outer(np.asarray(times, dtype=np.float64), spectrum.values))
    return (phases * overlaps[None, :]) @ V.T
