"""
Disordered Bose-Hubbard chain: disorder sampling and sparse Hamiltonians.

Energies are in units of the hopping J with hbar = 1. The uniform rotating
frame term (mean transmon frequency times total N) is dropped, so sampled
on-site energies are recentred per realization.
"""

import json
import logging
import math
from enum import Enum
from typing import Literal

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, model_validator

from bosechain.basis import BasisSector
from bosechain.errors import ConfigurationError

logger = logging.getLogger("bosechain.model")

INVERSE_GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# Parameter models
# ---------------------------------------------------------------------------

class ModelParams(BaseModel):
    """Uniform couplings of the chain (units of J)."""
    L: int = Field(ge=1)
    U: float = 0.0                     # attractive on-site interaction
    J: float = 1.0                     # nearest-neighbour hopping, sets the energy unit
    U2: float = 0.0                    # higher-order (repulsive) anharmonicity
    J2: float = 0.0                    # next-nearest-neighbour hopping
    boundary: Literal["open"] = "open"

    @model_validator(mode="after")
    def _check_finite(self) -> "ModelParams":
        for name in ("U", "J", "U2", "J2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.J <= 0:
            raise ValueError("J must be positive")
        return self


class DisorderKind(str, Enum):
    clean = "clean"
    uniform = "uniform"
    transmon_flux = "transmon_flux"
    quasi_periodic = "quasi_periodic"


class CouplingDisorder(BaseModel):
    """Optional Gaussian disorder of the couplings (absolute sd, clipped at 3 sd).

    Covers the hoppings J_l, interactions U_l, higher-order anharmonicities
    U2_l and next-nearest hoppings J2_l around their uniform values.
    """
    hopping_sd: float = Field(default=0.0, ge=0.0)
    interaction_sd: float = Field(default=0.0, ge=0.0)
    anharmonicity_sd: float = Field(default=0.0, ge=0.0)
    next_hopping_sd: float = Field(default=0.0, ge=0.0)


class DisorderModel(BaseModel):
    """Distribution of the on-site energies omega_l (and optionally J_l, U_l)."""
    model_config = ConfigDict(frozen=True)

    kind: DisorderKind = DisorderKind.uniform
    W: float = 0.0                     # uniform: omega_l in [-W, W]
    # transmon_flux: omega_l = omega_max [cos^2(pi B A_l / Phi0) + d^2 sin^2(...)]^(1/4)
    B: float = 0.0
    d: float = 0.1
    mean_area: float = 1.0
    area_sd: float | None = None       # defaults to mean_area / 5
    flux_quantum: float = 1.0
    E_C: float = 3.5
    E_SJ: float = 50.0
    # quasi_periodic: omega_l = Delta cos(2 pi beta l)
    delta: float = 0.0
    beta: float = INVERSE_GOLDEN_RATIO
    site_coupling_disorder: CouplingDisorder | None = None

    @model_validator(mode="after")
    def _check(self) -> "DisorderModel":
        for name in ("W", "B", "d", "mean_area", "flux_quantum", "E_C", "E_SJ", "delta", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.W < 0:
            raise ValueError("W must be non-negative")
        if not 0.0 < self.d <= 1.0:
            raise ValueError("junction asymmetry d must lie in (0, 1]")
        if self.E_C <= 0 or self.E_SJ <= 0:
            raise ValueError("E_C and E_SJ must be positive")
        if self.area_sd is not None and self.area_sd < 0:
            raise ValueError("area_sd must be non-negative")
        return self

    @property
    def effective_area_sd(self) -> float:
        return self.mean_area / 5.0 if self.area_sd is None else self.area_sd

    @property
    def omega_max(self) -> float:
        return math.sqrt(8.0 * self.E_C * self.E_SJ)

    @property
    def strength(self) -> float:
        """The scanned disorder strength: W, B or Delta depending on kind."""
        return {
            DisorderKind.clean: 0.0,
            DisorderKind.uniform: self.W,
            DisorderKind.transmon_flux: self.B,
            DisorderKind.quasi_periodic: self.delta,
        }[self.kind]

    def with_strength(self, value: float) -> "DisorderModel":
        """Copy with the kind-specific strength parameter set to ``value``."""
        field = {
            DisorderKind.clean: None,
            DisorderKind.uniform: "W",
            DisorderKind.transmon_flux: "B",
            DisorderKind.quasi_periodic: "delta",
        }[self.kind]
        if field is None:
            return self
        return self.model_copy(update={field: float(value)})


class DisorderRealization(BaseModel):
    """One draw of site-dependent couplings; serializes to an audit record.

    ``U2_site`` and ``J2_bond`` stay empty unless those couplings are
    disordered; the uniform values of ModelParams apply then.
    """
    model_config = ConfigDict(frozen=True)

    seed: int
    model: DisorderModel
    omega: tuple[float, ...]
    U_site: tuple[float, ...]
    J_bond: tuple[float, ...]
    U2_site: tuple[float, ...] = ()
    J2_bond: tuple[float, ...] = ()
    omega_offset: float = 0.0          # mean removed by the rotating frame

    @property
    def L(self) -> int:
        return len(self.omega)

    def anharmonicity(self, params: ModelParams) -> np.ndarray:
        """Per-site U2_l."""
        if not self.U2_site:
            return np.full(self.L, params.U2)
        if len(self.U2_site) != self.L:
            raise ConfigurationError(f"U2_site has {len(self.U2_site)} entries for L={self.L}")
        return np.asarray(self.U2_site)

    def next_hopping(self, params: ModelParams) -> np.ndarray:
        """Per-bond J2_l between sites l and l + 2."""
        n_bonds = max(self.L - 2, 0)
        if not self.J2_bond:
            return np.full(n_bonds, params.J2)
        if len(self.J2_bond) != n_bonds:
            raise ConfigurationError(f"J2_bond has {len(self.J2_bond)} entries for L={self.L}")
        return np.asarray(self.J2_bond)

    def to_json(self) -> str:
        return self.model_dump_json()

    @classmethod
    def from_json(cls, text: str) -> "DisorderRealization":
        return cls.model_validate(json.loads(text))


class DisorderStatistics(BaseModel):
    """Monte-Carlo summary of the on-site energy distribution."""
    mean: float
    sd: float
    lower: float
    upper: float

    @property
    def equivalent_uniform_width(self) -> float:
        """Uniform-disorder W with the same standard deviation, W = sqrt(3) sigma."""
        return math.sqrt(3.0) * self.sd


# ---------------------------------------------------------------------------
# Random numbers
# ---------------------------------------------------------------------------

def derive_seed(master_seed: int, *keys: int) -> int:
    """64-bit seed for a realization keyed by ``keys`` under ``master_seed``."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _streams(seed: int) -> list[np.random.Generator]:
    # Independent streams for omega, J_l, U_l, U2_l and J2_l: switching on
    # coupling disorder leaves the on-site energies untouched.
    children = np.random.SeedSequence(seed).spawn(5)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


# ---------------------------------------------------------------------------
# Disorder sampling
# ---------------------------------------------------------------------------

def transmon_frequency(flux_ratio: float | np.ndarray, d: float, E_C: float, E_SJ: float):
    """Flux-tunable transmon frequency for Phi/Phi0 = ``flux_ratio``."""
    phase = np.pi * np.asarray(flux_ratio, dtype=np.float64)
    omega = math.sqrt(8.0 * E_C * E_SJ) * (np.cos(phase) ** 2 + d**2 * np.sin(phase) ** 2) ** 0.25
    return float(omega) if np.ndim(omega) == 0 else omega


def _raw_onsite(model: DisorderModel, L: int, rng: np.random.Generator) -> np.ndarray:
    """On-site energies before the rotating-frame recentring."""
    if model.kind == DisorderKind.clean:
        return np.zeros(L)
    if model.kind == DisorderKind.uniform:
        return rng.uniform(-model.W, model.W, size=L)
    if model.kind == DisorderKind.transmon_flux:
        areas = rng.normal(model.mean_area, model.effective_area_sd, size=L)
        flux = model.B * areas / model.flux_quantum
        return np.asarray(transmon_frequency(flux, model.d, model.E_C, model.E_SJ), dtype=np.float64)
    sites = np.arange(1, L + 1)
    return model.delta * np.cos(2.0 * np.pi * model.beta * sites)


def _clipped_gaussian(
    rng: np.random.Generator, center: float, sd: float, size: int, floor: float
) -> np.ndarray:
    values = center + np.clip(rng.normal(0.0, sd, size=size), -3.0 * sd, 3.0 * sd)
    return np.maximum(values, floor)


def sample_disorder(
    model: DisorderModel,
    L: int,
    seed: int,
    params: ModelParams | None = None,
) -> DisorderRealization:
    """Draw one realization of omega_l, U_l and J_l.

    Uniform couplings come from ``params`` (U = 0, J = 1 when omitted).
    The transmon on-site energies are recentred on their realization mean.
    """
    if L < 1:
        raise ConfigurationError(f"L must be positive, got {L}")
    if params is not None and params.L != L:
        raise ConfigurationError(f"ModelParams has L={params.L}, requested L={L}")
    U = params.U if params else 0.0
    J = params.J if params else 1.0
    onsite_rng, hopping_rng, interaction_rng, anharmonic_rng, next_hopping_rng = _streams(seed)

    omega = _raw_onsite(model, L, onsite_rng)
    offset = 0.0
    if model.kind == DisorderKind.transmon_flux:
        offset = float(omega.mean())
        omega = omega - offset

    U_site = np.full(L, U, dtype=np.float64)
    J_bond = np.full(max(L - 1, 0), J, dtype=np.float64)
    extra = model.site_coupling_disorder
    if extra is not None:
        if extra.hopping_sd > 0 and L > 1:
            J_bond = _clipped_gaussian(hopping_rng, J, extra.hopping_sd, L - 1, floor=J / 10.0)
        if extra.interaction_sd > 0:
            U_site = _clipped_gaussian(interaction_rng, U, extra.interaction_sd, L, floor=0.0)
    U2_site: tuple[float, ...] = ()
    J2_bond: tuple[float, ...] = ()
    if extra is not None:
        if extra.anharmonicity_sd > 0:
            U2 = _clipped_gaussian(anharmonic_rng, params.U2 if params else 0.0, extra.anharmonicity_sd, L, floor=-np.inf)
            U2_site = tuple(float(x) for x in U2)
        if extra.next_hopping_sd > 0 and L > 2:
            J2 = _clipped_gaussian(
                next_hopping_rng, params.J2 if params else 0.0, extra.next_hopping_sd, L - 2, floor=-np.inf
            )
            J2_bond = tuple(float(x) for x in J2)

    return DisorderRealization(
        seed=int(seed),
        model=model,
        omega=tuple(float(x) for x in omega),
        U_site=tuple(float(x) for x in U_site),
        J_bond=tuple(float(x) for x in J_bond),
        U2_site=U2_site,
        J2_bond=J2_bond,
        omega_offset=offset,
    )


def disorder_statistics(
    model: DisorderModel, L: int, n_samples: int, seed: int = 0
) -> DisorderStatistics:
    """Mean, standard deviation and bounds of the raw on-site energies.

    Quasi-periodic potentials are sampled along a chain of ``n_samples``
    sites; random kinds draw ``n_samples`` independent site energies.
    """
    if n_samples < 1000:
        raise ConfigurationError(f"n_samples must be at least 1000, got {n_samples}")
    rng = _streams(seed)[0]
    if model.kind == DisorderKind.quasi_periodic:
        values = _raw_onsite(model, n_samples, rng)
    else:
        draws = max(1, math.ceil(n_samples / max(L, 1)))
        values = np.concatenate([_raw_onsite(model, L, rng) for _ in range(draws)])[:n_samples]
    if model.kind == DisorderKind.transmon_flux:
        lower, upper = math.sqrt(model.d) * model.omega_max, model.omega_max
    elif model.kind == DisorderKind.uniform:
        lower, upper = -model.W, model.W
    elif model.kind == DisorderKind.quasi_periodic:
        lower, upper = -abs(model.delta), abs(model.delta)
    else:
        lower = upper = 0.0
    return DisorderStatistics(
        mean=float(values.mean()), sd=float(values.std()), lower=lower, upper=upper
    )


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def _hopping_entries(
    sector: BasisSector, left: int, right: int, amplitude: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Matrix elements of amplitude * a_left^dag a_right between sector states."""
    states = sector.states
    mask = (states[:, right] > 0) & (states[:, left] < sector.n_max)
    rows = np.nonzero(mask)[0]
    if rows.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    moved = states[rows].copy()
    values = amplitude * np.sqrt((moved[:, left] + 1.0) * moved[:, right])
    moved[:, left] += 1
    moved[:, right] -= 1
    assert np.all(moved.sum(axis=1) == sector.N)
    cols = sector.rank_many(moved)
    return rows, cols, values


def build_hamiltonian(
    params: ModelParams, disorder: DisorderRealization, sector: BasisSector
) -> sp.csr_matrix:
    """Sparse real-symmetric Hamiltonian of the disordered chain in ``sector``."""
    L = sector.L
    if params.L != L or disorder.L != L:
        raise ConfigurationError(
            f"Sector has L={L}, params L={params.L}, disorder L={disorder.L}"
        )
    n = sector.states.astype(np.float64)
    omega = np.asarray(disorder.omega)
    U_site = np.asarray(disorder.U_site)
    diagonal = (
        n @ omega
        - 0.5 * (n * (n - 1.0)) @ U_site
        + (n * (n - 1.0) * (n - 2.0)) @ disorder.anharmonicity(params) / 6.0
    )

    rows = [np.arange(sector.dim)]
    cols = [np.arange(sector.dim)]
    values = [diagonal]
    bonds = [(site, site + 1, disorder.J_bond[site]) for site in range(L - 1)]
    J2 = disorder.next_hopping(params)
    if np.any(J2 != 0.0):
        bonds += [(site, site + 2, float(J2[site])) for site in range(L - 2)]
    for left, right, amplitude in bonds:
        r, c, v = _hopping_entries(sector, left, right, amplitude)
        rows += [r, c]
        cols += [c, r]
        values += [v, v]

    H = sp.coo_matrix(
        (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
        shape=(sector.dim, sector.dim),
    ).tocsr()
    H.sum_duplicates()
    H.sort_indices()
    logger.debug("Assembled H: dim=%d nnz=%d", sector.dim, H.nnz)
    return H


def number_operator(sector: BasisSector, site: int) -> sp.csr_matrix:
    """Diagonal n_site (0-based site index)."""
    if not 0 <= site < sector.L:
        raise ConfigurationError(f"Site {site} out of range for L={sector.L}")
    return sp.diags(sector.states[:, site].astype(np.float64), format="csr")


def half_chain_number(sector: BasisSector, cut: int | None = None) -> sp.csr_matrix:
    """Diagonal N_A = sum of n_l over the first ``cut`` sites (default L // 2)."""
    cut = sector.L // 2 if cut is None else cut
    if not 1 <= cut <= sector.L:
        raise ConfigurationError(f"Cut {cut} out of range for L={sector.L}")
    return sp.diags(sector.states[:, :cut].sum(axis=1).astype(np.float64), format="csr")


def anharmonicity_operator(sector: BasisSector) -> sp.csr_matrix:
    """Diagonal total anharmonicity sum_l n_l (n_l - 1)."""
    n = sector.states.astype(np.float64)
    return sp.diags((n * (n - 1.0)).sum(axis=1), format="csr")
