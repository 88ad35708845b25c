"""
Matrix product states and TEBD for long chains.

Site tensors have shape (D_left, d, D_right) with local dimension
d = n_max + 1. With ``conserve=True`` every bond index carries the number
of particles to its left, two-site SVDs are done block by block in that
charge and particle number is conserved exactly.

One fourth-order step is F(dt) = Psi(a1 dt) Psi(a2 dt) Psi(a1 dt) where
Psi(tau) is a left-to-right then right-to-left sweep of half-step pair
gates. Consecutive gates on the same bond are merged.
"""

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import scipy.linalg as la
from pydantic import BaseModel, ConfigDict, Field

from bosechain.basis import BasisSector
from bosechain.errors import ConfigurationError, NumericalError
from bosechain.model import DisorderRealization, ModelParams
from bosechain.observables import StateMeasurement, Trajectory

logger = logging.getLogger("bosechain.mps")

A1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
A2 = 1.0 - 2.0 * A1
CHECKPOINT_MAGIC = "bosechain-mps"
CHECKPOINT_VERSION = 1
_ZERO_WEIGHT = 1e-28
_GATE_CACHE_LIMIT = 4096

Direction = Literal["right", "left"]


class TebdConfig(BaseModel):
    """TEBD settings; defaults are the disordered-run values (times in 1/J)."""
    model_config = ConfigDict(frozen=True)

    dt: float = Field(default=0.01, gt=0)
    eps: float = Field(default=1e-9, gt=0, lt=1, description="Discarded-probability cutoff")
    D_c: int = Field(default=2000, ge=1, description="Hard bond dimension cap")
    n_max: int = Field(default=3, ge=1)
    T_stop: float = Field(default=200.0, gt=0)
    conserve: bool = True

    @classmethod
    def ergodic(cls, **overrides) -> "TebdConfig":
        """Settings for weak-disorder runs: finer cutoff budget, shorter horizon."""
        values = dict(dt=0.025, eps=1e-8, n_max=4, T_stop=5.0)
        values.update(overrides)
        return cls(**values)


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

class MpsState:
    """Open-chain MPS in mixed gauge around ``center``."""

    def __init__(
        self,
        tensors: list[np.ndarray],
        n_max: int,
        center: int = 0,
        charges: list[np.ndarray] | None = None,
        discarded: float = 0.0,
    ) -> None:
        self.tensors = tensors
        self.n_max = n_max
        self.center = center
        self.charges = charges
        self.discarded = discarded

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.n_max + 1

    @property
    def conserve(self) -> bool:
        return self.charges is not None

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def copy(self) -> "MpsState":
        return copy.deepcopy(self)

    def norm(self) -> float:
        return math.sqrt(abs(overlap(self, self)))

    def isometry_residual(self) -> float:
        """Largest deviation from the left/right isometry conditions."""
        worst = 0.0
        for site, A in enumerate(self.tensors):
            if site < self.center:
                M = np.einsum("anb,anc->bc", A.conj(), A)
            elif site > self.center:
                M = np.einsum("anb,cnb->ac", A, A.conj())
            else:
                continue
            worst = max(worst, float(np.abs(M - np.eye(M.shape[0])).max()))
        return worst


def mps_from_product(occupations: Sequence[int], n_max: int, conserve: bool = True) -> MpsState:
    """Bond-dimension-1 MPS of a Fock product state."""
    occ = [int(n) for n in occupations]
    if not occ:
        raise ConfigurationError("Product state needs at least one site")
    if any(n < 0 or n > n_max for n in occ):
        raise ConfigurationError(f"Occupations {occ} exceed the local cap n_max={n_max}")
    tensors = []
    for n in occ:
        A = np.zeros((1, n_max + 1, 1), dtype=np.complex128)
        A[0, n, 0] = 1.0
        tensors.append(A)
    charges = [np.array([sum(occ[:b])], dtype=np.int64) for b in range(len(occ) + 1)] if conserve else None
    return MpsState(tensors, n_max, center=0, charges=charges)


def overlap(bra: MpsState, ket: MpsState) -> complex:
    """<bra|ket> by left-to-right transfer contraction."""
    if bra.L != ket.L or bra.d != ket.d:
        raise ConfigurationError("States differ in length or local dimension")
    E = np.ones((1, 1), dtype=np.complex128)
    for A, B in zip(bra.tensors, ket.tensors):
        E = np.einsum("ab,anc,bnd->cd", E, A.conj(), B)
    return complex(E[0, 0])


def to_dense(state: MpsState, sector: BasisSector) -> np.ndarray:
    """Amplitudes of the MPS on every configuration of ``sector``."""
    if sector.L != state.L:
        raise ConfigurationError(f"Sector has L={sector.L}, state has L={state.L}")
    occ = sector.states
    allowed = np.all(occ <= state.n_max, axis=1)
    clipped = np.minimum(occ, state.n_max)
    vec = state.tensors[0][0][clipped[:, 0], :]
    for site in range(1, state.L):
        mats = state.tensors[site].transpose(1, 0, 2)[clipped[:, site]]
        vec = np.einsum("ka,kab->kb", vec, mats)
    return np.where(allowed, vec[:, 0], 0.0)


# ---------------------------------------------------------------------------
# Two-site update
# ---------------------------------------------------------------------------

def _svd(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        return la.svd(M, full_matrices=False, lapack_driver="gesdd")
    except la.LinAlgError:
        logger.debug("gesdd failed on %s block; retrying with gesvd", M.shape)
        try:
            return la.svd(M, full_matrices=False, lapack_driver="gesvd")
        except la.LinAlgError as exc:
            raise NumericalError(f"SVD failed on a {M.shape} block") from exc


def truncation_rank(s: np.ndarray, eps: float, D_c: int) -> tuple[int, float]:
    """Kept rank and discarded weight for descending singular values.

    The rank is the smallest k whose discarded probability is below eps,
    then capped at D_c.
    """
    w = s ** 2
    total = float(w.sum())
    if total == 0.0:
        raise NumericalError("Two-site wavefunction vanished")
    tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]]) / total
    threshold = max(eps, _ZERO_WEIGHT)
    k = int(np.argmax(tail[1:] < threshold)) + 1
    k = min(k, D_c)
    return k, float(tail[k])


def _split_dense(M, eps, D_c):
    u, s, vh = _svd(M)
    k, discarded = truncation_rank(s, eps, D_c)
    return u[:, :k], s[:k], vh[:k], None, discarded


def _split_blocked(M, row_q, col_q, eps, D_c):
    blocks = []
    for q in np.intersect1d(row_q, col_q):
        rows = np.flatnonzero(row_q == q)
        cols = np.flatnonzero(col_q == q)
        u, s, vh = _svd(M[np.ix_(rows, cols)])
        blocks.append((q, rows, cols, u, s, vh))
    if not blocks:
        raise NumericalError("No charge sector carries weight across the bond")

    values = np.concatenate([b[4] for b in blocks])
    owner = np.concatenate([np.full(len(b[4]), i) for i, b in enumerate(blocks)])
    local = np.concatenate([np.arange(len(b[4])) for b in blocks])
    order = np.lexsort((owner, -values))
    k, discarded = truncation_rank(values[order], eps, D_c)
    kept = np.sort(order[:k])  # grouped by block, descending within each

    U = np.zeros((M.shape[0], k), dtype=M.dtype)
    Vh = np.zeros((k, M.shape[1]), dtype=M.dtype)
    q_mid = np.empty(k, dtype=np.int64)
    s_out = np.empty(k)
    for j, idx in enumerate(kept):
        q, rows, cols, u, s, vh = blocks[owner[idx]]
        U[rows, j] = u[:, local[idx]]
        Vh[j, cols] = vh[local[idx]]
        q_mid[j] = q
        s_out[j] = s[local[idx]]
    return U, s_out, Vh, q_mid, discarded


def apply_two_site_gate(
    state: MpsState,
    bond: int,
    gate: np.ndarray,
    eps: float,
    D_c: int,
    direction: Direction = "right",
) -> float:
    """Apply a d^2 x d^2 gate on sites (bond, bond + 1) in place.

    The gauge center ends on bond + 1 when sweeping right and on bond when
    sweeping left. Returns the discarded probability of this update.
    """
    if not 0 <= bond < state.L - 1:
        raise ConfigurationError(f"Bond {bond} out of range for L={state.L}")
    if state.center not in (bond, bond + 1):
        raise ConfigurationError(f"Gauge center {state.center} is not on bond {bond}")
    d = state.d
    A, B = state.tensors[bond], state.tensors[bond + 1]
    Dl, Dr = A.shape[0], B.shape[2]
    theta = np.einsum("anb,bmc->anmc", A, B)
    theta = np.einsum("xymn,amnc->axyc", gate.reshape(d, d, d, d), theta)
    M = theta.reshape(Dl * d, d * Dr)

    if state.conserve:
        qL, qR = state.charges[bond], state.charges[bond + 2]
        row_q = (qL[:, None] + np.arange(d)[None, :]).ravel()
        col_q = (qR[None, :] - np.arange(d)[:, None]).ravel()
        U, s, Vh, q_mid, discarded = _split_blocked(M, row_q, col_q, eps, D_c)
        state.charges[bond + 1] = q_mid
    else:
        U, s, Vh, _, discarded = _split_dense(M, eps, D_c)

    s = s / np.linalg.norm(s)
    k = len(s)
    if direction == "right":
        state.tensors[bond] = U.reshape(Dl, d, k)
        state.tensors[bond + 1] = (s[:, None] * Vh).reshape(k, d, Dr)
        state.center = bond + 1
    else:
        state.tensors[bond] = (U * s[None, :]).reshape(Dl, d, k)
        state.tensors[bond + 1] = Vh.reshape(k, d, Dr)
        state.center = bond
    state.discarded += discarded
    return discarded


# ---------------------------------------------------------------------------
# Hamiltonian pieces and gates
# ---------------------------------------------------------------------------

def _ladder(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=np.float64)), 1)


def pair_hamiltonians(
    params: ModelParams, disorder: DisorderRealization, n_max: int
) -> list[np.ndarray]:
    """Bond terms h_{l,l+1} whose sum is the chain Hamiltonian.

    Interior one-site terms are shared half and half between the two bonds
    touching the site; the two boundary sites give their full term to their
    only bond.
    """
    L = disorder.L
    if np.any(disorder.next_hopping(params) != 0.0):
        raise ConfigurationError("Next-nearest hopping is not supported on the MPS path")
    if L < 2:
        raise ConfigurationError("TEBD needs at least two sites")
    d = n_max + 1
    a = _ladder(n_max)
    n = np.arange(d, dtype=np.float64)
    eye = np.eye(d)
    U2 = disorder.anharmonicity(params)

    def site_term(site: int) -> np.ndarray:
        diag = (
            disorder.omega[site] * n
            - 0.5 * disorder.U_site[site] * n * (n - 1.0)
            + (U2[site] / 6.0) * n * (n - 1.0) * (n - 2.0)
        )
        return np.diag(diag)

    terms = []
    for bond in range(L - 1):
        w_left = 1.0 if bond == 0 else 0.5
        w_right = 1.0 if bond + 1 == L - 1 else 0.5
        hop = disorder.J_bond[bond] * (np.kron(a.T, a) + np.kron(a, a.T))
        h = hop + w_left * np.kron(site_term(bond), eye) + w_right * np.kron(eye, site_term(bond + 1))
        terms.append(h)
    return terms


def _gate_sequence(dt: float, n_bonds: int) -> list[tuple[int, float, Direction]]:
    """Merged (bond, duration, direction) gates for one fourth-order step."""
    raw: list[tuple[int, float, Direction]] = []
    for a in (A1, A2, A1):
        half = 0.5 * a * dt
        raw += [(b, half, "right") for b in range(n_bonds)]
        raw += [(b, half, "left") for b in range(n_bonds - 1, -1, -1)]
    merged: list[tuple[int, float, Direction]] = []
    for bond, tau, direction in raw:
        if merged and merged[-1][0] == bond:
            merged[-1] = (bond, merged[-1][1] + tau, direction)
        else:
            merged.append((bond, tau, direction))
    return merged


class TebdEngine:
    """Gate factory and stepper for a fixed set of bond terms."""

    def __init__(self, terms: Sequence[np.ndarray], cfg: TebdConfig) -> None:
        self.terms = list(terms)
        self.cfg = cfg
        d = cfg.n_max + 1
        for h in self.terms:
            if h.shape != (d * d, d * d):
                raise ConfigurationError(f"Bond term of shape {h.shape} does not match n_max={cfg.n_max}")
        self._eig = [la.eigh(h) for h in self.terms]
        self._gates: dict[tuple[int, float], np.ndarray] = {}

    def gate(self, bond: int, tau: float) -> np.ndarray:
        """exp(-i h_bond tau) from the cached eigendecomposition."""
        key = (bond, round(tau, 15))
        cached = self._gates.get(key)
        if cached is None:
            if len(self._gates) >= _GATE_CACHE_LIMIT:
                self._gates.clear()
            w, V = self._eig[bond]
            cached = (V * np.exp(-1j * w * tau)[None, :]) @ V.conj().T
            self._gates[key] = cached
        return cached

    def step(self, state: MpsState, dt: float) -> float:
        """One fourth-order step; returns the discarded weight."""
        if state.L - 1 != len(self.terms):
            raise ConfigurationError(f"State has {state.L - 1} bonds, engine has {len(self.terms)}")
        if state.n_max != self.cfg.n_max:
            raise ConfigurationError(f"State n_max={state.n_max} differs from config n_max={self.cfg.n_max}")
        if state.center != 0:
            move_center(state, 0)
        discarded = 0.0
        for bond, tau, direction in _gate_sequence(dt, len(self.terms)):
            discarded += apply_two_site_gate(
                state, bond, self.gate(bond, tau), self.cfg.eps, self.cfg.D_c, direction
            )
        return discarded


def trotter_step_4th(
    state: MpsState, terms: Sequence[np.ndarray], dt: float, cfg: TebdConfig
) -> MpsState:
    """Advance ``state`` in place by dt and return it."""
    TebdEngine(terms, cfg).step(state, dt)
    return state


def move_center(state: MpsState, target: int) -> None:
    """Shift the gauge center with exact (untruncated) identity gates."""
    identity = np.eye(state.d ** 2)
    while state.center < target:
        apply_two_site_gate(state, state.center, identity, 0.0, 10 ** 9, "right")
    while state.center > target:
        apply_two_site_gate(state, state.center - 1, identity, 0.0, 10 ** 9, "left")


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------

def _entropy(s: np.ndarray) -> float:
    p = s ** 2
    p = p / p.sum()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def measure_mps(state: MpsState, cuts: Sequence[int], r_max: int) -> StateMeasurement:
    """Occupations, bond entropies and C_{l,r} from one sweep over a copy."""
    work = state.copy()
    move_center(work, 0)
    L, d = work.L, work.d
    n = np.arange(d, dtype=np.float64)
    occupations = np.zeros(L)
    entropies: dict[int, float] = {}
    nn: dict[tuple[int, int], float] = {}
    r_top = min(r_max, L - 1)

    for site in range(L):
        C = work.tensors[site]
        occupations[site] = float(np.einsum("anb,n,anb->", C.conj(), n, C).real)

        if r_top > 0:
            X = np.einsum("anb,n,anc->bc", C.conj(), n, C)
            for j in range(site + 1, min(site + r_top, L - 1) + 1):
                B = work.tensors[j]
                nn[(site, j)] = float(np.einsum("bc,bmd,m,cmd->", X, B.conj(), n, B).real)
                X = np.einsum("bc,bmd,cme->de", X, B.conj(), B)

        if site < L - 1:
            Dl, _, Dr = C.shape
            u, s, vh = _svd(C.reshape(Dl * d, Dr))
            entropies[site + 1] = _entropy(s)
            work.tensors[site] = u.reshape(Dl, d, -1)
            work.tensors[site + 1] = np.einsum("k,kb,bmc->kmc", s, vh, work.tensors[site + 1])
            work.center = site + 1

    correlations = {}
    for r in range(1, r_top + 1):
        sites = np.arange(L - r)
        correlations[r] = np.array(
            [abs(nn[(l, l + r)] - occupations[l] * occupations[l + r]) for l in sites]
        )
    return StateMeasurement(
        occupations=occupations,
        entropies=np.array([entropies[c] for c in cuts]),
        correlations=correlations,
    )


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------

@dataclass
class BondRecord:
    """Largest bond dimension after every step of a run."""
    D_c: int
    times: list[float] = field(default_factory=list)
    max_bond: list[int] = field(default_factory=list)
    saturated_at: float | None = None

    def append(self, t: float, bond: int) -> None:
        self.times.append(float(t))
        self.max_bond.append(int(bond))

    def to_csv_rows(self) -> list[list[str]]:
        return [["t", "max_bond"]] + [[repr(t), str(D)] for t, D in zip(self.times, self.max_bond)]


def tebd_evolve(
    state: MpsState,
    terms: Sequence[np.ndarray],
    cfg: TebdConfig,
    sample_times: Sequence[float],
    cuts: Sequence[int] | None = None,
    r_max: int = 4,
) -> tuple[Trajectory, BondRecord]:
    """Evolve until T_stop or bond saturation, measuring at the sample times.

    Samples past T_stop or after saturation are not produced.
    """
    times = np.asarray(sample_times, dtype=np.float64)
    if times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ConfigurationError("Sample times must be non-negative and strictly increasing")
    cuts = tuple(cuts) if cuts is not None else (state.L // 2,)
    engine = TebdEngine(terms, cfg)
    record = BondRecord(D_c=cfg.D_c)
    record.append(0.0, state.max_bond)

    kept_times, samples = [], []
    t = 0.0
    for target in times:
        if target > cfg.T_stop + 1e-12:
            break
        gap = target - t
        saturated = False
        if gap > 0:
            n_steps = max(1, math.ceil(gap / cfg.dt - 1e-9))
            tau = gap / n_steps
            for k in range(n_steps):
                engine.step(state, tau)
                t = float(target) if k == n_steps - 1 else t + tau
                record.append(t, state.max_bond)
                if state.max_bond >= cfg.D_c:
                    saturated = True
                    break
        if saturated:
            record.saturated_at = t
            logger.warning("Bond dimension reached D_c=%d at t=%.4g; stopping", cfg.D_c, t)
            break
        kept_times.append(target)
        samples.append(measure_mps(state, cuts, r_max))

    logger.debug("TEBD run: %d samples, max bond %d, discarded %.3e",
                 len(samples), max(record.max_bond), state.discarded)
    if not samples:
        raise NumericalError("TEBD run produced no samples before stopping")
    trajectory = Trajectory.from_measurements(
        kept_times, cuts, samples, discarded_weight=state.discarded
    )
    return trajectory, record


@dataclass(frozen=True)
class BondGrowthFit:
    """Power-law versus exponential fit of the bond dimension growth."""
    preferred: Literal["power_law", "exponential"]
    power_exponent: float
    exponential_rate: float
    power_aic: float
    exponential_aic: float


def _aic(residual: np.ndarray, n_params: int = 2) -> float:
    n = residual.size
    rss = max(float(np.sum(residual ** 2)), 1e-300)
    return n * math.log(rss / n) + 2 * n_params


def fit_bond_growth(times: Sequence[float], bonds: Sequence[float]) -> BondGrowthFit:
    """Compare log D = a log t + c against log D = k t + c by AIC (points with D > 1)."""
    t = np.asarray(times, dtype=np.float64)
    D = np.asarray(bonds, dtype=np.float64)
    mask = (t > 0) & (D > 1)
    if np.count_nonzero(mask) < 3:
        raise ConfigurationError("Bond growth fit needs at least three points with D > 1")
    t, logD = t[mask], np.log(D[mask])
    power = np.polyfit(np.log(t), logD, 1)
    expo = np.polyfit(t, logD, 1)
    power_aic = _aic(logD - np.polyval(power, np.log(t)))
    exp_aic = _aic(logD - np.polyval(expo, t))
    preferred = "power_law" if power_aic < exp_aic else "exponential"
    return BondGrowthFit(preferred, float(power[0]), float(expo[0]), power_aic, exp_aic)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(state: MpsState, path: str | Path, time: float) -> None:
    """Write tensors, bond charges and a JSON header to an .npz archive."""
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "L": state.L,
        "n_max": state.n_max,
        "center": state.center,
        "time": float(time),
        "discarded": state.discarded,
        "conserve": state.conserve,
    }
    arrays = {f"tensor_{i}": A for i, A in enumerate(state.tensors)}
    if state.conserve:
        arrays.update({f"charge_{i}": q for i, q in enumerate(state.charges)})
    with Path(path).open("wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), **arrays)


def load_checkpoint(path: str | Path) -> tuple[MpsState, float]:
    """Read a checkpoint written by save_checkpoint; returns (state, time)."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("magic") != CHECKPOINT_MAGIC:
            raise ConfigurationError(f"{path} is not an MPS checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(f"Unsupported checkpoint version {header.get('version')}")
        L = header["L"]
        tensors = [data[f"tensor_{i}"] for i in range(L)]
        charges = [data[f"charge_{i}"] for i in range(L + 1)] if header["conserve"] else None
    state = MpsState(tensors, header["n_max"], header["center"], charges, header["discarded"])
    return state, header["time"]
