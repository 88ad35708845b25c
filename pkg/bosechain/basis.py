"""
Fixed-occupation Fock sectors of an L-site bosonic chain.

States |n_1, ..., n_L> with sum(n) = N are enumerated in descending
lexicographic order. Ranks come from a precomputed table of capped
composition counts, so rank/unrank cost O(L) and Hamiltonian assembly can
look up the index of every hopped configuration without hashing.
"""

import logging
import math
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from bosechain.errors import ConfigurationError, SectorTooLargeError

logger = logging.getLogger("bosechain.basis")

OccupationVector = tuple[int, ...]

INT64_MAX = np.iinfo(np.int64).max
MAX_ENUMERATED_DIM = 10_000_000


# ---------------------------------------------------------------------------
# Counting
# ---------------------------------------------------------------------------

def sector_dimension(L: int, N: int, *, checked: bool = False) -> int:
    """Number of Fock states of N bosons on L sites, (N+L-1)! / ((L-1)! N!).

    The result is an exact Python integer. With ``checked=True`` values that
    do not fit a signed 64-bit integer raise SectorTooLargeError.
    """
    if L < 1 or N < 0:
        raise ConfigurationError(f"Sector needs L >= 1 and N >= 0, got L={L}, N={N}")
    dim = math.comb(N + L - 1, L - 1)
    if checked and dim > INT64_MAX:
        raise SectorTooLargeError(f"Sector (L={L}, N={N}) too large: dim={dim}")
    return dim


def capped_sector_dimension(L: int, N: int, n_max: int) -> int:
    """Sector dimension with at most ``n_max`` bosons per site (inclusion-exclusion)."""
    if L < 1 or N < 0 or n_max < 0:
        raise ConfigurationError(f"Invalid capped sector L={L}, N={N}, n_max={n_max}")
    total = 0
    for k in range(L + 1):
        rest = N - k * (n_max + 1)
        if rest < 0:
            break
        total += (-1) ** k * math.comb(L, k) * math.comb(rest + L - 1, L - 1)
    return total


def _count_table(L: int, N: int, cap: int) -> list[list[int]]:
    """counts[k][m]: configurations of m bosons on k sites with entries <= cap."""
    counts = [[0] * (N + 1) for _ in range(L + 1)]
    counts[0][0] = 1
    for k in range(1, L + 1):
        prev = counts[k - 1]
        for m in range(N + 1):
            counts[k][m] = sum(prev[m - x] for x in range(min(m, cap) + 1))
    return counts


# ---------------------------------------------------------------------------
# Sector
# ---------------------------------------------------------------------------

class BasisSector:
    """Immutable enumeration of the (L, N, n_max) Fock sector.

    ``states`` is a read-only (dim, L) integer array in canonical order;
    row i is the occupation vector with rank i.
    """

    def __init__(self, L: int, N: int, n_max: int | None = None) -> None:
        if L < 1 or N < 0:
            raise ConfigurationError(f"Sector needs L >= 1 and N >= 0, got L={L}, N={N}")
        cap = N if n_max is None else int(n_max)
        if cap < 0:
            raise ConfigurationError(f"n_max must be non-negative, got {n_max}")
        if cap * L < N:
            raise ConfigurationError(
                f"Empty sector: {N} bosons do not fit on {L} sites with n_max={cap}"
            )

        self.L = L
        self.N = N
        self.n_max = min(cap, N)

        counts = _count_table(L, N, self.n_max)
        dim = counts[L][N]
        if dim > MAX_ENUMERATED_DIM:
            raise SectorTooLargeError(
                f"Sector (L={L}, N={N}, n_max={self.n_max}) has dim={dim}, "
                f"above the enumeration limit {MAX_ENUMERATED_DIM}"
            )
        self.dim = dim

        # skip[k, rem, x]: states that precede any state whose next entry is x,
        # given `rem` bosons left for the current site plus k trailing sites.
        skip = np.zeros((L, N + 1, N + 1), dtype=np.int64)
        for k in range(L):
            for rem in range(N + 1):
                acc = 0
                for x in range(min(rem, self.n_max), -1, -1):
                    skip[k, rem, x] = acc
                    acc += counts[k][rem - x]
        self._counts = counts
        self._skip = skip

        states = _enumerate(L, N, self.n_max)
        states.setflags(write=False)
        self.states = states
        logger.debug("Enumerated sector L=%d N=%d n_max=%d (dim=%d)", L, N, self.n_max, dim)

    @property
    def filling(self) -> float:
        """Filling factor f = N / L."""
        return self.N / self.L

    def __len__(self) -> int:
        return self.dim

    def __iter__(self) -> Iterator[OccupationVector]:
        for row in self.states:
            yield tuple(int(n) for n in row)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BasisSector):
            return NotImplemented
        return (self.L, self.N, self.n_max) == (other.L, other.N, other.n_max)

    def __hash__(self) -> int:
        return hash((self.L, self.N, self.n_max))

    def __repr__(self) -> str:
        return f"BasisSector(L={self.L}, N={self.N}, n_max={self.n_max}, dim={self.dim})"

    def rank(self, occ: Sequence[int]) -> int:
        """Index of an occupation vector in the canonical ordering."""
        v = self._validate(np.asarray(occ, dtype=np.int64).reshape(1, -1))
        return int(self._rank_rows(v)[0])

    index_of_fock = rank

    def rank_many(self, states: np.ndarray) -> np.ndarray:
        """Vectorized rank of an (m, L) array of occupation vectors."""
        v = self._validate(np.asarray(states, dtype=np.int64).reshape(-1, self.L))
        return self._rank_rows(v)

    def unrank(self, index: int) -> OccupationVector:
        """Occupation vector with the given rank."""
        if not 0 <= index < self.dim:
            raise ConfigurationError(f"Index {index} out of range for sector of dim {self.dim}")
        remaining = int(index)
        rem = self.N
        occ: list[int] = []
        for pos in range(self.L):
            k = self.L - 1 - pos
            for x in range(min(rem, self.n_max), -1, -1):
                block = self._counts[k][rem - x]
                if remaining < block:
                    occ.append(x)
                    rem -= x
                    break
                remaining -= block
        return tuple(occ)

    def _validate(self, v: np.ndarray) -> np.ndarray:
        if v.shape[1] != self.L:
            raise ConfigurationError(f"Occupation vectors need {self.L} entries, got {v.shape[1]}")
        if np.any(v < 0) or np.any(v > self.n_max):
            raise ConfigurationError(f"Occupations must lie in [0, {self.n_max}]")
        totals = v.sum(axis=1)
        if np.any(totals != self.N):
            bad = int(totals[totals != self.N][0])
            raise ConfigurationError(f"Occupation vector has total {bad}, sector has N={self.N}")
        return v

    def _rank_rows(self, v: np.ndarray) -> np.ndarray:
        rem = self.N - np.concatenate(
            [np.zeros((v.shape[0], 1), dtype=np.int64), np.cumsum(v[:, :-1], axis=1)], axis=1
        )
        trailing = np.arange(self.L - 1, -1, -1)
        return self._skip[trailing[None, :], rem, v].sum(axis=1)


def _enumerate(L: int, N: int, cap: int) -> np.ndarray:
    """All occupation vectors in descending lexicographic order."""

    @lru_cache(maxsize=None)
    def block(k: int, m: int) -> np.ndarray:
        if k == 0:
            return np.zeros((1 if m == 0 else 0, 0), dtype=np.int64)
        parts = []
        for x in range(min(m, cap), -1, -1):
            tail = block(k - 1, m - x)
            if len(tail):
                head = np.full((len(tail), 1), x, dtype=np.int64)
                parts.append(np.hstack([head, tail]))
        if not parts:
            return np.zeros((0, k), dtype=np.int64)
        return np.vstack(parts)

    return np.ascontiguousarray(block(L, N))


@lru_cache(maxsize=64)
def enumerate_sector(L: int, N: int, n_max: int | None = None) -> BasisSector:
    """Build (or fetch the cached) sector for L sites and N bosons."""
    return BasisSector(L, N, n_max)


def rank(sector: BasisSector, occ: Sequence[int]) -> int:
    """Index of ``occ`` in ``sector``."""
    return sector.rank(occ)


def unrank(sector: BasisSector, index: int) -> OccupationVector:
    """Occupation vector at ``index`` in ``sector``."""
    return sector.unrank(index)


def neel_occupations(L: int) -> OccupationVector:
    """Neel-type product configuration |1010...>."""
    return tuple(1 - (i % 2) for i in range(L))


def fock_state(sector: BasisSector, occ: Sequence[int]) -> np.ndarray:
    """Unit amplitude vector of a Fock configuration."""
    psi = np.zeros(sector.dim, dtype=np.complex128)
    psi[sector.rank(occ)] = 1.0
    return psi
