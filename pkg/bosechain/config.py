"""
Run configurations: pydantic models loaded from YAML.

A config names a task and the ensemble grid it runs over. Bare names
resolve to the bundled files in ``configs/``.
"""

import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, Field, field_validator, model_validator

from bosechain.basis import capped_sector_dimension, sector_dimension
from bosechain.dos import ChebyshevConfig, DosMethod
from bosechain.krylov import KrylovConfig, time_grid
from bosechain.model import DisorderKind, DisorderModel, ModelParams
from bosechain.mps import TebdConfig

logger = logging.getLogger("bosechain.config")

CONFIGS_DIR = Path(__file__).parent.parent / "configs"


class Task(str, Enum):
    eigenstate = "eigenstate"
    gap_ratio = "gap_ratio"
    quench_ed = "quench_ed"
    quench_mps = "quench_mps"
    phase_diagram = "phase_diagram"


class TimeGrid(BaseModel):
    """Quench sampling grid starting at t = 0."""
    t_max: float = Field(default=100.0, gt=0)
    n: int = Field(default=61, ge=2)
    spacing: Literal["linear", "log"] = "log"
    t_min: float = Field(default=0.1, gt=0)

    def grid(self) -> np.ndarray:
        return time_grid(self.t_max, self.n, self.spacing, self.t_min)


class CollapseConfig(BaseModel):
    """Finite-size scaling fit settings."""
    nu_min: float = Field(default=0.3, gt=0)
    nu_max: float = Field(default=3.0, gt=0)
    grid_points: int = Field(default=25, ge=3)
    n_boot: int = Field(default=50, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_range(self) -> "CollapseConfig":
        if self.nu_min >= self.nu_max:
            raise ValueError("nu_min must be below nu_max")
        return self


class EnsembleSpec(BaseModel):
    """Grid of (L, U, W) cells and the per-realization numerics."""
    task: Task = Task.eigenstate
    sizes: list[int] = Field(min_length=1)
    filling: float = Field(default=0.5, gt=0)
    n_max: int | None = Field(default=None, ge=1)
    U: list[float] = Field(default_factory=lambda: [3.5], min_length=1)
    W: list[float] = Field(min_length=1, description="Scanned disorder strength (W, B or delta by kind)")
    J: float = Field(default=1.0, gt=0)
    U2: float = 0.0
    J2: float = 0.0
    disorder: DisorderModel = Field(default_factory=lambda: DisorderModel(kind=DisorderKind.uniform))
    realizations: int = Field(default=300, ge=1)
    master_seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    n_bins: int = Field(default=100, ge=3)
    dos_method: DosMethod = DosMethod.auto
    chebyshev: ChebyshevConfig = Field(default_factory=ChebyshevConfig)
    window: int = Field(default=16, ge=3)
    failure_budget: float = Field(default=0.05, ge=0, le=1)
    exclude_ambiguous: bool = True
    krylov: KrylovConfig = Field(default_factory=KrylovConfig)
    tebd: TebdConfig = Field(default_factory=TebdConfig)
    times: TimeGrid = Field(default_factory=TimeGrid)
    reference: float = Field(default=1e-2, gt=0)
    tail_fraction: float = Field(default=0.5, gt=0, le=1)
    r_max: int = Field(default=4, ge=1)
    collapse: CollapseConfig = Field(default_factory=CollapseConfig)

    @field_validator("sizes")
    @classmethod
    def _check_sizes(cls, sizes: list[int]) -> list[int]:
        if any(L < 2 for L in sizes):
            raise ValueError("every system size must be at least 2")
        if len(set(sizes)) != len(sizes):
            raise ValueError("system sizes must be distinct")
        return sorted(sizes)

    @field_validator("W")
    @classmethod
    def _check_strengths(cls, W: list[float]) -> list[float]:
        if any(not math.isfinite(w) or w < 0 for w in W):
            raise ValueError("disorder strengths must be finite and non-negative")
        return sorted(W)

    @model_validator(mode="after")
    def _check_sectors(self) -> "EnsembleSpec":
        for L in self.sizes:
            N = self.particles(L)
            if self.n_max is None:
                dim = sector_dimension(L, N)
            else:
                dim = capped_sector_dimension(L, N, self.n_max)
            if dim == 0:
                raise ValueError(f"L={L}: {N} bosons do not fit with n_max={self.n_max}")
            if self.task == Task.gap_ratio and dim < 3:
                raise ValueError(f"L={L}: gap ratios need a sector of at least 3 states, got {dim}")
        return self

    def particles(self, L: int) -> int:
        """N = round(f L), halves rounded up."""
        return int(math.floor(self.filling * L + 0.5))

    def params(self, L: int, U: float) -> ModelParams:
        return ModelParams(L=L, U=U, J=self.J, U2=self.U2, J2=self.J2)

    def disorder_at(self, W: float) -> DisorderModel:
        return self.disorder.with_strength(W)

    def cells(self) -> list[tuple[int, float, float]]:
        """All (L, U, W) cells in canonical order."""
        return [(L, U, W) for L in self.sizes for U in self.U for W in self.W]


class OutputConfig(BaseModel):
    directory: str = "runs/{name}"
    overwrite: bool = False

    def resolve(self, name: str) -> Path:
        return Path(self.directory.format(name=name))


class RunConfig(BaseModel):
    """One YAML run file."""
    name: str
    description: str = ""
    task: Task
    ensemble: EnsembleSpec
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="before")
    @classmethod
    def _inject_task(cls, data: Any) -> Any:
        # the ensemble is validated against the run task, not its own default
        if isinstance(data, dict) and isinstance(data.get("ensemble"), dict) and "task" in data:
            data = {**data, "ensemble": {**data["ensemble"], "task": data["task"]}}
        return data

    def model_post_init(self, __context: Any) -> None:
        if self.ensemble.task != self.task:
            self.ensemble = self.ensemble.model_copy(update={"task": self.task})


def _resolve_config(name_or_path: str | Path) -> Path:
    """Resolve a config name or path to an actual file path.

    If the string contains '/' or ends with '.yaml'/'.yml'/'.json', treat as a
    file path. Otherwise, look up a bundled config by name in CONFIGS_DIR.
    """
    s = str(name_or_path)
    if "/" in s or s.endswith((".yaml", ".yml", ".json")):
        return Path(s)
    bundled = CONFIGS_DIR / f"{s}.yaml"
    if bundled.exists():
        return bundled
    return Path(s)


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a YAML (or JSON) run config."""
    resolved = _resolve_config(path)
    data = yaml.safe_load(resolved.read_text())
    config = RunConfig(**data)
    logger.info(
        "Loaded [bold]%s[/bold] from %s (%d cells)",
        config.name, resolved, len(config.ensemble.cells()),
        extra={"markup": True},
    )
    return config


def bundled_configs() -> list[str]:
    return sorted(p.stem for p in CONFIGS_DIR.glob("*.yaml"))
