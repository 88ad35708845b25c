"""Tests for YAML run config loading and validation."""

import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from pydantic import ValidationError

from bosechain.config import (
    CONFIGS_DIR,
    CollapseConfig,
    EnsembleSpec,
    OutputConfig,
    RunConfig,
    Task,
    _resolve_config,
    bundled_configs,
    load_config,
)
from bosechain.model import DisorderKind, DisorderModel


class TestLoadConfig:
    def test_valid_config(self, eigenstate_yaml, tmp_path):
        config = load_config(eigenstate_yaml)
        assert config.name == "tiny-eigenstate"
        assert config.task == Task.eigenstate
        assert config.ensemble.sizes == [4, 6]  # sorted
        assert config.ensemble.realizations == 4
        assert config.output.resolve(config.name) == tmp_path / "runs" / "tiny-eigenstate"

    def test_task_copied_into_ensemble(self, gap_ratio_yaml):
        config = load_config(gap_ratio_yaml)
        assert config.ensemble.task == Task.gap_ratio
        assert config.ensemble.window == 8

    def test_defaults(self, gap_ratio_yaml):
        spec = load_config(gap_ratio_yaml).ensemble
        assert spec.filling == 0.5
        assert spec.disorder.kind == DisorderKind.uniform
        assert spec.failure_budget == 0.05
        assert spec.reference == 1e-2

    def test_time_grid(self, quench_yaml):
        grid = load_config(quench_yaml).ensemble.times.grid()
        np.testing.assert_allclose(grid, np.linspace(0.0, 4.0, 9))

    def test_invalid_fields(self, invalid_yaml):
        with pytest.raises(ValidationError) as info:
            load_config(invalid_yaml)
        locations = {item["loc"] for item in info.value.errors()}
        assert ("task",) in locations
        assert ("ensemble", "W") in locations

    def test_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nonexistent.yaml")

    def test_yaml_syntax_error(self, invalid_yaml_syntax):
        with pytest.raises(yaml.YAMLError):
            load_config(invalid_yaml_syntax)

    def test_json_config(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({
            "name": "from-json",
            "task": "gap_ratio",
            "ensemble": {"sizes": [8], "W": [1, 2]},
        }))
        config = load_config(p)
        assert config.task == Task.gap_ratio
        assert config.ensemble.W == [1.0, 2.0]


class TestEnsembleSpec:
    def test_strengths_sorted(self):
        assert EnsembleSpec(sizes=[8], W=[5, 1, 3]).W == [1.0, 3.0, 5.0]

    def test_rejects_negative_strength(self):
        with pytest.raises(ValidationError, match="non-negative"):
            EnsembleSpec(sizes=[8], W=[-1.0])

    def test_rejects_non_finite_strength(self):
        with pytest.raises(ValidationError):
            EnsembleSpec(sizes=[8], W=[float("inf")])

    def test_rejects_duplicate_sizes(self):
        with pytest.raises(ValidationError, match="distinct"):
            EnsembleSpec(sizes=[8, 8], W=[1.0])

    def test_rejects_tiny_chain(self):
        with pytest.raises(ValidationError):
            EnsembleSpec(sizes=[1], W=[1.0])

    def test_particles_round_halves_up(self):
        spec = EnsembleSpec(sizes=[8], W=[1.0])
        assert spec.particles(8) == 4
        assert spec.particles(5) == 3

    def test_cells_in_canonical_order(self):
        spec = EnsembleSpec(sizes=[10, 8], U=[0.0, 3.5], W=[2.0, 1.0])
        assert spec.cells()[:3] == [(8, 0.0, 1.0), (8, 0.0, 2.0), (8, 3.5, 1.0)]
        assert len(spec.cells()) == 8

    def test_disorder_strength_by_kind(self):
        spec = EnsembleSpec(sizes=[8], W=[0.2], disorder=DisorderModel(kind=DisorderKind.transmon_flux))
        assert spec.disorder_at(0.2).B == 0.2

    def test_params(self):
        params = EnsembleSpec(sizes=[8], W=[1.0], J=0.5, U2=0.1).params(8, 3.5)
        assert (params.L, params.U, params.J, params.U2) == (8, 3.5, 0.5, 0.1)

    def test_gap_ratio_needs_three_levels(self):
        with pytest.raises(ValidationError, match="at least 3 states"):
            EnsembleSpec(task=Task.gap_ratio, sizes=[2], W=[1.0])

    def test_small_sector_fine_for_eigenstates(self):
        assert EnsembleSpec(sizes=[2], W=[1.0]).sizes == [2]

    def test_rejects_empty_capped_sector(self):
        with pytest.raises(ValidationError, match="do not fit"):
            EnsembleSpec(sizes=[4], W=[1.0], filling=1.5, n_max=1)

    def test_collapse_range(self):
        with pytest.raises(ValidationError, match="nu_min"):
            CollapseConfig(nu_min=2.0, nu_max=1.0)


class TestRunConfig:
    def test_output_template(self):
        assert OutputConfig(directory="out/{name}/v1").resolve("scan") == Path("out/scan/v1")

    def test_task_overrides_ensemble(self):
        config = RunConfig(name="x", task=Task.quench_ed, ensemble={"sizes": [8], "W": [1.0], "task": "eigenstate"})
        assert config.ensemble.task == Task.quench_ed

    def test_ensemble_validated_against_run_task(self):
        with pytest.raises(ValidationError, match="at least 3 states"):
            RunConfig(name="x", task=Task.gap_ratio, ensemble={"sizes": [2], "W": [1.0]})


class TestResolveConfig:
    def test_bare_name_resolves_to_bundled(self):
        assert _resolve_config("gap-ratio") == CONFIGS_DIR / "gap-ratio.yaml"

    def test_path_is_kept(self, eigenstate_yaml):
        assert _resolve_config(str(eigenstate_yaml)) == eigenstate_yaml

    def test_unknown_name_falls_through(self):
        assert _resolve_config("no-such-config") == Path("no-such-config")


class TestBundledConfigs:
    """Smoke tests for bundled YAML configs shipped with the package."""

    def test_listing(self):
        assert "eigenstate-desk" in bundled_configs()
        assert "quench-mps-mbl" in bundled_configs()

    @pytest.mark.parametrize("name", [
        "eigenstate-desk", "gap-ratio", "phase-diagram",
        "quench-mbl", "quench-ergodic", "quench-mps-mbl", "quench-mps-ergodic",
    ])
    def test_bundled_loads(self, name):
        config = load_config(name)
        assert config.name == name
        assert config.ensemble.cells()
