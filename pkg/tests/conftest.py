"""Shared fixtures for bosechain tests."""

import textwrap

import numpy as np
import pytest

from bosechain.basis import enumerate_sector
from bosechain.model import DisorderKind, DisorderModel, ModelParams, build_hamiltonian, sample_disorder


# ---------------------------------------------------------------------------
# Sectors and Hamiltonians
# ---------------------------------------------------------------------------


@pytest.fixture
def small_sector():
    """L=4, N=2: dim 10."""
    return enumerate_sector(4, 2)


@pytest.fixture
def half_filled_sector():
    """L=6, N=3: dim 56."""
    return enumerate_sector(6, 3)


@pytest.fixture
def uniform_model():
    return DisorderModel(kind=DisorderKind.uniform, W=10.0)


@pytest.fixture
def clean_realization():
    return sample_disorder(DisorderModel(kind=DisorderKind.clean), 6, seed=0)


@pytest.fixture
def disordered_realization(uniform_model):
    return sample_disorder(uniform_model, 6, seed=1234, params=ModelParams(L=6, U=3.5))


@pytest.fixture
def disordered_hamiltonian(half_filled_sector, disordered_realization):
    params = ModelParams(L=6, U=3.5)
    return build_hamiltonian(params, disordered_realization, half_filled_sector)


@pytest.fixture
def dense_hamiltonian(disordered_hamiltonian):
    return disordered_hamiltonian.toarray()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_state(rng):
    """Factory for normalized complex vectors."""
    def make(dim):
        psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        return psi / np.linalg.norm(psi)
    return make


# ---------------------------------------------------------------------------
# YAML file fixtures (use tmp_path)
# ---------------------------------------------------------------------------


@pytest.fixture
def eigenstate_yaml(tmp_path):
    content = textwrap.dedent(f"""\
        name: tiny-eigenstate
        description: Two sizes, six strengths
        task: eigenstate
        ensemble:
          sizes: [6, 4]
          U: [3.5]
          W: [2, 4, 6, 8, 10, 12]
          realizations: 4
          master_seed: 5
          n_bins: 8
          exclude_ambiguous: false
        output:
          directory: "{tmp_path}/runs/{{name}}"
    """)
    p = tmp_path / "eigenstate.yaml"
    p.write_text(content)
    return p


@pytest.fixture
def gap_ratio_yaml(tmp_path):
    content = textwrap.dedent(f"""\
        name: tiny-gap-ratio
        task: gap_ratio
        ensemble:
          sizes: [6]
          U: [1.0]
          W: [1, 20]
          realizations: 3
          window: 8
          n_bins: 8
          exclude_ambiguous: false
        output:
          directory: "{tmp_path}/runs/{{name}}"
    """)
    p = tmp_path / "gap_ratio.yaml"
    p.write_text(content)
    return p


@pytest.fixture
def quench_yaml(tmp_path):
    content = textwrap.dedent(f"""\
        name: tiny-quench
        task: quench_ed
        ensemble:
          sizes: [4]
          U: [3.5]
          W: [5]
          realizations: 2
          times:
            t_max: 4
            n: 9
            spacing: linear
          r_max: 2
        output:
          directory: "{tmp_path}/runs/{{name}}"
    """)
    p = tmp_path / "quench.yaml"
    p.write_text(content)
    return p


@pytest.fixture
def invalid_yaml(tmp_path):
    """Negative disorder strength and an unknown task."""
    content = textwrap.dedent("""\
        name: broken
        task: banana
        ensemble:
          sizes: [8]
          W: [-1]
    """)
    p = tmp_path / "broken.yaml"
    p.write_text(content)
    return p


@pytest.fixture
def invalid_yaml_syntax(tmp_path):
    p = tmp_path / "bad_syntax.yaml"
    p.write_text("name: foo\n  bad indent: [")
    return p
