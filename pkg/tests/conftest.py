from __future__ import annotations

import pytest

import blochdecay as bd

# operating point used throughout: shallow lattice, strong tilt
V0 = 1.0
F0 = 0.383


@pytest.fixture(scope="session")
def paper_params():
    return bd.LatticeParams(V0, F0)


@pytest.fixture(scope="session")
def mean_gap_v1(paper_params):
    return bd.mean_band_gap(paper_params)


@pytest.fixture(scope="session")
def ingredients_v1(paper_params, mean_gap_v1):
    return bd.StepIngredients.from_lattice(paper_params, mean_gap=mean_gap_v1)


@pytest.fixture(scope="session")
def operator_v1(ingredients_v1):
    return bd.step_operator(ingredients_v1)


@pytest.fixture(scope="session")
def trace_v1(paper_params):
    """Full-solver trace at the operating point, 10 cycles, default config."""
    return bd.evolve_lattice(paper_params, bd.SolverConfig())


@pytest.fixture(scope="session")
def plateaus_v1(trace_v1, paper_params):
    return bd.extract_plateaus(trace_v1, paper_params)
