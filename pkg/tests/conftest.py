"""Shared fixtures: species data and commonly used states/bases."""

import pytest

from foerster.atomic_data import (
    LifetimeModel,
    RydbergState,
    default_defects,
    default_lifetimes,
)
from foerster.collective import CollectiveState, build_basis


@pytest.fixture(scope="session")
def defects():
    return default_defects()


@pytest.fixture(scope="session")
def lifetimes():
    return default_lifetimes()


@pytest.fixture(scope="session")
def no_decay():
    return LifetimeModel.disabled()


@pytest.fixture(scope="session")
def p_state():
    """The working Rydberg level |70 P3/2, m=1/2>."""
    return RydbergState(n=70, l=1, j=1.5, m_j=0.5)


@pytest.fixture(scope="session")
def initial_triple(p_state):
    return CollectiveState(atoms=(p_state, p_state, p_state))


@pytest.fixture(scope="session")
def final_triple():
    return CollectiveState(atoms=(
        RydbergState(n=70, l=0, j=0.5, m_j=0.5),
        RydbergState(n=71, l=0, j=0.5, m_j=0.5),
        RydbergState(n=70, l=1, j=0.5, m_j=0.5),
    ))


@pytest.fixture(scope="session")
def triple_basis(initial_triple, defects):
    """The full default three-atom basis (built once per session)."""
    return build_basis(initial_triple, defects=defects)


@pytest.fixture(scope="session")
def pair_basis(p_state, defects):
    """The default two-atom basis."""
    return build_basis(CollectiveState(atoms=(p_state, p_state)), defects=defects)
