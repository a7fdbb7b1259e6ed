"""Shared fixtures and hypothesis strategies."""

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from fact.data import SyntheticSpec, gen_synthetic, train_baseline
from fact.tensor import Marginals, embedding

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

SYNTH_SEED = 7


@st.composite
def regular_marginals(draw, max_n=200):
    """Integer marginals with every group holding both classes."""
    n1 = draw(st.integers(2, max_n))
    n0 = draw(st.integers(2, max_n))
    m1 = draw(st.integers(1, n1 - 1))
    m0 = draw(st.integers(1, n0 - 1))
    return Marginals(n1=n1, m1=m1, n0=n0, m0=m0)


@st.composite
def points_in_k(draw, m=None):
    """A marginals instance and a normalized tensor inside its polytope."""
    m = m or draw(regular_marginals())
    fr = draw(st.lists(st.floats(0, 1), min_size=4, max_size=4))
    box = m.free_box()
    P, p0 = embedding(m)
    return m, P @ (np.array(fr) * box) + p0


def random_tensor_z(rng, m):
    P, p0 = embedding(m)
    return P @ (rng.random(4) * m.free_box()) + p0


@pytest.fixture(scope="session")
def synth_b():
    return gen_synthetic(SyntheticSpec(n=20_000, variant="B", seed=SYNTH_SEED))


@pytest.fixture(scope="session")
def synth_u():
    return gen_synthetic(SyntheticSpec(n=20_000, variant="U", seed=SYNTH_SEED))


@pytest.fixture(scope="session")
def baseline_b(synth_b):
    return train_baseline(synth_b, seed=SYNTH_SEED)


@pytest.fixture(scope="session")
def base_tensor_b(synth_b, baseline_b):
    return synth_b.tensor(baseline_b.yhat)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240601))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.acceptance_lines():
        terminalreporter.write_line(line)
