"""Shared fixtures: expensive synthetic signals built once per session."""
import numpy as np
import pytest

from quasivoc import fixtures

FS = 24000


@pytest.fixture(scope="session")
def vowel_data():
    """1-second synthetic vowel with its exact generator cascade/track."""
    buf, sidecar, cascade, track = fixtures.vowel(150.0, 1.0, FS)
    return buf, sidecar, cascade, track


@pytest.fixture(scope="session")
def multisine_data():
    buf, sidecar = fixtures.multisine(200.0, 10, 1.0, FS, seed=3)
    return buf, sidecar


def random_stable_frame(rng, n_sections=2, p_sec=8, q_sec=8, radius=0.9,
                        coeff_range=0.3):
    """A random stable cascade frame for response/fit tests."""
    from quasivoc.arma import ArmaSection, CascadeFrame, project_stable
    secs = [ArmaSection(project_stable(rng.uniform(-coeff_range, coeff_range, p_sec),
                                       radius=radius),
                        rng.uniform(-coeff_range, coeff_range, q_sec))
            for _ in range(n_sections)]
    return CascadeFrame(float(np.exp(rng.uniform(-1, 1))), secs)
