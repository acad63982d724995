import numpy as np
import pytest

from aeromrac.plant3dof import assemble_fom, default_params
from aeromrac.romgen import default_rom


@pytest.fixture(scope="session")
def fom():
    return assemble_fom(default_params())


@pytest.fixture(scope="session")
def rom(fom):
    return default_rom(fom)


def random_stable(rng, n, margin=0.5):
    """Random Hurwitz matrix with spectral abscissa below -margin."""
    A = rng.normal(size=(n, n))
    shift = np.linalg.eigvals(A).real.max() + margin + rng.uniform(0.0, 0.5)
    return A - shift * np.eye(n)
