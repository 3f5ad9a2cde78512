import numpy as np
import pytest

from ebinflow import MetricField, SymMat, TensorField, spd_guard


def random_sym(rng, n=3, scale=1.0):
    raw = rng.standard_normal((n, n))
    return SymMat(scale * 0.5 * (raw + raw.T))


def random_spd(rng, n=3, scale=0.6):
    """Identity plus a spectrally bounded symmetric bump: safely inside the cone."""
    raw = rng.standard_normal((n, n))
    bump = 0.5 * (raw + raw.T)
    bump *= scale / max(1e-12, np.max(np.abs(np.linalg.eigvalsh(bump))))
    return spd_guard(SymMat(np.eye(n) + bump))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
