import numpy as np
import pytest

from mrsfit.axis import build_axis
from mrsfit.basis import MetaboliteSpec, Peak, default_basis, synthesize_basis
from mrsfit.priors import default_priors
from mrsfit.signal_model import ModelParams


@pytest.fixture(scope="session")
def axis():
    return build_axis()


@pytest.fixture(scope="session")
def basis(axis):
    return default_basis(axis)


@pytest.fixture(scope="session")
def priors(basis):
    return default_priors(basis.names)


@pytest.fixture(scope="session")
def tiny_axis():
    # 64-point geometry keeps gradient and training tests fast
    return build_axis(n_points=64, bandwidth_hz=1000.0, field_mhz=100.0,
                      center_ppm=4.65, crop_ppm=(3.0, 6.2))


@pytest.fixture(scope="session")
def tiny_basis(tiny_axis):
    mets = [
        MetaboliteSpec("A", (Peak(4.0, 1.0),)),
        MetaboliteSpec("B", (Peak(5.3, 1.5),)),
        MetaboliteSpec("MMtest", (Peak(4.7, 0.5),), is_mm=True),
    ]
    return synthesize_basis(mets, tiny_axis)


def random_theta(rng, m=3, amp_range=(0.5, 10.0)):
    return ModelParams(
        amplitudes=rng.uniform(*amp_range, m),
        gamma=rng.uniform(2.0, 20.0),
        sigma_g=rng.uniform(2.0, 20.0),
        epsilon=rng.uniform(-8.0, 8.0),
        phi0=rng.uniform(-0.5, 0.5),
        phi1=rng.uniform(-1e-5, 1e-5),
        baseline=rng.uniform(-2.0, 2.0, 6),
    )
