import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def power2():
    from langmix.potential import make_power_potential

    return make_power_potential(2.0)


@pytest.fixture(scope="session")
def ginzburg_landau():
    from langmix.potential import make_ginzburg_landau

    return make_ginzburg_landau()


@pytest.fixture(scope="session")
def quadratic():
    """V(z) = z^2/2: the hyperbolic (non-degenerate) contrast potential."""
    from langmix.potential import GrowthSpec, Potential

    return Potential(
        value=lambda z: np.asarray(z, dtype=float) ** 2 / 2.0,
        deriv1=lambda z: np.asarray(z, dtype=float),
        deriv2=lambda z: np.ones_like(np.asarray(z, dtype=float)),
        alpha=0.0,
        c0_local=1.0,
        growth=GrowthSpec(c0=1.0, beta=0.0, r0=1.0),
        label="quadratic",
    )


@pytest.fixture(scope="session")
def unit_quartic():
    """V(z) = z^4/4 so that V'(z) = z^3 exactly (separable-flow oracle)."""
    from langmix.potential import GrowthSpec, Potential

    return Potential(
        value=lambda z: np.asarray(z, dtype=float) ** 4 / 4.0,
        deriv1=lambda z: np.asarray(z, dtype=float) ** 3,
        deriv2=lambda z: 3.0 * np.asarray(z, dtype=float) ** 2,
        alpha=2.0,
        c0_local=1.0,
        growth=GrowthSpec(c0=1.0, beta=2.0, r0=1.0),
        label="unit-quartic",
    )
