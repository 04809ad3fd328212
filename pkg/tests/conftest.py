import numpy as np
import pytest

from roughlab.coefficient_fields import make_logistic
from roughlab.rough_driver import power_singularity, run_family
from roughlab.semigroup import assemble
from roughlab.spectral_core import DomainSpec, dirichlet_eigenpairs

LEVELS = (2, 4, 8, 16)


@pytest.fixture(scope="session")
def interval():
    return DomainSpec.interval(np.pi, 255)


@pytest.fixture(scope="session")
def small_interval():
    return DomainSpec.interval(np.pi, 63)


@pytest.fixture(scope="session")
def basis(interval):
    return dirichlet_eigenpairs(interval, 64)


@pytest.fixture(scope="session")
def study_domain():
    """Interval with node/mode ratio 2 used by the rough-data studies."""
    return DomainSpec.interval(np.pi, 511)


@pytest.fixture(scope="session")
def logistic_problem(study_domain):
    def build(rho=3.0):
        rd = make_logistic(study_domain.constant(1.0), rho)
        return assemble(study_domain, rd.m, 255), rd

    return build


@pytest.fixture(scope="session")
def logistic_family(logistic_problem):
    """Cached amplitude-truncation families of x^(-1/4) keyed by (rho, q)."""
    cache = {}

    def get(rho=3.0, q=1.0):
        if (rho, q) not in cache:
            problem = logistic_problem(rho)
            cache[rho, q] = problem, run_family(problem, power_singularity(0.25, q), LEVELS, 1.0)
        return cache[rho, q]

    return get
