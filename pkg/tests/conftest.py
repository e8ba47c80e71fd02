import numpy as np
import pytest

from evmcontrol.project import Activity, case_study_project, make_project
from evmcontrol.simulate import run_ensemble


@pytest.fixture(scope="session")
def case_study():
    return case_study_project()


@pytest.fixture(scope="session")
def zero_variance_case_study(case_study):
    acts = [Activity(a.id, a.mean_duration, 0.0, a.cost_rate) for a in case_study.activities]
    return make_project(acts, case_study.edges)


@pytest.fixture(scope="session")
def ensemble_half(case_study):
    """20k-run ensemble at the 50% pivot, shared across test modules."""
    return run_ensemble(case_study, 20000, seed=2024, ev_levels=[0.5])


@pytest.fixture(scope="session")
def gaussian_cloud():
    rng = np.random.default_rng(99)
    return rng.standard_normal((10000, 2))
