from importlib import resources

import numpy as np
import pytest

from cfakit.data_io import load_summary
from cfakit.estimator import MomentData, fit
from cfakit.model_spec import build_parameter_table, read_model

DATA = resources.files("cfakit") / "data"


def model(name):
    return read_model(DATA / name)


@pytest.fixture(scope="session")
def sample_b():
    return load_summary(DATA / "sample_b.sum")


@pytest.fixture(scope="session")
def sample_b8():
    return load_summary(DATA / "sample_b_iuipc8.sum")


@pytest.fixture(scope="session")
def sample_v():
    return load_summary(DATA / "sample_v.sum")


@pytest.fixture(scope="session")
def iuipc8():
    return model("iuipc8.cfa")


@pytest.fixture(scope="session")
def ml_fit_b8(iuipc8, sample_b8):
    return fit(build_parameter_table(iuipc8), MomentData.from_summary(sample_b8), analytic_gradient=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
