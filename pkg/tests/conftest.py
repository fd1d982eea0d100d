import numpy as np
import pytest

from duqfl.data import export_wdbc, load_wdbc, preprocess, stratified_split
from duqfl.model import Dataset


@pytest.fixture(scope="session")
def wdbc_path(tmp_path_factory):
    return export_wdbc(tmp_path_factory.mktemp("data") / "wdbc.data")


@pytest.fixture(scope="session")
def wdbc(wdbc_path):
    return load_wdbc(wdbc_path)


@pytest.fixture(scope="session")
def wdbc_angles(wdbc):
    """Seed-0 split of WDBC mapped to 4 angles."""
    train, test = stratified_split(wdbc, 0.2, seed=0)
    return preprocess(train, 4, test)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_dataset(rng, m, n):
    return Dataset(rng.uniform(0, np.pi, size=(m, n)), rng.integers(0, 2, size=m))


# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {key}: {detail}")
