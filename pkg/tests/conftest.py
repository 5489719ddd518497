import numpy as np
import pytest

from learnedlsm.workload import DatasetKind, DatasetSpec, gen_keys


@pytest.fixture(scope="session")
def uniform_20k() -> np.ndarray:
    return gen_keys(DatasetSpec(kind=DatasetKind.UNIFORM, n=20_000, seed=101))


@pytest.fixture(scope="session")
def uniform_100k() -> np.ndarray:
    return gen_keys(DatasetSpec(kind=DatasetKind.UNIFORM, n=100_000, seed=7))


@pytest.fixture(scope="session")
def all_datasets_20k() -> dict[str, np.ndarray]:
    return {
        kind.value: gen_keys(DatasetSpec(kind=kind, n=20_000, seed=11))
        for kind in (DatasetKind.UNIFORM, DatasetKind.SEGMENTED,
                     DatasetKind.LOGNORMAL, DatasetKind.PARETO_GAPS)
    }
