import numpy as np
import pytest

from flowbench.datakit import DatasetSplit, FlowDataset
from flowbench.flowgen import SolverConfig, baseline, case_id, solve_case


def toy_cavity_records(n=8, resolution=(16, 16), n_frames=6):
    """Low-velocity cavity PROP cases (density sweep) that solve in well under a second each."""
    base = baseline("cavity")
    cfg = SolverConfig(resolution=resolution, n_frames=n_frames)
    return [solve_case(base.replace(rho=float(1 + i)), cfg, "prop", case_id("prop", i)) for i in range(n)]


@pytest.fixture(scope="session")
def toy_records():
    return toy_cavity_records()


@pytest.fixture(scope="session")
def toy_dataset(toy_records):
    ids = [r.meta.case_id for r in toy_records]
    split = DatasetSplit(train=ids[:6], val=ids[6:7], test=ids[7:], seed=0)
    return FlowDataset(toy_records, split=split)
