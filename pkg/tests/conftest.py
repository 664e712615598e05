import os

import numpy as np
import pytest

from walkoverlap.experiment import DESK_REALIZATIONS, DESK_STEPS, EnsembleConfig, run_ensemble
from walkoverlap.simulator import default_checkpoints

ACCEPTANCE_SEED = 2024
# t = 50 and t = 200 put R = 5 and R = 10 exactly at xi = 0.5
D4_EXTRA_CHECKPOINTS = (50, 200)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def campaign_config(dim):
    cp = default_checkpoints(DESK_STEPS)
    if dim == 4:
        cp = np.unique(np.concatenate([cp, D4_EXTRA_CHECKPOINTS]))
    return EnsembleConfig(
        dim=dim, master_seed=ACCEPTANCE_SEED, separations=(5, 10), steps=DESK_STEPS,
        realizations=DESK_REALIZATIONS, workers=min(8, os.cpu_count() or 1),
        checkpoints=tuple(int(c) for c in cp),
    )


@pytest.fixture(scope="session")
def desk_campaign():
    """Desk-scale campaigns (R in {5, 10}, t_max = n = 2^14), run once per dimension."""
    cache = {}

    def get(dim):
        if dim not in cache:
            cache[dim] = run_ensemble(campaign_config(dim))[0]
        return cache[dim]

    return get


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
