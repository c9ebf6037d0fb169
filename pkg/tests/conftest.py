"""Session fixtures: every trained model here uses the 32 px fast mode."""
import numpy as np
import pytest

from tactipush.bench.dataset import generate_push_dataset
from tactipush.core import Rng
from tactipush.forecast.base import PredictorConfig
from tactipush.forecast.state_tfm import StateTfmHyperparams, train_state_tfm
from tactipush.forecast.windows import dataset_windows
from tactipush.tactile.clm import ClmDatasetSpec, ClmHyperparams, generate_clm_dataset, train_clm
from tactipush.tactile.render import MarkerLayout


@pytest.fixture(scope="session")
def layout32():
    return MarkerLayout(resolution=32)


@pytest.fixture(scope="session")
def clm_samples32(layout32):
    return generate_clm_dataset(ClmDatasetSpec(), layout=layout32)


@pytest.fixture(scope="session")
def clm32(clm_samples32):
    return train_clm(clm_samples32, ClmHyperparams(), np.random.default_rng(0))


@pytest.fixture(scope="session")
def push100():
    return generate_push_dataset(100, rng=Rng(0))


@pytest.fixture(scope="session")
def push_test():
    """Held-out pushes drawn from a different seed tree than the training set."""
    return generate_push_dataset(24, rng=Rng(1))


@pytest.fixture(scope="session")
def predictor_cfg():
    return PredictorConfig()


@pytest.fixture(scope="session")
def state_tfm(push100, clm32, predictor_cfg):
    windows = dataset_windows(push100, predictor_cfg, clm32)
    return train_state_tfm(windows, predictor_cfg, StateTfmHyperparams(), np.random.default_rng(0))


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the terminal summary repeats them all."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
