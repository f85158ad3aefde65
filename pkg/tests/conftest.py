import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ktm.data import segment, simulate_crossings  # noqa: E402
from ktm.functional import TimeBasis  # noqa: E402
from ktm.kernels import RepresentativeSet  # noqa: E402
from ktm.mdn import MdnConfig, init_params  # noqa: E402
from ktm.pipeline import KtmConfig, KtmModel, train_ktm  # noqa: E402


@pytest.fixture(scope="session")
def small_pairs():
    return segment(simulate_crossings(num_pairs=40, seed=3))


@pytest.fixture(scope="session")
def small_config():
    return KtmConfig(representative_step=4, hidden_dim=16, num_components=3, epochs=15, batch_size=8, seed=5)


@pytest.fixture(scope="session")
def small_model(small_pairs, small_config):
    return train_ktm(small_pairs, small_config)


def fixed_mixture_model(alphas, means, sigmas, basis=None, reps=None):
    """A model whose output mixture ignores the query: only biases are set."""
    alphas, means, sigmas = (np.asarray(a, dtype=float) for a in (alphas, means, sigmas))
    r, k = means.shape
    basis = basis or TimeBasis(tuple(float(i) for i in range(k // 2)), ell_t=2.0)
    reps = reps or RepresentativeSet([[(0.0, 0.0), (1.0, 0.0)], [(0.0, 0.0), (0.0, 1.0)]])
    config = MdnConfig(input_dim=len(reps), output_dim=k, hidden_dim=3, num_components=r)
    params = init_params(config).zeros_like()
    with np.errstate(divide="ignore"):
        params.alpha_b[:] = np.log(alphas)
    params.mean_b[:] = means.ravel()
    params.sigma_b[:] = np.log(sigmas).ravel()
    return KtmModel(reps, 10.0, basis, config, params)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.format_line(number))
