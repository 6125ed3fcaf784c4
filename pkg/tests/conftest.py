from __future__ import annotations

import numpy as np
import pytest

from tvtp.model import ModelConfig, ParamVector, design_params
from tvtp.simulate import DgpSpec, simulate_dgp


def random_params(rng: np.random.Generator, config: ModelConfig) -> ParamVector:
    """Parameter draw in a moderate region around the Monte Carlo design."""
    K = config.n_regimes
    trans = np.empty((K, K - 1, 2))
    trans[..., 0] = rng.uniform(-1.0, 3.0, size=(K, K - 1))
    trans[..., 1] = rng.uniform(-1.5, 1.5, size=(K, K - 1))
    kw = {}
    if config.is_joint:
        kw = dict(mu_z=rng.uniform(-0.5, 0.5), psi=rng.uniform(-0.5, 0.8, size=config.ar_order_z),
                  sigma_z=rng.uniform(0.5, 1.5), rho=rng.uniform(-0.9, 0.9))
    return ParamVector(
        mu=rng.uniform(-2, 2, size=config.n_block("mu")),
        phi=rng.uniform(-0.8, 0.8, size=(config.n_block("phi"), config.ar_order_y)),
        sigma=rng.uniform(0.4, 2.0, size=config.n_block("sigma")),
        trans=trans,
        **kw,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def design_path():
    """Joint-DGP path with rho = 0.8 and T = 300."""
    return simulate_dgp(DgpSpec(design_params(0.8), T=300, seed=11))


@pytest.fixture
def partial_config():
    return ModelConfig("partial")


@pytest.fixture
def joint_config():
    return ModelConfig("joint")


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
