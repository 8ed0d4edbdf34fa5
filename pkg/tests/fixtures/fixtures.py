from pathlib import Path
import shutil
from typing import List

import numpy as np
import pandas as pd
import pytest

from simplex_market.calibration import SECONDS_PER_YEAR
from simplex_market.model_params import (
    AdmissibleSimplexParameterSet,
    JointModelSpec,
    TotalCapParams,
    VSMSpec,
    vsm_to_params,
)
from simplex_market.sde_sim import PathConfig, simulate_vsm_assets

TEST_DATA = Path(__file__).parent
PARAM_FILES = sorted(p.name for p in (TEST_DATA / "params").glob("*.json"))
POLYNOMIAL_FILES = sorted(p.name for p in (TEST_DATA / "polynomials").glob("*.json"))


def vsm(alpha: float, d: int) -> AdmissibleSimplexParameterSet:
    return vsm_to_params(VSMSpec(alpha, d)).simplex


def random_admissible_params(rng: np.random.Generator, d: int) -> AdmissibleSimplexParameterSet:
    """Random parameters with positive off-diagonal gamma and an inward drift matrix."""
    gamma = np.triu(rng.uniform(0.5, 2.0, size=(d, d)), 1)
    gamma = gamma + gamma.T
    B_hat = rng.uniform(0.0, 1.0, size=(d, d))
    np.fill_diagonal(B_hat, 0.0)
    np.fill_diagonal(B_hat, -B_hat.sum(axis=0))
    off = B_hat + np.diag(np.full(d, np.inf))
    beta = rng.uniform(0.0, 1.0, size=d) * off.min(axis=1)
    return AdmissibleSimplexParameterSet(beta, B_hat - beta[:, None], gamma)


def random_joint_spec(rng: np.random.Generator, d: int) -> JointModelSpec:
    totalcap = TotalCapParams(
        kappa=rng.uniform(0.0, 1.0),
        phi=rng.uniform(0.0, 1.0),
        lam=rng.uniform(-1.0, 1.0),
        sigma=rng.uniform(0.0, 1.0),
    )
    return JointModelSpec(random_admissible_params(rng, d), totalcap)


def random_simplex_points(rng: np.random.Generator, m: int, d: int) -> np.ndarray:
    """Interior points, bounded away from the faces."""
    return rng.dirichlet(np.full(d, 2.0), size=m)


def path_config(**kwargs) -> PathConfig:
    kwargs.setdefault("progress", False)
    kwargs.setdefault("n_threads", 2)
    return PathConfig(**kwargs)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def random_params(rng: np.random.Generator) -> List[AdmissibleSimplexParameterSet]:
    return [random_admissible_params(rng, d) for d in (2, 3, 4, 5) for _ in range(5)]


@pytest.fixture
def vsm_params(request: pytest.FixtureRequest) -> AdmissibleSimplexParameterSet:
    alpha, d = request.param
    return vsm(alpha, d)


def setup_file(folder: str, name: str, root: Path) -> Path:
    shutil.copy(TEST_DATA / folder / name, root / name)
    return root / name


@pytest.fixture
def params_file(request: pytest.FixtureRequest, tmp_path: Path) -> Path:
    return setup_file("params", request.param, tmp_path)


@pytest.fixture
def polynomial_file(request: pytest.FixtureRequest, tmp_path: Path) -> Path:
    return setup_file("polynomials", request.param, tmp_path)


@pytest.fixture
def caps_csv(tmp_path: Path) -> Path:
    return setup_file("data", "caps.csv", tmp_path)


@pytest.fixture
def simulated_caps_csv(tmp_path: Path) -> Path:
    """Capitalizations of one volatility stabilized path (alpha = 2, d = 3) over 20 years, in epoch seconds."""
    bundle = simulate_vsm_assets(VSMSpec(2.0, 3), [1.0, 2.0, 3.0], path_config(n_paths=1, T=20.0, seed=47))
    frame = pd.DataFrame(bundle.caps[0], columns=["cap_1", "cap_2", "cap_3"])
    frame.insert(0, "time", bundle.times * SECONDS_PER_YEAR)
    path = tmp_path / "simulated_caps.csv"
    frame.to_csv(path, index=False)
    return path
