from __future__ import annotations

import numpy as np
import pytest

import make_fixture_systems as fx
from lqbae.model import QuadratureRealization, SystemParams, quadrature_realization


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def michelson() -> SystemParams:
    return fx.michelson_params()


@pytest.fixture
def michelson_real(michelson) -> QuadratureRealization:
    return quadrature_realization(michelson)


@pytest.fixture
def cavity() -> SystemParams:
    return fx.cavity_params()


@pytest.fixture
def cavity_real(cavity) -> QuadratureRealization:
    return quadrature_realization(cavity)


@pytest.fixture
def qnd_system() -> SystemParams:
    return fx.qnd_params()


@pytest.fixture
def plant():
    return fx.feedback_plant()


@pytest.fixture
def beamsplitter():
    return fx.feedback_beamsplitter()


@pytest.fixture
def systems_dir(tmp_path):
    return fx.write_all(str(tmp_path / "systems"))
