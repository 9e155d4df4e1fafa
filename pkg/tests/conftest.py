import math

import pytest

from src.models.channel import BeamChannelModel
from src.models.experiment import ExperimentConfig, ScenarioSettings
from src.models.scenario import SearchControl
from src.models.sensing import SensingConfig
from src.services.experiment_service import build_scenario


@pytest.fixture
def settings():
    """Reference operating point: M=8, 25 deg beams, N=16 samples per sector"""
    return ScenarioSettings()


@pytest.fixture
def scenario(settings):
    return build_scenario(settings)


@pytest.fixture
def conditional_scenario(settings):
    return build_scenario(settings.evolve(aic_model='conditional', phi_pu=math.radians(30.0)))


@pytest.fixture
def sensing():
    return SensingConfig()


@pytest.fixture
def beams():
    return BeamChannelModel(delta1=2.0, delta2=0.5, rho=0.5)


@pytest.fixture
def small_search():
    return SearchControl(zeta_points=5, t_sense_points=4, refine=False)


@pytest.fixture
def small_config(tmp_path):
    """Cheap experiment config writing into a temporary directory"""
    return ExperimentConfig.from_dict({
        'mc': {'frames': 2000, 'seed': 11, 'chunk_size': 1000},
        'search': {'zeta_points': 4, 't_sense_points': 3, 'refine': False},
        'figures': {'beamwidths_deg': [20, 30], 'phi_sr_offsets_deg': [0, 15], 'orientations': 2},
        'output': {'dir': str(tmp_path / 'results')},
    })
