import math

import pandas as pd
import pytest

from src.main import create_app
from src.routes.experiments import _records


@pytest.fixture
def client(monkeypatch):
    monkeypatch.setenv('CRBEAM_WORKERS', '1')
    app = create_app()
    app.config['TESTING'] = True
    return app.test_client()


BEAMS_BODY = {
    'mc': {'frames': 500, 'seed': 3},
    'sweep': {'axis': 'rho', 'values': [0.2]},
    'figures': {'phi_sr_offsets_deg': [10]},
}


def test_home(client):
    response = client.get('/')
    assert response.status_code == 200
    assert response.get_json()['status'] == 'success'


def test_health(client):
    response = client.get('/api/health')
    assert response.status_code == 200
    assert response.get_json()['status'] == 'healthy'


def test_list_experiments(client):
    data = client.get('/api/experiments').get_json()
    assert data['experiments'] == ['roc', 'beams', 'capacity', 'reliability', 'validate']
    assert 'p_bar_db' in data['sweep_axes']
    assert data['default_sweeps']['beams']['axis'] == 'phi_3db_deg'


def test_unknown_experiment(client):
    response = client.post('/api/experiments/spectrum', json={})
    assert response.status_code == 404
    assert response.get_json()['error'] == 'config'


def test_run_beam_selection(client):
    response = client.post('/api/experiments/beams', json=BEAMS_BODY)
    assert response.status_code == 200
    data = response.get_json()
    assert data['experiment'] == 'beams'
    assert data['count'] == 1
    assert data['config']['mc']['frames'] == 500
    row = data['data'][0]
    assert row['rho'] == pytest.approx(0.2)
    assert row['phi_sr_deg'] == pytest.approx(10.0)
    assert 0.5 < row['selection_prob'] < 1.0
    assert isinstance(data['all_passed'], bool)


def test_config_error_is_bad_request(client):
    response = client.post('/api/experiments/beams', json={'scenario': {'bogus': 1}})
    assert response.status_code == 400
    data = response.get_json()
    assert data['error'] == 'config'
    assert data['field'] == 'scenario.bogus'


def test_domain_error_is_bad_request(client):
    body = dict(BEAMS_BODY, scenario={'t_sense_ms': 20.0})
    response = client.post('/api/experiments/beams', json=body)
    assert response.status_code == 400
    assert response.get_json()['error'] == 'domain'


def test_records_turn_nan_into_null():
    table = pd.DataFrame({'curve': ['omni', 'ra_25deg'], 'phi_3db_deg': [math.nan, 25.0]})
    assert _records(table) == [{'curve': 'omni', 'phi_3db_deg': None}, {'curve': 'ra_25deg', 'phi_3db_deg': 25.0}]
