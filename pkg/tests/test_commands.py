import json
import os

import pandas as pd
import pytest
from click.testing import CliRunner

from src.commands import cli
from src.main import create_app
from src.services.errors import SeriesConvergenceError
from src.services.experiment_service import ExperimentService

CONFIG = {
    'mc': {'frames': 400, 'seed': 2},
    'sweep': {'axis': 'rho', 'values': [0.3]},
    'figures': {'phi_sr_offsets_deg': [10]},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(CONFIG, indent=2), encoding='utf-8')
    return str(path)


def _last_json(output):
    return json.loads(output.strip().splitlines()[-1])


def test_beams_writes_table_and_sidecar(tmp_path, config_path):
    out_dir = tmp_path / 'out'
    result = CliRunner().invoke(cli, ['beams', '--config', config_path, '--out', str(out_dir)],
                                env={'CRBEAM_SEED': None, 'CRBEAM_FRAMES': None, 'CRBEAM_OUT_DIR': None})
    assert result.exit_code == 0, result.output
    summary = _last_json(result.output)
    assert summary['experiment'] == 'beams'
    assert summary['rows'] == 1
    assert os.path.exists(summary['table'])
    with open(summary['meta'], encoding='utf-8') as f:
        meta = json.load(f)
    assert meta['seed'] == 2
    assert meta['frames'] == 400


def test_flag_beats_environment(tmp_path, config_path):
    result = CliRunner().invoke(cli, ['beams', '--config', config_path, '--seed', '9', '--out', str(tmp_path / 'o')],
                                env={'CRBEAM_SEED': '4', 'CRBEAM_FRAMES': '300'})
    assert result.exit_code == 0, result.output
    with open(_last_json(result.output)['meta'], encoding='utf-8') as f:
        meta = json.load(f)
    assert (meta['seed'], meta['frames']) == (9, 300)


def test_runs_are_byte_identical(tmp_path, config_path):
    outputs = []
    for name in ('a', 'b'):
        result = CliRunner().invoke(cli, ['beams', '--config', config_path, '--out', str(tmp_path / name)],
                                    env={'CRBEAM_SEED': None, 'CRBEAM_FRAMES': None, 'CRBEAM_OUT_DIR': None})
        assert result.exit_code == 0, result.output
        with open(_last_json(result.output)['table'], 'rb') as f:
            outputs.append(f.read())
    assert outputs[0] == outputs[1]


def test_config_error_exit_code(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{\n  "mc": {\n    "seeds": 1\n  }\n}\n', encoding='utf-8')
    result = CliRunner().invoke(cli, ['roc', '--config', str(path)])
    assert result.exit_code == 2
    error = _last_json(result.output)
    assert error['error'] == 'config'
    assert error['field'] == 'mc.seeds'
    assert error['line'] == 3


def test_missing_config_file(tmp_path):
    result = CliRunner().invoke(cli, ['capacity', '--config', str(tmp_path / 'absent.json')])
    assert result.exit_code == 2


def test_numerical_error_exit_code(tmp_path, monkeypatch):
    def fail(self, kind, cfg):
        raise SeriesConvergenceError("series did not converge", terms=500)

    monkeypatch.setattr(ExperimentService, 'run', fail)
    result = CliRunner().invoke(cli, ['capacity', '--out', str(tmp_path)])
    assert result.exit_code == 3
    assert _last_json(result.output)['error'] == 'numerical'


def test_internal_error_exit_code(tmp_path, monkeypatch):
    def fail(self, kind, cfg):
        raise RuntimeError("boom")

    monkeypatch.setattr(ExperimentService, 'run', fail)
    result = CliRunner().invoke(cli, ['reliability', '--out', str(tmp_path)])
    assert result.exit_code == 1
    assert _last_json(result.output)['error'] == 'internal'


def test_failed_validation_exit_code(tmp_path, monkeypatch):
    table = pd.DataFrame({'check': ['sep'], 'case': ['optimized policy'], 'value': [0.1],
                          'reference': [0.2], 'tolerance': [1e-6], 'passed': [False]})
    monkeypatch.setattr(ExperimentService, 'run', lambda self, kind, cfg: table)
    result = CliRunner().invoke(cli, ['validate', '--out', str(tmp_path)])
    assert result.exit_code == 4
    assert _last_json(result.output)['error'] == 'audit'
    assert os.path.exists(tmp_path / 'validate.csv')


def test_registered_on_flask_cli(tmp_path, config_path):
    runner = create_app().test_cli_runner()
    result = runner.invoke(args=['experiment', 'beams', '--config', config_path, '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert os.path.exists(tmp_path / 'beams.csv')
