"""
Experiment API routes
JSON endpoints over the experiment sweeps
"""

import math

from flask import Blueprint, request, jsonify, current_app

from src.models.experiment import ExperimentConfig, EXPERIMENT_KINDS, SWEEP_AXES, DEFAULT_SWEEPS
from src.services.errors import CRBeamError
from src.services.experiment_service import ExperimentService

experiments_bp = Blueprint('experiments', __name__, url_prefix='/api')

_STATUS = {'config': 400, 'domain': 400, 'numerical': 422, 'audit': 422}


def _records(table):
    """Rows as plain dicts; NaN becomes null"""
    return [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}
            for row in table.to_dict(orient='records')]


@experiments_bp.route('/health', methods=['GET'])
def health():
    return jsonify({'status': 'healthy', 'service': 'crbeam experiments'})


@experiments_bp.route('/experiments', methods=['GET'])
def list_experiments():
    """Available experiment kinds, their default sweeps and the published sweep axes"""
    return jsonify({
        'experiments': list(EXPERIMENT_KINDS),
        'sweep_axes': list(SWEEP_AXES),
        'default_sweeps': {kind: {'axis': axis, 'values': values} for kind, (axis, values) in DEFAULT_SWEEPS.items()},
    })


@experiments_bp.route('/experiments/<kind>', methods=['POST'])
def run_experiment(kind):
    """
    Run one experiment

    Body: ExperimentConfig JSON (every section optional)

    Returns:
        JSON with the resolved config and the table rows
    """
    try:
        if kind not in EXPERIMENT_KINDS:
            return jsonify({'error': 'config', 'message': f"Unknown experiment '{kind}'"}), 404

        body = request.get_json(silent=True)
        if body is None:
            body = {}
        cfg = ExperimentConfig.from_dict(body)

        service = ExperimentService(workers=current_app.config.get('EXPERIMENT_WORKERS', 1))
        table = service.run(kind, cfg)
        rows = _records(table)
        return jsonify({
            'experiment': kind,
            'config': cfg.to_dict(),
            'count': len(rows),
            'all_passed': bool(table['passed'].all()) if 'passed' in table else None,
            'data': rows,
        })

    except CRBeamError as e:
        current_app.logger.warning(f"Experiment {kind} rejected: {str(e)}")
        return jsonify(e.to_dict()), _STATUS.get(e.category, 500)
    except Exception as e:
        current_app.logger.error(f"Error running experiment {kind}: {str(e)}")
        return jsonify({'error': 'internal', 'message': 'Internal server error'}), 500
