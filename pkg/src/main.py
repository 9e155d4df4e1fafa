import os
import logging

from dotenv import load_dotenv
from flask import Flask, jsonify
from flask_cors import CORS

from src.commands import cli as experiment_cli
from src.routes.experiments import experiments_bp


def create_app():
    load_dotenv()
    logging.basicConfig(level=os.getenv('LOG_LEVEL', 'INFO').upper(),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    app = Flask(__name__)

    # Configuration
    app.config['EXPERIMENT_WORKERS'] = int(os.getenv('CRBEAM_WORKERS', '1'))
    app.json.sort_keys = False

    CORS(app)
    app.register_blueprint(experiments_bp)
    app.cli.add_command(experiment_cli, name='experiment')

    @app.route('/')
    def home():
        return jsonify({
            "message": "Cognitive-radio beam selection engine is running",
            "status": "success",
            "version": "1.0.0",
        })

    return app


if __name__ == '__main__':
    app = create_app()
    app.run(host='0.0.0.0', port=int(os.environ.get('PORT', 5000)), debug=False)
