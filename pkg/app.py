"""
Prioritization Service
Flask entry point serving the JSON API next to a test runner
"""

import os

from flask import Flask, jsonify

from api_module import register_api
from config import configure_logging


def create_app(test_config=None) -> Flask:
    app = Flask(__name__)
    app.json.sort_keys = False
    if test_config:
        app.config.update(test_config)

    register_api(app)

    @app.route('/')
    def index():
        return jsonify({'service': 'divprio', 'api': '/api/v1'})

    @app.errorhandler(404)
    def not_found(error):
        return jsonify({'error': 'Not found'}), 404

    return app


if __name__ == '__main__':
    configure_logging()
    print("\n=== Test Prioritization Service Starting ===")
    print("Endpoints: ✓ /api/v1/health, ✓ /api/v1/techniques, ✓ /api/v1/prioritize, ✓ /api/v1/evaluate")

    # Use PORT environment variable for cloud deployment
    port = int(os.environ.get('PORT', 5000))
    create_app().run(debug=False, host='0.0.0.0', port=port)
