"""
RESTful API Module
JSON endpoints for prioritizing inline test suites and scoring orders by APFD
"""

import base64
import binascii
import logging
from datetime import datetime

from flask import Blueprint, jsonify, request

from config import DEFAULT_SHINGLE_K, TECHNIQUES
from corpus import FaultMatrix, TestSuite
from evaluation import apfd
from lsh import LshConfig
from metrics import METRICS
from prioritizer import TechniqueOptions, prioritize

logger = logging.getLogger(__name__)

api_bp = Blueprint('api', __name__, url_prefix='/api/v1')

API_VERSION = '1.0.0'


class ApiError(ValueError):
    pass


def _json_body() -> dict:
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise ApiError('Request body must be a JSON object')
    return data


def _suite_from_payload(tests) -> TestSuite:
    """[{"id", "source"} or {"id", "source_base64"}] -> TestSuite"""
    if not isinstance(tests, list) or not tests:
        raise ApiError("'tests' must be a non-empty list")
    sources = []
    for position, entry in enumerate(tests):
        if not isinstance(entry, dict) or not isinstance(entry.get('id'), str):
            raise ApiError(f"Test entry {position} needs a string 'id'")
        if 'source_base64' in entry:
            try:
                source = base64.b64decode(entry['source_base64'], validate=True)
            except (binascii.Error, TypeError):
                raise ApiError(f"Test '{entry['id']}' has invalid base64 source")
        elif isinstance(entry.get('source'), str):
            source = entry['source'].encode('utf-8')
        else:
            raise ApiError(f"Test '{entry['id']}' needs 'source' or 'source_base64'")
        sources.append((entry['id'], source))
    return TestSuite.from_sources(sources, name='request')


def _options_from_payload(options) -> TechniqueOptions:
    options = options or {}
    if not isinstance(options, dict):
        raise ApiError("'options' must be an object")
    lsh = LshConfig(**options['lsh']) if isinstance(options.get('lsh'), dict) else LshConfig()
    sc_metric = options.get('sc_metric', 'ncd')
    if sc_metric not in METRICS:
        raise ApiError(f"Unknown sc_metric '{sc_metric}'")
    return TechniqueOptions(
        shingle_k=int(options.get('shingle_k', DEFAULT_SHINGLE_K)),
        compressor=options.get('compressor'),
        lsh=lsh,
        sc_metric=sc_metric,
    )


@api_bp.route('/health', methods=['GET'])
def health_check():
    """Health check endpoint"""
    return jsonify({
        'status': 'healthy',
        'timestamp': datetime.now().isoformat(),
        'version': API_VERSION
    })


@api_bp.route('/techniques', methods=['GET'])
def list_techniques():
    return jsonify({'techniques': [t.upper() for t in TECHNIQUES], 'metrics': list(METRICS)})


@api_bp.route('/prioritize', methods=['POST'])
def prioritize_suite():
    """Order the tests posted inline with one technique"""
    try:
        data = _json_body()
        suite = _suite_from_payload(data.get('tests'))
        options = _options_from_payload(data.get('options'))
        order = prioritize(suite, str(data.get('technique', 'ncd')), int(data.get('seed', 0)), options)
    except (ValueError, TypeError) as e:
        return jsonify({'error': str(e)}), 400
    return jsonify(order.to_dict())


@api_bp.route('/evaluate', methods=['POST'])
def evaluate_order():
    """APFD of an order against a fault -> detecting tests mapping"""
    try:
        data = _json_body()
        order = data.get('order')
        faults = data.get('faults')
        if not isinstance(order, list) or not all(isinstance(t, str) for t in order):
            raise ApiError("'order' must be a list of test ids")
        if not isinstance(faults, dict) or not faults:
            raise ApiError("'faults' must map fault ids to detecting test ids")
        tests = data.get('tests') or order
        fault_matrix = FaultMatrix(
            faults=tuple(faults),
            detects={fault: frozenset(ids) for fault, ids in faults.items()},
            test_ids=tuple(tests),
        )
        result = apfd(order, fault_matrix, label=data.get('label'))
    except (ValueError, TypeError) as e:
        return jsonify({'error': str(e)}), 400
    return jsonify(result.to_dict())


@api_bp.errorhandler(404)
def api_not_found(error):
    return jsonify({'error': 'API endpoint not found'}), 404


@api_bp.errorhandler(500)
def api_internal_error(error):
    logger.error("Unhandled API error: %s", error)
    return jsonify({'error': 'Internal server error'}), 500


def register_api(app):
    """Register API blueprint with Flask app"""
    app.register_blueprint(api_bp)
