from datetime import datetime, timezone

from flask import Blueprint, current_app

from qaconv import __version__
from qaconv.utils.helpers import resolve_workers, success_response

health_bp = Blueprint('health', __name__)


@health_bp.route('/health', methods=['GET'])
def health_check():
    """
    System health check endpoint

    GET /api/health
    """
    workers = current_app.config.get('WORKERS_OVERRIDE') or current_app.config.get('WORKERS')
    return success_response(
        {
            "status": "healthy",
            "version": __version__,
            "workers": resolve_workers(workers),
            "timestamp": datetime.now(timezone.utc).isoformat()
        },
        "System is healthy"
    )


@health_bp.route('/version', methods=['GET'])
def version_info():
    """
    API version information

    GET /api/version
    """
    return success_response(
        {
            "version": __version__,
            "name": "QAConv Scoring API",
            "description": "Query-adaptive convolution matching, temporal lifting and re-identification evaluation"
        },
        "Version information retrieved"
    )
