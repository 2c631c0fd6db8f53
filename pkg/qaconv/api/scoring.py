from flask import Blueprint, current_app, request

from qaconv.models.params import TLiftParams
from qaconv.models.similarity import SimilarityMatrix
from qaconv.models.store import MetaRecord
from qaconv.services.evaluation_service import EvaluationService
from qaconv.services.tlift_service import TLiftService
from qaconv.utils.decorators import handle_exceptions, validate_json_schema
from qaconv.utils.helpers import success_response
from qaconv.utils.validators import EvaluateRequestSchema, TLiftRequestSchema

scoring_bp = Blueprint('scoring', __name__)


def _unpack(data):
    matrix = SimilarityMatrix(data['scores'], data['stage'])
    query = [MetaRecord.from_dict(record) for record in data['query']]
    gallery = [MetaRecord.from_dict(record) for record in data['gallery']]
    return matrix, query, gallery


@scoring_bp.route('/evaluate', methods=['POST'])
@validate_json_schema(EvaluateRequestSchema)
@handle_exceptions
def evaluate():
    """
    CMC / mAP of a posted score matrix

    POST /api/evaluate
    {
        "scores": [[...], ...],
        "stage": "probability",
        "query": [{"id": 1, "camera": 0}, ...],
        "gallery": [{"id": 1, "camera": 1}, ...],
        "r_max": 20
    }
    """
    data = request.validated_data
    matrix, query, gallery = _unpack(data)
    report = EvaluationService(data['r_max']).evaluate(matrix, query, gallery)
    current_app.logger.info(f"Evaluated {matrix!r} over the API")
    return success_response(report.to_dict(), "Evaluation completed")


@scoring_bp.route('/tlift', methods=['POST'])
@validate_json_schema(TLiftRequestSchema)
@handle_exceptions
def tlift():
    """
    Temporal lifting of a posted score matrix

    POST /api/tlift
    {
        "scores": [[...], ...],
        "stage": "probability",
        "query": [{"id": 1, "camera": 0, "frame": 250, "fps": 25}, ...],
        "gallery": [...],
        "tau": 100, "sigma": 200, "k": 10, "alpha": 0.2
    }
    """
    data = request.validated_data
    matrix, query, gallery = _unpack(data)
    params = TLiftParams(
        tau=data['tau'],
        sigma=data['sigma'],
        k=data['k'],
        alpha=data['alpha'],
        exclude_same_camera=data['exclude_same_camera']
    )
    fused = TLiftService(params).tlift_fuse(matrix, query, gallery)
    current_app.logger.info(f"Temporal lifting of {matrix!r} over the API")
    return success_response(fused.to_dict(), "Temporal lifting completed")
