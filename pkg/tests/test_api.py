from qaconv import __version__
from tests.factories import temporal_fixture


def _temporal_payload(**extra):
    scores, query, gallery = temporal_fixture()
    payload = {
        "scores": scores.tolist(),
        "query": [record.to_dict() for record in query],
        "gallery": [record.to_dict() for record in gallery],
    }
    payload.update(extra)
    return payload


def test_health(client):
    response = client.get('/api/health')
    assert response.status_code == 200
    data = response.get_json()
    assert data['success'] is True
    assert data['data']['status'] == 'healthy'
    assert data['data']['workers'] >= 1


def test_version(client):
    data = client.get('/api/version').get_json()
    assert data['data']['version'] == __version__


def test_unknown_route(client):
    response = client.get('/api/missing')
    assert response.status_code == 404
    assert response.get_json()['error']['code'] == 'NOT_FOUND'


def test_evaluate(client):
    response = client.post('/api/evaluate', json=_temporal_payload(r_max=4))
    assert response.status_code == 200
    report = response.get_json()['data']
    assert abs(report['rank1'] - 2 / 3) < 1e-9
    assert report['n_valid_queries'] == 3
    assert len(report['cmc']) == 4


def test_tlift_then_evaluate(client):
    response = client.post('/api/tlift', json=_temporal_payload())
    assert response.status_code == 200
    fused = response.get_json()['data']
    assert fused['stage'] == 'tlifted'
    assert fused['scores'][0][0] > fused['scores'][0][3]

    evaluated = client.post('/api/evaluate', json=_temporal_payload(scores=fused['scores'], stage='tlifted'))
    assert evaluated.get_json()['data']['rank1'] == 1.0


def test_tlift_without_timestamps(client):
    payload = _temporal_payload()
    for record in payload['query']:
        record.update(frame=None, fps=None, time=None)
    response = client.post('/api/tlift', json=payload)
    assert response.status_code == 400
    assert response.get_json()['error']['code'] == 'PRECONDITION_FAILED'


def test_validation_error(client):
    payload = _temporal_payload()
    payload['scores'] = payload['scores'][:2]
    response = client.post('/api/evaluate', json=payload)
    assert response.status_code == 400
    error = response.get_json()['error']
    assert error['code'] == 'VALIDATION_ERROR'
    assert 'scores' in error['details']


def test_non_json_request(client):
    response = client.post('/api/evaluate', data='scores', content_type='text/plain')
    assert response.status_code == 400
    assert response.get_json()['error']['code'] == 'INVALID_REQUEST'


def test_probability_out_of_range(client):
    payload = _temporal_payload()
    payload['scores'][0][0] = 1.5
    response = client.post('/api/evaluate', json=payload)
    assert response.status_code == 400
    assert response.get_json()['error']['code'] == 'FORMAT_ERROR'
