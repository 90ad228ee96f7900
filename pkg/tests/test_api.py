import base64
import json

import pytest

TESTS = [
    {'id': 'A', 'source': 'public void testAlpha() { assertEquals(1, alpha.run()); }'},
    {'id': 'B', 'source': 'public void testAlpha2() { assertEquals(2, alpha.run()); }'},
    {'id': 'C', 'source': '@Test void zulu() { Widget w = new Widget("quartz"); w.spin(42); }'},
]


def test_health(client):
    response = client.get('/api/v1/health')
    assert response.status_code == 200
    assert response.get_json()['status'] == 'healthy'


def test_index(client):
    assert client.get('/').get_json()['api'] == '/api/v1'


def test_techniques(client):
    data = client.get('/api/v1/techniques').get_json()
    assert data['techniques'] == ['RND', 'MNH', 'JAC', 'NCD', 'NCD-MS', 'LSH', 'SC']
    assert 'ncd' in data['metrics']


@pytest.mark.parametrize('technique', ['rnd', 'mnh', 'jac', 'ncd', 'ncd-ms', 'lsh', 'sc'])
def test_prioritize(client, technique):
    response = client.post('/api/v1/prioritize', json={'technique': technique, 'tests': TESTS, 'seed': 4})
    assert response.status_code == 200
    data = response.get_json()
    assert sorted(data['order']) == ['A', 'B', 'C']
    assert data['technique'] == technique.upper()


def test_prioritize_keeps_field_order(client):
    response = client.post('/api/v1/prioritize', json={'technique': 'ncd', 'tests': TESTS})
    assert list(json.loads(response.data)) == ['technique', 'params', 'seed', 'order', 'scores',
                                                'prep_seconds', 'algo_seconds']


def test_prioritize_base64_sources(client):
    tests = [{'id': t['id'], 'source_base64': base64.b64encode(t['source'].encode()).decode()} for t in TESTS]
    plain = client.post('/api/v1/prioritize', json={'technique': 'ncd', 'tests': TESTS}).get_json()
    encoded = client.post('/api/v1/prioritize', json={'technique': 'ncd', 'tests': tests}).get_json()
    assert plain['order'] == encoded['order']


def test_prioritize_options(client):
    response = client.post('/api/v1/prioritize', json={
        'technique': 'lsh', 'tests': TESTS, 'options': {'shingle_k': 3, 'lsh': {'perms': 20, 'bands': 5, 'rows': 4}}})
    assert response.status_code == 200
    assert response.get_json()['params']['bands'] == 5


@pytest.mark.parametrize('payload', [
    {'technique': 'foo', 'tests': TESTS},
    {'technique': 'ncd', 'tests': []},
    {'technique': 'ncd', 'tests': [{'id': 'A'}]},
    {'technique': 'ncd', 'tests': [{'id': 'A', 'source_base64': '***'}]},
    {'technique': 'ncd', 'tests': TESTS + [TESTS[0]]},
    {'technique': 'lsh', 'tests': TESTS, 'options': {'lsh': {'perms': 10, 'bands': 3, 'rows': 4}}},
    {'technique': 'sc', 'tests': TESTS, 'options': {'sc_metric': 'cosine'}},
])
def test_prioritize_rejects_bad_payloads(client, payload):
    response = client.post('/api/v1/prioritize', json=payload)
    assert response.status_code == 400
    assert 'error' in response.get_json()


def test_prioritize_needs_json(client):
    response = client.post('/api/v1/prioritize', data='tests', content_type='text/plain')
    assert response.status_code == 400


def test_evaluate(client):
    response = client.post('/api/v1/evaluate', json={'order': ['T0', 'T1'], 'faults': {'F1': ['T0']}, 'label': 'demo'})
    assert response.status_code == 200
    data = response.get_json()
    assert data['apfd'] == 75.0
    assert data['order'] == 'demo'


def test_evaluate_with_suite_ids(client):
    response = client.post('/api/v1/evaluate', json={
        'order': ['T0', 'T1', 'T2', 'T3'], 'tests': ['T0', 'T1', 'T2', 'T3'], 'faults': {'F1': ['T3']}})
    assert response.get_json()['apfd'] == 12.5


@pytest.mark.parametrize('payload', [
    {'order': ['T0'], 'tests': ['T0', 'T1'], 'faults': {'F1': ['T0']}},
    {'order': ['T0'], 'faults': {'F1': ['T9']}},
    {'order': ['T0'], 'faults': {}},
    {'order': 'T0', 'faults': {'F1': ['T0']}},
])
def test_evaluate_rejects_bad_payloads(client, payload):
    assert client.post('/api/v1/evaluate', json=payload).status_code == 400


def test_unknown_endpoint(client):
    response = client.get('/api/v1/nothing')
    assert response.status_code == 404
    assert 'error' in response.get_json()
