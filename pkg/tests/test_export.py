import json
import os

import pandas as pd
import pytest

from evaluation import ApfdResult, Subject, run_experiment
from export_module import EXPERIMENT_FILES, ResultExporter, read_order, write_experiment, write_order
from prioritizer import PrioritizedOrder
from synthetic_corpus import generate_corpus


@pytest.fixture
def order():
    return PrioritizedOrder('NCD', {'metric': 'ncd'}, ['t2', 't0', 't1'], [0.9, 0.5, 0.25], 0.01, 0.02)


@pytest.fixture(scope='module')
def experiment():
    suite, faults = generate_corpus(n=20, faults=2, seed=13, name='demo')
    return run_experiment([Subject(suite, faults, 'demo', '1')], ['rnd', 'jac'], seeds=range(3), replicates=100)


class TestOrderFormats:
    def test_text(self, order):
        assert ResultExporter.order_to_string(order, 'text') == 't2\nt0\nt1\n'

    def test_csv(self, order):
        lines = ResultExporter.order_to_string(order, 'csv').splitlines()
        assert lines == ['position,test_id,score', '1,t2,0.9', '2,t0,0.5', '3,t1,0.25']

    def test_json(self, order):
        data = json.loads(ResultExporter.order_to_string(order, 'json'))
        assert data['order'] == ['t2', 't0', 't1']
        assert data['technique'] == 'NCD'

    def test_unknown_format(self, order):
        with pytest.raises(ValueError, match='yaml'):
            ResultExporter.order_to_string(order, 'yaml')

    @pytest.mark.parametrize('fmt', ['json', 'csv', 'text'])
    def test_read_back(self, tmp_path, order, fmt):
        path = str(tmp_path / f'order.{fmt}')
        write_order(order, path, fmt)
        assert read_order(path).order == order.order

    def test_scores_survive_csv(self, tmp_path, order):
        path = str(tmp_path / 'order.csv')
        write_order(order, path, 'csv')
        assert read_order(path).scores == order.scores

    def test_writes_lf_only(self, tmp_path, order):
        path = tmp_path / 'nested' / 'order.txt'
        write_order(order, str(path), 'text')
        assert b'\r' not in path.read_bytes()


class TestApfdFormats:
    @pytest.fixture
    def result(self):
        return ApfdResult('NCD', 75.0, 2, 1, {'F1': 1})

    def test_text_has_two_decimals(self, result):
        assert ResultExporter.apfd_to_string(result, 'text') == 'APFD: 75.00 (n=2, m=1)\n'

    def test_csv(self, result):
        assert ResultExporter.apfd_to_string(result, 'csv') == 'order,n,m,apfd\nNCD,2,1,75.0\n'

    def test_json(self, result):
        assert json.loads(ResultExporter.apfd_to_string(result, 'json'))['tf'] == {'F1': 1}


class TestExperimentOutput:
    def test_writes_every_table(self, tmp_path, experiment):
        written = write_experiment(experiment, str(tmp_path))
        names = sorted(os.path.basename(path) for path in written)
        assert names == sorted(list(EXPERIMENT_FILES.values()) + ['comparisons.json'])
        rounds = pd.read_csv(tmp_path / 'rounds.csv')
        assert list(rounds.columns) == ['suite', 'version', 'technique', 'seed', 'apfd',
                                        'prep_seconds', 'algo_seconds']
        assert len(rounds) == 6

    def test_comparisons_json(self, tmp_path, experiment):
        write_experiment(experiment, str(tmp_path))
        data = json.loads((tmp_path / 'comparisons.json').read_text())
        assert data['group_by'] == 'pooled'
        assert data['comparisons'][0]['technique_a'] == 'JAC'
        assert data['vda_vs_rnd'][0]['technique'] == 'JAC'

    def test_summary_tables_are_reproducible(self, tmp_path, experiment):
        write_experiment(experiment, str(tmp_path / 'a'))
        write_experiment(experiment, str(tmp_path / 'b'))
        for filename in ('vda_vs_rnd.csv', 'apfd_summary.csv'):
            assert (tmp_path / 'a' / filename).read_bytes() == (tmp_path / 'b' / filename).read_bytes()

    def test_excel_workbook(self, tmp_path, experiment):
        written = write_experiment(experiment, str(tmp_path), xlsx=True)
        assert written[-1].endswith('experiment.xlsx')
        sheets = pd.read_excel(written[-1], sheet_name=None, engine='openpyxl')
        assert set(sheets) == {'VDA vs RND', 'Mean APFD', 'Mean AMET', 'Rounds'}
        assert list(sheets['Mean APFD']['technique']) == ['RND', 'JAC']

    def test_terminal_tables(self, experiment):
        text = ResultExporter.experiment_tables_text(experiment)
        assert 'VDA vs RND' in text
        assert 'Mean AMET' in text
        assert 'JAC' in text
