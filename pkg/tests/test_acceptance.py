"""End-to-end runs on the planted-cluster corpus."""

import logging

import pytest

from evaluation import Subject, run_experiment
from prioritizer import TechniqueOptions, prioritize
from synthetic_corpus import generate_corpus

logger = logging.getLogger(__name__)


@pytest.fixture(scope='module')
def experiment(clustered_corpus):
    suite, faults = clustered_corpus
    return run_experiment([Subject(suite, faults, 'clustered', '1')],
                          ['rnd', 'mnh', 'jac', 'ncd', 'ncd-ms', 'lsh', 'sc'],
                          seeds=range(30), replicates=500)


@pytest.mark.parametrize('technique', ['ncd', 'mnh', 'jac', 'ncd-ms'])
def test_diversity_beats_random(experiment, technique):
    assert experiment.comparison(technique, 'rnd').vda > 0.7


def test_lsh_beats_random(experiment):
    assert experiment.comparison('lsh', 'rnd').vda > 0.6


def test_similarity_maximizing_loses_to_random(experiment):
    assert experiment.comparison('sc', 'rnd').vda < 0.35


def test_diverse_ordering_finds_every_fault_early(experiment, clustered_corpus):
    _, faults = clustered_corpus
    order = experiment.orders[('clustered', '1', 'NCD', 0)].order
    hit = {fault for fault, tests in faults.detects.items() if tests & set(order[:10])}
    assert len(hit) == 10


def test_vda_table_lists_every_technique(experiment):
    assert list(experiment.vda_vs_rnd['technique']) == ['MNH', 'JAC', 'NCD', 'NCD-MS', 'LSH', 'SC']
    assert len(experiment.rounds) == 7 * 30


def test_lsh_has_the_lowest_amet_of_the_similarity_techniques(experiment):
    amet = experiment.amet_summary.set_index('technique')['amet_seconds'].drop('RND')
    logger.info("AMET ordering: %s", ', '.join(f'{t} {s:.4f}s' for t, s in amet.sort_values().items()))
    assert amet.idxmin() == 'LSH'


@pytest.mark.slow
def test_lsh_is_much_faster_than_pairwise_ncd():
    suite, _ = generate_corpus(n=1000, faults=10, seed=21, lines=(40, 50))
    options = TechniqueOptions(jobs=1)
    elapsed = {}
    for technique in ('lsh', 'mnh', 'jac', 'ncd'):
        suite.clear_caches()
        elapsed[technique.upper()] = prioritize(suite, technique, options=options).elapsed
    logger.info("Elapsed at n=1000: %s",
                ', '.join(f'{t} {s:.3f}s' for t, s in sorted(elapsed.items(), key=lambda item: item[1])))
    assert min(elapsed, key=elapsed.get) == 'LSH'
    assert elapsed['LSH'] * 5 <= elapsed['NCD']
