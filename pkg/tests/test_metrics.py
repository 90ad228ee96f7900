import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import NumericVector, ShingleSet, TestCase, TestSuite, to_numeric_vector, to_shingle_set
from metrics import (
    DistanceMatrix,
    Lz4Compressor,
    MatrixCache,
    MetricError,
    build_distance_matrix,
    distance_to_set,
    get_compressor,
    jaccard_distance,
    manhattan,
    marginal_compressed_size,
    ncd,
    ncd_ms_score,
)

# ncd(x, x) bounds for the bundled LZ4 compressor. Sources under 13 bytes are
# stored as literals, so short inputs peak near 11 / 26 at 11 bytes.
LZ4_SELF_EPSILON = 0.5
LZ4_SELF_EPSILON_RANDOM_1K = 0.05
LZ4_SELF_EPSILON_REPEATED_4K = 0.1


def _vector(values):
    return NumericVector(np.array(values, dtype=np.uint8))


def _shingles(source: bytes, k: int = 5) -> ShingleSet:
    return to_shingle_set(TestCase('s', source), k)


def _random_bytes(seed: int, size: int) -> bytes:
    return np.random.default_rng(seed).integers(0, 256, size, dtype=np.uint8).tobytes()


class TestManhattan:
    @pytest.mark.parametrize('a, b, expected', [([97, 98], [97, 98], 0), ([97], [98], 1), ([97, 98], [97], 98)])
    def test_examples(self, a, b, expected):
        assert manhattan(_vector(a), _vector(b)) == expected

    def test_no_uint8_wraparound(self):
        assert manhattan(_vector([0]), _vector([255])) == 255

    @settings(max_examples=1000, deadline=None)
    @given(st.binary(max_size=40), st.binary(max_size=40), st.binary(max_size=40))
    def test_axioms(self, x, y, z):
        a, b, c = (to_numeric_vector(TestCase('v', s)) for s in (x, y, z))
        assert manhattan(a, b) >= 0
        assert manhattan(a, b) == manhattan(b, a)
        assert manhattan(a, c) <= manhattan(a, b) + manhattan(b, c)
        if len(x) == len(y):
            assert (manhattan(a, b) == 0) == (x == y)


class TestJaccard:
    def test_identical(self):
        assert jaccard_distance(_shingles(b'abcdefgh'), _shingles(b'abcdefgh')) == 0.0

    def test_disjoint(self):
        assert jaccard_distance(_shingles(b'aaaaaa'), _shingles(b'bbbbbb')) == 1.0

    def test_hand_example(self):
        assert jaccard_distance(_shingles(b'abcdef'), _shingles(b'bcdefg')) == pytest.approx(2 / 3)

    def test_two_empty_sets(self):
        assert jaccard_distance(_shingles(b'ab'), _shingles(b'')) == 0.0

    def test_mismatched_k(self):
        with pytest.raises(MetricError):
            jaccard_distance(_shingles(b'abcdef', 3), _shingles(b'abcdef', 4))

    @settings(max_examples=1000, deadline=None)
    @given(st.binary(max_size=60), st.binary(max_size=60))
    def test_range_identity_symmetry(self, x, y):
        a, b = _shingles(x, 3), _shingles(y, 3)
        value = jaccard_distance(a, b)
        assert 0.0 <= value <= 1.0
        assert value == jaccard_distance(b, a)
        assert (value == 0.0) == (a.as_bytes() == b.as_bytes())


class TestNcd:
    def test_self_distance_of_repeated_pattern(self):
        pattern = _random_bytes(1, 512)
        x = pattern * 8
        assert len(x) == 4096
        assert ncd(x, x) <= LZ4_SELF_EPSILON_REPEATED_4K

    @settings(max_examples=1000, deadline=None)
    @given(st.binary(max_size=2048))
    def test_self_distance_property(self, x):
        assert ncd(x, x) <= LZ4_SELF_EPSILON

    @pytest.mark.parametrize('size', [1024, 2048, 4096, 8192])
    def test_self_distance_of_large_random_sources(self, size):
        worst = max(ncd(x, x) for x in (_random_bytes(seed, size) for seed in range(20)))
        assert worst <= LZ4_SELF_EPSILON_RANDOM_1K

    def test_short_sources_stay_literal(self):
        x = _random_bytes(9, 11)
        c = get_compressor()
        assert c.compress_len(x + x) - c.compress_len(x) == len(x)
        assert ncd(x, x) == pytest.approx(11 / c.compress_len(x))

    def test_independent_random_inputs(self):
        assert ncd(_random_bytes(2, 4096), _random_bytes(3, 4096)) >= 0.9

    def test_symmetric_for_random_pairs(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            a = rng.integers(0, 256, int(rng.integers(0, 300)), dtype=np.uint8).tobytes()
            b = rng.integers(97, 100, int(rng.integers(0, 300)), dtype=np.uint8).tobytes()
            assert ncd(a, b) == ncd(b, a)

    @settings(max_examples=1000, deadline=None)
    @given(st.binary(max_size=200), st.binary(max_size=200))
    def test_symmetry_property(self, a, b):
        assert ncd(a, b) == ncd(b, a)

    def test_empty_inputs(self):
        assert ncd(b'', b'') >= 0.0

    def test_injected_compressor(self, zlib_compressor):
        x = b'assertEquals(1, widget.spin());\n' * 64
        cx = zlib_compressor.compress_len(x)
        assert ncd(x, x, zlib_compressor) == (zlib_compressor.compress_len(x + x) - cx) / cx
        assert ncd(x, x, zlib_compressor) < 0.5
        assert ncd(x, _random_bytes(10, 2048), zlib_compressor) > 0.9

    def test_lz4_is_deterministic(self):
        c = Lz4Compressor()
        data = _random_bytes(5, 10000)
        assert c.compress_len(data) == c.compress_len(data)
        assert c.compress_len(b'') < 32

    def test_unknown_compressor(self):
        with pytest.raises(MetricError, match='brotli'):
            get_compressor('brotli')


class TestNcdMultiset:
    def test_empty_prioritized_set(self):
        c = get_compressor()
        case = TestCase('x', _random_bytes(6, 500))
        assert ncd_ms_score(case, [], c) == c.compress_len(case.source) - c.compress_len(b'')

    def test_duplicate_scores_below_unrelated(self):
        x = TestCase('x', _random_bytes(7, 2000))
        copy = TestCase('copy', x.source)
        unrelated = TestCase('y', _random_bytes(8, 2000))
        assert ncd_ms_score(copy, [x]) <= ncd_ms_score(unrelated, [x])

    def test_non_negative_on_synthetic_corpus(self, clustered_corpus):
        suite, _ = clustered_corpus
        cases = list(suite)[:20]
        for i, case in enumerate(cases):
            assert ncd_ms_score(case, cases[:i]) >= 0

    def test_history_is_cut_to_the_window(self, zlib_compressor):
        c = get_compressor()
        head = _random_bytes(9, 100_000)
        tail = _random_bytes(10, 2000)
        assert marginal_compressed_size(head + tail, b'abc', c) == marginal_compressed_size(
            (head + tail)[-c.window:], b'abc', c)
        assert zlib_compressor.window is None


class TestDistanceToSet:
    @pytest.fixture
    def matrix(self):
        d = np.array([
            [0, 5, 3, 7, 2],
            [5, 0, 1, 1, 1],
            [3, 1, 0, 1, 1],
            [7, 1, 1, 0, 1],
            [2, 1, 1, 1, 0],
        ], dtype=float)
        return DistanceMatrix('test', {}, ('t', 'u', 'a', 'b', 'c'), d)

    def test_singleton(self, matrix):
        assert distance_to_set('t', ['u'], matrix) == 5

    def test_minimum(self, matrix):
        assert distance_to_set('t', ['a', 'b', 'c'], matrix) == 2

    def test_self_is_excluded(self, matrix):
        assert distance_to_set('t', ['t', 'a', 'b'], matrix) == 3

    @pytest.mark.parametrize('members', [[], ['t']])
    def test_needs_another_member(self, matrix, members):
        with pytest.raises(MetricError):
            distance_to_set('t', members, matrix)


class TestBuildDistanceMatrix:
    def test_single_test(self):
        suite = TestSuite.from_sources([('only', b'abcdef')])
        matrix = build_distance_matrix(suite, 'ncd')
        assert matrix.d.shape == (1, 1)
        assert matrix.d[0, 0] == 0

    @pytest.mark.parametrize('metric', ['manhattan', 'jaccard', 'ncd'])
    def test_symmetric_zero_diagonal_and_per_pair(self, clustered_corpus, metric):
        suite = TestSuite(tuple(list(clustered_corpus[0])[:10]))
        matrix = build_distance_matrix(suite, metric)
        assert np.array_equal(matrix.d, matrix.d.T)
        assert np.all(np.diag(matrix.d) == 0)
        for i, j in itertools.combinations(range(10), 2):
            a, b = suite[i], suite[j]
            if metric == 'manhattan':
                expected = manhattan(to_numeric_vector(a), to_numeric_vector(b))
            elif metric == 'jaccard':
                expected = jaccard_distance(to_shingle_set(a, 5), to_shingle_set(b, 5))
            else:
                expected = ncd(a.source, b.source)
            assert matrix.d[i, j] == expected

    def test_independent_of_jobs(self, clustered_corpus):
        suite = TestSuite(tuple(list(clustered_corpus[0])[:24]))
        assert np.array_equal(build_distance_matrix(suite, 'ncd', jobs=1).d,
                              build_distance_matrix(suite, 'ncd', jobs=8).d)

    def test_unknown_metric(self, small_suite):
        with pytest.raises(MetricError):
            build_distance_matrix(small_suite, 'cosine')

    def test_cache_round_trip(self, tmp_path, small_suite):
        cache = MatrixCache(str(tmp_path / 'cache'))
        built = build_distance_matrix(small_suite, 'jaccard', k=3, cache=cache)
        assert cache.get(small_suite, 'jaccard', {'k': 3}) is not None
        loaded = build_distance_matrix(small_suite, 'jaccard', k=3, cache=cache)
        assert np.array_equal(loaded.d, built.d)
        assert loaded.ids == built.ids
        assert cache.get(small_suite, 'jaccard', {'k': 4}) is None

    def test_csv_export(self, tmp_path, small_suite):
        matrix = build_distance_matrix(small_suite, 'manhattan')
        path = tmp_path / 'matrix.csv'
        matrix.to_csv(str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == 'id,A,B,C,D'
        assert lines[1].startswith('A,0.0,')
