"""
Corpus Module
Loads test-case sources and fault data from disk and derives the representations
every distance metric consumes (byte vectors, k-shingle sets)
"""

import csv
import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

# k <= 8 packs a shingle losslessly into one 64-bit code
MAX_EXACT_K = 8
# FNV-1a 64-bit prime, base of the polynomial code used for k > 8
_POLY_BASE = 0x100000001B3


class CorpusError(ValueError):
    """Base class for manifest and fault-matrix input errors."""


class EmptyManifestError(CorpusError):
    pass


class ManifestFormatError(CorpusError):
    pass


class MissingSourceError(CorpusError):
    pass


class DuplicateTestIdError(CorpusError):
    pass


class UnknownTestIdError(CorpusError):
    pass


class UndetectedFaultError(CorpusError):
    pass


class MalformedFaultRowError(CorpusError):
    pass


@dataclass(frozen=True)
class TestCase:
    """One test artifact: its id and the raw bytes of its source file."""
    __test__ = False

    id: str
    source: bytes
    _cache: Dict = field(default_factory=dict, init=False, compare=False, repr=False, hash=False)

    @property
    def length(self) -> int:
        return len(self.source)

    def cached(self, key, compute):
        """Memoize a derived representation on this case."""
        if key not in self._cache:
            self._cache[key] = compute()
        return self._cache[key]

    def clear_cache(self):
        self._cache.clear()


@dataclass(frozen=True)
class NumericVector:
    values: np.ndarray

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def tolist(self) -> List[int]:
        return [int(v) for v in self.values]


@dataclass(frozen=True)
class ShingleSet:
    """Distinct k-byte substrings of a source, stored as sorted unique 64-bit codes.

    For k <= 8 a code is the big-endian packing of the shingle's bytes, so the set
    is exact and decodable. For larger k the code is a 64-bit polynomial hash and
    two distinct shingles may collide.
    """
    k: int
    codes: np.ndarray

    def __len__(self) -> int:
        return int(self.codes.shape[0])

    @property
    def exact(self) -> bool:
        return self.k <= MAX_EXACT_K

    def as_bytes(self) -> FrozenSet[bytes]:
        if not self.exact:
            raise ValueError(f"Shingles with k={self.k} are hashed and cannot be decoded")
        return frozenset(int(code).to_bytes(self.k, 'big') for code in self.codes)


@dataclass(frozen=True)
class TestSuite:
    __test__ = False

    cases: Tuple[TestCase, ...]
    name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'cases', tuple(self.cases))
        seen = set()
        for case in self.cases:
            if not case.id:
                raise ManifestFormatError("Test id must be a non-empty string")
            if case.id in seen:
                raise DuplicateTestIdError(f"Duplicate test id '{case.id}'")
            seen.add(case.id)
        object.__setattr__(self, '_index', {case.id: i for i, case in enumerate(self.cases)})

    @classmethod
    def from_sources(cls, sources: Iterable[Tuple[str, bytes]], name: Optional[str] = None) -> 'TestSuite':
        return cls(tuple(TestCase(test_id, bytes(source)) for test_id, source in sources), name)

    def __len__(self) -> int:
        return len(self.cases)

    def __iter__(self) -> Iterator[TestCase]:
        return iter(self.cases)

    def __getitem__(self, index: int) -> TestCase:
        return self.cases[index]

    @property
    def ids(self) -> List[str]:
        return [case.id for case in self.cases]

    def __contains__(self, test_id: str) -> bool:
        return test_id in self._index

    def index_of(self, test_id: str) -> int:
        try:
            return self._index[test_id]
        except KeyError:
            raise UnknownTestIdError(f"Unknown test id '{test_id}'")

    def get(self, test_id: str) -> TestCase:
        return self.cases[self.index_of(test_id)]

    def clear_caches(self):
        """Drop the memoized vectors, shingle sets and compressed lengths of every case."""
        for case in self.cases:
            case.clear_cache()

    def content_hash(self) -> str:
        """SHA-256 over ids and sources in manifest order."""
        digest = hashlib.sha256()
        for case in self.cases:
            for part in (case.id.encode('utf-8'), case.source):
                digest.update(len(part).to_bytes(8, 'big'))
                digest.update(part)
        return digest.hexdigest()


def preprocess(source: bytes, lowercase: bool = False, collapse_whitespace: bool = False) -> bytes:
    """Optional normalization, off by default."""
    if collapse_whitespace:
        source = re.sub(rb'\s+', b' ', source)
    if lowercase:
        source = source.lower()
    return source


def load_suite(manifest_path: str, lowercase: bool = False, collapse_whitespace: bool = False) -> TestSuite:
    """Load a suite from a JSON manifest of {"id", "path"} objects, keeping manifest order.

    Relative paths resolve against the manifest's directory.
    """
    if not os.path.isfile(manifest_path):
        raise MissingSourceError(f"Manifest not found: {manifest_path}")
    try:
        with open(manifest_path, 'r', encoding='utf-8') as f:
            entries = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ManifestFormatError(f"Manifest '{manifest_path}' is not valid JSON: {e}")

    if not isinstance(entries, list):
        raise ManifestFormatError(f"Manifest '{manifest_path}' must be a JSON array")
    if not entries:
        raise EmptyManifestError(f"Manifest '{manifest_path}' lists no tests")

    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    cases = []
    seen = set()
    for position, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ManifestFormatError(f"Manifest entry {position} is not an object")
        test_id = entry.get('id')
        path = entry.get('path')
        if not isinstance(test_id, str) or not test_id:
            raise ManifestFormatError(f"Manifest entry {position} has no valid 'id'")
        if not isinstance(path, str) or not path:
            raise ManifestFormatError(f"Manifest entry '{test_id}' has no valid 'path'")
        if test_id in seen:
            raise DuplicateTestIdError(f"Duplicate test id '{test_id}' in manifest entry {position}")
        seen.add(test_id)

        full_path = path if os.path.isabs(path) else os.path.join(base_dir, path)
        if not os.path.isfile(full_path):
            raise MissingSourceError(f"Source file for '{test_id}' not found: {full_path}")
        with open(full_path, 'rb') as f:
            source = f.read()
        cases.append(TestCase(test_id, preprocess(source, lowercase, collapse_whitespace)))

    logger.info("Loaded %d test cases from %s", len(cases), manifest_path)
    return TestSuite(tuple(cases), name=os.path.splitext(os.path.basename(manifest_path))[0])


def save_suite(suite: TestSuite, manifest_path: str, sources_dir: str = 'tests', extension: str = '.txt') -> str:
    """Write every source to disk and a manifest pointing at them."""
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(os.path.join(base_dir, sources_dir), exist_ok=True)
    entries = []
    for position, case in enumerate(suite):
        filename = f"{position:05d}_{re.sub(r'[^A-Za-z0-9_.-]', '_', case.id)}{extension}"
        relative = os.path.join(sources_dir, filename)
        with open(os.path.join(base_dir, relative), 'wb') as f:
            f.write(case.source)
        entries.append({'id': case.id, 'path': relative.replace(os.sep, '/')})
    with open(manifest_path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(entries, f, indent=2)
        f.write('\n')
    return manifest_path


def to_numeric_vector(case: TestCase) -> NumericVector:
    """Byte value of every source byte, in order."""
    return case.cached('vector', lambda: NumericVector(np.frombuffer(case.source, dtype=np.uint8)))


def _shingle_codes(source: bytes, k: int) -> np.ndarray:
    data = np.frombuffer(source, dtype=np.uint8).astype(np.uint64)
    windows = sliding_window_view(data, k)
    if k <= MAX_EXACT_K:
        weights = np.array([1 << (8 * (k - 1 - j)) for j in range(k)], dtype=np.uint64)
    else:
        weights = np.array([pow(_POLY_BASE, k - 1 - j, 1 << 64) for j in range(k)], dtype=np.uint64)
    # uint64 arithmetic wraps modulo 2**64
    return np.unique((windows * weights).sum(axis=1, dtype=np.uint64))


def to_shingle_set(case: TestCase, k: int) -> ShingleSet:
    if k < 1:
        raise ValueError(f"Shingle length must be positive, got {k}")

    def compute() -> ShingleSet:
        if case.length < k:
            logger.warning("Test '%s' is shorter than k=%d (%d bytes); its shingle set is empty",
                           case.id, k, case.length)
            return ShingleSet(k, np.empty(0, dtype=np.uint64))
        return ShingleSet(k, _shingle_codes(case.source, k))

    return case.cached(('shingles', k), compute)


@dataclass(frozen=True)
class FaultMatrix:
    """Ground truth: which tests detect which fault."""
    faults: Tuple[str, ...]
    detects: Dict[str, FrozenSet[str]]
    test_ids: Tuple[str, ...]

    def __post_init__(self):
        known = set(self.test_ids)
        for fault in self.faults:
            detecting = self.detects.get(fault)
            if not detecting:
                raise UndetectedFaultError(f"Fault '{fault}' is detected by no test")
            for test_id in sorted(detecting):
                if test_id not in known:
                    raise UnknownTestIdError(f"Fault '{fault}' references unknown test id '{test_id}'")

    @property
    def m(self) -> int:
        return len(self.faults)

    @property
    def n(self) -> int:
        return len(self.test_ids)

    @classmethod
    def from_mapping(cls, mapping: Dict[str, Sequence[str]], suite: TestSuite) -> 'FaultMatrix':
        return cls(
            faults=tuple(mapping),
            detects={fault: frozenset(tests) for fault, tests in mapping.items()},
            test_ids=tuple(suite.ids),
        )


def load_fault_matrix(path: str, suite: TestSuite) -> FaultMatrix:
    """Read a `fault_id,test_id` CSV; a row with an empty test_id declares a fault only."""
    if not os.path.isfile(path):
        raise MissingSourceError(f"Fault matrix not found: {path}")

    mapping: Dict[str, List[str]] = {}
    with open(path, 'r', encoding='utf-8-sig', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ['fault_id', 'test_id']:
            raise MalformedFaultRowError(f"{path}: expected header 'fault_id,test_id', got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise MalformedFaultRowError(f"{path}:{line}: expected 2 columns, got {len(row)}")
            fault_id, test_id = row[0].strip(), row[1].strip()
            if not fault_id:
                raise MalformedFaultRowError(f"{path}:{line}: empty fault_id")
            detecting = mapping.setdefault(fault_id, [])
            if not test_id:
                continue
            if test_id not in suite:
                raise UnknownTestIdError(f"{path}:{line}: fault '{fault_id}' references unknown test id '{test_id}'")
            if test_id not in detecting:
                detecting.append(test_id)

    fault_matrix = FaultMatrix.from_mapping(mapping, suite)
    logger.info("Loaded %d faults over %d tests from %s", fault_matrix.m, fault_matrix.n, path)
    return fault_matrix


def save_fault_matrix(fault_matrix: FaultMatrix, path: str):
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['fault_id', 'test_id'])
        for fault in fault_matrix.faults:
            for test_id in sorted(fault_matrix.detects[fault]):
                writer.writerow([fault, test_id])
