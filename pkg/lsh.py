"""
Locality-Sensitive Hashing Module
MinHash signatures over k-shingle sets and a banded LSH index for candidate-set queries
"""

import json
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Set, Tuple

import numpy as np

from config import DEFAULT_LSH_BANDS, DEFAULT_LSH_PERMS, DEFAULT_LSH_ROWS, DEFAULT_LSH_SEED
from corpus import ShingleSet

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
# Signature slot of the empty set. A real hash equal to it has probability 2**-64.
SENTINEL = np.uint64(_MASK64)
# Rows of shingle codes hashed per chunk when building a signature
_CHUNK_ROWS = 4096


class LshConfigError(ValueError):
    pass


def _splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (multiplication wraps mod 2**64)."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class LshConfig:
    perms: int = DEFAULT_LSH_PERMS
    bands: int = DEFAULT_LSH_BANDS
    rows: int = DEFAULT_LSH_ROWS
    seed: int = DEFAULT_LSH_SEED

    def __post_init__(self):
        for name in ('perms', 'bands', 'rows'):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise LshConfigError(f"LSH {name} must be a positive integer, got {value!r}")
        if self.bands * self.rows != self.perms:
            raise LshConfigError(
                f"LSH bands x rows must equal permutations: {self.bands} x {self.rows} != {self.perms}"
            )
        if not 0 <= self.seed <= _MASK64:
            raise LshConfigError(f"LSH seed must fit in 64 bits, got {self.seed}")

    @property
    def threshold(self) -> float:
        """Approximate similarity threshold ST = (1/b)^(1/r)."""
        return (1.0 / self.bands) ** (1.0 / self.rows)

    def slot_seeds(self) -> np.ndarray:
        """One 64-bit key per hash function, derived from the config seed by a counter."""
        return np.array([_splitmix64((self.seed + p * _GOLDEN) & _MASK64) for p in range(self.perms)],
                        dtype=np.uint64)

    def to_dict(self) -> Dict:
        return {'perms': self.perms, 'bands': self.bands, 'rows': self.rows, 'seed': self.seed}


class MinHashSignature:
    """P minima, one per hash function; compares by value."""

    __slots__ = ('values', 'seed')

    def __init__(self, values: np.ndarray, seed: int):
        self.values = np.array(values, dtype=np.uint64)
        self.values.setflags(write=False)
        self.seed = seed

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, MinHashSignature):
            return NotImplemented
        return self.seed == other.seed and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"MinHashSignature(P={len(self)}, seed={self.seed:#x})"

    @property
    def is_empty(self) -> bool:
        return bool(np.all(self.values == SENTINEL))

    def to_json(self) -> str:
        return json.dumps([int(v) for v in self.values])


def empty_signature(config: LshConfig) -> MinHashSignature:
    return MinHashSignature(np.full(config.perms, SENTINEL, dtype=np.uint64), config.seed)


def minhash_signature(s: ShingleSet, config: LshConfig) -> MinHashSignature:
    if len(s) == 0:
        return empty_signature(config)
    seeds = config.slot_seeds()
    values = np.full(config.perms, SENTINEL, dtype=np.uint64)
    for start in range(0, len(s), _CHUNK_ROWS):
        codes = s.codes[start:start + _CHUNK_ROWS]
        hashed = _mix(codes[:, None] ^ seeds[None, :])
        np.minimum(values, hashed.min(axis=0), out=values)
    return MinHashSignature(values, config.seed)


def _check_compatible(a: MinHashSignature, b: MinHashSignature):
    if len(a) != len(b):
        raise LshConfigError(f"Signature lengths differ: {len(a)} != {len(b)}")
    if a.seed != b.seed:
        raise LshConfigError("Signatures come from different hash families (seed mismatch)")


def estimate_jaccard(a: MinHashSignature, b: MinHashSignature) -> float:
    """Fraction of slots where the two signatures agree."""
    _check_compatible(a, b)
    return np.count_nonzero(a.values == b.values) / len(a)


def merge_signatures(a: MinHashSignature, b: MinHashSignature) -> MinHashSignature:
    """Elementwise minimum: the signature of the union of both sets."""
    _check_compatible(a, b)
    return MinHashSignature(np.minimum(a.values, b.values), a.seed)


class LshIndex:
    """b bucket tables; band i of a signature keys into table i only."""

    def __init__(self, config: LshConfig):
        self.config = config
        self.buckets: List[Dict[bytes, Set[str]]] = [dict() for _ in range(config.bands)]
        self.signatures: Dict[str, MinHashSignature] = {}

    def _check(self, signature: MinHashSignature):
        if len(signature) != self.config.perms or signature.seed != self.config.seed:
            raise LshConfigError(
                f"Signature (P={len(signature)}, seed={signature.seed:#x}) does not match index config "
                f"(P={self.config.perms}, seed={self.config.seed:#x})"
            )

    def _band_keys(self, signature: MinHashSignature) -> Iterable[Tuple[int, bytes]]:
        rows = self.config.rows
        for band in range(self.config.bands):
            yield band, signature.values[band * rows:(band + 1) * rows].tobytes()

    def insert(self, item_id: str, signature: MinHashSignature):
        self._check(signature)
        if item_id in self.signatures:
            raise LshConfigError(f"Item '{item_id}' is already indexed")
        self.signatures[item_id] = signature
        for band, key in self._band_keys(signature):
            self.buckets[band].setdefault(key, set()).add(item_id)

    def query(self, q: MinHashSignature) -> Set[str]:
        """Ids sharing at least one band key with q."""
        self._check(q)
        candidates: Set[str] = set()
        for band, key in self._band_keys(q):
            bucket = self.buckets[band].get(key)
            if bucket:
                candidates |= bucket
        return candidates

    def __len__(self) -> int:
        return len(self.signatures)


def index(signatures: Dict[str, MinHashSignature], config: LshConfig) -> LshIndex:
    ix = LshIndex(config)
    for item_id, signature in signatures.items():
        ix.insert(item_id, signature)
    logger.debug("Indexed %d signatures into %d bands", len(ix), config.bands)
    return ix


def query(ix: LshIndex, q: MinHashSignature) -> Set[str]:
    return ix.query(q)
