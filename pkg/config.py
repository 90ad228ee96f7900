"""
Configuration Module
Environment-driven defaults, the serializable RunConfig and logging setup
"""

import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional


class UsageError(ValueError):
    """Invalid flag or option combination."""


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    if value is None or value.strip() == '':
        return default
    try:
        return int(value, 0)
    except ValueError:
        raise UsageError(f"Environment variable {name} must be an integer, got '{value}'")


# Seed fallback for --seed / --seeds
def default_seed() -> int:
    return _env_int('DIVPRIO_SEED', 0)


def default_jobs() -> int:
    return max(1, _env_int('DIVPRIO_JOBS', os.cpu_count() or 1))


CACHE_DIR = os.environ.get('DIVPRIO_CACHE_DIR')
LOG_LEVEL = os.environ.get('DIVPRIO_LOG_LEVEL', 'WARNING')

DEFAULT_SHINGLE_K = 5
DEFAULT_COMPRESSOR = 'lz4'
DEFAULT_LSH_PERMS = 10
DEFAULT_LSH_BANDS = 10
DEFAULT_LSH_ROWS = 1
DEFAULT_LSH_SEED = 0x5EED_D1F5_0C1A_77E5
DEFAULT_REPLICATES = 1000
DEFAULT_CONFIDENCE = 0.95
SIGNIFICANCE_LEVEL = 0.05

# Technique acronyms, in reporting order
TECHNIQUES = ['rnd', 'mnh', 'jac', 'ncd', 'ncd-ms', 'lsh', 'sc']


def normalize_technique(name: str) -> str:
    technique = name.strip().lower()
    if technique not in TECHNIQUES:
        raise UsageError(
            f"Unknown technique '{name}'; valid techniques: {', '.join(t.upper() for t in TECHNIQUES)}"
        )
    return technique


def parse_techniques(value: str) -> List[str]:
    if value.strip().lower() == 'all':
        return list(TECHNIQUES)
    techniques = []
    for part in value.split(','):
        if part.strip():
            technique = normalize_technique(part)
            if technique not in techniques:
                techniques.append(technique)
    if not techniques:
        raise UsageError("No techniques given")
    return techniques


def parse_seeds(value: str) -> List[int]:
    """Parse '1,2,3', '0-29' or a mix of both."""
    seeds: List[int] = []
    for part in value.split(','):
        part = part.strip()
        if not part:
            continue
        try:
            if '-' in part:
                low, high = part.split('-', 1)
                seeds.extend(range(int(low), int(high) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"Invalid seed list entry '{part}'")
    if any(seed < 0 for seed in seeds):
        raise UsageError("Seeds must be non-negative")
    if not seeds:
        raise UsageError("Empty seed list")
    return seeds


@dataclass
class RunConfig:
    """Everything needed to reproduce one CLI run."""
    subcommand: str
    techniques: List[str] = field(default_factory=list)
    manifests: List[str] = field(default_factory=list)
    subjects: Optional[str] = None
    faults: List[str] = field(default_factory=list)
    order_path: Optional[str] = None
    out: Optional[str] = None
    format: str = 'json'
    seed: int = 0
    seeds: List[int] = field(default_factory=list)
    shingle_k: int = DEFAULT_SHINGLE_K
    compressor: str = DEFAULT_COMPRESSOR
    lsh_perms: int = DEFAULT_LSH_PERMS
    lsh_bands: int = DEFAULT_LSH_BANDS
    lsh_rows: int = DEFAULT_LSH_ROWS
    lsh_seed: int = DEFAULT_LSH_SEED
    sc_metric: str = 'ncd'
    jobs: int = 1
    replicates: int = DEFAULT_REPLICATES
    group_by: str = 'pooled'
    cache_dir: Optional[str] = None
    xlsx: bool = False
    lowercase: bool = False
    collapse_whitespace: bool = False
    extra: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"Unknown config keys: {', '.join(unknown)}")
        if 'subcommand' not in data:
            raise UsageError("Config echo is missing 'subcommand'")
        return cls(**data)

    @classmethod
    def load(cls, path: str) -> 'RunConfig':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"Cannot read config echo '{path}': {e}")
        if not isinstance(data, dict):
            raise UsageError(f"Config echo '{path}' must be a JSON object")
        return cls.from_dict(data)

    def save(self, path: str):
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(self.to_json())
            f.write('\n')


def configure_logging(verbosity: int = 0):
    """Configure root logging to standard error once per process."""
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = getattr(logging, LOG_LEVEL.upper(), logging.WARNING)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    logging.getLogger().setLevel(level)
