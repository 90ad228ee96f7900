#!/usr/bin/env python3
"""
Synthetic Corpus Generator
Seeded suites of Java-like test sources with planted fault clusters, written to disk
as manifest + fault matrix pairs for demos and experiments
"""

import json
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from corpus import FaultMatrix, TestCase, TestSuite, save_fault_matrix, save_suite

CONSONANTS = 'bcdfghjklmnprstvwz'
VOWELS = 'aeiou'
LOWER = 'abcdefghijklmnopqrstuvwxyz'
DIGITS = '0123456789'

STATEMENTS = [
    '        {type} {var} = new {type}({num}, "{word}");',
    '        assertEquals({num}, {var}.{method}({other}));',
    '        {var}.{method}({other}, {num});',
    '        assertTrue({var}.{method}("{word}"));',
    '        assertNotNull({var}.{method}());',
    '        for (int i = 0; i < {num}; i++) {{ {var}.{method}(i); }}',
    '        {type} {other} = {var}.{method}({num});',
    '        assertFalse({other}.{method}({num}, "{word}"));',
]


def _word(rng: np.random.Generator, syllables: int) -> str:
    return ''.join(rng.choice(list(CONSONANTS)) + rng.choice(list(VOWELS)) for _ in range(syllables))


class ClusterTemplate:
    """Vocabulary and body lines shared by every test of one fault cluster"""

    def __init__(self, rng: np.random.Generator, cluster: int, lines: int):
        self.cluster = cluster
        self.class_name = _word(rng, 3).capitalize() + 'Test'
        types = [_word(rng, 3).capitalize() for _ in range(4)]
        variables = [_word(rng, 2) + _word(rng, 1).capitalize() for _ in range(6)]
        methods = [_word(rng, 2) + _word(rng, 2).capitalize() for _ in range(6)]
        words = [_word(rng, 3) for _ in range(6)]

        self.body: List[str] = []
        for _ in range(lines):
            pattern = STATEMENTS[int(rng.integers(len(STATEMENTS)))]
            self.body.append(pattern.format(
                type=rng.choice(types),
                var=rng.choice(variables),
                other=rng.choice(variables),
                method=rng.choice(methods),
                num=int(rng.integers(1, 1000)),
                word=rng.choice(words),
            ))

    def render(self, test_name: str, body: Sequence[str]) -> bytes:
        lines = [f'public class {self.class_name} {{', '    @Test', f'    public void {test_name}() {{']
        lines.extend(body)
        lines.extend(['    }', '}', ''])
        return '\n'.join(lines).encode('utf-8')


def _scramble(rng: np.random.Generator, line: str) -> str:
    """Replace every letter and digit, keeping case, punctuation and length."""
    out = []
    for ch in line:
        if ch.islower():
            out.append(LOWER[int(rng.integers(26))])
        elif ch.isupper():
            out.append(LOWER[int(rng.integers(26))].upper())
        elif ch.isdigit():
            out.append(DIGITS[int(rng.integers(10))])
        else:
            out.append(ch)
    return ''.join(out)


def generate_corpus(n: int = 200, faults: int = 10, seed: int = 0, lines: Tuple[int, int] = (30, 45),
                    mutation: float = 0.3, name: str = 'synthetic') -> Tuple[TestSuite, FaultMatrix]:
    """Build a suite of n tests in `faults` clusters.

    Each test copies its cluster template and scrambles a `mutation` share of the
    body lines in place, so tests of one cluster keep the rest of the template
    byte for byte. Every test detects its cluster's fault; manifest order is shuffled.
    """
    if faults < 1 or n < faults:
        raise ValueError(f"Need at least one test per fault cluster (n={n}, faults={faults})")
    if not 0.0 <= mutation <= 0.4:
        raise ValueError(f"Mutation share must lie in [0, 0.4], got {mutation}")
    low, high = lines
    if low < 1 or high < low:
        raise ValueError(f"Invalid template line range {lines}")

    rng = np.random.default_rng(seed)
    templates = [ClusterTemplate(rng, c, int(rng.integers(low, high + 1))) for c in range(faults)]
    membership = np.arange(n) % faults
    permutation = rng.permutation(n)

    cases = []
    detects: Dict[str, List[str]] = {f'F{c + 1:02d}': [] for c in range(faults)}
    for position, member in enumerate(permutation):
        template = templates[membership[member]]
        test_id = f't{position:04d}'
        body = list(template.body)
        changed = int(round(mutation * len(body)))
        for line in rng.choice(len(body), size=changed, replace=False):
            body[line] = _scramble(rng, body[line])
        cases.append(TestCase(test_id, template.render(f'test{position:04d}', body)))
        detects[f'F{template.cluster + 1:02d}'].append(test_id)

    suite = TestSuite(tuple(cases), name=name)
    return suite, FaultMatrix.from_mapping(detects, suite)


def write_corpus(out_dir: str, suite: TestSuite, fault_matrix: FaultMatrix) -> Tuple[str, str]:
    """Write manifest.json, faults.csv and one .java source per test into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = save_suite(suite, os.path.join(out_dir, 'manifest.json'), sources_dir='tests', extension='.java')
    faults_path = os.path.join(out_dir, 'faults.csv')
    save_fault_matrix(fault_matrix, faults_path)
    return manifest, faults_path


def generate_subjects(out_dir: str, versions: int = 1, n: int = 200, faults: int = 10, seed: int = 0,
                      name: str = 'synthetic', **kwargs) -> str:
    """Generate one corpus per version under out_dir/v<k>/ and index them in subjects.json."""
    if versions < 1:
        raise ValueError(f"Need at least one version, got {versions}")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for version in range(1, versions + 1):
        version_seed = int(np.random.SeedSequence([seed, version]).generate_state(1)[0])
        suite, fault_matrix = generate_corpus(n, faults, version_seed, name=name, **kwargs)
        manifest, faults_path = write_corpus(os.path.join(out_dir, f'v{version}'), suite, fault_matrix)
        entries.append({
            'name': name,
            'version': str(version),
            'manifest': os.path.relpath(manifest, out_dir).replace(os.sep, '/'),
            'faults': os.path.relpath(faults_path, out_dir).replace(os.sep, '/'),
        })

    path = os.path.join(out_dir, 'subjects.json')
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(entries, f, indent=2)
        f.write('\n')
    return path


def main(out_dir: Optional[str] = None):
    out_dir = out_dir or 'demo_corpus'
    print(f"🚀 Generating synthetic corpus in {out_dir}...")
    path = generate_subjects(out_dir, versions=3)
    print(f"✅ Wrote 3 versions of 200 tests / 10 faults, indexed in {path}")


if __name__ == '__main__':
    main(sys.argv[1] if len(sys.argv) > 1 else None)
