import json
import os
import zlib

import pytest

from app import create_app
from corpus import TestSuite, save_fault_matrix, save_suite
from metrics import CallableCompressor
from synthetic_corpus import generate_corpus


@pytest.fixture
def app():
    return create_app({'TESTING': True})


@pytest.fixture
def zlib_compressor():
    return CallableCompressor('zlib', lambda data: zlib.compress(data, 9))


@pytest.fixture
def write_manifest(tmp_path):
    """Write {id: bytes} sources and a manifest; returns the manifest path."""

    def write(sources, name='manifest.json'):
        entries = []
        src_dir = tmp_path / 'src'
        src_dir.mkdir(exist_ok=True)
        for test_id, source in sources.items():
            path = src_dir / f'{test_id}.txt'
            path.write_bytes(source)
            entries.append({'id': test_id, 'path': f'src/{test_id}.txt'})
        manifest = tmp_path / name
        manifest.write_text(json.dumps(entries), encoding='utf-8')
        return str(manifest)

    return write


@pytest.fixture
def small_suite():
    return TestSuite.from_sources([
        ('A', b'public void testAlpha() { assertEquals(1, alpha.run()); }'),
        ('B', b'public void testAlpha2() { assertEquals(2, alpha.run()); }'),
        ('C', b'@Test void zulu() { Widget w = new Widget("quartz"); w.spin(42); }'),
        ('D', b'@Test void yankee() { Gadget g = Gadget.of(7); assertTrue(g.ok()); }'),
    ], name='small')


@pytest.fixture(scope='session')
def clustered_corpus():
    return generate_corpus(n=200, faults=10, seed=7)


@pytest.fixture
def clustered_files(tmp_path):
    """A small clustered corpus on disk: (manifest path, faults path)."""
    suite, fault_matrix = generate_corpus(n=30, faults=3, seed=11)
    manifest = save_suite(suite, str(tmp_path / 'manifest.json'), extension='.java')
    faults = str(tmp_path / 'faults.csv')
    save_fault_matrix(fault_matrix, faults)
    assert os.path.isfile(faults)
    return manifest, faults
