#!/usr/bin/env python3
"""
Command-Line Interface
prioritize / evaluate / compare / generate subcommands with reproducible config echoes

Exit codes: 0 success, 1 usage error, 2 input error, 3 internal error.
"""

import argparse
import json
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

from config import (
    CACHE_DIR,
    DEFAULT_COMPRESSOR,
    DEFAULT_LSH_BANDS,
    DEFAULT_LSH_PERMS,
    DEFAULT_LSH_ROWS,
    DEFAULT_LSH_SEED,
    DEFAULT_REPLICATES,
    DEFAULT_SHINGLE_K,
    RunConfig,
    UsageError,
    configure_logging,
    default_jobs,
    default_seed,
    normalize_technique,
    parse_seeds,
    parse_techniques,
)
from corpus import CorpusError, load_fault_matrix, load_suite
from evaluation import EvaluationError, GROUP_POOLED, GROUP_SUITE, Subject, apfd, load_subjects, run_experiment
from export_module import FORMATS, ResultExporter, read_order, write_experiment, write_matrix, write_text
from lsh import LshConfig, LshConfigError
from metrics import METRICS, MatrixCache, MetricError, get_compressor
from prioritizer import PrioritizationError, TechniqueOptions, prioritize
from synthetic_corpus import generate_subjects

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

# Rounds per suite when --seeds is not given
DEFAULT_ROUNDS = 30


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with EXIT_USAGE."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def status(message: str):
    print(f"✓ {message}", file=sys.stderr)


def _add_technique_options(p: argparse.ArgumentParser):
    p.add_argument('--shingle-k', type=int, default=DEFAULT_SHINGLE_K, help='shingle length for JAC and LSH')
    p.add_argument('--compressor', default=DEFAULT_COMPRESSOR, help='compressor for NCD and NCD-MS')
    p.add_argument('--lsh-perms', type=int, default=DEFAULT_LSH_PERMS)
    p.add_argument('--lsh-bands', type=int, default=DEFAULT_LSH_BANDS)
    p.add_argument('--lsh-rows', type=int, default=DEFAULT_LSH_ROWS)
    p.add_argument('--lsh-seed', type=lambda v: int(v, 0), default=DEFAULT_LSH_SEED)
    p.add_argument('--sc-metric', choices=METRICS, default='ncd', help='distance the sanity check minimizes')
    p.add_argument('--jobs', type=int, default=None, help='worker threads (default: DIVPRIO_JOBS or CPU count)')
    p.add_argument('--cache-dir', default=None, help='distance-matrix cache (default: DIVPRIO_CACHE_DIR)')
    p.add_argument('--lowercase', action='store_true', help='lowercase sources before measuring')
    p.add_argument('--collapse-whitespace', action='store_true', help='collapse whitespace runs before measuring')


def build_parser() -> CliParser:
    parser = CliParser(prog='divprio', description='Similarity-based test case prioritization')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    commands = parser.add_subparsers(dest='subcommand', metavar='command')
    commands.required = True

    p = commands.add_parser('prioritize', help='order a test suite')
    p.add_argument('-t', '--technique', help='RND, MNH, JAC, NCD, NCD-MS, LSH or SC')
    p.add_argument('--manifest', action='append', default=[])
    p.add_argument('--out')
    p.add_argument('--format', choices=FORMATS, default='json')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--matrix-out', help='also write the distance matrix as CSV (pairwise techniques)')
    p.add_argument('--echo', help='config echo path when the order goes to stdout')
    _add_technique_options(p)
    p.add_argument('--config', help='rerun from a config echo')

    p = commands.add_parser('evaluate', help='score an order by APFD')
    p.add_argument('--order')
    p.add_argument('--manifest', action='append', default=[])
    p.add_argument('--faults', action='append', default=[])
    p.add_argument('--out')
    p.add_argument('--format', choices=FORMATS, default='text')
    p.add_argument('--echo', help='config echo path when the score goes to stdout')
    p.add_argument('--config', help='rerun from a config echo')

    p = commands.add_parser('compare', help='run techniques over suites and seeds and compare them')
    p.add_argument('--techniques', default='all')
    p.add_argument('--manifest', action='append', default=[])
    p.add_argument('--faults', action='append', default=[])
    p.add_argument('--subjects', help='subjects.json index of suite versions')
    p.add_argument('--out', help='output directory for the result tables')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--seeds', help="seed list such as '0-29' or '1,2,3'")
    p.add_argument('--group-by', choices=(GROUP_POOLED, GROUP_SUITE), default=GROUP_POOLED)
    p.add_argument('--replicates', type=int, default=DEFAULT_REPLICATES)
    p.add_argument('--xlsx', action='store_true', help='also write experiment.xlsx')
    _add_technique_options(p)
    p.add_argument('--config', help='rerun from a config echo')

    p = commands.add_parser('generate', help='write a synthetic clustered corpus')
    p.add_argument('--out')
    p.add_argument('--tests', type=int, default=200)
    p.add_argument('--clusters', type=int, default=10)
    p.add_argument('--versions', type=int, default=1)
    p.add_argument('--mutation', type=float, default=0.3)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--config', help='rerun from a config echo')
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Resolve flags and environment fallbacks into a RunConfig."""
    seed = args.seed if getattr(args, 'seed', None) is not None else default_seed()
    config = RunConfig(subcommand=args.subcommand, seed=seed, out=args.out)
    config.manifests = list(getattr(args, 'manifest', []) or [])
    config.faults = list(getattr(args, 'faults', []) or [])
    if getattr(args, 'echo', None):
        config.extra['echo'] = args.echo

    if hasattr(args, 'shingle_k'):
        config.shingle_k = args.shingle_k
        config.compressor = args.compressor
        config.lsh_perms, config.lsh_bands, config.lsh_rows = args.lsh_perms, args.lsh_bands, args.lsh_rows
        config.lsh_seed = args.lsh_seed
        config.sc_metric = args.sc_metric
        config.jobs = args.jobs if args.jobs is not None else default_jobs()
        config.cache_dir = args.cache_dir or CACHE_DIR
        config.lowercase = args.lowercase
        config.collapse_whitespace = args.collapse_whitespace

    if args.subcommand == 'prioritize':
        if not args.technique:
            raise UsageError("prioritize needs --technique")
        config.techniques = [normalize_technique(args.technique)]
        config.format = args.format
        if args.matrix_out:
            config.extra['matrix_out'] = args.matrix_out
    elif args.subcommand == 'evaluate':
        config.order_path = args.order
        config.format = args.format
    elif args.subcommand == 'compare':
        config.techniques = parse_techniques(args.techniques)
        config.seeds = parse_seeds(args.seeds) if args.seeds else list(range(seed, seed + DEFAULT_ROUNDS))
        config.subjects = args.subjects
        config.group_by = args.group_by
        config.replicates = args.replicates
        config.xlsx = args.xlsx
    elif args.subcommand == 'generate':
        config.extra.update({'tests': args.tests, 'clusters': args.clusters,
                             'versions': args.versions, 'mutation': args.mutation})
    return config


def _technique_options(config: RunConfig) -> TechniqueOptions:
    if config.shingle_k < 1:
        raise UsageError(f"--shingle-k must be positive, got {config.shingle_k}")
    if config.jobs < 1:
        raise UsageError(f"--jobs must be positive, got {config.jobs}")
    try:
        compressor = get_compressor(config.compressor)
    except MetricError as e:
        raise UsageError(str(e))
    return TechniqueOptions(
        shingle_k=config.shingle_k,
        compressor=compressor,
        lsh=LshConfig(config.lsh_perms, config.lsh_bands, config.lsh_rows, config.lsh_seed),
        sc_metric=config.sc_metric,
        jobs=config.jobs,
        cache=MatrixCache(config.cache_dir) if config.cache_dir else None,
    )


def _single_manifest(config: RunConfig) -> str:
    if len(config.manifests) != 1:
        raise UsageError(f"{config.subcommand} needs exactly one --manifest")
    return config.manifests[0]


def _emit(config: RunConfig, content: str):
    if config.out:
        write_text(config.out, content)
    else:
        sys.stdout.write(content)


def echo_path(config: RunConfig) -> Optional[str]:
    """Where the config echo goes; stdout runs write one only with --echo."""
    if config.extra.get('echo'):
        return config.extra['echo']
    if not config.out:
        logger.info("Output went to stdout; pass --echo PATH to keep a config echo")
        return None
    if config.subcommand in ('compare', 'generate'):
        return os.path.join(config.out, 'config.json')
    return config.out + '.config.json'


def cmd_prioritize(config: RunConfig) -> int:
    options = _technique_options(config)
    suite = load_suite(_single_manifest(config), config.lowercase, config.collapse_whitespace)
    order = prioritize(suite, config.techniques[0], config.seed, options)
    _emit(config, ResultExporter.order_to_string(order, config.format))

    matrix_out = config.extra.get('matrix_out')
    if matrix_out:
        if order.matrix is None:
            raise UsageError(f"--matrix-out needs a pairwise technique, not {order.technique}")
        write_matrix(order.matrix, matrix_out)
    status(f"{order.technique} ordered {len(order)} tests in {order.elapsed:.3f}s"
           + (f" -> {config.out}" if config.out else ''))
    return EXIT_OK


def cmd_evaluate(config: RunConfig) -> int:
    if not config.order_path:
        raise UsageError("evaluate needs --order")
    if len(config.faults) != 1:
        raise UsageError("evaluate needs exactly one --faults")
    suite = load_suite(_single_manifest(config), config.lowercase, config.collapse_whitespace)
    fault_matrix = load_fault_matrix(config.faults[0], suite)
    if not os.path.isfile(config.order_path):
        raise EvaluationError(f"Order file not found: {config.order_path}")
    try:
        order = read_order(config.order_path)
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        raise EvaluationError(f"Cannot read order '{config.order_path}': {e}")
    result = apfd(order.order, fault_matrix, label=os.path.basename(config.order_path))
    _emit(config, ResultExporter.apfd_to_string(result, config.format))
    status(f"APFD {result.apfd:.2f} over {result.n} tests and {result.m} faults")
    return EXIT_OK


def _subjects(config: RunConfig) -> List[Subject]:
    subjects: List[Subject] = []
    if config.subjects:
        subjects.extend(load_subjects(config.subjects))
    if len(config.manifests) != len(config.faults):
        raise UsageError("Every --manifest needs a matching --faults")
    for manifest, faults_path in zip(config.manifests, config.faults):
        suite = load_suite(manifest, config.lowercase, config.collapse_whitespace)
        subjects.append(Subject(suite, load_fault_matrix(faults_path, suite)))
    if not subjects:
        raise UsageError("compare needs --subjects or at least one --manifest/--faults pair")
    return subjects


def cmd_compare(config: RunConfig) -> int:
    if len(config.techniques) < 2:
        raise UsageError("compare needs at least two techniques")
    if not config.out:
        raise UsageError("compare needs --out")
    if config.replicates < 1:
        raise UsageError(f"--replicates must be positive, got {config.replicates}")
    options = _technique_options(config)
    subjects = _subjects(config)
    result = run_experiment(subjects, config.techniques, config.seeds, options,
                            group_by=config.group_by, replicates=config.replicates)
    written = write_experiment(result, config.out, xlsx=config.xlsx)
    sys.stdout.write(ResultExporter.experiment_tables_text(result))
    status(f"{len(result.rounds)} rounds over {len(subjects)} suites; wrote {len(written)} files to {config.out}")
    return EXIT_OK


def cmd_generate(config: RunConfig) -> int:
    if not config.out:
        raise UsageError("generate needs --out")
    extra = config.extra
    try:
        path = generate_subjects(config.out, versions=extra['versions'], n=extra['tests'],
                                 faults=extra['clusters'], seed=config.seed, mutation=extra['mutation'])
    except ValueError as e:
        raise UsageError(str(e))
    status(f"Generated {extra['versions']} version(s) of {extra['tests']} tests in {extra['clusters']} "
           f"fault clusters -> {path}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    'prioritize': cmd_prioritize,
    'evaluate': cmd_evaluate,
    'compare': cmd_compare,
    'generate': cmd_generate,
}


def run(config: RunConfig) -> int:
    if config.subcommand not in COMMANDS:
        raise UsageError(f"Unknown subcommand '{config.subcommand}'")
    code = COMMANDS[config.subcommand](config)
    path = echo_path(config)
    if path:
        config.save(path)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        if args.config:
            config = RunConfig.load(args.config)
            if config.subcommand != args.subcommand:
                raise UsageError(f"Config echo is for '{config.subcommand}', not '{args.subcommand}'")
        else:
            config = config_from_args(args)
        return run(config)
    except (UsageError, LshConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, EvaluationError, PrioritizationError, MetricError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:
        logger.exception("Internal error")
        print(f"error: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == '__main__':
    sys.exit(main())
