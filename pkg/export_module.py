"""
Export Functionality Module
Order, APFD and experiment-table writers (JSON, CSV, text and Excel)
"""

import csv
import json
import os
from io import BytesIO, StringIO
from typing import Dict, List

import pandas as pd

from evaluation import ApfdResult, ExperimentResult
from metrics import DistanceMatrix
from prioritizer import PrioritizedOrder

FORMATS = ('json', 'csv', 'text')

# Experiment tables and the files they land in
EXPERIMENT_FILES = {
    'rounds': 'rounds.csv',
    'vda_vs_rnd': 'vda_vs_rnd.csv',
    'apfd_summary': 'apfd_summary.csv',
    'amet_summary': 'amet_summary.csv',
}

SHEET_NAMES = {
    'vda_vs_rnd': 'VDA vs RND',
    'apfd_summary': 'Mean APFD',
    'amet_summary': 'Mean AMET',
    'rounds': 'Rounds',
}


def _check_format(fmt: str):
    if fmt not in FORMATS:
        raise ValueError(f"Unknown output format '{fmt}'; expected one of {', '.join(FORMATS)}")


def _dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + '\n'


class ResultExporter:
    """Render results in the supported encodings"""

    @staticmethod
    def order_to_string(order: PrioritizedOrder, fmt: str = 'json') -> str:
        _check_format(fmt)
        if fmt == 'json':
            return _dump_json(order.to_dict())
        if fmt == 'text':
            return ''.join(f"{test_id}\n" for test_id in order.order)
        output = StringIO()
        writer = csv.writer(output, lineterminator='\n')
        writer.writerow(['position', 'test_id', 'score'])
        for position, (test_id, score) in enumerate(zip(order.order, order.scores), start=1):
            writer.writerow([position, test_id, repr(float(score))])
        return output.getvalue()

    @staticmethod
    def apfd_to_string(result: ApfdResult, fmt: str = 'text') -> str:
        _check_format(fmt)
        if fmt == 'json':
            return _dump_json(result.to_dict())
        if fmt == 'text':
            return f"APFD: {result.apfd:.2f} (n={result.n}, m={result.m})\n"
        output = StringIO()
        writer = csv.writer(output, lineterminator='\n')
        writer.writerow(['order', 'n', 'm', 'apfd'])
        writer.writerow([result.label, result.n, result.m, repr(result.apfd)])
        return output.getvalue()

    @staticmethod
    def experiment_to_dict(result: ExperimentResult) -> Dict:
        return {
            'group_by': result.group_by,
            'comparisons': [report.to_dict() for report in result.comparisons],
            'vda_vs_rnd': result.vda_vs_rnd.to_dict(orient='records'),
            'apfd_summary': result.apfd_summary.to_dict(orient='records'),
            'amet_summary': result.amet_summary.to_dict(orient='records'),
        }

    @staticmethod
    def experiment_tables_text(result: ExperimentResult) -> str:
        """The three summary tables for a terminal."""
        sections = []
        for name in ('vda_vs_rnd', 'apfd_summary', 'amet_summary'):
            frame = getattr(result, name)
            body = frame.to_string(index=False, float_format=lambda v: f"{v:.4f}") if len(frame) else '(empty)'
            sections.append(f"{SHEET_NAMES[name]}\n{body}\n")
        return '\n'.join(sections)

    @staticmethod
    def experiment_to_excel(result: ExperimentResult) -> BytesIO:
        buffer = BytesIO()
        with pd.ExcelWriter(buffer, engine='openpyxl') as writer:
            for name, sheet in SHEET_NAMES.items():
                getattr(result, name).to_excel(writer, sheet_name=sheet, index=False)
        buffer.seek(0)
        return buffer


def write_text(path: str, content: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(content)


def write_order(order: PrioritizedOrder, path: str, fmt: str = 'json'):
    write_text(path, ResultExporter.order_to_string(order, fmt))


def read_order(path: str) -> PrioritizedOrder:
    """Read an order written in any of the supported formats, sniffed from the content."""
    with open(path, 'r', encoding='utf-8') as f:
        content = f.read()
    stripped = content.lstrip()
    if stripped.startswith('{'):
        return PrioritizedOrder.from_dict(json.loads(content))
    lines = [line.strip() for line in content.splitlines() if line.strip()]
    if lines and lines[0] == 'position,test_id,score':
        rows = list(csv.DictReader(StringIO(content)))
        return PrioritizedOrder('unknown', {}, [row['test_id'] for row in rows], [float(row['score']) for row in rows])
    return PrioritizedOrder('unknown', {}, lines, [0.0] * len(lines))


def write_experiment(result: ExperimentResult, out_dir: str, xlsx: bool = False) -> List[str]:
    """Write every experiment table into out_dir; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, filename in EXPERIMENT_FILES.items():
        path = os.path.join(out_dir, filename)
        getattr(result, name).to_csv(path, index=False, lineterminator='\n')
        written.append(path)

    path = os.path.join(out_dir, 'comparisons.json')
    write_text(path, _dump_json(ResultExporter.experiment_to_dict(result)))
    written.append(path)

    if xlsx:
        path = os.path.join(out_dir, 'experiment.xlsx')
        with open(path, 'wb') as f:
            f.write(ResultExporter.experiment_to_excel(result).getvalue())
        written.append(path)
    return written


def write_matrix(matrix: DistanceMatrix, path: str):
    matrix.to_csv(path)
