"""Per-stratum metric summaries (mid vs apical/basal slices) and their text rendering."""
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel

from src.utility.logger import get_logger
from src.validation.metrics import METRIC_NAMES

logger = get_logger(__name__)

EDGE_SLICES = 2
MIN_SLICES_FOR_SPLIT = 5
STRATA = ('mid', 'apical_basal', 'all')
STRATUM_TITLES = {'mid': 'Mid-Slices', 'apical_basal': 'Apical/Basal-Slices', 'all': 'All Slices'}
METRIC_TITLES = {
    'dice': 'Dice',
    'jaccard': 'Jaccard',
    'sensitivity': 'Sensitivity',
    'specificity': 'Specificity',
    'ppv': 'PPV',
    'npv': 'NPV',
}


class MetricSummary(BaseModel):
    mean: Optional[float] = None
    std: Optional[float] = None
    n: int = 0


class MetricReport(BaseModel):
    slice_range: Tuple[int, int]
    stratified: bool
    # structure -> stratum -> metric -> summary
    structures: Dict[str, Dict[str, Dict[str, MetricSummary]]]
    per_slice: List[Dict[str, Any]] = []


def stratum_of(z: int, slice_range: Tuple[int, int]) -> str:
    """'apical_basal' for the first and last two slices of the range, else 'mid'."""
    start, end = slice_range
    if z - start < EDGE_SLICES or end - z < EDGE_SLICES:
        return 'apical_basal'
    return 'mid'


def _summaries(frame: pd.DataFrame) -> Dict[str, MetricSummary]:
    summaries: Dict[str, MetricSummary] = {}
    for metric in METRIC_NAMES:
        values = pd.to_numeric(frame[metric], errors='coerce').dropna() if metric in frame else pd.Series(dtype=float)
        if values.empty:
            summaries[metric] = MetricSummary()
        else:
            summaries[metric] = MetricSummary(mean=float(values.mean()), std=float(values.std(ddof=0)), n=int(values.size))
    return summaries


def stratified_report(records: Sequence[Dict[str, object]], slice_range: Tuple[int, int]) -> MetricReport:
    """
    Summarizes per-slice metrics as mean and standard deviation per stratum.

    Ranges shorter than five slices get the all-slices stratum only and the report
    is flagged as not stratified. Undefined (None) metric values are left out of the
    statistics.

    Args:
        records: Per-slice records from `per_slice_metrics`, possibly several structures.
        slice_range (Tuple[int, int]): LV range the strata are defined on.

    Returns:
        MetricReport: Summaries per structure, stratum and metric.
    """
    start, end = slice_range
    stratified = end - start + 1 >= MIN_SLICES_FOR_SPLIT
    if not stratified:
        logger.warning(f"slice range {slice_range} is too short for a mid vs apical/basal split")

    frame = pd.DataFrame(list(records))
    structures: Dict[str, Dict[str, Dict[str, MetricSummary]]] = {}
    if not frame.empty:
        frame['stratum'] = [stratum_of(int(z), slice_range) for z in frame['z']]
        for structure, group in frame.groupby('structure', sort=True):
            strata = {'all': _summaries(group)}
            if stratified:
                for stratum in ('mid', 'apical_basal'):
                    strata[stratum] = _summaries(group[group['stratum'] == stratum])
            structures[str(structure)] = strata

    return MetricReport(
        slice_range=slice_range,
        stratified=stratified,
        structures=structures,
        per_slice=[dict(record) for record in records],
    )


def _cell(summary: Optional[MetricSummary]) -> str:
    if summary is None or summary.mean is None:
        return '-'
    return f'{summary.mean:.3f} ± {summary.std:.3f}'


def render_table(report: MetricReport) -> str:
    """Text table with one row per metric and Mid / Apical-Basal / All columns per structure."""
    columns = [s for s in STRATA if report.stratified or s == 'all']
    lines: List[str] = []
    for structure, strata in report.structures.items():
        rows = [[structure] + [STRATUM_TITLES[c] for c in columns]]
        for metric in METRIC_NAMES:
            rows.append([METRIC_TITLES[metric]] + [_cell(strata.get(c, {}).get(metric)) for c in columns])
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        for index, row in enumerate(rows):
            lines.append(' | '.join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
            if index == 0:
                lines.append('-+-'.join('-' * width for width in widths))
        lines.append('')
    return '\n'.join(lines).rstrip() + '\n'
