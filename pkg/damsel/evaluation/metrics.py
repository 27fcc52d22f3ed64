"""
Voxel-wise segmentation metrics and their per-case/summary tables.
"""

# %% IMPORTS
# Built-in imports
import logging as log

# Package imports
import numpy as np
import pandas as pd

# DAMSEL imports
from damsel.evaluation.inference import dense_infer
from damsel.tools import Timer, mpi_gather, mpi_scatter_items

# All declaration
__all__ = ['ConfusionCounts', 'CaseMetrics', 'confusion_counts',
           'segmentation_metrics', 'evaluate_cases', 'metrics_table',
           'summarize']

METRIC_COLUMNS = ['dsc', 'recall', 'precision']
COUNT_COLUMNS = ['tp', 'fp', 'fn', 'tn']


# %% CLASS DEFINITIONS
class ConfusionCounts(object):
    """
    Voxel counts of the positive (lesion) class

    Parameters
    ----------
    tp, fp, fn, tn : int
        True/false positives and negatives.
    """
    def __init__(self, tp=0, fp=0, fn=0, tn=0):
        values = [int(v) for v in (tp, fp, fn, tn)]
        if min(values) < 0:
            raise ValueError('Confusion counts must be non-negative')
        self.tp, self.fp, self.fn, self.tn = values

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    def __eq__(self, other):
        return isinstance(other, ConfusionCounts) and self.as_dict() == other.as_dict()

    def as_dict(self):
        return {'tp': self.tp, 'fp': self.fp, 'fn': self.fn, 'tn': self.tn}

    def __repr__(self):
        return 'ConfusionCounts(tp={}, fp={}, fn={}, tn={})'.format(
            self.tp, self.fp, self.fn, self.tn)


class CaseMetrics(object):
    """
    DSC, recall and precision of one case (fractions in [0, 1])
    """
    def __init__(self, case_id, dsc, recall, precision, counts=None):
        self.case_id = case_id
        self.dsc = float(dsc)
        self.recall = float(recall)
        self.precision = float(precision)
        self.counts = counts

    def as_dict(self):
        row = {'case_id': self.case_id, 'dsc': self.dsc, 'recall': self.recall,
               'precision': self.precision}
        if self.counts is not None:
            row.update(self.counts.as_dict())
        return row

    def __repr__(self):
        return 'CaseMetrics({!r}, dsc={:.4f}, recall={:.4f}, precision={:.4f})'.format(
            self.case_id, self.dsc, self.recall, self.precision)


# %% FUNCTION DEFINITIONS
def confusion_counts(pred, truth, mask=None):
    """
    Counts the positive-class confusion matrix over the in-mask voxels

    Any label above 0 counts as positive.

    Parameters
    ----------
    pred, truth : numpy.ndarray
        Label maps of equal shape.
    mask : numpy.ndarray
        Boolean map of the voxels to count (all voxels by default).

    Returns
    -------
    ConfusionCounts
    """
    pred = np.asarray(pred) > 0
    truth = np.asarray(truth) > 0
    if pred.shape != truth.shape:
        raise ValueError('Prediction shape {} differs from truth shape {}'.format(
            pred.shape, truth.shape))
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != pred.shape:
            raise ValueError('Mask shape {} differs from label shape {}'.format(
                mask.shape, pred.shape))
    return ConfusionCounts(tp=np.count_nonzero(pred & truth & mask),
                           fp=np.count_nonzero(pred & ~truth & mask),
                           fn=np.count_nonzero(~pred & truth & mask),
                           tn=np.count_nonzero(~pred & ~truth & mask))


def segmentation_metrics(counts, case_id=None):
    """
    DSC, recall and precision from confusion counts

    `DSC = 2TP/(2TP+FP+FN)`, `recall = TP/(TP+FN)` and
    `precision = TP/(TP+FP)`. A zero denominator means there is nothing
    to get wrong, and the metric is 1; if only the truth is empty, DSC and
    precision are 0 and recall is 1 (and symmetrically for an empty
    prediction).

    Parameters
    ----------
    counts : ConfusionCounts
    case_id : str
        Stored in the result.

    Returns
    -------
    CaseMetrics
    """
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    dsc = 1.0 if tp + fp + fn == 0 else 2*tp / (2*tp + fp + fn)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    return CaseMetrics(case_id, dsc, recall, precision, counts=counts)


def evaluate_cases(segmenter, cases, tile_extent=None, *, use_mask=True):
    """
    Dense inference and metrics for a list of labelled cases

    When several MPI processes are present the cases are split among
    them; the result is the same on every process.

    Parameters
    ----------
    segmenter : damsel.networks.Segmenter
        Trained segmenter.
    cases : list of CaseRecord
        Cases with labels.
    tile_extent : int
        Normal-resolution input extent of the inference tiles.
    use_mask : bool
        Restrict the counts to the case masks.

    Returns
    -------
    list of CaseMetrics
        Sorted by case id.
    """
    log.debug('@ metrics::evaluate_cases')
    cases = sorted(cases, key=lambda c: c.case_id)
    if not cases:
        raise ValueError('No cases to evaluate')
    missing = [c.case_id for c in cases if getattr(c, 'labels', None) is None]
    if missing:
        raise ValueError('Cases without labels cannot be scored: {}'.format(missing))

    timer = Timer()
    local = []
    for case in mpi_scatter_items(cases):
        with timer.timed(case.case_id):
            pred = dense_infer(segmenter, case, tile_extent)
        counts = confusion_counts(pred, case.labels, case.mask if use_mask else None)
        metrics = segmentation_metrics(counts, case.case_id)
        log.info('{} (inference {:.1f}s)'.format(metrics, timer.record[case.case_id]))
        local.append(metrics)
    return mpi_gather(local)


def metrics_table(case_metrics):
    """
    Per-case metrics table with `mean` and `std` summary rows

    The standard deviation is the population one (ddof=0). Count columns
    are summarized the same way.

    Returns
    -------
    pandas.DataFrame
        Columns `case_id, dsc, recall, precision, tp, fp, fn, tn`.
    """
    rows = [m.as_dict() for m in sorted(case_metrics, key=lambda m: m.case_id)]
    if not rows:
        raise ValueError('No case metrics to tabulate')
    table = pd.DataFrame(rows, columns=['case_id'] + METRIC_COLUMNS + COUNT_COLUMNS)
    values = table[METRIC_COLUMNS + COUNT_COLUMNS].astype(float)
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=0)
    summary = pd.DataFrame([dict(mean, case_id='mean'), dict(std, case_id='std')],
                           columns=table.columns)
    return pd.concat([table, summary], ignore_index=True)


def summarize(case_metrics):
    """
    Text summary in the `mean (std)` percentage form
    """
    table = metrics_table(case_metrics).set_index('case_id')
    return ', '.join('{} {:.1f} ({:.1f})'.format(col.upper() if col == 'dsc' else
                                                 col.capitalize(),
                                                 100*table.loc['mean', col],
                                                 100*table.loc['std', col])
                     for col in METRIC_COLUMNS)
