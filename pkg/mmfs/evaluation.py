""" Accuracy of a linear classifier restricted to the top-K ranked features,
under leave-one-out, a fixed train/test split or repeated random splits.
"""
import logging
import math
import statistics
from typing import List, Optional, Sequence, Tuple

import attr
from joblib import Parallel, delayed
import numba
import numpy as np
import tqdm

from .dataset import (
    SparseDataset, apply_normalization, normalize, restrict_features,
    subset_instances)
from .common import DENSE_LIMIT
from .errors import CapacityError, DomainError, FeatureIndexError, ShapeError
from .pipeline import SelectionPipeline
from .selection import FeatureRanking, top_k


logger = logging.getLogger(__name__)

LOOCV = 'loocv'
FIXED_SPLIT = 'fixed_split'
RANDOM_SPLITS = 'random_splits'
PROTOCOLS = (LOOCV, FIXED_SPLIT, RANDOM_SPLITS)


@attr.s(auto_attribs=True, frozen=True, eq=False)
class EvalProtocol:
    kind: str = LOOCV
    test_dataset: Optional[SparseDataset] = None
    n_repeats: int = 10
    test_fraction: float = 0.3
    seed: int = 0

    def __attrs_post_init__(self):
        if self.kind not in PROTOCOLS:
            raise DomainError(f'unknown protocol {self.kind!r}, '
                              f'expected one of {PROTOCOLS}')
        if self.kind == FIXED_SPLIT and self.test_dataset is None:
            raise DomainError('fixed_split needs a test dataset')
        if self.n_repeats < 1:
            raise DomainError('n_repeats must be positive')
        if not 0 < self.test_fraction < 1:
            raise DomainError('test_fraction must lie in (0, 1)')

    def to_dict(self) -> dict:
        result = {'kind': self.kind, 'seed': self.seed}
        if self.kind == RANDOM_SPLITS:
            result.update(n_repeats=self.n_repeats,
                          test_fraction=self.test_fraction)
        if self.test_dataset is not None:
            result['test_instances'] = self.test_dataset.n_instances
        return result


@attr.s(auto_attribs=True, frozen=True, eq=False)
class LinearClassifier:
    # last entry is the bias weight
    weights: np.ndarray
    C: float
    iterations: int
    dual_objective: float
    degenerate: bool = False
    majority: float = 1.0

    @property
    def coef(self) -> np.ndarray:
        return self.weights[:-1]

    @property
    def bias(self) -> float:
        return float(self.weights[-1])


@numba.njit(nogil=True, cache=True)
def _l2_loss_sweep(indptr, indices, data, y, qd, alpha, w, index, diag):
    """ One dual coordinate descent pass of the L2-loss SVM over instance
    rows; w carries the bias weight in its last slot.
    """
    n_features = w.shape[0] - 1
    pg_max = -np.inf
    pg_min = np.inf
    for k in range(index.shape[0]):
        i = index[k]
        start = indptr[i]
        end = indptr[i + 1]
        g = w[n_features]
        for p in range(start, end):
            g += data[p] * w[indices[p]]
        g = g * y[i] - 1.0 + diag * alpha[i]
        pg = g
        if alpha[i] == 0.0 and g > 0.0:
            pg = 0.0
        pg_max = max(pg_max, pg)
        pg_min = min(pg_min, pg)
        if abs(pg) > 1e-12:
            old = alpha[i]
            alpha[i] = max(old - g / qd[i], 0.0)
            d = (alpha[i] - old) * y[i]
            for p in range(start, end):
                w[indices[p]] += d * data[p]
            w[n_features] += d
    return pg_max, pg_min


def _binary_labels(dataset: SparseDataset) -> np.ndarray:
    return np.where(dataset.labels > 0, 1.0, -1.0)


def train_linear_svm(dataset: SparseDataset, C_clf: float = 1.0, *,
                     eps: float = 0.1, max_iter: int = 1000,
                     seed: int = 0) -> LinearClassifier:
    """ Squared hinge loss linear SVM with a regularized bias term, trained
    by dual coordinate descent:
    min 1/2 ||(w, b)||^2 + C sum_i max(0, 1 - y_i (w^T x_i + b))^2.
    """
    if not C_clf > 0:
        raise DomainError(f'C_clf must be positive, got {C_clf}')
    y = _binary_labels(dataset)
    n = dataset.n_features
    classes = np.unique(y)
    if len(classes) < 2:
        logger.warning('single-class training data, predicting the '
                       'majority class')
        return LinearClassifier(
            weights=np.zeros(n + 1), C=C_clf, iterations=0,
            dual_objective=0.0, degenerate=True, majority=float(classes[0]))
    rows = dataset.columns.tocsr()
    rows.sort_indices()
    diag = 0.5 / C_clf
    qd = np.asarray(rows.multiply(rows).sum(axis=1)).ravel() + 1.0 + diag
    alpha = np.zeros(dataset.n_instances)
    w = np.zeros(n + 1)
    index = np.arange(dataset.n_instances, dtype=np.int64)
    rng = np.random.RandomState(seed)
    iteration = 0
    for iteration in range(1, max_iter + 1):
        rng.shuffle(index)
        pg_max, pg_min = _l2_loss_sweep(
            rows.indptr, rows.indices, rows.data, y, qd, alpha, w, index,
            diag)
        if pg_max - pg_min <= eps:
            break
    else:
        logger.warning(f'classifier reached max_iter={max_iter}')
    dual = float(0.5 * w @ w + 0.5 * diag * alpha @ alpha - alpha.sum())
    return LinearClassifier(weights=w, C=C_clf, iterations=iteration,
                            dual_objective=dual)


def decision_function(model: LinearClassifier,
                      dataset: SparseDataset) -> np.ndarray:
    if dataset.n_features != len(model.coef):
        raise ShapeError(f'model has {len(model.coef)} features, '
                         f'data has {dataset.n_features}')
    return dataset.columns @ model.coef + model.bias


def predict(model: LinearClassifier, dataset: SparseDataset) -> np.ndarray:
    if model.degenerate:
        return np.full(dataset.n_instances, model.majority)
    return np.where(decision_function(model, dataset) >= 0, 1.0, -1.0)


def accuracy(model: LinearClassifier, dataset: SparseDataset) -> float:
    """ Percentage of correctly classified instances.
    """
    return 100.0 * _n_correct(model, dataset) / dataset.n_instances


def _n_correct(model: LinearClassifier, dataset: SparseDataset) -> int:
    return int((predict(model, dataset) == _binary_labels(dataset)).sum())


class AccuracyMeter:
    def __init__(self):
        self.values = []

    def update(self, value):
        self.values.append(value)

    def mean(self):
        return statistics.mean(self.values)

    def std(self):
        return statistics.pstdev(self.values)


@attr.s(auto_attribs=True, frozen=True)
class EvalRow:
    k: int
    accuracy_mean: float
    accuracy_std: float
    # largest number of fallback features among the top K over all folds
    n_fallback: int
    n_degenerate: int = 0


@attr.s(auto_attribs=True, frozen=True)
class EvalReport:
    rows: Tuple[EvalRow, ...] = attr.ib(converter=tuple)
    protocol: dict
    classifier: dict
    selection: dict
    paper_mode: bool = False

    @property
    def best(self) -> EvalRow:
        """ Highest mean accuracy, smallest K on ties.
        """
        return max(self.rows, key=lambda row: (row.accuracy_mean, -row.k))

    def row(self, k: int) -> EvalRow:
        for row in self.rows:
            if row.k == k:
                return row
        raise KeyError(k)


@attr.s(auto_attribs=True, frozen=True)
class _FoldScore:
    k: int
    n_correct: int
    n_test: int
    n_fallback: int
    degenerate: bool


def check_grid(k_grid: Sequence[int]) -> List[int]:
    k_grid = [int(k) for k in k_grid]
    if not k_grid:
        raise DomainError('K grid is empty')
    if any(k < 1 for k in k_grid):
        raise DomainError('K values must be positive')
    if any(b <= a for a, b in zip(k_grid, k_grid[1:])):
        raise DomainError('K grid must be strictly ascending')
    return k_grid


def make_folds(dataset: SparseDataset, protocol: EvalProtocol, *,
               dense_limit: Optional[int] = None
               ) -> List[Tuple[SparseDataset, SparseDataset]]:
    """ Raw (train, test) pairs for a protocol.
    """
    m = dataset.n_instances
    if protocol.kind == FIXED_SPLIT:
        test = protocol.test_dataset
        if test.n_features != dataset.n_features:
            raise ShapeError(f'test data has {test.n_features} features, '
                             f'training data has {dataset.n_features}')
        return [(dataset, test)]
    if m < 2:
        raise DomainError('evaluation needs at least two instances')
    if protocol.kind == LOOCV:
        limit = DENSE_LIMIT if dense_limit is None else dense_limit
        if m * max(dataset.nnz, 1) > limit:
            raise CapacityError(
                f'leave-one-out over {m} instances with {dataset.nnz:,} '
                f'stored values exceeds the work limit of {limit:,}, '
                f'use random_splits')
        everything = np.arange(m)
        return [(subset_instances(dataset, np.delete(everything, i)),
                 subset_instances(dataset, [i])) for i in range(m)]
    n_test = max(1, int(round(protocol.test_fraction * m)))
    if n_test >= m:
        raise DomainError(f'test_fraction {protocol.test_fraction} leaves '
                          f'no training instances')
    seeds = np.random.RandomState(protocol.seed).randint(
        2 ** 31 - 1, size=protocol.n_repeats)
    folds = []
    for seed in seeds:
        order = np.random.RandomState(seed).permutation(m)
        folds.append((subset_instances(dataset, np.sort(order[n_test:])),
                      subset_instances(dataset, np.sort(order[:n_test]))))
    return folds


def _classifier_view(normalized: SparseDataset, raw: SparseDataset,
                     feature_ids: List[int], scale: float) -> SparseDataset:
    """ Selected normalized columns, rescaled so that entries are of unit
    order again, with the original labels.
    """
    restricted = restrict_features(normalized, feature_ids)
    return SparseDataset(restricted.columns * scale, raw.labels,
                         norm_state=normalized.norm_state)


def _score_fold(train: SparseDataset, test: SparseDataset,
                k_grid: List[int], pipeline: SelectionPipeline,
                ranking: Optional[FeatureRanking], C_clf: float
                ) -> List[_FoldScore]:
    if ranking is None:
        result = pipeline.select(train)
        ranking, report, train_norm = (
            result.ranking, result.report, result.dataset)
    else:
        train_norm, report = normalize(train, pipeline.norm,
                                       dense_limit=pipeline.dense_limit)
    test_norm = apply_normalization(test, report,
                                    dense_limit=pipeline.dense_limit)
    scale = math.sqrt(train.n_instances)
    scores = []
    for k in k_grid:
        ids = sorted(top_k(ranking, k))
        model = train_linear_svm(
            _classifier_view(train_norm, train, ids, scale), C_clf,
            seed=pipeline.config.seed)
        scores.append(_FoldScore(
            k=k,
            n_correct=_n_correct(
                model, _classifier_view(test_norm, test, ids, scale)),
            n_test=test.n_instances,
            n_fallback=ranking.n_fallback_in(k),
            degenerate=model.degenerate))
    return scores


def evaluate(dataset: SparseDataset, k_grid: Sequence[int],
             protocol: EvalProtocol = EvalProtocol(), *,
             pipeline: SelectionPipeline = SelectionPipeline(),
             ranking: Optional[FeatureRanking] = None,
             paper_mode: bool = False,
             C_clf: float = 1.0, jobs: int = 1,
             progress: bool = False) -> EvalReport:
    """ Mean (and std over repeats) test accuracy per K.

    Selection is redone inside every training fold unless a fixed
    ``ranking`` is given or ``paper_mode`` ranks once on all of
    ``dataset``, which leaks test labels into selection.
    """
    k_grid = check_grid(k_grid)
    if paper_mode and ranking is None:
        logger.warning('paper mode: features are ranked on the full data, '
                       'held-out labels leak into selection')
        ranking = pipeline.select(dataset).ranking
    if ranking is not None and ranking.feature_ids and (
            max(ranking.feature_ids) >= dataset.n_features):
        raise FeatureIndexError(
            f'ranking refers to feature {max(ranking.feature_ids)}, data '
            f'has {dataset.n_features} features')
    folds = make_folds(dataset, protocol, dense_limit=pipeline.dense_limit)
    logger.info(f'evaluating {len(folds)} folds of {protocol.kind} '
                f'over K={k_grid}')
    if progress:
        folds = tqdm.tqdm(folds, desc=protocol.kind)
    fold_scores = Parallel(n_jobs=jobs, prefer='threads')(
        delayed(_score_fold)(train, test, k_grid, pipeline, ranking, C_clf)
        for train, test in folds)

    rows = []
    for i, k in enumerate(k_grid):
        per_k = [scores[i] for scores in fold_scores]
        meter = AccuracyMeter()
        for score in per_k:
            meter.update(100.0 * score.n_correct / score.n_test)
        if protocol.kind == RANDOM_SPLITS:
            mean, std = meter.mean(), meter.std()
        else:
            # one pooled estimate, no spread to report
            mean = (100.0 * sum(s.n_correct for s in per_k) /
                    sum(s.n_test for s in per_k))
            std = 0.0
        rows.append(EvalRow(
            k=k, accuracy_mean=mean, accuracy_std=std,
            n_fallback=max(s.n_fallback for s in per_k),
            n_degenerate=sum(s.degenerate for s in per_k)))
    report = EvalReport(
        rows=rows, protocol=protocol.to_dict(),
        classifier={'C': C_clf, 'loss': 'squared_hinge', 'bias': True,
                    'eps': 0.1},
        selection=pipeline.to_dict(), paper_mode=paper_mode)
    best = report.best
    logger.info(f'best K={best.k}: {best.accuracy_mean:.2f}% '
                f'(+/- {best.accuracy_std:.2f})')
    return report


@attr.s(auto_attribs=True, frozen=True)
class GammaSweep:
    gammas: Tuple[float, ...] = attr.ib(converter=tuple)
    reports: Tuple[EvalReport, ...] = attr.ib(converter=tuple)

    def rows(self):
        """ Long-format rows (gamma, K, mean, std).
        """
        for gamma, report in zip(self.gammas, self.reports):
            for row in report.rows:
                yield gamma, row.k, row.accuracy_mean, row.accuracy_std

    def best(self) -> Tuple[float, EvalRow]:
        return max(((gamma, report.best) for gamma, report
                    in zip(self.gammas, self.reports)),
                   key=lambda item: (item[1].accuracy_mean, -item[1].k))


def sweep_gamma(dataset: SparseDataset, gamma_grid: Sequence[float],
                k_grid: Sequence[int],
                protocol: EvalProtocol = EvalProtocol(), *,
                pipeline: SelectionPipeline = SelectionPipeline(),
                paper_mode: bool = False,
                C_clf: float = 1.0, jobs: int = 1,
                progress: bool = False) -> GammaSweep:
    gamma_grid = [float(g) for g in gamma_grid]
    if not gamma_grid:
        raise DomainError('gamma grid is empty')
    if any(not g > 0 for g in gamma_grid):
        raise DomainError('gamma values must be positive')
    reports = []
    for gamma in (tqdm.tqdm(gamma_grid, desc='gamma') if progress
                  else gamma_grid):
        logger.info(f'gamma={gamma}')
        reports.append(evaluate(
            dataset, k_grid, protocol, pipeline=pipeline.with_gamma(gamma),
            paper_mode=paper_mode, C_clf=C_clf, jobs=jobs))
    return GammaSweep(gammas=gamma_grid, reports=reports)
