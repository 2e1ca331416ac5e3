""" Raw data in, ranking out: normalize, score relevance, solve, rank.
"""
from contextlib import contextmanager
import logging
import time
from typing import Dict, Optional

import attr
import numpy as np

from .common import CENTERED_UNIT_NORM, NORM_MODES
from .dataset import NormalizationReport, SparseDataset, normalize
from .errors import ConfigError, DomainError
from . import metrics
from .metrics import KernelSpec, RelevanceVector
from .selection import FeatureRanking, rank_features
from .solvers import (
    DCD, QP, DualSolution, SolverConfig, constrained_qp_solve, mmfs_dcd)


logger = logging.getLogger(__name__)

SOLVERS = (DCD, QP)


@contextmanager
def timed(timings: Dict[str, float], phase: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[phase] = time.perf_counter() - start


@attr.s(auto_attribs=True, frozen=True, eq=False)
class SelectionResult:
    ranking: FeatureRanking
    solution: DualSolution
    relevance: RelevanceVector
    report: NormalizationReport
    dataset: SparseDataset  # normalized
    timings: Dict[str, float]
    # Q of the qp path, over all features
    similarity: Optional[metrics.GramMatrix] = None


@attr.s(auto_attribs=True, frozen=True)
class SelectionPipeline:
    norm: str = CENTERED_UNIT_NORM
    relevance: str = metrics.CORRELATION
    solver: str = DCD
    kernel: KernelSpec = KernelSpec()
    config: SolverConfig = SolverConfig()
    mi_bins: int = 3
    mi_method: str = metrics.MEAN_STD
    qp_tol: float = 1e-10
    dense_limit: Optional[int] = None
    gram_limit: Optional[int] = None

    def __attrs_post_init__(self):
        if self.norm not in NORM_MODES:
            raise ConfigError(f'unknown norm {self.norm!r}, '
                              f'expected one of {NORM_MODES}')
        if self.relevance not in metrics.RELEVANCE_KINDS:
            raise ConfigError(f'unknown relevance {self.relevance!r}')
        if self.solver not in SOLVERS:
            raise ConfigError(f'unknown solver {self.solver!r}, '
                              f'expected one of {SOLVERS}')
        if self.solver == DCD and self.kernel.kind != metrics.LINEAR:
            raise ConfigError(
                f'the dcd solver works on the features themselves, so only '
                f'the linear kernel applies; use --solver qp for '
                f'{self.kernel.kind}')

    def to_dict(self) -> dict:
        return attr.asdict(self)

    def with_gamma(self, gamma: float) -> 'SelectionPipeline':
        return attr.evolve(self, config=attr.evolve(self.config, gamma=gamma))

    def select(self, dataset: SparseDataset, *,
               log_path=None) -> SelectionResult:
        timings: Dict[str, float] = {}
        similarity = None
        with timed(timings, 'normalize'):
            normalized, report = normalize(
                dataset, self.norm, dense_limit=self.dense_limit)
        with timed(timings, 'relevance'):
            if self.relevance == metrics.MI:
                relevance = metrics.mi_relevance(
                    normalized, self.mi_bins, method=self.mi_method,
                    dense_limit=self.dense_limit)
            else:
                relevance = metrics.correlation_relevance(normalized)
        with timed(timings, 'solve'):
            if self.solver == DCD:
                scaled = metrics.scale_relevance(relevance, self.config.theta)
                solution = mmfs_dcd(normalized, scaled, self.config,
                                    log_path=log_path)
            else:
                similarity = self._similarity(normalized)
                solution = self._solve_qp(similarity.values, relevance)
        with timed(timings, 'rank'):
            ranking = rank_features(solution, relevance)
        logger.info('selection timings: ' + ', '.join(
            f'{phase} {seconds:.3f}s' for phase, seconds in timings.items()))
        return SelectionResult(
            ranking=ranking, solution=solution, relevance=relevance,
            report=report, dataset=normalized, timings=timings,
            similarity=similarity)

    def _solve_qp(self, q, relevance: RelevanceVector) -> DualSolution:
        """ Constrained QP over the non-constant features; constant ones
        keep alpha = 0.
        """
        ids = np.flatnonzero(~relevance.excluded)
        if len(ids) == 0:
            raise DomainError('every feature is constant')
        reduced = constrained_qp_solve(
            q[np.ix_(ids, ids)], relevance.values[ids],
            theta=self.config.theta, C=self.config.C, tol=self.qp_tol)
        alpha = np.zeros(len(relevance))
        alpha[ids] = reduced.alpha
        return attr.evolve(reduced, alpha=alpha)

    def _similarity(self, normalized: SparseDataset) -> metrics.GramMatrix:
        if self.relevance == metrics.MI:
            return metrics.mi_matrix(
                normalized, self.mi_bins, method=self.mi_method,
                dense_limit=self.dense_limit, gram_limit=self.gram_limit)
        return metrics.gram_matrix(
            normalized, self.kernel, gram_limit=self.gram_limit,
            seed=self.config.seed)
