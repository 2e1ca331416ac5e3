""" Feature relevance (relation of a feature to the labels) and redundancy
(pairwise similarity between features).
"""
import logging
from typing import Optional

import attr
import numpy as np

from .common import DENSE_LIMIT, GRAM_LIMIT, RAW
from .dataset import SparseDataset
from .errors import CapacityError, DomainError, ShapeError, StateError


logger = logging.getLogger(__name__)

CORRELATION = 'correlation'
MI = 'mi'
RELEVANCE_KINDS = (CORRELATION, MI)

LINEAR = 'linear'
POLY2 = 'poly2'
GAUSSIAN = 'gaussian'
KERNELS = (LINEAR, POLY2, GAUSSIAN)

MEAN_STD = 'mean_std'
EQUAL_FREQ = 'equal_freq'
DISCRETIZATIONS = (MEAN_STD, EQUAL_FREQ)


@attr.s(auto_attribs=True, frozen=True, eq=False)
class RelevanceVector:
    values: np.ndarray
    kind: str = CORRELATION
    # set once scaled by theta / (1 - theta)
    theta: Optional[float] = None
    constant: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.values)

    @property
    def excluded(self) -> np.ndarray:
        if self.constant is None:
            return np.zeros(len(self.values), dtype=bool)
        return self.constant


def _check_sigma(instance, attribute, value):
    if value is not None and not value > 0:
        raise DomainError(f'sigma must be positive, got {value}')


@attr.s(auto_attribs=True, frozen=True)
class KernelSpec:
    kind: str = LINEAR
    # None for gaussian means "median heuristic"
    sigma: Optional[float] = attr.ib(default=None, validator=_check_sigma)

    def __attrs_post_init__(self):
        if self.kind not in KERNELS:
            raise DomainError(
                f'unknown kernel {self.kind!r}, expected one of {KERNELS}')


@attr.s(auto_attribs=True, frozen=True, eq=False)
class GramMatrix:
    values: np.ndarray
    kind: str
    sigma: Optional[float] = None

    @property
    def order(self) -> int:
        return self.values.shape[0]


def correlation_relevance(dataset: SparseDataset) -> RelevanceVector:
    """ r_j = |f_j^T y| on normalized data: absolute cosine similarity with
    the labels, Pearson correlation when centered.
    """
    if dataset.norm_state == RAW:
        raise StateError('correlation relevance needs normalized data')
    values = np.abs(dataset.columns.T @ dataset.labels)
    constant = dataset.constant_mask.copy()
    values[constant] = 0.0
    return RelevanceVector(values, kind=CORRELATION, constant=constant)


def scale_relevance(relevance: RelevanceVector, theta: float
                    ) -> RelevanceVector:
    """ Fold the relevance / redundancy trade-off into r, giving
    r * theta / (1 - theta).
    """
    if not 0 < theta < 1:
        raise DomainError(f'theta must lie in (0, 1), got {theta}')
    if relevance.theta is not None:
        raise StateError(
            f'relevance is already scaled (theta={relevance.theta})')
    return attr.evolve(relevance, values=relevance.values * (theta / (1 - theta)),
                       theta=theta)


def kernel_eval(spec: KernelSpec, f_i, f_j) -> float:
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    if f_i.shape != f_j.shape:
        raise ShapeError(f'feature vectors differ in shape: '
                         f'{f_i.shape} vs {f_j.shape}')
    dot = float(f_i @ f_j)
    if spec.kind == LINEAR:
        return dot
    if spec.kind == POLY2:
        return dot ** 2
    if spec.sigma is None:
        raise DomainError('gaussian kernel needs sigma')
    sq_dist = max(float(f_i @ f_i) + float(f_j @ f_j) - 2 * dot, 0.0)
    return float(np.exp(-sq_dist / (2 * spec.sigma ** 2)))


def gram_matrix(dataset: SparseDataset, spec: KernelSpec = KernelSpec(), *,
                gram_limit: Optional[int] = None, seed: int = 0
                ) -> GramMatrix:
    """ Dense N x N kernel matrix between features.
    """
    n = dataset.n_features
    limit = GRAM_LIMIT if gram_limit is None else gram_limit
    if n > limit:
        raise CapacityError(
            f'Gram matrix of order {n} exceeds the limit of {limit}, '
            f'use the dcd solver for large feature sets')
    x = dataset.columns
    linear = (x.T @ x).toarray()
    linear = 0.5 * (linear + linear.T)
    sigma = None
    if spec.kind == LINEAR:
        values = linear
    elif spec.kind == POLY2:
        values = linear ** 2
    else:
        sigma = spec.sigma
        if sigma is None:
            sigma = median_sigma(dataset, seed=seed)
            logger.info(f'gaussian sigma by median heuristic: {sigma:.6g}')
        sq_norms = np.diag(linear).copy()
        sq_dist = sq_norms[:, None] + sq_norms[None, :] - 2 * linear
        np.maximum(sq_dist, 0.0, out=sq_dist)
        values = np.exp(-sq_dist / (2 * sigma ** 2))
        values = 0.5 * (values + values.T)
        np.fill_diagonal(values, 1.0)
    return GramMatrix(values, kind=spec.kind, sigma=sigma)


def median_sigma(dataset: SparseDataset, *, max_pairs: int = 500,
                 seed: int = 0) -> float:
    """ Median pairwise distance between non-constant features, over at
    most ``max_pairs`` sampled pairs.
    """
    ids = np.flatnonzero(~dataset.constant_mask)
    if len(ids) < 2:
        return 1.0
    n_pairs = len(ids) * (len(ids) - 1) // 2
    if n_pairs <= max_pairs:
        first, second = np.triu_indices(len(ids), k=1)
    else:
        rng = np.random.RandomState(seed)
        first = rng.randint(len(ids), size=max_pairs)
        second = (first + rng.randint(1, len(ids), size=max_pairs)) % len(ids)
    x = dataset.columns
    a, b = x[:, ids[first]], x[:, ids[second]]
    sq_dist = (np.asarray(a.multiply(a).sum(axis=0)).ravel() +
               np.asarray(b.multiply(b).sum(axis=0)).ravel() -
               2 * np.asarray(a.multiply(b).sum(axis=0)).ravel())
    dist = np.sqrt(np.maximum(sq_dist, 0.0))
    dist = dist[dist > 0]
    if len(dist) == 0:
        return 1.0
    return float(np.median(dist))


def discretize(values, method: str = MEAN_STD, bins: int = 3) -> np.ndarray:
    """ Integer codes for a real-valued feature. ``mean_std`` gives three
    levels split at mean - std and mean + std (boundaries inclusive on the
    outer levels); ``equal_freq`` gives ``bins`` quantile levels.
    """
    values = np.asarray(values, dtype=np.float64)
    if method not in DISCRETIZATIONS:
        raise DomainError(f'unknown discretization {method!r}')
    if bins < 2:
        raise DomainError(f'bins must be at least 2, got {bins}')
    codes = np.zeros(len(values), dtype=np.int64)
    std = values.std()
    if std == 0:
        return codes
    if method == MEAN_STD:
        mean = values.mean()
        tol = 1e-9 * std
        codes[:] = 1
        codes[values <= mean - std + tol] = 0
        codes[values >= mean + std - tol] = 2
        return codes
    edges = np.quantile(values, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(np.unique(edges), values, side='right')


def _plogp(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    positive = p > 0
    out[positive] = p[positive] * np.log(p[positive])
    return out


def entropy(codes: np.ndarray) -> float:
    """ Plug-in entropy in nats.
    """
    p = np.bincount(codes) / len(codes)
    return float(-_plogp(p).sum())


def mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    """ Plug-in mutual information between two code vectors, in nats.
    """
    joint = a * (b.max() + 1) + b
    mi = entropy(a) + entropy(b) - entropy(joint)
    return max(mi, 0.0)


def _label_codes(labels: np.ndarray) -> np.ndarray:
    return np.unique(labels, return_inverse=True)[1]


def _feature_codes(dataset: SparseDataset, method: str, bins: int,
                   dense_limit: Optional[int]) -> np.ndarray:
    limit = DENSE_LIMIT if dense_limit is None else dense_limit
    n_values = dataset.n_instances * dataset.n_features
    if n_values > limit:
        raise CapacityError(
            f'mutual information needs {n_values:,} dense values, over the '
            f'limit of {limit:,}')
    dense = dataset.columns.toarray()
    codes = np.empty(dense.shape, dtype=np.int64)
    for j in range(dense.shape[1]):
        codes[:, j] = discretize(dense[:, j], method=method, bins=bins)
    return codes


def mi_relevance(dataset: SparseDataset, bins: int = 3, *,
                 method: str = MEAN_STD,
                 dense_limit: Optional[int] = None) -> RelevanceVector:
    codes = _feature_codes(dataset, method, bins, dense_limit)
    y = _label_codes(dataset.labels)
    values = np.array([mutual_information(codes[:, j], y)
                       for j in range(dataset.n_features)])
    constant = dataset.constant_mask | (codes.max(axis=0) == 0)
    values[constant] = 0.0
    return RelevanceVector(values, kind=MI, constant=constant)


def mi_matrix(dataset: SparseDataset, bins: int = 3, *,
              method: str = MEAN_STD,
              dense_limit: Optional[int] = None,
              gram_limit: Optional[int] = None) -> GramMatrix:
    """ Pairwise mutual information between discretized features. Joint
    counts for every level pair come from one product of indicator
    matrices.
    """
    n = dataset.n_features
    limit = GRAM_LIMIT if gram_limit is None else gram_limit
    if n > limit:
        raise CapacityError(
            f'MI matrix of order {n} exceeds the limit of {limit}')
    codes = _feature_codes(dataset, method, bins, dense_limit)
    m = dataset.n_instances
    n_levels = int(codes.max()) + 1
    indicators = [(codes == level).astype(np.float64)
                  for level in range(n_levels)]
    marginal = np.zeros(n)
    joint = np.zeros((n, n))
    for a in range(n_levels):
        marginal -= _plogp(indicators[a].sum(axis=0) / m)
        for b in range(n_levels):
            joint -= _plogp(indicators[a].T @ indicators[b] / m)
    values = marginal[:, None] + marginal[None, :] - joint
    values = 0.5 * (values + values.T)
    np.maximum(values, 0.0, out=values)
    np.fill_diagonal(values, marginal)
    return GramMatrix(values, kind=MI)
