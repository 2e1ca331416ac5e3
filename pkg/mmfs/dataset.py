""" Sparse labeled data in feature-major (CSC) layout: parsing, serialization,
normalization and the column kernels the solvers are built on.
"""
import io
import logging
import math
from pathlib import Path
import re
from typing import Dict, Iterable, List, Optional, TextIO, Tuple, Union

import attr
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg

from .common import (
    RAW, UNIT_NORM, CENTERED_UNIT_NORM, NORM_MODES, DENSE_LIMIT)
from .errors import (
    CapacityError, DomainError, FeatureIndexError, ParseError, ShapeError,
    StateError)


logger = logging.getLogger(__name__)

_HEADER_RE = re.compile(r'^#\s*n_features\s*=\s*(\d+)\s*$')
_FLUSH_EVERY = 100000


def _to_csc(x) -> sp.csc_matrix:
    x = sp.csc_matrix(x, dtype=np.float64)
    x.sum_duplicates()
    x.eliminate_zeros()
    x.sort_indices()
    return x


def _to_labels(y) -> np.ndarray:
    return np.ascontiguousarray(y, dtype=np.float64).reshape(-1)


@attr.s(auto_attribs=True, frozen=True, eq=False)
class SparseDataset:
    """ Instances x features matrix kept column-compressed, so that each
    feature vector f_j is a contiguous slice. Treated as immutable.
    """
    columns: sp.csc_matrix = attr.ib(converter=_to_csc)
    labels: np.ndarray = attr.ib(converter=_to_labels)
    norm_state: str = RAW
    # zero-variance columns, known after normalization
    constant: Optional[np.ndarray] = None

    def __attrs_post_init__(self):
        if self.labels.shape[0] != self.columns.shape[0]:
            raise ShapeError(
                f'{self.labels.shape[0]} labels for '
                f'{self.columns.shape[0]} instances')
        if self.norm_state not in (RAW,) + NORM_MODES:
            raise DomainError(f'unknown norm_state {self.norm_state!r}')
        if (self.constant is not None and
                self.constant.shape != (self.columns.shape[1],)):
            raise ShapeError('constant flags do not match feature count')

    @property
    def n_instances(self) -> int:
        return self.columns.shape[0]

    @property
    def n_features(self) -> int:
        return self.columns.shape[1]

    @property
    def nnz(self) -> int:
        return int(self.columns.nnz)

    @property
    def constant_mask(self) -> np.ndarray:
        if self.constant is None:
            return np.zeros(self.n_features, dtype=bool)
        return self.constant

    def column(self, feature_id: int) -> Tuple[np.ndarray, np.ndarray]:
        """ Return (instance indices, values) of a feature column.
        """
        _check_feature_id(self, feature_id)
        start, end = self.columns.indptr[feature_id: feature_id + 2]
        return (self.columns.indices[start:end],
                self.columns.data[start:end])

    def nbytes(self) -> int:
        x = self.columns
        return (x.data.nbytes + x.indices.nbytes + x.indptr.nbytes +
                self.labels.nbytes)


@attr.s(auto_attribs=True, frozen=True, eq=False)
class NormalizationReport:
    mode: str
    mean: np.ndarray  # per feature, original units
    scale: np.ndarray  # per feature divisor, 1 for constant columns
    constant: np.ndarray
    label_mean: float
    label_scale: float

    @property
    def n_constant(self) -> int:
        return int(self.constant.sum())


def parse_svmlight(
        text_source: Union[str, Iterable[str]], *,
        one_based: bool = True,
        n_features: Optional[int] = None,
        ) -> SparseDataset:
    """ Parse SVMlight / libsvm text: one ``<label> <idx>:<val> ...`` line
    per instance, ``#`` starts a comment. A ``# n_features=N`` comment
    declares the feature count.
    """
    if isinstance(text_source, str):
        text_source = text_source.splitlines()
    offset = 1 if one_based else 0
    labels: List[float] = []
    indptr = [0]
    data_chunks: List[np.ndarray] = []
    index_chunks: List[np.ndarray] = []
    data: List[float] = []
    indices: List[int] = []
    declared = None
    max_index = -1
    n_stored = 0

    def append_and_clear():
        data_chunks.append(np.array(data, dtype=np.float64))
        index_chunks.append(np.array(indices, dtype=np.int64))
        data.clear()
        indices.clear()

    for line_no, line in enumerate(text_source, 1):
        content, _, comment = line.partition('#')
        content = content.strip()
        if not content:
            header = _HEADER_RE.match('#' + comment.strip())
            if header and not labels:
                declared = int(header.group(1))
            continue
        tokens = content.split()
        labels.append(_parse_float(tokens[0], line_no, 'label'))
        prev = -1
        for token in tokens[1:]:
            idx_s, sep, value_s = token.partition(':')
            if not sep:
                raise ParseError(f'malformed token {token!r}', line_no)
            try:
                idx = int(idx_s) - offset
            except ValueError:
                raise ParseError(f'malformed index in {token!r}', line_no)
            value = _parse_float(value_s, line_no, 'value')
            if idx < 0:
                raise ParseError(f'feature index out of range in {token!r}',
                                 line_no)
            if idx <= prev:
                raise ParseError(
                    'feature indices must be strictly increasing', line_no)
            prev = idx
            if value != 0.0:
                indices.append(idx)
                data.append(value)
                n_stored += 1
        max_index = max(max_index, prev)
        indptr.append(n_stored)
        if len(indices) > _FLUSH_EVERY:
            # save memory by using a more compact representation
            append_and_clear()

    if not labels:
        raise ParseError('no instances')
    append_and_clear()

    n_seen = max_index + 1
    n = max(n_seen, declared or 0)
    if n_features is not None:
        if n_seen > n_features:
            raise ParseError(
                f'feature index {n_seen} exceeds n_features={n_features}')
        n = max(n, n_features)
    if declared is not None and n_seen > declared:
        raise ParseError(f'feature index {n_seen} exceeds declared '
                         f'n_features={declared}')

    values = np.concatenate(data_chunks)
    columns = sp.csr_matrix(
        (values, np.concatenate(index_chunks), np.array(indptr)),
        shape=(len(labels), n)).tocsc()
    dataset = SparseDataset(columns, _map_labels(np.array(labels)))
    logger.info('parsed %d instances, %d features, %d stored values',
                dataset.n_instances, dataset.n_features, dataset.nnz)
    return dataset


def _parse_float(token: str, line_no: int, what: str) -> float:
    try:
        value = float(token.replace('−', '-'))
    except ValueError:
        raise ParseError(f'malformed {what} {token!r}', line_no)
    if not math.isfinite(value):
        raise ParseError(f'non-finite {what} {token!r}', line_no)
    return value


def _map_labels(labels: np.ndarray) -> np.ndarray:
    distinct = np.unique(labels)
    if len(distinct) > 2:
        raise DomainError(
            f'multiclass labels are not supported, got {len(distinct)} '
            f'distinct values')
    if len(distinct) == 2:
        return np.where(labels == distinct[0], -1.0, 1.0)
    logger.warning('all instances have the same label %s', distinct[0])
    return labels.astype(np.float64)


def load_svmlight(path, *, one_based: bool = True,
                  n_features: Optional[int] = None) -> SparseDataset:
    path = Path(path)
    logger.info(f'Loading dataset from {path}')
    if path.suffix == '.npz':
        dataset = load_cache(path)
        if n_features is not None and dataset.n_features != n_features:
            raise ShapeError(f'{path} has {dataset.n_features} features, '
                             f'expected {n_features}')
        return dataset
    with path.open('rt', encoding='utf8') as f:
        return parse_svmlight(f, one_based=one_based, n_features=n_features)


def dump_svmlight(dataset: SparseDataset, f: TextIO, *,
                  one_based: bool = True, comments: Iterable[str] = ()):
    offset = 1 if one_based else 0
    for comment in comments:
        f.write(f'# {comment}\n')
    f.write(f'# n_features={dataset.n_features}\n')
    rows = dataset.columns.tocsr()
    rows.sort_indices()
    for i in range(dataset.n_instances):
        start, end = rows.indptr[i: i + 2]
        parts = [_format_label(dataset.labels[i])]
        parts.extend(f'{j + offset}:{_format_value(v)}'
                     for j, v in zip(rows.indices[start:end],
                                     rows.data[start:end]))
        f.write(' '.join(parts))
        f.write('\n')


def format_svmlight(dataset: SparseDataset, *, one_based: bool = True) -> str:
    buf = io.StringIO()
    dump_svmlight(dataset, buf, one_based=one_based)
    return buf.getvalue()


def _format_label(y: float) -> str:
    if y == 1.0:
        return '+1'
    if y == -1.0:
        return '-1'
    return _format_value(y)


def _format_value(v: float) -> str:
    return repr(float(v))


def save_cache(dataset: SparseDataset, f):
    """ Binary cache, bit-exact round trip. ``f`` is a path or binary file.
    """
    x = dataset.columns
    np.savez(
        f,
        data=x.data, indices=x.indices, indptr=x.indptr,
        shape=np.array(x.shape, dtype=np.int64),
        labels=dataset.labels,
        norm_state=np.array(dataset.norm_state),
        constant=(dataset.constant if dataset.constant is not None
                  else np.zeros(0, dtype=bool)),
        has_constant=np.array(dataset.constant is not None))


def load_cache(path) -> SparseDataset:
    with np.load(path, allow_pickle=False) as arrays:
        columns = sp.csc_matrix(
            (arrays['data'], arrays['indices'], arrays['indptr']),
            shape=tuple(arrays['shape']))
        constant = arrays['constant'] if arrays['has_constant'] else None
        return SparseDataset(
            columns, arrays['labels'],
            norm_state=str(arrays['norm_state']),
            constant=constant)


def _constant_columns(x: sp.csc_matrix) -> np.ndarray:
    col_max = x.max(axis=0).toarray().ravel()
    col_min = x.min(axis=0).toarray().ravel()
    return col_max == col_min


def normalize(dataset: SparseDataset, mode: str = CENTERED_UNIT_NORM, *,
              dense_limit: Optional[int] = None,
              ) -> Tuple[SparseDataset, NormalizationReport]:
    """ Scale every column (and the labels) to unit L2 norm, after
    centering for ``centered_unit_norm``. Dot products between normalized
    columns are then cosine similarities, or Pearson correlations
    when centered.
    """
    if dataset.norm_state != RAW:
        raise StateError(f'dataset is already normalized '
                         f'({dataset.norm_state})')
    if mode not in NORM_MODES:
        raise DomainError(f'unknown normalization mode {mode!r}, '
                          f'expected one of {NORM_MODES}')
    x = dataset.columns
    constant = _constant_columns(x)
    mean = np.asarray(x.mean(axis=0)).ravel()
    y = dataset.labels
    if mode == CENTERED_UNIT_NORM:
        dense = _densify(x, dense_limit)
        dense -= mean
        scale = np.linalg.norm(dense, axis=0)
        label_mean = float(y.mean())
    else:
        dense = None
        scale = scipy.sparse.linalg.norm(x, axis=0)
        label_mean = 0.0
    scale = np.where(constant | (scale == 0), 1.0, scale)
    label_scale = float(np.linalg.norm(y - label_mean))
    if label_scale == 0:
        logger.warning('labels are constant, normalized labels are all zero')
        label_scale = 1.0
    report = NormalizationReport(
        mode=mode, mean=mean, scale=scale, constant=constant,
        label_mean=label_mean, label_scale=label_scale)
    if dense is not None:
        columns = _scale_dense(dense, report)
    else:
        columns = _scale_sparse(x, report)
    if report.n_constant:
        logger.info('%d constant features excluded', report.n_constant)
    return _normalized(dataset, columns, report), report


def apply_normalization(dataset: SparseDataset, report: NormalizationReport,
                        *, dense_limit: Optional[int] = None
                        ) -> SparseDataset:
    """ Transform raw held-out data with statistics from a training fold.
    """
    if dataset.norm_state != RAW:
        raise StateError('apply_normalization expects raw data')
    if dataset.n_features != report.scale.shape[0]:
        raise ShapeError(f'dataset has {dataset.n_features} features, '
                         f'normalization has {report.scale.shape[0]}')
    if report.mode == CENTERED_UNIT_NORM:
        dense = _densify(dataset.columns, dense_limit)
        dense -= report.mean
        columns = _scale_dense(dense, report)
    else:
        columns = _scale_sparse(dataset.columns, report)
    return _normalized(dataset, columns, report)


def _normalized(dataset: SparseDataset, columns, report: NormalizationReport
                ) -> SparseDataset:
    labels = (dataset.labels - report.label_mean) / report.label_scale
    return SparseDataset(columns, labels, norm_state=report.mode,
                         constant=report.constant.copy())


def _densify(x: sp.csc_matrix, dense_limit: Optional[int]) -> np.ndarray:
    limit = DENSE_LIMIT if dense_limit is None else dense_limit
    n_values = x.shape[0] * x.shape[1]
    if n_values > limit:
        raise CapacityError(
            f'centering needs {n_values:,} dense values, over the limit of '
            f'{limit:,}; use {UNIT_NORM} normalization for large sparse data')
    return x.toarray()


def _scale_dense(dense: np.ndarray, report: NormalizationReport):
    dense /= report.scale
    dense[:, report.constant] = 0.0
    return sp.csc_matrix(dense)


def _scale_sparse(x: sp.csc_matrix, report: NormalizationReport):
    factors = np.where(report.constant, 0.0, 1.0 / report.scale)
    scaled = sp.csc_matrix(x @ sp.diags(factors))
    scaled.eliminate_zeros()
    return scaled


def _check_feature_id(dataset: SparseDataset, feature_id: int):
    if not 0 <= feature_id < dataset.n_features:
        raise FeatureIndexError(
            f'feature {feature_id} out of range [0, {dataset.n_features})')


def column_dot(dataset: SparseDataset, feature_id: int, vector) -> float:
    """ f_j^T v over the stored entries of column j only.
    """
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (dataset.n_instances,):
        raise ShapeError(f'vector has shape {vector.shape}, '
                         f'expected ({dataset.n_instances},)')
    indices, values = dataset.column(feature_id)
    return float(values @ vector[indices])


def subset_instances(dataset: SparseDataset, rows) -> SparseDataset:
    if dataset.norm_state != RAW:
        raise StateError('instance subsets are taken from raw data only')
    rows = np.asarray(rows, dtype=np.int64)
    return SparseDataset(dataset.columns[rows], dataset.labels[rows])


def restrict_features(dataset: SparseDataset, feature_ids) -> SparseDataset:
    """ Keep the given features, in ascending id order.
    """
    ids = np.unique(np.asarray(feature_ids, dtype=np.int64))
    if len(ids) and (ids[0] < 0 or ids[-1] >= dataset.n_features):
        raise FeatureIndexError(
            f'feature ids must lie in [0, {dataset.n_features})')
    constant = (dataset.constant[ids] if dataset.constant is not None
                else None)
    return SparseDataset(dataset.columns[:, ids], dataset.labels,
                         norm_state=dataset.norm_state, constant=constant)


def duplicate_groups(dataset: SparseDataset) -> List[List[int]]:
    """ Groups (size > 1) of non-empty, bitwise identical columns.
    """
    x = dataset.columns
    groups: Dict[Tuple[bytes, bytes], List[int]] = {}
    for j in range(dataset.n_features):
        start, end = x.indptr[j: j + 2]
        if start == end:
            continue
        key = (x.indices[start:end].tobytes(), x.data[start:end].tobytes())
        groups.setdefault(key, []).append(j)
    return [g for g in groups.values() if len(g) > 1]
