""" Synthetic binary problems with known informative, duplicated and noise
features, for checking what a ranking recovers.

Column layout: informative features first, then duplicate copies, then
noise.
"""
import logging
from typing import Optional, Tuple

import attr
import numpy as np
import scipy.sparse as sp

from .common import FORMAT_VERSION
from .dataset import SparseDataset
from .errors import ConfigError


logger = logging.getLogger(__name__)


def parse_duplicates(value) -> Tuple[Tuple[int, int], ...]:
    """ ``"0:3,1:2"`` -> ((0, 3), (1, 2)): (informative id, copies).
    """
    if value is None or value == '' or value == ():
        return ()
    if isinstance(value, str):
        items = [item.split(':') for item in value.split(',') if item.strip()]
    else:
        items = value
    try:
        return tuple((int(source), int(copies)) for source, copies in items)
    except (TypeError, ValueError):
        raise ConfigError(f'cannot parse duplicates {value!r}, '
                          f'expected "source:copies,..."')


@attr.s(auto_attribs=True, frozen=True)
class GeneratorSpec:
    n_instances: int = 500
    n_informative: int = 2
    duplicates: Tuple[Tuple[int, int], ...] = attr.ib(
        default=(), converter=parse_duplicates)
    n_noise: int = 50
    # None gives dense noise columns
    nnz_per_instance: Optional[float] = None
    label_noise: float = 0.1
    seed: int = 0

    def __attrs_post_init__(self):
        if self.n_instances < 1:
            raise ConfigError('n_instances must be positive')
        if self.n_informative < 1:
            raise ConfigError('at least one informative feature is needed')
        if self.n_noise < 0 or self.label_noise < 0:
            raise ConfigError('n_noise and label_noise must be non-negative')
        for source, copies in self.duplicates:
            if not 0 <= source < self.n_informative:
                raise ConfigError(
                    f'duplicate source {source} is not an informative '
                    f'feature (0..{self.n_informative - 1})')
            if copies < 1:
                raise ConfigError('duplicate copies must be positive')
        if self.nnz_per_instance is not None:
            if self.n_noise == 0:
                raise ConfigError('nnz_per_instance needs noise features')
            if self.nnz_per_instance < self.n_dense:
                raise ConfigError(
                    f'nnz_per_instance={self.nnz_per_instance} is below the '
                    f'{self.n_dense} dense informative and duplicate columns')

    @property
    def n_duplicates(self) -> int:
        return sum(copies for _, copies in self.duplicates)

    @property
    def n_dense(self) -> int:
        return self.n_informative + self.n_duplicates

    @property
    def n_features(self) -> int:
        return self.n_dense + self.n_noise


def generate(spec: GeneratorSpec) -> Tuple[SparseDataset, dict]:
    """ Labels are sign(sum_j c_j x_j + noise) over the informative
    columns, c_j = +-1. Returns the dataset and a manifest naming every
    column's role by 0-based id.
    """
    rng = np.random.default_rng(spec.seed)
    m = spec.n_instances
    informative = rng.standard_normal((m, spec.n_informative))
    coefficients = rng.choice([-1.0, 1.0], size=spec.n_informative)
    score = (informative @ coefficients +
             spec.label_noise * rng.standard_normal(m))
    labels = np.where(score >= 0, 1.0, -1.0)

    blocks = [sp.csc_matrix(informative)]
    groups = []
    next_id = spec.n_informative
    for source, copies in spec.duplicates:
        blocks.append(sp.csc_matrix(
            np.repeat(informative[:, [source]], copies, axis=1)))
        groups.append([source] + list(range(next_id, next_id + copies)))
        next_id += copies
    if spec.n_noise:
        if spec.nnz_per_instance is None:
            noise = sp.csc_matrix(rng.standard_normal((m, spec.n_noise)))
        else:
            density = min(
                (spec.nnz_per_instance - spec.n_dense) / spec.n_noise, 1.0)
            noise = sp.random(m, spec.n_noise, density=density, format='csc',
                              random_state=rng,
                              data_rvs=rng.standard_normal)
        blocks.append(noise)
    dataset = SparseDataset(sp.hstack(blocks, format='csc'), labels)
    manifest = {
        'format': FORMAT_VERSION,
        'generator': attr.asdict(spec),
        'n_instances': m,
        'n_features': spec.n_features,
        'informative': list(range(spec.n_informative)),
        'coefficients': coefficients.tolist(),
        'duplicate_groups': groups,
        'noise': {'start': spec.n_dense, 'stop': spec.n_features},
        'n_positive': int((labels > 0).sum()),
    }
    logger.info(f'generated {m} instances with {spec.n_features} features, '
                f'{dataset.nnz} stored values')
    return dataset, manifest
