import time

import numpy as np
import pytest

from mmfs.bench import bench_one, parse_sizes, run_benchmark
from mmfs.common import UNIT_NORM
from mmfs.dataset import normalize
from mmfs.errors import ConfigError
from mmfs.generate import GeneratorSpec, generate
from mmfs.metrics import correlation_relevance
from mmfs.pipeline import SelectionPipeline
from mmfs.solvers import SolverConfig, mmfs_dcd


def _pipeline(**kwargs):
    return SelectionPipeline(norm=UNIT_NORM, config=SolverConfig(**kwargs))


def _sweep_seconds(n_instances, n_features, nnz_per_instance, seed=0):
    """ Stored values and wall times between consecutive full sweeps.
    """
    dataset, _ = generate(GeneratorSpec(
        n_instances=n_instances, n_informative=10,
        n_noise=n_features - 10, nnz_per_instance=nnz_per_instance,
        seed=seed))
    normalized, _ = normalize(dataset, UNIT_NORM)
    stamps = []
    mmfs_dcd(normalized, correlation_relevance(normalized),
             SolverConfig(shrinking=False, eps=1e-12, max_sweeps=200),
             callback=lambda sweep, alpha, w, s: stamps.append(
                 time.perf_counter()))
    return normalized.nnz, np.diff(stamps)


def test_parse_sizes():
    assert parse_sizes('1000x5000x30,2000x5000x30') == (
        (1000, 5000, 30.0), (2000, 5000, 30.0))
    for bad in ['', '1000x5000', 'axbxc']:
        with pytest.raises(ConfigError):
            parse_sizes(bad)


def test_bench_row():
    row = bench_one(300, 2000, 20, _pipeline(), compare_qp=True)
    assert (row.n_instances, row.n_features) == (300, 2000)
    assert row.status == 'converged'
    assert row.memory_bytes > row.nnz * 12
    assert row.seconds_per_sweep > 0
    assert row.objective_gap <= 1e-4
    assert set(row.to_dict()) >= {'parse_seconds', 'solve_seconds',
                                  'qp_seconds', 'speedup'}


def test_fixed_seed_same_sweeps():
    sizes = parse_sizes('500x3000x15')
    a = run_benchmark(sizes, _pipeline(seed=2), seed=2)
    b = run_benchmark(sizes, _pipeline(seed=2), seed=2)
    assert a[0].sweeps == b[0].sweeps
    assert a[0].dual_objective == b[0].dual_objective
    assert a[0].nnz == b[0].nnz


@pytest.mark.slow
def test_per_sweep_time_linear_in_nnz():
    _sweep_seconds(100, 500, 20)
    ratios = []
    for seed in range(3):
        small_nnz, small = _sweep_seconds(10000, 5000, 30, seed)
        large_nnz, large = _sweep_seconds(20000, 5000, 30, seed)
        assert 1.8 <= large_nnz / small_nnz <= 2.2
        assert min(len(small), len(large)) >= 4
        ratios.append(np.median(large) / np.median(small))
    assert 1.5 <= np.median(ratios) <= 3.0


@pytest.mark.slow
def test_large_sparse_instance():
    pipeline = _pipeline(eps=1e-3)
    bench_one(100, 500, 10, pipeline)
    row = bench_one(10000, 100000, 30, pipeline)
    assert row.status == 'converged'
    assert row.normalize_seconds + row.relevance_seconds + \
        row.solve_seconds + row.rank_seconds < 60


@pytest.mark.slow
def test_faster_than_dense_qp():
    pipeline = _pipeline(eps=1e-6)
    bench_one(100, 500, 10, pipeline, compare_qp=True)
    row = bench_one(400, 2000, 2000, pipeline, compare_qp=True)
    assert row.objective_gap <= 1e-6
    assert row.speedup >= 10
