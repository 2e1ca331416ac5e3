import numpy as np
import pytest

from mmfs.common import UNIT_NORM
from mmfs.dataset import duplicate_groups, normalize
from mmfs.errors import ConfigError
from mmfs.generate import GeneratorSpec, generate
from mmfs.metrics import KernelSpec, gram_matrix
from mmfs.pipeline import SelectionPipeline
from mmfs.selection import FALLBACK, deduplicate, top_k
from mmfs.solvers import QP, SolverConfig
from .utils import make_dataset, random_dataset, simplex_oracle


def test_defaults():
    pipeline = SelectionPipeline()
    assert pipeline.config.C == 1.0
    assert pipeline.config.theta == 0.5
    assert pipeline.solver == 'dcd'
    assert pipeline.norm == 'centered_unit_norm'


def test_config_errors():
    with pytest.raises(ConfigError):
        SelectionPipeline(kernel=KernelSpec('poly2'))
    with pytest.raises(ConfigError):
        SelectionPipeline(solver='smo')
    with pytest.raises(ConfigError):
        SelectionPipeline(norm='zscore')
    with pytest.raises(ConfigError):
        SelectionPipeline(relevance='chi2')


def test_perfect_feature_ranked_first():
    rng = np.random.RandomState(0)
    dense = rng.standard_normal((60, 8))
    labels = np.where(dense[:, 5] >= 0, 1.0, -1.0)
    result = SelectionPipeline().select(make_dataset(dense, labels))
    assert result.solution.converged
    assert top_k(result.ranking, 1) == [5]
    assert set(result.timings) == {'normalize', 'relevance', 'solve', 'rank'}
    assert result.dataset.norm_state == 'centered_unit_norm'


def test_with_gamma():
    pipeline = SelectionPipeline(config=SolverConfig(gamma=0.3, seed=4))
    changed = pipeline.with_gamma(3.0)
    assert changed.config.gamma == 3.0
    assert changed.config.seed == 4
    assert pipeline.config.gamma == 0.3


def test_qp_poly2_matches_constrained_oracle():
    dataset = random_dataset(n_instances=80, n_features=50, density=0.5,
                             seed=11)
    pipeline = SelectionPipeline(solver=QP, kernel=KernelSpec('poly2'))
    result = pipeline.select(dataset)
    assert result.solution.method == QP
    assert result.solution.converged
    assert result.solution.sum_alpha == pytest.approx(1, abs=1e-9)

    q = gram_matrix(result.dataset, KernelSpec('poly2')).values
    r = result.relevance.values
    oracle_alpha, oracle_value = simplex_oracle(q, r, 0.5, 1.0)
    alpha = result.solution.alpha
    value = 0.25 * alpha @ q @ alpha - 0.5 * r @ alpha
    assert value <= oracle_value + 1e-9
    np.testing.assert_allclose(alpha, oracle_alpha, atol=1e-4)
    strong = set(np.flatnonzero(oracle_alpha > 1e-3))
    assert strong <= set(result.solution.support())
    ranked_support = [e.feature_id for e in result.ranking.entries
                      if e.tier != FALLBACK]
    assert set(ranked_support) == set(result.solution.support())


def test_qp_mi_path():
    dataset = random_dataset(n_instances=60, n_features=10, density=0.7,
                             seed=2)
    result = SelectionPipeline(solver=QP, relevance='mi',
                               norm=UNIT_NORM).select(dataset)
    assert result.relevance.kind == 'mi'
    assert result.solution.sum_alpha == pytest.approx(1, abs=1e-9)
    assert len(result.ranking) == 10


def _redundancy_trial(seed):
    dataset, manifest = generate(GeneratorSpec(
        n_instances=500, n_informative=2, duplicates='0:3', n_noise=50,
        seed=seed))
    result = SelectionPipeline(config=SolverConfig(eps=1e-6, seed=seed)) \
        .select(dataset)
    group = set(manifest['duplicate_groups'][0])
    ranking = deduplicate(result.ranking, duplicate_groups(result.dataset))
    top = top_k(ranking, 2)
    return len(group & set(top)) == 1 and 1 in top


def test_redundant_copies_do_not_crowd_out_second_feature():
    hits = sum(_redundancy_trial(seed) for seed in range(20))
    assert hits >= 18


def test_duplicate_group_shares_single_feature_mass():
    dataset, manifest = generate(GeneratorSpec(
        n_instances=200, n_informative=2, duplicates='0:3', n_noise=10,
        seed=1))
    config = SolverConfig(eps=1e-8)
    duplicated = SelectionPipeline(config=config).select(dataset)
    reduced_ids = [0, 1] + list(range(5, 15))
    reduced = SelectionPipeline(config=config).select(
        make_dataset(dataset.columns.toarray()[:, reduced_ids],
                     dataset.labels))
    group = manifest['duplicate_groups'][0]
    assert duplicated.solution.alpha[group].sum() == pytest.approx(
        reduced.solution.alpha[0], abs=1e-5)
    assert duplicated.solution.dual_objective == pytest.approx(
        reduced.solution.dual_objective, abs=1e-8)


def test_normalized_dataset_not_modified():
    dataset = random_dataset(seed=3)
    before = dataset.columns.copy()
    SelectionPipeline().select(dataset)
    assert (dataset.columns != before).nnz == 0
    assert dataset.norm_state == 'raw'
    normalized, _ = normalize(dataset, UNIT_NORM)
    assert normalized is not dataset


@pytest.mark.parametrize('kernel', [KernelSpec(), KernelSpec('gaussian',
                                                             sigma=1.0)])
def test_qp_constant_features_take_no_mass(kernel):
    rng = np.random.RandomState(5)
    dense = rng.standard_normal((40, 4))
    labels = np.where(dense[:, 0] + 0.5 * rng.standard_normal(40) > 0,
                      1.0, -1.0)
    padded = np.hstack([dense, np.full((40, 1), 3.0), np.full((40, 1), -1.0)])
    pipeline = SelectionPipeline(solver=QP, kernel=kernel,
                                 config=SolverConfig(theta=0.2))
    plain = pipeline.select(make_dataset(dense, labels))
    result = pipeline.select(make_dataset(padded, labels))
    assert result.solution.alpha[4:].tolist() == [0.0, 0.0]
    np.testing.assert_allclose(result.solution.alpha[:4],
                               plain.solution.alpha, atol=1e-6)
    assert set(result.solution.support()) == set(plain.solution.support())
    assert result.similarity.values.shape == (6, 6)
