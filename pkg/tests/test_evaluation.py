import math

import numpy as np
import pytest
import scipy.optimize

from mmfs.common import CENTERED_UNIT_NORM
from mmfs.dataset import apply_normalization, normalize
from mmfs.errors import CapacityError, DomainError, FeatureIndexError
from mmfs.evaluation import (
    FIXED_SPLIT, LOOCV, RANDOM_SPLITS, AccuracyMeter, EvalProtocol,
    accuracy, check_grid, evaluate, make_folds, predict, sweep_gamma,
    train_linear_svm)
from mmfs.generate import GeneratorSpec, generate
from mmfs.pipeline import SelectionPipeline
from mmfs.selection import FeatureRanking, RankEntry, SUPPORT
from mmfs.solvers import SolverConfig
from .utils import make_dataset, random_dataset


def _blobs(n=20, seed=0):
    rng = np.random.RandomState(seed)
    positive = rng.normal(3, 0.3, size=(n, 2))
    negative = rng.normal(-3, 0.3, size=(n, 2))
    return make_dataset(np.vstack([positive, negative]),
                        [1.0] * n + [-1.0] * n)


def _planted(m=30, n=6, planted=4, seed=0):
    """ Feature ``planted`` equals the label times a value in [1, 2].
    """
    rng = np.random.RandomState(seed)
    labels = np.where(rng.rand(m) > 0.5, 1.0, -1.0)
    labels[:2] = [1.0, -1.0]
    dense = rng.standard_normal((m, n))
    dense[:, planted] = labels * (1 + rng.rand(m))
    return make_dataset(dense, labels)


def test_separable_blobs():
    dataset = _blobs()
    model = train_linear_svm(dataset)
    assert accuracy(model, dataset) == 100.0
    assert not model.degenerate
    assert len(model.weights) == 3
    assert model.coef[0] > 0 and model.coef[1] > 0


def test_dual_objective_matches_oracle():
    x = np.array([[1.0, 2.0], [2.0, 0.5], [0.0, 1.0],
                  [-1.0, -1.5], [-2.0, 0.0], [0.5, -2.0]])
    y = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
    C = 1.0
    model = train_linear_svm(make_dataset(x, y), C, eps=1e-10,
                             max_iter=100000)
    augmented = np.hstack([x, np.ones((6, 1))]) * y[:, None]
    hessian = augmented @ augmented.T + np.eye(6) / (2 * C)

    def fun(a):
        return 0.5 * a @ hessian @ a - a.sum(), hessian @ a - 1

    oracle = scipy.optimize.minimize(
        fun, np.zeros(6), jac=True, method='L-BFGS-B',
        bounds=[(0, None)] * 6,
        options={'ftol': 1e-15, 'gtol': 1e-12, 'maxiter': 10000})
    assert abs(model.dual_objective - oracle.fun) <= 1e-6


def test_label_flip_negates_weights():
    dataset = random_dataset(n_instances=40, n_features=6, seed=1)
    flipped = make_dataset(dataset.columns.toarray(), -dataset.labels)
    model = train_linear_svm(dataset, seed=3)
    model_flipped = train_linear_svm(flipped, seed=3)
    np.testing.assert_allclose(model_flipped.weights, -model.weights,
                               atol=1e-6)


def test_single_class_is_degenerate():
    dataset = make_dataset([[1.0, 0.0], [2.0, 1.0], [0.0, 3.0]],
                           [-1.0, -1.0, -1.0])
    model = train_linear_svm(dataset)
    assert model.degenerate
    assert predict(model, dataset).tolist() == [-1.0] * 3
    assert accuracy(model, dataset) == 100.0
    with pytest.raises(DomainError):
        train_linear_svm(_blobs(), 0.0)


def test_classifier_deterministic():
    dataset = random_dataset(n_instances=50, n_features=8, seed=2)
    a = train_linear_svm(dataset, seed=5)
    b = train_linear_svm(dataset, seed=5)
    assert np.array_equal(a.weights, b.weights)
    assert a.iterations == b.iterations


def test_accuracy_meter():
    meter = AccuracyMeter()
    for value in [80.0, 90.0, 100.0]:
        meter.update(value)
    assert meter.mean() == 90.0
    assert meter.std() == pytest.approx(math.sqrt(200 / 3))


def test_protocol_validation():
    with pytest.raises(DomainError):
        EvalProtocol('kfold')
    with pytest.raises(DomainError):
        EvalProtocol(FIXED_SPLIT)
    with pytest.raises(DomainError):
        EvalProtocol(RANDOM_SPLITS, n_repeats=0)
    for fraction in [0, 1, 1.5]:
        with pytest.raises(DomainError):
            EvalProtocol(RANDOM_SPLITS, test_fraction=fraction)


def test_check_grid():
    assert check_grid([2, 3, 4]) == [2, 3, 4]
    assert check_grid(range(2, 101)) == list(range(2, 101))
    for grid in [[], [3, 2], [2, 2], [0, 1]]:
        with pytest.raises(DomainError):
            check_grid(grid)


def test_make_folds():
    dataset = random_dataset(n_instances=10)
    folds = make_folds(dataset, EvalProtocol(LOOCV))
    assert len(folds) == 10
    for i, (train, test) in enumerate(folds):
        assert (train.n_instances, test.n_instances) == (9, 1)
        assert test.labels[0] == dataset.labels[i]
    folds = make_folds(dataset, EvalProtocol(
        RANDOM_SPLITS, n_repeats=4, test_fraction=0.3, seed=1))
    assert len(folds) == 4
    assert all((tr.n_instances, te.n_instances) == (7, 3) for tr, te in folds)
    again = make_folds(dataset, EvalProtocol(
        RANDOM_SPLITS, n_repeats=4, test_fraction=0.3, seed=1))
    for (a, _), (b, _) in zip(folds, again):
        assert (a.columns != b.columns).nnz == 0
    with pytest.raises(CapacityError):
        make_folds(dataset, EvalProtocol(LOOCV), dense_limit=10)


def test_perfect_feature_gives_full_accuracy():
    dataset = _planted()
    test = _planted(seed=1)
    for protocol in [EvalProtocol(LOOCV), EvalProtocol(FIXED_SPLIT, test),
                     EvalProtocol(RANDOM_SPLITS, n_repeats=3)]:
        report = evaluate(dataset, [1], protocol)
        assert report.row(1).accuracy_mean == 100.0
        assert report.row(1).accuracy_std == 0.0


def test_loocv_hand_built():
    clusters = make_dataset([[3.0, 1.0], [2.5, 1.2], [-3.0, -1.0],
                             [-2.5, -0.8]], [1, 1, -1, -1])
    report = evaluate(clusters, [2], EvalProtocol(LOOCV))
    assert report.row(2).accuracy_mean == 100.0

    # each held-out xor point lies opposite to the lone training point of
    # its class
    xor = make_dataset([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]],
                       [1, 1, -1, -1])
    report = evaluate(xor, [2], EvalProtocol(LOOCV))
    assert report.row(2).accuracy_mean == 0.0
    assert report.row(2).accuracy_std == 0.0

    # holding out -3 or -2 leaves two points, mirrored by centering, so the
    # threshold is their midpoint and the held-out point is classified
    # correctly; holding out the lone positive leaves one class, which
    # predicts -1
    lone = make_dataset([[-3.0], [-2.0], [3.0]], [-1, -1, 1])
    ranking = FeatureRanking([RankEntry(0, 0.5, 0.5, SUPPORT)])
    report = evaluate(lone, [1], EvalProtocol(LOOCV), ranking=ranking)
    assert report.row(1).accuracy_mean == pytest.approx(200 / 3)
    assert report.row(1).accuracy_std == 0.0
    assert report.row(1).n_degenerate == 1


def test_loocv_accuracy_granularity():
    dataset = random_dataset(n_instances=12, n_features=6, density=0.6,
                             seed=4)
    report = evaluate(dataset, [1, 2, 3, 6], EvalProtocol(LOOCV))
    for row in report.rows:
        assert 0 <= row.accuracy_mean <= 100
        correct = row.accuracy_mean * 12 / 100
        assert abs(correct - round(correct)) <= 1e-9


def test_all_features_equals_unrestricted_classifier():
    train = random_dataset(n_instances=40, n_features=8, density=0.7,
                           seed=5)
    test = random_dataset(n_instances=20, n_features=8, density=0.7, seed=6)
    report = evaluate(train, [8], EvalProtocol(FIXED_SPLIT, test))

    train_norm, norm_report = normalize(train, CENTERED_UNIT_NORM)
    test_norm = apply_normalization(test, norm_report)
    scale = math.sqrt(40)
    model = train_linear_svm(make_dataset(
        train_norm.columns.toarray() * scale, train.labels))
    expected = accuracy(model, make_dataset(
        test_norm.columns.toarray() * scale, test.labels))
    assert report.row(8).accuracy_mean == expected


def test_fixed_split_test_order_irrelevant():
    train = random_dataset(n_instances=40, n_features=10, seed=7)
    test = random_dataset(n_instances=20, n_features=10, seed=8)
    order = np.random.RandomState(0).permutation(20)
    permuted = make_dataset(test.columns.toarray()[order], test.labels[order])
    a = evaluate(train, [1, 3, 5], EvalProtocol(FIXED_SPLIT, test))
    b = evaluate(train, [1, 3, 5], EvalProtocol(FIXED_SPLIT, permuted))
    assert a.rows == b.rows


def test_random_splits_deterministic_and_parallel():
    dataset = random_dataset(n_instances=40, n_features=10, seed=9)
    protocol = EvalProtocol(RANDOM_SPLITS, n_repeats=5, seed=2)
    a = evaluate(dataset, [2, 4], protocol)
    b = evaluate(dataset, [2, 4], protocol, jobs=2)
    assert a.rows == b.rows
    assert a.protocol == {'kind': RANDOM_SPLITS, 'seed': 2, 'n_repeats': 5,
                          'test_fraction': 0.3}


def test_best_row():
    dataset = random_dataset(n_instances=30, n_features=10, seed=10)
    report = evaluate(dataset, [1, 2, 4, 8], EvalProtocol(
        RANDOM_SPLITS, n_repeats=3))
    best = report.best
    assert best.accuracy_mean == max(r.accuracy_mean for r in report.rows)
    assert best in report.rows


def test_fallback_counted():
    dataset = _planted(n=10)
    report = evaluate(dataset, [1, 10], EvalProtocol(
        RANDOM_SPLITS, n_repeats=2))
    assert report.row(1).n_fallback == 0
    assert report.row(10).n_fallback > 0


def test_paper_mode_equals_ranking_path():
    dataset = random_dataset(n_instances=25, n_features=10, seed=11)
    pipeline = SelectionPipeline()
    ranking = pipeline.select(dataset).ranking
    protocol = EvalProtocol(LOOCV)
    a = evaluate(dataset, [2, 5], protocol, paper_mode=True)
    b = evaluate(dataset, [2, 5], protocol, ranking=ranking)
    assert a.rows == b.rows
    assert a.paper_mode


def test_ranking_out_of_range():
    ranking = FeatureRanking([RankEntry(20, 0.5, 0.5, SUPPORT)])
    with pytest.raises(FeatureIndexError):
        evaluate(random_dataset(), [1], ranking=ranking)


def test_sweep_shape():
    dataset = random_dataset(n_instances=30, n_features=12, seed=12)
    gammas = [0.1, 0.3, 1.0, 3.0, 10.0]
    ks = [1, 2, 3, 4, 5]
    protocol = EvalProtocol(RANDOM_SPLITS, n_repeats=2)
    sweep = sweep_gamma(dataset, gammas, ks, protocol)
    rows = list(sweep.rows())
    assert len(rows) == 25
    assert [r[0] for r in rows] == sorted(r[0] for r in rows)
    assert [r[1] for r in rows] == ks * 5
    gamma, best = sweep.best()
    assert gamma in gammas
    assert best.accuracy_mean == max(r[2] for r in rows)
    with pytest.raises(DomainError):
        sweep_gamma(dataset, [], ks, protocol)


def test_single_gamma_sweep_is_evaluate():
    dataset = random_dataset(n_instances=30, n_features=12, seed=13)
    protocol = EvalProtocol(RANDOM_SPLITS, n_repeats=2)
    pipeline = SelectionPipeline(config=SolverConfig(gamma=2.0))
    sweep = sweep_gamma(dataset, [2.0], [3], protocol, pipeline=pipeline)
    report = evaluate(dataset, [3], protocol, pipeline=pipeline)
    assert sweep.reports[0].rows == report.rows


@pytest.mark.slow
def test_gamma_flatness():
    dataset, _ = generate(GeneratorSpec(
        n_instances=500, n_informative=2, duplicates='0:3', n_noise=50,
        seed=0))
    sweep = sweep_gamma(
        dataset, [0.1, 0.3, 1.0, 3.0, 10.0], [1, 2, 3, 5, 10, 20],
        EvalProtocol(RANDOM_SPLITS, n_repeats=5), jobs=2)
    best = [report.best.accuracy_mean for report in sweep.reports]
    assert max(best) - min(best) <= 3.0
