import itertools

import numpy as np
import pytest
import scipy.optimize
import scipy.sparse as sp

from mmfs.common import NORM_MODES
from mmfs.dataset import SparseDataset, normalize


def make_dataset(dense, labels) -> SparseDataset:
    return SparseDataset(sp.csc_matrix(np.asarray(dense, dtype=float)),
                         np.asarray(labels, dtype=float))


def random_dataset(n_instances=30, n_features=12, density=0.4, seed=0,
                   ) -> SparseDataset:
    rng = np.random.RandomState(seed)
    x = sp.random(n_instances, n_features, density=density, format='csc',
                  random_state=rng, data_rvs=rng.standard_normal)
    labels = np.where(rng.rand(n_instances) > 0.5, 1.0, -1.0)
    labels[:2] = [1.0, -1.0]
    return SparseDataset(x, labels)


def random_normalized(mode='centered_unit_norm', **kwargs) -> SparseDataset:
    return normalize(random_dataset(**kwargs), mode)[0]


def random_psd(n, seed=0, ridge=0.1) -> np.ndarray:
    a = np.random.RandomState(seed).standard_normal((n + 3, n))
    return a.T @ a / n + ridge * np.eye(n)


def parametrize_norm(name='mode'):
    def deco(fn):
        return pytest.mark.parametrize(name, NORM_MODES)(fn)
    return deco


def enumerate_qp(hessian, linear, C, simplex):
    """ Exact minimizer of 1/2 a^T H a - c^T a over the box [0, C]^N (and
    sum a = 1 if ``simplex``), by trying every assignment of coordinates
    to lower bound, upper bound or free. Small N only.
    """
    n = len(linear)
    best, best_value = None, np.inf
    for states in itertools.product((0, 1, 2), repeat=n):
        states = np.array(states)
        free = states == 2
        alpha = np.where(states == 1, C, 0.0)
        n_free = int(free.sum())
        if n_free:
            if simplex:
                kkt = np.zeros((n_free + 1, n_free + 1))
                kkt[:n_free, :n_free] = hessian[np.ix_(free, free)]
                kkt[:n_free, n_free] = -1.0
                kkt[n_free, :n_free] = 1.0
                rhs = np.append(linear[free] - hessian[free] @ alpha,
                                1.0 - alpha.sum())
                values = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:n_free]
            else:
                values = np.linalg.lstsq(
                    hessian[np.ix_(free, free)],
                    linear[free] - hessian[free] @ alpha, rcond=None)[0]
            alpha[free] = values
        if alpha.min() < -1e-12 or alpha.max() > C + 1e-12:
            continue
        if simplex and abs(alpha.sum() - 1) > 1e-9:
            continue
        value = 0.5 * alpha @ hessian @ alpha - linear @ alpha
        if value < best_value - 1e-15:
            best, best_value = alpha, value
    return best, best_value


def box_dual_oracle(dataset, r, gamma, C):
    """ L-BFGS-B on the box dual, from the dense Gram matrix.
    """
    x = dataset.columns.toarray()
    hessian = x.T @ x + gamma

    def fun(a):
        return 0.5 * a @ hessian @ a - r @ a, hessian @ a - r

    result = scipy.optimize.minimize(
        fun, np.zeros(len(r)), jac=True, method='L-BFGS-B',
        bounds=[(0, C)] * len(r),
        options={'ftol': 1e-15, 'gtol': 1e-12, 'maxiter': 20000})
    return result.x, result.fun


def simplex_oracle(q, r, theta, C):
    """ SLSQP on the equality-constrained problem.
    """
    hessian = (1 - theta) * q
    linear = theta * r
    n = len(r)
    result = scipy.optimize.minimize(
        lambda a: 0.5 * a @ hessian @ a - linear @ a,
        np.full(n, 1.0 / n),
        jac=lambda a: hessian @ a - linear,
        method='SLSQP', bounds=[(0, C)] * n,
        constraints=[{'type': 'eq', 'fun': lambda a: a.sum() - 1,
                      'jac': lambda a: np.ones_like(a)}],
        options={'ftol': 1e-14, 'maxiter': 1000})
    return result.x, result.fun
