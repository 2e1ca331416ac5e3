""" Dual solvers for the max-margin feature selection problem.

The box dual (relevance folded into r~ = r * theta / (1 - theta))::

    min_a  1/2 ||X a||^2 + gamma / 2 (sum a)^2 - r~^T a,   0 <= a_j <= C

is solved by dual coordinate descent over feature columns, keeping
w = X a and s = sum a up to date so that each update costs O(nnz(f_j)).
The equality-constrained variant over an arbitrary similarity matrix::

    min_a  (1 - theta) / 2 a^T Q a - theta r^T a,  sum a = 1, 0 <= a_j <= C

is solved by accelerated projected gradient with an active-set polish.
"""
import logging
import math
from pathlib import Path
from typing import Callable, Optional, Tuple

import attr
import json_log_plots
import numba
import numpy as np

from .common import ALPHA_TOL, RAW
from .dataset import SparseDataset
from .errors import DomainError, InfeasibleError, ShapeError, StateError


logger = logging.getLogger(__name__)

CONVERGED = 'converged'
MAX_SWEEPS = 'max_sweeps'
DIVERGED = 'diverged'

DCD = 'dcd'
QP = 'qp'
BOX_QP = 'box_qp'

# full recomputation of w = X a and s = sum a, every that many sweeps
REFRESH_EVERY = 100
# largest objective increase tolerated by a single coordinate update
DESCENT_TOL = 1e-12


def _positive(instance, attribute, value):
    if not value > 0:
        raise DomainError(f'{attribute.name} must be positive, got {value}')


def _unit_interval(instance, attribute, value):
    if not 0 <= value <= 1:
        raise DomainError(f'{attribute.name} must lie in [0, 1], got {value}')


@attr.s(auto_attribs=True, frozen=True)
class SolverConfig:
    C: float = attr.ib(default=1.0, converter=float, validator=_positive)
    gamma: float = attr.ib(default=1.0, converter=float, validator=_positive)
    theta: float = attr.ib(
        default=0.5, converter=float, validator=_unit_interval)
    eps: float = attr.ib(default=1e-3, converter=float, validator=_positive)
    max_sweeps: int = attr.ib(default=1000, converter=int,
                              validator=_positive)
    shrinking: bool = True
    seed: int = 0
    check_descent: bool = False


@attr.s(auto_attribs=True, frozen=True, eq=False)
class DualSolution:
    alpha: np.ndarray
    # X alpha, only for the dcd path where X is known
    w: Optional[np.ndarray]
    b: float
    dual_objective: float
    primal_objective: Optional[float]
    sweeps: int
    max_pg_violation: float
    status: str
    sum_alpha: float
    config: SolverConfig
    method: str = DCD

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def support(self, tol: float = ALPHA_TOL) -> np.ndarray:
        return np.flatnonzero(self.alpha > tol)

    def to_dict(self, include_w: bool = False) -> dict:
        nonzero = self.support()
        result = {
            'method': self.method,
            'status': self.status,
            'sweeps': self.sweeps,
            'dual_objective': self.dual_objective,
            'primal_objective': self.primal_objective,
            'max_pg_violation': self.max_pg_violation,
            'b': self.b,
            'sum_alpha': self.sum_alpha,
            'n_support': int(len(nonzero)),
            'config': attr.asdict(self.config),
            'alpha': {str(j): float(self.alpha[j]) for j in nonzero},
        }
        if include_w and self.w is not None:
            result['w'] = self.w.tolist()
        return result


def _relevance_values(relevance) -> np.ndarray:
    values = getattr(relevance, 'values', relevance)
    return np.ascontiguousarray(values, dtype=np.float64)


def _check_dual_inputs(dataset: SparseDataset, r: np.ndarray):
    if dataset.norm_state == RAW:
        raise StateError('the dual solver needs normalized data')
    if r.shape != (dataset.n_features,):
        raise ShapeError(f'relevance has shape {r.shape}, '
                         f'expected ({dataset.n_features},)')
    if dataset.n_features == 0:
        raise ShapeError('dataset has no features')


@numba.njit(nogil=True, cache=True)
def _dcd_sweep(indptr, indices, data, r, qd, alpha, w, s, index, active_size,
               C, gamma, pg_max_old, pg_min_old):
    """ One pass over index[:active_size]. Coordinates at a bound whose
    gradient points outward beyond last sweep's window are swapped past
    the active end.
    """
    pg_max_new = -np.inf
    pg_min_new = np.inf
    max_increase = 0.0
    n_updates = 0
    k = 0
    while k < active_size:
        i = index[k]
        start = indptr[i]
        end = indptr[i + 1]
        g = 0.0
        for p in range(start, end):
            g += data[p] * w[indices[p]]
        g += gamma * s - r[i]
        if not math.isfinite(g):
            return (s, active_size, pg_max_new, pg_min_new, max_increase,
                    n_updates, True)
        a = alpha[i]
        pg = 0.0
        if a == 0.0:
            if g > pg_max_old:
                active_size -= 1
                index[k] = index[active_size]
                index[active_size] = i
                continue
            elif g < 0.0:
                pg = g
        elif a == C:
            if g < pg_min_old:
                active_size -= 1
                index[k] = index[active_size]
                index[active_size] = i
                continue
            elif g > 0.0:
                pg = g
        else:
            pg = g
        pg_max_new = max(pg_max_new, pg)
        pg_min_new = min(pg_min_new, pg)
        if abs(pg) > 1e-12:
            new = min(max(a - g / qd[i], 0.0), C)
            d = new - a
            if d != 0.0:
                max_increase = max(max_increase, d * g + 0.5 * qd[i] * d * d)
                alpha[i] = new
                for p in range(start, end):
                    w[indices[p]] += d * data[p]
                s += d
                n_updates += 1
        k += 1
    return (s, active_size, pg_max_new, pg_min_new, max_increase, n_updates,
            False)


def _projected_gradient(g: np.ndarray, alpha: np.ndarray, C: float
                        ) -> np.ndarray:
    pg = g.copy()
    at_lower = alpha <= 0
    at_upper = alpha >= C
    pg[at_lower] = np.minimum(g[at_lower], 0.0)
    pg[at_upper] = np.maximum(g[at_upper], 0.0)
    return pg


def _box_gradient(dataset: SparseDataset, r: np.ndarray, w: np.ndarray,
                  s: float, gamma: float) -> np.ndarray:
    return dataset.columns.T @ w + gamma * s - r


def _refresh(dataset: SparseDataset, alpha: np.ndarray
             ) -> Tuple[np.ndarray, float]:
    return dataset.columns @ alpha, float(alpha.sum())


def mmfs_dcd(dataset: SparseDataset, relevance,
             config: SolverConfig = SolverConfig(), *,
             log_path=None,
             callback: Optional[Callable] = None) -> DualSolution:
    """ Dual coordinate descent with shrinking over feature columns.

    Each coordinate update is an exact line minimization of the box dual,
    clipped to [0, C]. Stops when the projected gradient spread over the
    active set is within ``eps`` and a pass over all features confirms
    ``max |PG| <= eps``.

    ``callback(sweep, alpha, w, s)`` is called after every sweep;
    ``log_path`` is a run directory, created if missing, which receives
    per-sweep telemetry through json_log_plots.
    """
    r = _relevance_values(relevance)
    _check_dual_inputs(dataset, r)
    if log_path is not None:
        log_path = Path(log_path)
        log_path.mkdir(parents=True, exist_ok=True)
    x = dataset.columns
    n = dataset.n_features
    C, gamma = config.C, config.gamma
    qd = np.asarray(x.multiply(x).sum(axis=0)).ravel() + gamma
    alpha = np.zeros(n)
    w = np.zeros(dataset.n_instances)
    s = 0.0
    index = np.arange(n, dtype=np.int64)
    active_size = n
    rng = np.random.RandomState(config.seed)
    pg_max_old, pg_min_old = np.inf, -np.inf
    status = MAX_SWEEPS
    prev_objective = 0.0
    sweep = 0
    for sweep in range(1, config.max_sweeps + 1):
        rng.shuffle(index[:active_size])
        (s, active_size, pg_max, pg_min, max_increase, n_updates,
         diverged) = _dcd_sweep(
            x.indptr, x.indices, x.data, r, qd, alpha, w, s, index,
            active_size, C, gamma, pg_max_old, pg_min_old)
        if diverged:
            status = DIVERGED
            logger.error(f'non-finite gradient at sweep {sweep}')
            break
        if sweep % REFRESH_EVERY == 0:
            w, s = _refresh(dataset, alpha)
        if config.check_descent:
            prev_objective = _check_descent(
                dataset, r, alpha, gamma, sweep, max_increase, prev_objective)
        if callback is not None:
            callback(sweep, alpha, w, s)
        if log_path is not None:
            json_log_plots.write_event(
                log_path, step=sweep,
                pg_spread=float(max(pg_max - pg_min, 0.0)),
                active_size=active_size, n_updates=n_updates,
                sum_alpha=s)

        if pg_max - pg_min <= config.eps or active_size == 0:
            if active_size < n:
                active_size = n
                pg_max_old, pg_min_old = np.inf, -np.inf
                logger.debug(f'sweep {sweep}: unshrinking')
                continue
            w, s = _refresh(dataset, alpha)
            pg = _projected_gradient(
                _box_gradient(dataset, r, w, s, gamma), alpha, C)
            if np.abs(pg).max() <= config.eps:
                status = CONVERGED
                break
            pg_max_old, pg_min_old = np.inf, -np.inf
            continue
        if not config.shrinking:
            continue
        pg_max_old = pg_max if pg_max > 0 else np.inf
        pg_min_old = pg_min if pg_min < 0 else -np.inf

    w, s = _refresh(dataset, alpha)
    g = _box_gradient(dataset, r, w, s, gamma)
    max_pg = (float(np.abs(_projected_gradient(g, alpha, C)).max())
              if np.all(np.isfinite(g)) else math.inf)
    if status == MAX_SWEEPS:
        logger.warning(f'dcd stopped after {sweep} sweeps without reaching '
                       f'eps={config.eps} (max |PG| {max_pg:.3g})')
    b = gamma * s
    solution = DualSolution(
        alpha=alpha, w=w, b=b,
        dual_objective=_box_objective(w, s, r, alpha, gamma),
        primal_objective=primal_objective(w, b, dataset, r, config),
        sweeps=sweep, max_pg_violation=max_pg, status=status, sum_alpha=s,
        config=config, method=DCD)
    logger.info(
        f'dcd {status} after {sweep} sweeps: dual objective '
        f'{solution.dual_objective:.6g}, {len(solution.support())} support '
        f'features, max |PG| {max_pg:.2g}')
    return solution


def _check_descent(dataset, r, alpha, gamma, sweep, max_increase,
                   prev_objective) -> float:
    if max_increase > DESCENT_TOL:
        raise StateError(f'coordinate update increased the objective by '
                         f'{max_increase:.3g} at sweep {sweep}')
    objective = dual_objective(alpha, dataset, r, gamma)
    if objective > prev_objective + DESCENT_TOL * (1 + abs(prev_objective)):
        raise StateError(f'objective rose from {prev_objective!r} to '
                         f'{objective!r} at sweep {sweep}')
    return objective


def _box_objective(w, s, r, alpha, gamma) -> float:
    return float(0.5 * (w @ w) + 0.5 * gamma * s * s - r @ alpha)


def dual_objective(alpha, dataset: SparseDataset, relevance,
                   gamma: float) -> float:
    """ f(a) = 1/2 ||X a||^2 + gamma / 2 (sum a)^2 - r~^T a.
    """
    r = _relevance_values(relevance)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (dataset.n_features,) or r.shape != alpha.shape:
        raise ShapeError(f'alpha {alpha.shape} and relevance {r.shape} must '
                         f'have {dataset.n_features} entries')
    w, s = _refresh(dataset, alpha)
    return _box_objective(w, s, r, alpha, gamma)


def primal_objective(w, b: float, dataset: SparseDataset, relevance,
                     config: SolverConfig) -> float:
    """ 1/2 ||w||^2 + b^2 / (2 gamma)
    + C sum_j max(r~_j - f_j^T w - b, 0).
    """
    r = _relevance_values(relevance)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (dataset.n_instances,):
        raise ShapeError(f'w has shape {w.shape}, '
                         f'expected ({dataset.n_instances},)')
    margins = dataset.columns.T @ w + b
    hinge = np.maximum(r - margins, 0.0)
    return float(0.5 * (w @ w) + b * b / (2 * config.gamma) +
                 config.C * hinge.sum())


def project_box_simplex(v, C: float, *, tol: float = 1e-12) -> np.ndarray:
    """ Euclidean projection onto {a : sum a = 1, 0 <= a <= C}, i.e.
    clip(v - tau, 0, C) with tau found by bisection.
    """
    v = np.asarray(v, dtype=np.float64)
    n = len(v)
    if C * n < 1 - 1e-12:
        raise InfeasibleError(f'C={C} is below 1/N={1 / n:.6g}, '
                              f'no feasible point')
    if (np.all(v >= 0) and np.all(v <= C) and abs(v.sum() - 1) <= tol):
        return v.copy()
    lo, hi = v.min() - C, v.max()
    alpha = np.clip(v - hi, 0, C)
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        alpha = np.clip(v - tau, 0, C)
        total = alpha.sum()
        if abs(total - 1) <= tol:
            break
        if total > 1:
            lo = tau
        else:
            hi = tau
    # spread what bisection left over the free coordinates
    free = (alpha > 0) & (alpha < C)
    if free.any():
        alpha[free] = np.clip(alpha[free] + (1 - alpha.sum()) / free.sum(),
                              0, C)
    return alpha


def _power_iteration(a: np.ndarray, n_iter: int = 50, seed: int = 0
                     ) -> float:
    """ Largest eigenvalue of a symmetric PSD matrix.
    """
    v = np.random.RandomState(seed).standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    eigenvalue = 0.0
    for _ in range(n_iter):
        av = a @ v
        norm = np.linalg.norm(av)
        if norm == 0:
            return 0.0
        eigenvalue = float(v @ av)
        v = av / norm
    return max(eigenvalue, float(v @ (a @ v)))


def _accelerated_projected_gradient(
        hessian: np.ndarray, linear: np.ndarray, project: Callable,
        residual: Callable, polish: Callable, x0: np.ndarray,
        lipschitz: float, tol: float, max_iter: int,
        ) -> Tuple[np.ndarray, int, str]:
    """ FISTA with function-value restarts on
    1/2 x^T H x - c^T x over a convex set, polished every few iterations
    by an active-set solve that is kept only if it passes ``residual``.
    """
    def objective(z):
        return 0.5 * z @ (hessian @ z) - linear @ z

    step = 1.0 / (1.01 * lipschitz)
    x = x0
    y = x0.copy()
    t = 1.0
    f_x = objective(x)
    for it in range(1, max_iter + 1):
        candidate = project(y - step * (hessian @ y - linear))
        f_candidate = objective(candidate)
        if f_candidate > f_x + 1e-15 * (1 + abs(f_x)):
            if t > 1.0:
                # restart momentum from the last accepted point
                y = x.copy()
                t = 1.0
                continue
            step *= 0.5
            continue
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = candidate + ((t - 1) / t_next) * (candidate - x)
        moved = float(np.abs(candidate - x).max())
        x, f_x, t = candidate, f_candidate, t_next
        if it % 10 == 0 or moved <= tol:
            polished = polish(x)
            if polished is not None and residual(polished) <= tol:
                return polished, it, CONVERGED
        if moved <= tol and residual(x) <= tol:
            return x, it, CONVERGED
    return x, max_iter, MAX_SWEEPS


def _check_square(q: np.ndarray, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(getattr(r, 'values', r), dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ShapeError(f'Q must be square, got shape {q.shape}')
    if r.shape != (q.shape[0],):
        raise ShapeError(f'r has shape {r.shape}, expected ({q.shape[0]},)')
    if q.shape[0] == 0:
        raise ShapeError('empty problem')
    scale = 1 + np.abs(q).max()
    if np.abs(q - q.T).max() > 1e-10 * scale:
        raise ShapeError('Q must be symmetric')
    return 0.5 * (q + q.T), r


def _linear_over_simplex(c: np.ndarray, C: float) -> np.ndarray:
    """ Exact minimizer of -c^T a over {sum a = 1, 0 <= a <= C}: fill the
    largest c first, equal c values share what is left.
    """
    alpha = np.zeros(len(c))
    remaining = 1.0
    for level in np.unique(c)[::-1]:
        if remaining <= 0:
            break
        ids = np.flatnonzero(c == level)
        if len(ids) * C <= remaining:
            alpha[ids] = C
            remaining -= len(ids) * C
        else:
            alpha[ids] = remaining / len(ids)
            remaining = 0.0
    return alpha


def _simplex_multiplier(grad: np.ndarray, alpha: np.ndarray, C: float
                        ) -> float:
    free = (alpha > ALPHA_TOL) & (alpha < C - ALPHA_TOL)
    if free.any():
        return float(grad[free].mean())
    # no free coordinate: any mu between the bound gradients works
    lower = grad[alpha <= ALPHA_TOL]
    upper = grad[alpha >= C - ALPHA_TOL]
    lo = upper.max() if len(upper) else -np.inf
    hi = lower.min() if len(lower) else np.inf
    if np.isfinite(lo) and np.isfinite(hi):
        return float(0.5 * (lo + hi))
    return float(lo if np.isfinite(lo) else hi)


def constrained_qp_solve(q, relevance, theta: float = 0.5, C: float = 1.0, *,
                         tol: float = 1e-10, max_iter: int = 100000
                         ) -> DualSolution:
    """ Minimize (1 - theta) / 2 a^T Q a - theta r^T a subject to
    sum a = 1 and 0 <= a <= C, for any symmetric PSD similarity Q.

    With C = 1 this is quadratic programming feature selection; at
    theta = 1 it is a linear program, solved exactly.
    """
    if not 0 <= theta <= 1:
        raise DomainError(f'theta must lie in [0, 1], got {theta}')
    if not C > 0:
        raise DomainError(f'C must be positive, got {C}')
    q, r = _check_square(q, relevance)
    n = len(r)
    if C * n < 1 - 1e-12:
        raise InfeasibleError(f'C={C} is below 1/N={1 / n:.6g}, '
                              f'no feasible point')
    config = SolverConfig(C=C, theta=theta, eps=tol, max_sweeps=max_iter)
    hessian = (1 - theta) * q
    linear = theta * r
    lipschitz = (1 - theta) * _power_iteration(q)

    def project(v):
        return project_box_simplex(v, C)

    def residual(a):
        return float(np.abs(a - project(a - (hessian @ a - linear))).max())

    def polish(a):
        return _polish_simplex(hessian, linear, a, C, tol)

    if lipschitz <= 1e-14 * (1 + np.abs(linear).max()):
        if theta > 0:
            alpha = _linear_over_simplex(linear, C)
        else:
            alpha = np.full(n, 1.0 / n)
        iterations, status = 0, CONVERGED
    else:
        alpha, iterations, status = _accelerated_projected_gradient(
            hessian, linear, project, residual, polish,
            np.full(n, 1.0 / n), lipschitz, tol, max_iter)
    objective = float(0.5 * alpha @ (hessian @ alpha) - linear @ alpha)
    mu = _simplex_multiplier(hessian @ alpha - linear, alpha, C)
    max_pg = residual(alpha)
    if status != CONVERGED:
        logger.warning(f'constrained QP stopped after {iterations} '
                       f'iterations, residual {max_pg:.3g}')
    logger.info(f'constrained QP {status} after {iterations} iterations: '
                f'objective {objective:.6g}')
    return DualSolution(
        alpha=alpha, w=None, b=-mu, dual_objective=objective,
        primal_objective=None, sweeps=iterations, max_pg_violation=max_pg,
        status=status, sum_alpha=float(alpha.sum()), config=config,
        method=QP)


def _polish_simplex(hessian, linear, alpha, C, tol) -> Optional[np.ndarray]:
    """ Solve the KKT system with the current active bounds fixed.
    """
    at_upper = alpha >= C - 1e-9
    free = (alpha > 1e-9) & ~at_upper
    if not free.any():
        return None
    fixed = np.where(at_upper, C, 0.0)
    fixed[free] = 0.0
    n_free = int(free.sum())
    kkt = np.zeros((n_free + 1, n_free + 1))
    kkt[:n_free, :n_free] = hessian[np.ix_(free, free)]
    kkt[:n_free, n_free] = -1.0
    kkt[n_free, :n_free] = 1.0
    rhs = np.empty(n_free + 1)
    rhs[:n_free] = linear[free] - hessian[free] @ fixed
    rhs[n_free] = 1.0 - fixed.sum()
    solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    free_values = solution[:n_free]
    if free_values.min() < -tol or free_values.max() > C + tol:
        return None
    polished = fixed.copy()
    polished[free] = np.clip(free_values, 0, C)
    return polished


def box_qp_solve(q, relevance, gamma: float = 1.0, C: float = 1.0, *,
                 tol: float = 1e-10, max_iter: int = 100000
                 ) -> DualSolution:
    """ Dense reference solver for the box dual given the Gram matrix
    Q = X^T X: minimize 1/2 a^T (Q + gamma 11^T) a - r~^T a over [0, C]^N.
    """
    if not gamma > 0 or not C > 0:
        raise DomainError(f'gamma and C must be positive, '
                          f'got gamma={gamma}, C={C}')
    q, r = _check_square(q, relevance)
    n = len(r)
    config = SolverConfig(C=C, gamma=gamma, eps=tol, max_sweeps=max_iter)
    hessian = q + gamma

    def project(v):
        return np.clip(v, 0, C)

    def residual(a):
        return float(np.abs(a - project(a - (hessian @ a - r))).max())

    def polish(a):
        return _polish_box(hessian, r, a, C, tol)

    alpha, iterations, status = _accelerated_projected_gradient(
        hessian, r, project, residual, polish, np.zeros(n),
        max(_power_iteration(hessian), 1e-12), tol, max_iter)
    objective = float(0.5 * alpha @ (hessian @ alpha) - r @ alpha)
    max_pg = residual(alpha)
    logger.info(f'box QP {status} after {iterations} iterations: '
                f'objective {objective:.6g}')
    return DualSolution(
        alpha=alpha, w=None, b=gamma * float(alpha.sum()),
        dual_objective=objective, primal_objective=None, sweeps=iterations,
        max_pg_violation=max_pg, status=status,
        sum_alpha=float(alpha.sum()), config=config, method=BOX_QP)


def _polish_box(hessian, r, alpha, C, tol) -> Optional[np.ndarray]:
    at_upper = alpha >= C - 1e-9
    free = (alpha > 1e-9) & ~at_upper
    polished = np.where(at_upper, C, 0.0)
    if free.any():
        rhs = r[free] - hessian[free] @ polished
        values = np.linalg.lstsq(hessian[np.ix_(free, free)], rhs,
                                 rcond=None)[0]
        if values.min() < -tol or values.max() > C + tol:
            return None
        polished[free] = np.clip(values, 0, C)
    return polished
