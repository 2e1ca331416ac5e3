""" Timing of the selection phases on synthetic data of growing size.
"""
import io
import logging
import time
from typing import List, Optional, Sequence, Tuple

import attr
import tqdm

from .dataset import dump_svmlight, parse_svmlight
from .errors import ConfigError
from .generate import GeneratorSpec, generate
from .metrics import gram_matrix, scale_relevance
from .pipeline import SelectionPipeline
from .solvers import box_qp_solve


logger = logging.getLogger(__name__)


def parse_sizes(value) -> Tuple[Tuple[int, int, float], ...]:
    """ ``"1000x5000x30,2000x5000x30"``: instances x features x nonzeros per
    instance.
    """
    if isinstance(value, str):
        value = value.split(',')
    items = [item.split('x') if isinstance(item, str) else item
             for item in value if not isinstance(item, str) or item.strip()]
    try:
        sizes = tuple((int(m), int(n), float(nnz)) for m, n, nnz in items)
    except (TypeError, ValueError):
        raise ConfigError(f'cannot parse sizes {value!r}, expected '
                          f'"MxNxNNZ,..."')
    if not sizes:
        raise ConfigError('no benchmark sizes given')
    return sizes


@attr.s(auto_attribs=True, frozen=True)
class BenchRow:
    n_instances: int
    n_features: int
    nnz: int
    parse_seconds: float
    normalize_seconds: float
    relevance_seconds: float
    solve_seconds: float
    rank_seconds: float
    sweeps: int
    seconds_per_sweep: float
    status: str
    dual_objective: float
    # bytes held by the raw and normalized matrices plus solver vectors
    memory_bytes: int
    qp_seconds: Optional[float] = None
    qp_objective: Optional[float] = None
    objective_gap: Optional[float] = None
    speedup: Optional[float] = None

    def to_dict(self) -> dict:
        return attr.asdict(self)


def bench_one(n_instances: int, n_features: int, nnz_per_instance: float,
              pipeline: SelectionPipeline, *, compare_qp: bool = False,
              seed: int = 0) -> BenchRow:
    n_informative = min(10, n_features)
    dataset, _ = generate(GeneratorSpec(
        n_instances=n_instances, n_informative=n_informative,
        n_noise=n_features - n_informative,
        nnz_per_instance=max(nnz_per_instance, n_informative),
        seed=seed))
    buf = io.StringIO()
    dump_svmlight(dataset, buf)
    text = buf.getvalue()
    start = time.perf_counter()
    dataset = parse_svmlight(text)
    parse_seconds = time.perf_counter() - start

    result = pipeline.select(dataset)
    solution = result.solution
    timings = result.timings
    row = dict(
        n_instances=dataset.n_instances, n_features=dataset.n_features,
        nnz=dataset.nnz, parse_seconds=parse_seconds,
        normalize_seconds=timings['normalize'],
        relevance_seconds=timings['relevance'],
        solve_seconds=timings['solve'], rank_seconds=timings['rank'],
        sweeps=solution.sweeps,
        seconds_per_sweep=timings['solve'] / max(solution.sweeps, 1),
        status=solution.status, dual_objective=solution.dual_objective,
        memory_bytes=(dataset.nbytes() + result.dataset.nbytes() +
                      solution.alpha.nbytes +
                      (solution.w.nbytes if solution.w is not None else 0)))
    if compare_qp:
        config = pipeline.config
        start = time.perf_counter()
        gram = gram_matrix(result.dataset, gram_limit=pipeline.gram_limit)
        qp = box_qp_solve(
            gram.values, scale_relevance(result.relevance, config.theta),
            gamma=config.gamma, C=config.C)
        qp_seconds = time.perf_counter() - start
        row.update(
            qp_seconds=qp_seconds, qp_objective=qp.dual_objective,
            objective_gap=(abs(solution.dual_objective - qp.dual_objective) /
                           (1 + abs(qp.dual_objective))),
            speedup=qp_seconds / max(timings['solve'], 1e-12))
    return BenchRow(**row)


def run_benchmark(sizes: Sequence[Tuple[int, int, float]],
                  pipeline: SelectionPipeline = SelectionPipeline(), *,
                  compare_qp: bool = False, seed: int = 0,
                  progress: bool = False) -> List[BenchRow]:
    rows = []
    for m, n, nnz in (tqdm.tqdm(sizes, desc='bench') if progress else sizes):
        row = bench_one(m, n, nnz, pipeline, compare_qp=compare_qp, seed=seed)
        logger.info(
            f'{m}x{n} ({row.nnz} nnz): solve {row.solve_seconds:.3f}s '
            f'in {row.sweeps} sweeps'
            + (f', QP {row.qp_seconds:.3f}s, gap {row.objective_gap:.2g}'
               if compare_qp else ''))
        rows.append(row)
    return rows
