""" Command line: ``mmfs select|eval|sweep|bench|gen --flag value ...``.
"""
import json
import logging
from pathlib import Path
import sys
from typing import Optional, Tuple

import attr
import fire

from . import export
from .bench import parse_sizes, run_benchmark
from .common import CENTERED_UNIT_NORM, FORMAT_VERSION
from .dataset import (
    SparseDataset, dump_svmlight, duplicate_groups, load_svmlight, save_cache)
from .errors import ConfigError, MMFSError, NotConvergedError
from .evaluation import (
    LOOCV, FIXED_SPLIT, EvalProtocol, evaluate, sweep_gamma)
from .fire_utils import exit_on_error, only_allow_config_args
from .generate import GeneratorSpec, generate, parse_duplicates
from .metrics import CORRELATION, LINEAR, MEAN_STD, KernelSpec, gram_matrix
from .pipeline import SelectionPipeline, SelectionResult
from .selection import deduplicate
from .solvers import DCD, SolverConfig


logger = logging.getLogger('mmfs')


def _grid(value, cast) -> tuple:
    """ ``5``, ``(5, 10)``, ``"5,10,20"`` or ``"2-100"`` (inclusive range,
    ``"2-100/2"`` with a step).
    """
    if isinstance(value, (int, float)):
        return (cast(value),)
    if isinstance(value, (tuple, list)):
        return tuple(cast(v) for v in value)
    items = []
    for token in str(value).split(','):
        token = token.strip()
        if not token:
            continue
        span, _, step = token.partition('/')
        first, dash, last = span.partition('-')
        if dash and first:
            items.extend(range(int(first), int(last) + 1, int(step or 1)))
        else:
            items.append(cast(token))
    return tuple(cast(v) for v in items)


def int_grid(value) -> Tuple[int, ...]:
    return _grid(value, int)


def float_grid(value) -> Tuple[float, ...]:
    return _grid(value, float)


def to_bool(value) -> bool:
    if isinstance(value, str):
        if value.lower() in {'true', 'yes', '1'}:
            return True
        if value.lower() in {'false', 'no', '0'}:
            return False
        raise ConfigError(f'expected a boolean, got {value!r}')
    return bool(value)


def _optional(converter):
    return attr.converters.optional(converter)


@attr.s(auto_attribs=True, frozen=True)
class RunConfig:
    subcommand: str = 'select'
    # inputs and outputs
    data: Optional[str] = None
    test_data: Optional[str] = None
    ranking: Optional[str] = None
    output: Optional[str] = None
    solution_output: Optional[str] = None
    relevance_output: Optional[str] = None
    gram_output: Optional[str] = None
    manifest: Optional[str] = None
    log_path: Optional[str] = None
    format: str = export.TSV
    one_based: bool = attr.ib(default=True, converter=to_bool)
    # selection
    norm: str = CENTERED_UNIT_NORM
    relevance: str = CORRELATION
    solver: str = DCD
    kernel: str = LINEAR
    sigma: Optional[float] = attr.ib(default=None,
                                     converter=_optional(float))
    mi_bins: int = attr.ib(default=3, converter=int)
    mi_method: str = MEAN_STD
    theta: float = attr.ib(default=0.5, converter=float)
    gamma: float = attr.ib(default=1.0, converter=float)
    C: float = attr.ib(default=1.0, converter=float)
    eps: float = attr.ib(default=1e-3, converter=float)
    max_sweeps: int = attr.ib(default=1000, converter=int)
    shrinking: bool = attr.ib(default=True, converter=to_bool)
    check_descent: bool = attr.ib(default=False, converter=to_bool)
    seed: int = attr.ib(default=0, converter=int)
    top_k: Optional[int] = attr.ib(default=None, converter=_optional(int))
    dedup: bool = attr.ib(default=False, converter=to_bool)
    # evaluation
    k_grid: Tuple[int, ...] = attr.ib(default=(1, 2, 5, 10, 20, 50),
                                      converter=int_grid)
    gamma_grid: Tuple[float, ...] = attr.ib(
        default=(0.01, 0.1, 1.0, 10.0, 100.0), converter=float_grid)
    protocol: str = LOOCV
    n_repeats: int = attr.ib(default=10, converter=int)
    test_fraction: float = attr.ib(default=0.3, converter=float)
    C_clf: float = attr.ib(default=1.0, converter=float)
    paper_mode: bool = attr.ib(default=False, converter=to_bool)
    jobs: int = attr.ib(default=1, converter=int)
    # benchmark
    sizes: str = '1000x5000x30,2000x5000x30'
    compare_qp: bool = attr.ib(default=False, converter=to_bool)
    # generator
    n_instances: int = attr.ib(default=500, converter=int)
    n_informative: int = attr.ib(default=2, converter=int)
    duplicates: Tuple[Tuple[int, int], ...] = attr.ib(
        default=(), converter=parse_duplicates)
    n_noise: int = attr.ib(default=50, converter=int)
    nnz_per_instance: Optional[float] = attr.ib(
        default=None, converter=_optional(float))
    label_noise: float = attr.ib(default=0.1, converter=float)
    # reporting
    progress: bool = attr.ib(default=False, converter=to_bool)
    verbose: bool = attr.ib(default=False, converter=to_bool)

    def __attrs_post_init__(self):
        if self.format not in export.FORMATS:
            raise ConfigError(f'unknown format {self.format!r}, '
                              f'expected one of {export.FORMATS}')
        if self.jobs < 1:
            raise ConfigError('jobs must be positive')

    def to_dict(self) -> dict:
        return attr.asdict(self)

    def pipeline(self) -> SelectionPipeline:
        return SelectionPipeline(
            norm=self.norm, relevance=self.relevance, solver=self.solver,
            kernel=KernelSpec(self.kernel, sigma=self.sigma),
            config=SolverConfig(
                C=self.C, gamma=self.gamma, theta=self.theta, eps=self.eps,
                max_sweeps=self.max_sweeps, shrinking=self.shrinking,
                seed=self.seed, check_descent=self.check_descent),
            mi_bins=self.mi_bins, mi_method=self.mi_method)

    def eval_protocol(self, dataset: SparseDataset) -> EvalProtocol:
        test_dataset = None
        if self.protocol == FIXED_SPLIT:
            if self.test_data is None:
                raise ConfigError('--protocol fixed_split needs --test-data')
            test_dataset = load_svmlight(
                self.test_data, one_based=self.one_based,
                n_features=dataset.n_features)
        return EvalProtocol(
            kind=self.protocol, test_dataset=test_dataset,
            n_repeats=self.n_repeats, test_fraction=self.test_fraction,
            seed=self.seed)


def _require(config: RunConfig, *names: str):
    missing = [name for name in names if getattr(config, name) is None]
    if missing:
        raise ConfigError(
            f'{config.subcommand} needs ' +
            ', '.join(f"--{name.replace('_', '-')}" for name in missing))


def _setup(config: RunConfig):
    logging.basicConfig(
        level=logging.DEBUG if config.verbose else logging.INFO,
        format='%(asctime)s %(name)s %(levelname)s %(message)s',
        stream=sys.stderr)
    params = dict(config.to_dict(), argv=' '.join(sys.argv),
                  format_version=FORMAT_VERSION)
    print(json.dumps(params, indent=4, sort_keys=True, ensure_ascii=False))


def _load(config: RunConfig) -> SparseDataset:
    _require(config, 'data')
    return load_svmlight(config.data, one_based=config.one_based)


def run_select(config: RunConfig) -> SelectionResult:
    """ Rank features of one dataset and write the ranking and solver
    telemetry.
    """
    _setup(config)
    _require(config, 'data', 'output')
    dataset = _load(config)
    pipeline = config.pipeline()
    result = pipeline.select(dataset, log_path=config.log_path)
    ranking = result.ranking
    if config.dedup:
        ranking = deduplicate(ranking, duplicate_groups(result.dataset))
    echo = config.to_dict()
    export.write_ranking(ranking, config.output, fmt=config.format,
                         config=echo, limit=config.top_k)
    export.write_solution(
        result.solution,
        config.solution_output or f'{config.output}.solution.json',
        config=echo)
    if config.relevance_output:
        export.write_relevance(result.relevance, config.relevance_output,
                               config=echo)
    if config.gram_output:
        similarity = result.similarity
        if similarity is None:
            similarity = gram_matrix(result.dataset, pipeline.kernel,
                                     seed=config.seed)
        export.write_gram(similarity, config.gram_output, config=echo)
    counts = ranking.counts()
    print(f'Ranked {len(ranking)} features: ' +
          ', '.join(f'{n} {tier}' for tier, n in counts.items()))
    solution = result.solution
    if not solution.converged:
        raise NotConvergedError(
            f'solver stopped with status {solution.status} after '
            f'{solution.sweeps} sweeps (max |PG| '
            f'{solution.max_pg_violation:.3g}), results were written')
    return result


def run_eval(config: RunConfig):
    """ Accuracy per K of a classifier on the top-K features.
    """
    _setup(config)
    _require(config, 'data', 'output')
    dataset = _load(config)
    ranking = export.read_ranking(config.ranking) if config.ranking else None
    report = evaluate(
        dataset, config.k_grid, config.eval_protocol(dataset),
        pipeline=config.pipeline(), ranking=ranking,
        paper_mode=config.paper_mode, C_clf=config.C_clf, jobs=config.jobs,
        progress=config.progress)
    export.write_report(report, config.output, fmt=config.format,
                        config=config.to_dict())
    best = report.best
    print(f'Best K={best.k}: {best.accuracy_mean:.2f}% '
          f'+/- {best.accuracy_std:.2f}')
    return report


def run_sweep(config: RunConfig):
    """ Accuracy over a gamma x K grid, written as long-format CSV.
    """
    _setup(config)
    _require(config, 'data', 'output')
    dataset = _load(config)
    sweep = sweep_gamma(
        dataset, config.gamma_grid, config.k_grid,
        config.eval_protocol(dataset), pipeline=config.pipeline(),
        paper_mode=config.paper_mode, C_clf=config.C_clf, jobs=config.jobs,
        progress=config.progress)
    export.write_gamma_sweep(sweep, config.output, config=config.to_dict())
    gamma, best = sweep.best()
    print(f'Best gamma={gamma} K={best.k}: {best.accuracy_mean:.2f}%')
    return sweep


def run_bench(config: RunConfig):
    _setup(config)
    _require(config, 'output')
    rows = run_benchmark(
        parse_sizes(config.sizes), config.pipeline(),
        compare_qp=config.compare_qp, seed=config.seed,
        progress=config.progress)
    export.write_bench(rows, config.output, config=config.to_dict())
    return rows


def run_gen(config: RunConfig):
    """ Write a synthetic dataset (SVMlight text, or a binary cache for a
    ``.npz`` output) and its manifest.
    """
    _setup(config)
    _require(config, 'output')
    spec = GeneratorSpec(
        n_instances=config.n_instances, n_informative=config.n_informative,
        duplicates=config.duplicates, n_noise=config.n_noise,
        nnz_per_instance=config.nnz_per_instance,
        label_noise=config.label_noise, seed=config.seed)
    dataset, manifest = generate(spec)
    echo = config.to_dict()
    if Path(config.output).suffix == '.npz':
        with export.atomic_output(config.output, 'wb') as f:
            save_cache(dataset, f)
    else:
        with export.atomic_output(config.output) as f:
            dump_svmlight(
                dataset, f, one_based=config.one_based,
                comments=[line[2:]
                          for line in export.header_lines('data', echo)])
    export.write_json(config.manifest or f'{config.output}.manifest.json',
                      'manifest', echo, {'manifest': manifest})
    print(f'Wrote {dataset.n_instances} instances, {dataset.n_features} '
          f'features to {config.output}')
    return dataset, manifest


def _command(run_fn, subcommand: str):
    @exit_on_error
    @only_allow_config_args(RunConfig)
    def command(**flags):
        try:
            config = RunConfig(subcommand=subcommand, **flags)
        except MMFSError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f'bad argument: {e}')
        run_fn(config)
    command.__name__ = subcommand
    command.__doc__ = run_fn.__doc__
    return command


COMMANDS = {
    'select': _command(run_select, 'select'),
    'eval': _command(run_eval, 'eval'),
    'sweep': _command(run_sweep, 'sweep'),
    'bench': _command(run_bench, 'bench'),
    'gen': _command(run_gen, 'gen'),
}


def fire_main(argv=None):
    fire.Fire(COMMANDS, command=argv, name='mmfs')
