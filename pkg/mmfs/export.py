""" Result artifacts. Every file starts with the format version and the
run configuration, TSV/CSV as ``#`` comment lines, JSON as fields.
Files appear atomically: written to a temporary sibling, then renamed.
"""
from contextlib import contextmanager
import json
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .common import FORMAT_VERSION
from .errors import ParseError
from .selection import TIERS, FeatureRanking, RankEntry


TSV = 'tsv'
JSON = 'json'
FORMATS = (TSV, JSON)

RANKING_COLUMNS = ['rank', 'feature_id', 'alpha', 'relevance', 'tier']


@contextmanager
def atomic_output(path, mode: str = 'wt'):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f'.{path.name}.tmp')
    try:
        if 'b' in mode:
            f = tmp.open(mode)
        else:
            f = tmp.open(mode, encoding='utf8', newline='\n')
        with f:
            yield f
        tmp.replace(path)
    finally:
        if tmp.exists():
            tmp.unlink()


def header_lines(kind: str, config: dict) -> List[str]:
    return [f'# format: {FORMAT_VERSION} {kind}',
            f'# config: {json.dumps(config, sort_keys=True)}']


def _float(value: float) -> str:
    return repr(float(value))


def write_table(path, kind: str, config: dict, columns: Sequence[str],
                rows: Iterable[Sequence], *, sep: str = '\t',
                extra_header: Sequence[str] = ()):
    with atomic_output(path) as f:
        for line in header_lines(kind, config):
            f.write(line + '\n')
        for line in extra_header:
            f.write(f'# {line}\n')
        f.write(sep.join(columns) + '\n')
        for row in rows:
            f.write(sep.join(map(str, row)) + '\n')


def write_json(path, kind: str, config: dict, payload: dict):
    document = {'format': f'{FORMAT_VERSION} {kind}', 'config': config}
    document.update(payload)
    with atomic_output(path) as f:
        json.dump(document, f, indent=2, sort_keys=False)
        f.write('\n')


def write_ranking(ranking: FeatureRanking, path, *, fmt: str = TSV,
                  config: Optional[dict] = None, limit: Optional[int] = None):
    config = config or {}
    entries = ranking.entries[:limit] if limit else ranking.entries
    meta = {'C': ranking.C, 'alpha_tol': ranking.alpha_tol,
            'counts': ranking.counts()}
    if fmt == JSON:
        write_json(path, 'ranking', config, {
            'ranking': meta,
            'entries': [
                {'rank': rank, 'feature_id': e.feature_id, 'alpha': e.alpha,
                 'relevance': e.relevance, 'tier': e.tier}
                for rank, e in enumerate(entries, 1)]})
    else:
        write_table(
            path, 'ranking', config, RANKING_COLUMNS,
            ([rank, e.feature_id, _float(e.alpha), _float(e.relevance),
              e.tier] for rank, e in enumerate(entries, 1)),
            extra_header=[f'ranking: {json.dumps(meta, sort_keys=True)}'])


def read_ranking(path) -> FeatureRanking:
    """ Read a ranking written by ``write_ranking``, TSV or JSON.
    """
    text = Path(path).read_text(encoding='utf8')
    if text.lstrip().startswith('{'):
        try:
            document = json.loads(text)
            meta = document['ranking']
            entries = [RankEntry(int(e['feature_id']), float(e['alpha']),
                                 float(e['relevance']), e['tier'])
                       for e in document['entries']]
        except (ValueError, KeyError, TypeError) as e:
            raise ParseError(f'{path}: not a ranking document ({e})')
    else:
        meta = {}
        entries = []
        seen_columns = False
        for line_no, line in enumerate(text.splitlines(), 1):
            if line.startswith('# ranking:'):
                meta = json.loads(line[len('# ranking:'):])
                continue
            if not line.strip() or line.startswith('#'):
                continue
            fields = line.split('\t')
            if not seen_columns:
                if fields != RANKING_COLUMNS:
                    raise ParseError(f'{path}: unexpected columns {fields}',
                                     line_no)
                seen_columns = True
                continue
            try:
                _, feature_id, alpha, relevance, tier = fields
                entries.append(RankEntry(int(feature_id), float(alpha),
                                         float(relevance), tier))
            except ValueError:
                raise ParseError(f'{path}: malformed ranking row', line_no)
    for e in entries:
        if e.tier not in TIERS:
            raise ParseError(f'{path}: unknown tier {e.tier!r}')
    return FeatureRanking(entries, C=float(meta.get('C', 1.0)),
                          alpha_tol=float(meta.get('alpha_tol', 1e-12)))


def write_solution(solution, path, *, config: Optional[dict] = None,
                   include_w: bool = False):
    write_json(path, 'solution', config or {},
               {'solution': solution.to_dict(include_w=include_w)})


def write_relevance(relevance, path, *, config: Optional[dict] = None):
    write_table(
        path, 'relevance', config or {}, ['feature_id', 'relevance'],
        ([j, _float(v)] for j, v in enumerate(relevance.values)),
        extra_header=[f'kind: {relevance.kind}'])


def write_gram(gram, path, *, config: Optional[dict] = None):
    """ Whitespace separated dense matrix, one row per line, below the
    ``#`` header lines.
    """
    with atomic_output(path) as f:
        for line in header_lines('gram', config or {}):
            f.write(line + '\n')
        f.write(f'# kind: {gram.kind}\n')
        np.savetxt(f, gram.values, fmt='%.17g')


def write_report(report, path, *, fmt: str = TSV,
                 config: Optional[dict] = None):
    config = config or {}
    if fmt == JSON:
        write_json(path, 'eval', config, {
            'protocol': report.protocol,
            'classifier': report.classifier,
            'selection': report.selection,
            'paper_mode': report.paper_mode,
            'best': {'k': report.best.k,
                     'accuracy_mean': report.best.accuracy_mean,
                     'accuracy_std': report.best.accuracy_std},
            'rows': [{'k': r.k, 'accuracy_mean': r.accuracy_mean,
                      'accuracy_std': r.accuracy_std,
                      'n_fallback': r.n_fallback,
                      'n_degenerate': r.n_degenerate} for r in report.rows],
        })
    else:
        best = report.best
        write_table(
            path, 'eval', config,
            ['k', 'accuracy_mean', 'accuracy_std', 'n_fallback',
             'n_degenerate'],
            ([r.k, f'{r.accuracy_mean:.2f}', f'{r.accuracy_std:.2f}',
              r.n_fallback, r.n_degenerate] for r in report.rows),
            extra_header=[
                f'protocol: {json.dumps(report.protocol, sort_keys=True)}',
                f'classifier: {json.dumps(report.classifier, sort_keys=True)}',
                f'paper_mode: {str(report.paper_mode).lower()}',
                f'best: k={best.k} accuracy={best.accuracy_mean:.2f} '
                f'+/- {best.accuracy_std:.2f}'])


def write_gamma_sweep(sweep, path, *, config: Optional[dict] = None):
    write_table(
        path, 'sweep', config or {},
        ['gamma', 'k', 'accuracy_mean', 'accuracy_std'],
        ([_float(gamma), k, f'{mean:.2f}', f'{std:.2f}']
         for gamma, k, mean, std in sweep.rows()),
        sep=',')


def write_bench(rows, path, *, config: Optional[dict] = None):
    rows = list(rows)
    columns = list(rows[0].to_dict()) if rows else []
    write_table(path, 'bench', config or {}, columns,
                ([row.to_dict()[c] for c in columns] for row in rows),
                sep=',')
