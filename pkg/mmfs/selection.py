""" Turning a dual solution into a feature ranking.

Support features (0 < alpha < C) come first, by decreasing alpha;
margin violators (alpha = C) sort with them on alpha. Features with
alpha = 0 carry no margin information, they follow as a fallback tier
ordered by relevance.
"""
from typing import Dict, Iterable, List, Tuple

import attr
import numpy as np

from .common import ALPHA_TOL
from .errors import DomainError, ShapeError


SUPPORT = 'support'
MARGIN_VIOLATOR = 'margin_violator'
FALLBACK = 'fallback'
TIERS = (SUPPORT, MARGIN_VIOLATOR, FALLBACK)


@attr.s(auto_attribs=True, frozen=True)
class RankEntry:
    feature_id: int
    alpha: float
    relevance: float
    tier: str


@attr.s(auto_attribs=True, frozen=True)
class FeatureRanking:
    entries: Tuple[RankEntry, ...] = attr.ib(converter=tuple)
    C: float = 1.0
    alpha_tol: float = ALPHA_TOL

    def __len__(self):
        return len(self.entries)

    @property
    def feature_ids(self) -> List[int]:
        return [e.feature_id for e in self.entries]

    def counts(self) -> Dict[str, int]:
        counts = dict.fromkeys(TIERS, 0)
        for e in self.entries:
            counts[e.tier] += 1
        return counts

    def n_fallback_in(self, k: int) -> int:
        """ How many of the first ``k`` features come from the fallback tier.
        """
        return sum(e.tier == FALLBACK for e in self.entries[:k])


def _tier(alpha: float, C: float, tol: float) -> str:
    if alpha <= tol:
        return FALLBACK
    if alpha >= C - tol:
        return MARGIN_VIOLATOR
    return SUPPORT


def rank_features(solution, relevance, *,
                  alpha_tol: float = ALPHA_TOL) -> FeatureRanking:
    """ Order all non-constant features by (alpha desc, relevance desc,
    id asc); fallback features enter the key with alpha = 0.
    """
    alpha = np.asarray(solution.alpha, dtype=np.float64)
    values = np.asarray(getattr(relevance, 'values', relevance),
                        dtype=np.float64)
    if alpha.shape != values.shape:
        raise ShapeError(f'alpha has {len(alpha)} entries, '
                         f'relevance has {len(values)}')
    C = solution.config.C
    excluded = getattr(relevance, 'excluded', None)
    if excluded is None:
        excluded = np.zeros(len(values), dtype=bool)
    ids = np.flatnonzero(~excluded)
    tiers = [_tier(alpha[j], C, alpha_tol) for j in ids]
    key_alpha = np.array([0.0 if t == FALLBACK else alpha[j]
                          for j, t in zip(ids, tiers)])
    order = np.lexsort((ids, -values[ids], -key_alpha))
    return FeatureRanking(
        [RankEntry(int(ids[o]), float(alpha[ids[o]]), float(values[ids[o]]),
                   tiers[o]) for o in order],
        C=C, alpha_tol=alpha_tol)


def top_k(ranking: FeatureRanking, k: int) -> List[int]:
    """ Ids of the first ``k`` ranked features; fewer if the ranking is
    shorter.
    """
    if int(k) != k or k < 1:
        raise DomainError(f'K must be a positive integer, got {k}')
    return ranking.feature_ids[:int(k)]


def deduplicate(ranking: FeatureRanking, groups: Iterable[Iterable[int]]
                ) -> FeatureRanking:
    """ Keep only the best ranked member of each group of identical
    features.
    """
    group_of = {}
    for group_id, group in enumerate(groups):
        for feature_id in group:
            group_of[feature_id] = group_id
    seen = set()
    entries = []
    for e in ranking.entries:
        group_id = group_of.get(e.feature_id)
        if group_id is not None:
            if group_id in seen:
                continue
            seen.add(group_id)
        entries.append(e)
    return attr.evolve(ranking, entries=entries)
