"""Epsilon-winner oracles.

A candidate ``c`` is an eps-winner of an election with ``n`` voters if adding
at most ``floor(eps * n)`` ballots can make ``c`` a co-winner.  Three tools:

* :func:`is_eps_winner_exact` enumerates every multiset of added ballots
  (tiny instances only);
* :func:`is_eps_winner_witness` builds a per-rule witness set and verifies it;
* :func:`eps_winner_verdict` adds sound refutations on top of the witness
  search, giving ``"yes"``, ``"no"`` or ``"unknown"`` at any size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .election import (
    APPROVAL, APPROVAL_RULE, BORDA, BUCKLIN, CONDORCET, COPELAND, CUP,
    PLURALITY, RUNOFF, TAPPROVAL, Election, ElectionError, Rule, Tally,
    ballot_space, copeland_scores, cup_possible_winners,
    winners_from_tally,
)

EXACT_MAX_M_ORDINAL = 4
EXACT_MAX_M_APPROVAL = 6
EXACT_MAX_Q = 4

YES, NO, UNKNOWN = "yes", "no", "unknown"


class InstanceTooLarge(ElectionError):
    """The exhaustive oracle was asked about an instance beyond its bounds."""


def budget(eps, n: int) -> int:
    """Number of ballots an eps-winner may add: ``floor(eps * n)``, computed exactly."""
    if isinstance(eps, float):
        eps = Fraction(str(eps))
    eps = Fraction(eps)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return math.floor(eps * n)


def exact_in_bounds(m: int, rule: Rule, q: int) -> bool:
    limit = EXACT_MAX_M_APPROVAL if rule.ballot_kind == APPROVAL else EXACT_MAX_M_ORDINAL
    return m <= limit and q <= EXACT_MAX_Q


def _wins(tally: Tally, c: int, rule: Rule) -> bool:
    return c in winners_from_tally(tally, rule)


def is_eps_winner_exact(election: Election, c: int, eps, rule: Rule,
                        strict: bool = False) -> bool:
    """Exhaustive check over multisets of at most ``floor(eps*n)`` added ballots.

    With ``strict`` the candidate must become the unique winner rather than
    a co-winner.
    """
    q = budget(eps, election.n)
    if not exact_in_bounds(election.m, rule, q):
        raise InstanceTooLarge(
            f"exhaustive oracle limited to m<={EXACT_MAX_M_ORDINAL} (ordinal) or "
            f"m<={EXACT_MAX_M_APPROVAL} (approval) and q<={EXACT_MAX_Q}; "
            f"got m={election.m}, q={q}")
    rule.check(election.m)
    base = election.tally()
    types = [Tally.from_ballots(election.m, election.kind, [b])
             for b in ballot_space(election.m, rule)]

    def hit(tally: Tally) -> bool:
        if strict:
            return winners_from_tally(tally, rule) == frozenset({c})
        return _wins(tally, c, rule)

    def search(tally: Tally, start: int, left: int) -> bool:
        if tally.n and hit(tally):
            return True
        if left == 0:
            return False
        return any(search(tally + types[i], i, left - 1) for i in range(start, len(types)))

    return search(base, 0, q)


@dataclass
class Witness:
    status: str
    ballots: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.status == YES


def is_eps_winner_witness(election: Election, c: int, eps, rule: Rule) -> Witness:
    """Per-rule witness construction; ``Witness.status`` is ``yes`` or ``unknown``."""
    q = budget(eps, election.n)
    status, ballots = _search(election.tally(), c, q, rule)
    if status != YES:
        return Witness(UNKNOWN)
    return Witness(YES, ballots)


def eps_winner_verdict(tally: Tally, c: int, q: int, rule: Rule) -> tuple[str, list]:
    """Three-valued verdict for ``c`` with an addition budget of ``q`` ballots.

    ``yes`` always comes with a verified witness; ``no`` only from a sound
    necessary condition; ``unknown`` otherwise.
    """
    return _search(tally, c, q, rule)


# -- per-rule constructions -------------------------------------------------

def _verified(tally: Tally, c: int, rule: Rule, ballots: list) -> bool:
    if not ballots:
        return tally.n > 0 and _wins(tally, c, rule)
    return _wins(tally + Tally.from_ballots(tally.m, tally.kind, ballots), c, rule)


def _search(tally: Tally, c: int, q: int, rule: Rule) -> tuple[str, list]:
    rule.check(tally.m)
    if not 0 <= c < tally.m:
        raise ElectionError(f"candidate {c} outside roster")
    if tally.n and _wins(tally, c, rule):
        return YES, []
    fn = _SEARCHERS[rule.name]
    return fn(tally, c, q, rule)


def _single_approvals(tally, c, q, rule):
    s = tally.scores
    deficit = int(s.max() - s[c])
    if tally.n == 0:
        deficit = 1
    if deficit <= q:
        return YES, [frozenset({c})] * deficit
    return NO, []


def _t_approval(tally, c, q, rule):
    t, m = rule.t, tally.m
    s = tally.scores.astype(np.int64)
    others = [x for x in range(m) if x != c]
    start = max(1, int(s.max() - s[c]))
    for b in range(start, q + 1):
        caps = s[c] + b - s[others]
        if caps.min() < 0:
            continue
        caps = np.minimum(caps, b)
        if caps.sum() < b * (t - 1):
            continue
        # wrap-around fill: a candidate never lands twice in one ballot
        seq = [x for x, k in zip(others, caps) for _ in range(int(k))][: b * (t - 1)]
        rows = [{c} for _ in range(b)]
        for i, x in enumerate(seq):
            rows[i % b].add(x)
        ballots = [frozenset(r) for r in rows]
        if _verified(tally, c, rule, ballots):
            return YES, ballots
    return NO, []


def _borda(tally, c, q, rule):
    m = tally.m
    if q == 0:
        return NO, []
    scores = tally.borda_scores.astype(np.int64)
    others = [x for x in range(m) if x != c]
    # greedy: weakest rivals take the high positions
    cur = scores.copy()
    greedy = []
    for _ in range(q):
        order = sorted(others, key=lambda x: (cur[x], x))
        ballot = (c, *order)
        greedy.append(ballot)
        for p, x in enumerate(ballot):
            cur[x] += m - 1 - p
    if _verified(tally, c, rule, greedy):
        return YES, greedy
    pi = sorted(others, key=lambda x: (-scores[x], x))
    paired = [(c, *pi) if i % 2 else (c, *reversed(pi)) for i in range(q)]
    if _verified(tally, c, rule, paired):
        return YES, paired
    slack = np.sort(scores[c] + q * (m - 1) - scores[others])
    need = q * np.cumsum(np.arange(m - 1))
    if np.any(np.cumsum(slack) < need):
        return NO, []
    return UNKNOWN, []


def _pairwise_ballots(c: int, pi: Sequence[int], b: int) -> list:
    return [(c, *pi) if i % 2 == 0 else (c, *reversed(pi)) for i in range(b)]


def _tournament(tally, c, q, rule):
    m = tally.m
    N = tally.pairwise
    others = [x for x in range(m) if x != c]
    cop = copeland_scores(N)
    pi = sorted(others, key=lambda x: (cop[x], x))
    beat_all = int(max(N[x, c] - N[c, x] for x in others)) + 1
    trials = sorted({b for b in (q, q - 1, beat_all, beat_all + 1, 1, 2) if 0 < b <= q})
    for b in trials:
        ballots = _pairwise_ballots(c, pi, b)
        if _verified(tally, c, rule, ballots):
            return YES, ballots
    margin = N - N.T
    if rule.name == COPELAND:
        best_c = int(sum(1 for x in others if margin[c, x] + q > 0))
        for d in others:
            surely = int(sum(1 for x in range(m) if x != d and margin[d, x] > q))
            if surely > best_c:
                return NO, []
        return UNKNOWN, []
    # condorcet: c loses unless it can be the Condorcet winner or none exists
    can_be_cw = all(margin[c, x] + q > 0 for x in others)
    if not can_be_cw:
        for d in others:
            if all(margin[d, x] > q for x in range(m) if x != d):
                return NO, []
    return UNKNOWN, []


def _topological(pairs: Sequence[tuple[int, int]], nodes: Sequence[int]) -> list[int]:
    from .trackers import topological_contest_order
    return topological_contest_order(pairs, nodes)


def _cup_force(N, tree, x, slack, pairs):
    """Append contests making ``x`` win ``tree`` under ``slack``; x must be possible."""
    if isinstance(tree, int):
        return
    left, right = tree
    own, other = (left, right) if x in _leaves(left) else (right, left)
    _cup_force(N, own, x, slack, pairs)
    rivals = cup_possible_winners(N, other, slack)
    y = min((y for y in rivals if N[x, y] + slack >= N[y, x]),
            key=lambda y: (N[y, x] - N[x, y], y))
    pairs.append((x, y))
    _cup_force(N, other, y, slack, pairs)


def _leaves(tree) -> set[int]:
    if isinstance(tree, int):
        return {tree}
    return _leaves(tree[0]) | _leaves(tree[1])


def _cup(tally, c, q, rule):
    N = tally.pairwise
    tree = rule.bracket(tally.m)
    if c not in cup_possible_winners(N, tree, q):
        return NO, []
    pairs: list[tuple[int, int]] = []
    _cup_force(N, tree, c, q, pairs)
    order = _topological(pairs, range(tally.m))
    ballots = [tuple(order)] * q
    if _verified(tally, c, rule, ballots):
        return YES, ballots
    return UNKNOWN, []


def _runoff(tally, c, q, rule):
    m = tally.m
    plur = tally.positions[:, 0].astype(np.int64)
    N = tally.pairwise
    best = None
    for d in range(m):
        if d == c:
            continue
        rest = [x for x in range(m) if x not in (c, d)]
        top = int(plur[rest].max()) if rest else 0
        need_c = max(0, top - int(plur[c]))
        need_d = max(0, top - int(plur[d]))
        if need_c + need_d > q:
            continue
        give_c = q - need_d
        if N[c, d] + give_c < N[d, c] + need_d:
            continue
        if best is None or need_c + need_d < best[0]:
            best = (need_c + need_d, d, give_c, need_d)
    if best is None:
        return NO, []
    _, d, give_c, give_d = best
    rest = [x for x in range(m) if x not in (c, d)]
    ballots = [(c, d, *rest)] * give_c + [(d, c, *rest)] * give_d
    if _verified(tally, c, rule, ballots):
        return YES, ballots
    return UNKNOWN, []


def _bucklin(tally, c, q, rule):
    m, n = tally.m, tally.n
    topj = tally.topj
    others = [x for x in range(m) if x != c]
    rounds = []
    earlier_max = -10**18
    for j in range(1, m + 1):
        b1 = n - 2 * int(topj[c, j - 1]) + 1
        b2 = 2 * earlier_max - n
        bj = max(0, b1, b2)
        rounds.append((bj, j))
        earlier_max = max(earlier_max, int(topj[others, j - 1].max()))
    feasible = sorted((bj, j) for bj, j in rounds if bj <= q)
    if not feasible:
        return NO, []
    for bj, j in feasible:
        strength = topj[:, max(0, j - 2)]
        rho = sorted(others, key=lambda x: (strength[x], x))
        for b in sorted({bj, bj + 1, q} & set(range(1, q + 1))):
            for ballots in (_pairwise_ballots(c, rho, b), [(c, *rho)] * b):
                if _verified(tally, c, rule, ballots):
                    return YES, ballots
    return UNKNOWN, []


_SEARCHERS = {
    PLURALITY: _single_approvals,
    APPROVAL_RULE: _single_approvals,
    TAPPROVAL: _t_approval,
    BORDA: _borda,
    COPELAND: _tournament,
    CONDORCET: _tournament,
    CUP: _cup,
    RUNOFF: _runoff,
    BUCKLIN: _bucklin,
}
