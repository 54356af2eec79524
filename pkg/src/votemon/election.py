"""Ballots, elections and exact winner determination.

Rules are evaluated from additive sufficient statistics (:class:`Tally`), so
the oracles in :mod:`votemon.oracle` can add hypothetical ballots to a large
election without rebuilding it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

APPROVAL = "approval"
ORDINAL = "ordinal"

PLURALITY = "plurality"
TAPPROVAL = "t-approval"
APPROVAL_RULE = "approval"
BORDA = "borda"
CUP = "cup"
COPELAND = "copeland"
CONDORCET = "condorcet"
RUNOFF = "runoff"
BUCKLIN = "bucklin"

RULE_NAMES = (PLURALITY, TAPPROVAL, APPROVAL_RULE, BORDA, CUP, COPELAND,
              CONDORCET, RUNOFF, BUCKLIN)
APPROVAL_RULES = frozenset({PLURALITY, TAPPROVAL, APPROVAL_RULE})
PAIRWISE_RULES = frozenset({CUP, COPELAND, CONDORCET, RUNOFF})


class ElectionError(ValueError):
    """Malformed ballots, elections or rule/ballot mismatches."""


class EmptyElectionError(ElectionError):
    """Raised when a winner is requested for an election with no ballots."""


def balanced_bracket(ids: Sequence[int]):
    """Complete binary bracket over ``ids`` as nested 2-tuples of ints."""
    ids = list(ids)
    if not ids:
        raise ElectionError("bracket needs at least one candidate")
    if len(ids) == 1:
        return ids[0]
    mid = (len(ids) + 1) // 2
    return (balanced_bracket(ids[:mid]), balanced_bracket(ids[mid:]))


def bracket_leaves(tree) -> list[int]:
    if isinstance(tree, int):
        return [tree]
    return bracket_leaves(tree[0]) + bracket_leaves(tree[1])


@dataclass(frozen=True)
class Rule:
    """A voting rule; ``t`` is used by t-Approval and ``tree`` by Cup."""

    name: str
    t: int | None = None
    tree: tuple | None = None

    def __post_init__(self):
        if self.name not in RULE_NAMES:
            raise ElectionError(f"unknown rule {self.name!r}")
        if self.name == TAPPROVAL and (self.t is None or self.t < 1):
            raise ElectionError("t-approval needs t >= 1")

    @property
    def ballot_kind(self) -> str:
        return APPROVAL if self.name in APPROVAL_RULES else ORDINAL

    def bracket(self, m: int):
        if self.tree is None:
            return balanced_bracket(range(m))
        if sorted(bracket_leaves(self.tree)) != list(range(m)):
            raise ElectionError("cup tree must have exactly one leaf per candidate")
        return self.tree

    def check(self, m: int) -> None:
        if m < 2:
            raise ElectionError("need at least two candidates")
        if self.name == TAPPROVAL and 2 * self.t > m:
            raise ElectionError(f"t-approval needs t <= m/2 (t={self.t}, m={m})")
        if self.name == CUP:
            self.bracket(m)

    def __str__(self) -> str:
        if self.name == TAPPROVAL:
            return f"{self.t}-approval"
        return self.name

    @classmethod
    def parse(cls, text: str) -> "Rule":
        """Parse names such as ``borda``, ``t-approval:2`` or ``2-approval``."""
        text = text.strip().lower()
        if ":" in text:
            name, arg = text.split(":", 1)
            return cls(name, t=int(arg))
        if text.endswith("-approval") and text[0].isdigit():
            return cls(TAPPROVAL, t=int(text.split("-", 1)[0]))
        return cls(text)


def validate_ballot(ballot, m: int, kind: str, t: int | None = None):
    """Return ``ballot`` normalised (frozenset or tuple), raising on bad input."""
    if kind == APPROVAL:
        s = frozenset(int(c) for c in ballot)
        if not s:
            raise ElectionError("approval ballot must approve at least one candidate")
        if min(s) < 0 or max(s) >= m:
            raise ElectionError(f"approval ballot {sorted(s)} outside roster 0..{m - 1}")
        if t is not None and len(s) != t:
            raise ElectionError(f"ballot approves {len(s)} candidates, expected {t}")
        return s
    if kind == ORDINAL:
        r = tuple(int(c) for c in ballot)
        if sorted(r) != list(range(m)):
            raise ElectionError(f"ordinal ballot {r} is not a permutation of 0..{m - 1}")
        return r
    raise ElectionError(f"unknown ballot kind {kind!r}")


@dataclass(frozen=True)
class Election:
    m: int
    kind: str
    ballots: tuple = ()

    def __post_init__(self):
        if self.m < 2:
            raise ElectionError("need at least two candidates")
        normal = tuple(validate_ballot(b, self.m, self.kind) for b in self.ballots)
        object.__setattr__(self, "ballots", normal)

    @property
    def n(self) -> int:
        return len(self.ballots)

    def extended(self, extra: Iterable) -> "Election":
        return Election(self.m, self.kind, self.ballots + tuple(extra))

    def prefix(self, t: int) -> "Election":
        return Election(self.m, self.kind, self.ballots[:t])

    def tally(self) -> "Tally":
        return Tally.from_ballots(self.m, self.kind, self.ballots)


@dataclass
class Tally:
    """Additive sufficient statistics of an election.

    Approval elections keep per-candidate approval ``scores``.  Ordinal
    elections keep ``positions[c, p]`` (voters ranking ``c`` at 0-based
    position ``p``) and the pairwise matrix ``pairwise[c, d]``.
    """

    m: int
    kind: str
    n: int = 0
    scores: np.ndarray | None = None
    positions: np.ndarray | None = None
    pairwise: np.ndarray | None = None
    _cum: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def empty(cls, m: int, kind: str) -> "Tally":
        if kind == APPROVAL:
            return cls(m, kind, 0, scores=np.zeros(m, dtype=np.int64))
        return cls(m, kind, 0, positions=np.zeros((m, m), dtype=np.int64),
                   pairwise=np.zeros((m, m), dtype=np.int64))

    @classmethod
    def from_ballots(cls, m: int, kind: str, ballots) -> "Tally":
        ballots = list(ballots)
        tally = cls.empty(m, kind)
        if not ballots:
            return tally
        if kind == APPROVAL:
            for b in ballots:
                for c in b:
                    tally.scores[c] += 1
            tally.n = len(ballots)
            return tally
        return cls.from_rankings(m, np.asarray(ballots, dtype=np.int64))

    @classmethod
    def from_rankings(cls, m: int, rankings: np.ndarray) -> "Tally":
        """Ordinal tally from an ``(n, m)`` array of rankings (best first)."""
        rankings = np.asarray(rankings, dtype=np.int64).reshape(-1, m)
        n = rankings.shape[0]
        pos = np.empty_like(rankings)
        rows = np.arange(n)[:, None]
        pos[rows, rankings] = np.arange(m)[None, :]
        positions = np.zeros((m, m), dtype=np.int64)
        np.add.at(positions, (rankings, np.broadcast_to(np.arange(m), rankings.shape)), 1)
        pairwise = np.zeros((m, m), dtype=np.int64)
        for c in range(m):
            pairwise[c] = (pos[:, [c]] < pos).sum(axis=0)
        return cls(m, ORDINAL, n, positions=positions, pairwise=pairwise)

    def copy(self) -> "Tally":
        return Tally(self.m, self.kind, self.n,
                     None if self.scores is None else self.scores.copy(),
                     None if self.positions is None else self.positions.copy(),
                     None if self.pairwise is None else self.pairwise.copy())

    def __add__(self, other: "Tally") -> "Tally":
        if (self.m, self.kind) != (other.m, other.kind):
            raise ElectionError("cannot add tallies of different elections")
        if self.kind == APPROVAL:
            return Tally(self.m, self.kind, self.n + other.n, scores=self.scores + other.scores)
        return Tally(self.m, self.kind, self.n + other.n,
                     positions=self.positions + other.positions,
                     pairwise=self.pairwise + other.pairwise)

    def add_ballot(self, ballot) -> None:
        """In-place update with one ballot."""
        self.n += 1
        self._cum = None
        if self.kind == APPROVAL:
            for c in ballot:
                self.scores[c] += 1
            return
        r = list(ballot)
        for p, c in enumerate(r):
            self.positions[c, p] += 1
            for d in r[p + 1:]:
                self.pairwise[c, d] += 1

    @property
    def plurality_scores(self) -> np.ndarray:
        if self.kind == APPROVAL:
            return self.scores
        return self.positions[:, 0]

    @property
    def borda_scores(self) -> np.ndarray:
        return self.positions @ np.arange(self.m - 1, -1, -1, dtype=np.int64)

    @property
    def topj(self) -> np.ndarray:
        """``topj[c, j-1]`` is the number of voters ranking ``c`` in their top ``j``."""
        if self._cum is None:
            self._cum = np.cumsum(self.positions, axis=1)
        return self._cum


def _argmax_set(values) -> frozenset:
    values = np.asarray(values)
    best = values.max()
    return frozenset(int(c) for c in np.flatnonzero(values == best))


def copeland_scores(N: np.ndarray) -> np.ndarray:
    return (N > N.T).sum(axis=1)


def condorcet_winner(N: np.ndarray) -> int | None:
    m = N.shape[0]
    wins = (N > N.T).sum(axis=1)
    hits = np.flatnonzero(wins == m - 1)
    return int(hits[0]) if len(hits) else None


def cup_possible_winners(N: np.ndarray, tree, slack: int = 0) -> frozenset:
    """Candidates that can win the bracket when every contest's margin may be
    shifted by up to ``slack`` in their favour (ties go either way)."""
    if isinstance(tree, int):
        return frozenset({tree})
    left = cup_possible_winners(N, tree[0], slack)
    right = cup_possible_winners(N, tree[1], slack)
    out = {x for x in left if any(N[x, y] + slack >= N[y, x] for y in right)}
    out |= {y for y in right if any(N[y, x] + slack >= N[x, y] for x in left)}
    return frozenset(out)


def runoff_winners(plur: np.ndarray, N: np.ndarray) -> frozenset:
    m = len(plur)
    out = set()
    for a, b in itertools.combinations(range(m), 2):
        floor = min(plur[a], plur[b])
        if any(plur[x] > floor for x in range(m) if x not in (a, b)):
            continue
        if N[a, b] >= N[b, a]:
            out.add(a)
        if N[b, a] >= N[a, b]:
            out.add(b)
    return frozenset(out)


def bucklin_round_winners(topj: np.ndarray, n: int) -> tuple[int, frozenset]:
    """Earliest round (1-based) with a strict majority and the candidates reaching it."""
    for j in range(topj.shape[1]):
        hits = np.flatnonzero(2 * topj[:, j] > n)
        if len(hits):
            return j + 1, frozenset(int(c) for c in hits)
    raise EmptyElectionError("no Bucklin winner in an empty election")


def winners_from_tally(tally: Tally, rule: Rule) -> frozenset:
    """Co-winner set of ``rule`` on the election summarised by ``tally``."""
    rule.check(tally.m)
    if tally.kind != rule.ballot_kind:
        raise ElectionError(f"{rule} needs {rule.ballot_kind} ballots, got {tally.kind}")
    if tally.n == 0:
        raise EmptyElectionError("winner undefined for an empty election")
    name = rule.name
    if name in APPROVAL_RULES:
        return _argmax_set(tally.scores)
    if name == BORDA:
        return _argmax_set(tally.borda_scores)
    N = tally.pairwise
    if name == COPELAND:
        return _argmax_set(copeland_scores(N))
    if name == CONDORCET:
        cw = condorcet_winner(N)
        return frozenset(range(tally.m)) if cw is None else frozenset({cw})
    if name == CUP:
        return cup_possible_winners(N, rule.bracket(tally.m))
    if name == RUNOFF:
        return runoff_winners(tally.positions[:, 0], N)
    return bucklin_round_winners(tally.topj, tally.n)[1]


def evaluate_rule(election: Election, rule: Rule) -> frozenset:
    if election.kind != rule.ballot_kind:
        raise ElectionError(f"{rule} needs {rule.ballot_kind} ballots, got {election.kind}")
    if rule.name == TAPPROVAL:
        for b in election.ballots:
            if len(b) != rule.t:
                raise ElectionError(f"{rule} ballot approves {len(b)} candidates")
    if rule.name == PLURALITY:
        for b in election.ballots:
            if len(b) != 1:
                raise ElectionError("plurality ballots approve exactly one candidate")
    return winners_from_tally(election.tally(), rule)


def pairwise_matrix(election: Election) -> np.ndarray:
    if election.kind != ORDINAL:
        raise ElectionError("pairwise matrix needs ordinal ballots")
    return election.tally().pairwise.copy()


def ballot_space(m: int, rule: Rule) -> list:
    """Every ballot a voter may cast under ``rule`` with ``m`` candidates."""
    if rule.name == PLURALITY:
        return [frozenset({c}) for c in range(m)]
    if rule.name == TAPPROVAL:
        return [frozenset(s) for s in itertools.combinations(range(m), rule.t)]
    if rule.name == APPROVAL_RULE:
        return [frozenset(s) for r in range(1, m + 1)
                for s in itertools.combinations(range(m), r)]
    return [tuple(p) for p in itertools.permutations(range(m))]


# -- text format ------------------------------------------------------------

def format_ballot(ballot, kind: str) -> str:
    items = sorted(ballot) if kind == APPROVAL else list(ballot)
    return ",".join(str(c) for c in items)


def parse_ballot(text: str, m: int, kind: str):
    return validate_ballot([int(tok) for tok in text.split(",") if tok.strip()], m, kind)


def dumps_election(election: Election, sites: Sequence[int] | None = None) -> str:
    lines = [f"m={election.m} kind={election.kind}"]
    for i, b in enumerate(election.ballots):
        line = format_ballot(b, election.kind)
        if sites is not None:
            line += f" site={sites[i]}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def loads_election(text: str) -> tuple[Election, list[int] | None]:
    """Parse the text format; returns the election and site ids (or None)."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ElectionError("missing header line")
    header = dict(tok.split("=", 1) for tok in lines[0].split())
    try:
        m, kind = int(header["m"]), header["kind"]
    except KeyError as exc:
        raise ElectionError(f"header needs m=<int> kind=<approval|ordinal>: {lines[0]!r}") from exc
    ballots, sites = [], []
    for ln in lines[1:]:
        parts = ln.split()
        site = None
        ballot_tok = []
        for p in parts:
            if p.startswith("site="):
                site = int(p[5:])
            else:
                ballot_tok.append(p)
        ballots.append(parse_ballot("".join(ballot_tok), m, kind))
        sites.append(site)
    if any(s is None for s in sites):
        if any(s is not None for s in sites):
            raise ElectionError("site column must be present on every line or none")
        return Election(m, kind, tuple(ballots)), None
    return Election(m, kind, tuple(ballots)), sites
