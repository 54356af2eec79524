"""Winner-tracking protocols for each voting rule.

Four techniques are available:

``det-frequency`` / ``frequency``
    Sites reduce every ballot to items and feed a deterministic or randomized
    frequency tracker; the center declares from the approximate counts.
``checkpoint``
    A count tracker with ``lam = eps/12`` triggers a static exchange that
    computes an ``eps/4``-winner; it is declared until the next checkpoint.
``sampling``
    The center keeps a uniform sample of ballots and declares from it.
``hybrid``
    Run-off only: deterministic plurality frequencies plus an exact
    head-to-head poll at each checkpoint.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np

from .checkpoint import checkpoint_lambda, should_fire
from .election import (
    APPROVAL_RULE, BORDA, BUCKLIN, CONDORCET, COPELAND, CUP, ORDINAL,
    PLURALITY, RUNOFF, TAPPROVAL, ElectionError, Rule, Tally, winners_from_tally,
)
from .harness import (
    SENTINEL, CenterEndpoint, Message, Protocol, SiteEndpoint, ballot_bits,
    int_bits, symbol_bits,
)
from .primitives import (
    CountCenter, CountSite, FreqCenterDet, FreqCenterRand, FreqSiteDet,
    FreqSiteRand, SamplerCenter, SamplerSite, required_sample_size,
)

TECHNIQUES = ("frequency", "det-frequency", "checkpoint", "sampling", "hybrid")
DETERMINISTIC = frozenset({"det-frequency", "checkpoint", "hybrid"})


class ContestCycleError(ElectionError):
    """The contest pairs of a Cup run contain a cycle."""


class UndersizedSample(ValueError):
    def __init__(self, have: int, need: int):
        super().__init__(f"sample has {have} ballots, need {need}")
        self.have = have
        self.need = need


def _frac(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class TrackerConfig:
    rule: Rule
    technique: str
    eps: float
    delta: float = 0.1
    c_p: float = 4.0

    def validate(self, m: int) -> None:
        self.rule.check(m)
        if self.technique not in TECHNIQUES:
            raise ValueError(f"unknown technique {self.technique!r}")
        if self.technique == "hybrid" and self.rule.name != RUNOFF:
            raise ValueError("the hybrid technique exists only for run-off")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def deterministic(self) -> bool:
        return self.technique in DETERMINISTIC


# -- reductions -------------------------------------------------------------

def padded_size(m: int) -> int:
    return 1 << max(1, (m - 1).bit_length())


def reduce_ballot(rule: Rule, ballot, m: int) -> list:
    """Items a ballot turns into under ``rule``'s frequency reduction."""
    name = rule.name
    if rule.ballot_kind == ORDINAL and not isinstance(ballot, tuple):
        raise ElectionError(f"{rule} needs ordinal ballots")
    if rule.ballot_kind != ORDINAL and isinstance(ballot, tuple):
        raise ElectionError(f"{rule} needs approval ballots")
    if name in (PLURALITY, TAPPROVAL, APPROVAL_RULE):
        return sorted(ballot)
    if name == BORDA:
        return [c for j, c in enumerate(ballot) for _ in range(m - 1 - j)]
    if name in (COPELAND, CONDORCET, CUP, RUNOFF):
        return [(ballot[p], ballot[q]) for p in range(m) for q in range(p + 1, m)]
    if name == BUCKLIN:
        M = padded_size(m)
        levels = M.bit_length() - 1
        full = list(ballot) + list(range(m, M))
        return [(c, i, pos >> i) for pos, c in enumerate(full) for i in range(levels)]
    raise ElectionError(f"no reduction for {rule}")


def _weighted_items(rule: Rule, ballot, m: int) -> list[tuple[Any, int]]:
    if rule.name == BORDA:
        return [(c, m - 1 - j) for j, c in enumerate(ballot) if j < m - 1]
    return [(item, 1) for item in reduce_ballot(rule, ballot, m)]


def bucklin_prefix(f, c: int, k: int, M: int, total=None):
    """Voters ranking ``c`` within the top ``k`` from dyadic block counts ``f``."""
    levels = M.bit_length() - 1
    if k >= M:
        return total
    out = 0
    for i in range(levels):
        if (k >> i) & 1:
            out += f(c, i, (k >> (i + 1)) << 1)
    return out


def topological_contest_order(pairs: Iterable[tuple[int, int]], nodes: Sequence[int]) -> list[int]:
    """Order ``nodes`` so the first member of every pair comes first (ties by id)."""
    nodes = list(nodes)
    succ: dict[int, list[int]] = {v: [] for v in nodes}
    indeg = {v: 0 for v in nodes}
    for a, b in pairs:
        if a not in succ or b not in succ:
            raise ElectionError(f"contest ({a}, {b}) mentions an unknown candidate")
        succ[a].append(b)
        indeg[b] += 1
    ready = [v for v in nodes if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(ready, w)
    if len(order) != len(nodes):
        raise ContestCycleError("contest pairs contain a cycle")
    return order


# -- declarations -----------------------------------------------------------

def _argmax(values: dict[int, float], among: Iterable[int]) -> int:
    return min(among, key=lambda c: (-values[c], c))


def _cup_run(tree, beats) -> int:
    if isinstance(tree, int):
        return tree
    a = _cup_run(tree[0], beats)
    b = _cup_run(tree[1], beats)
    return a if beats(a, b) else b


def _pair_beats(get):
    def beats(a, b):
        d = get((a, b)) - get((b, a))
        return d > 0 or (d == 0 and a < b)
    return beats


def declare_from_frequencies(rule: Rule, f, m: int, err: float = 0.0,
                             n_hat: float | None = None) -> int:
    """Candidate to declare from approximate item counts.

    ``f`` maps reduction items to estimates (missing items count as zero);
    ``err`` bounds the error of one estimate; ``n_hat`` estimates the number
    of voters and is needed only for Bucklin.
    """
    get = f.get if hasattr(f, "get") else f
    get0 = lambda item: get(item, 0) if hasattr(f, "get") else get(item)  # noqa: E731
    name = rule.name
    cands = range(m)
    if name in (PLURALITY, TAPPROVAL, APPROVAL_RULE, BORDA):
        return _argmax({c: get0(c) for c in cands}, cands)
    if name in (COPELAND, CONDORCET):
        score = {c: sum(1 for d in cands if d != c
                        and get0((c, d)) - get0((d, c)) > -2 * err) for c in cands}
        return _argmax(score, cands)
    if name == CUP:
        return _cup_run(rule.bracket(m), _pair_beats(get0))
    if name == RUNOFF:
        plur = {c: get0(c) for c in cands}
        first = _argmax(plur, cands)
        second = _argmax(plur, [c for c in cands if c != first])
        return first if _pair_beats(get0)(first, second) else second
    if name == BUCKLIN:
        if n_hat is None:
            raise ValueError("Bucklin declarations need a voter-count estimate")
        M = padded_size(m)
        levels = M.bit_length() - 1
        thresh = n_hat / 2 - levels * err
        fn = lambda c, i, j: get0((c, i, j))  # noqa: E731
        for k in range(1, m + 1):
            est = {c: bucklin_prefix(fn, c, k, M, n_hat) for c in cands}
            hits = [c for c in cands if est[c] > thresh]
            if hits:
                return _argmax(est, hits)
        return 0
    raise ElectionError(f"no declaration for {rule}")


def declare_from_sample(rule: Rule, sample: Sequence, m: int, eps: float,
                        n_hat: float | None = None, required: int = 0) -> int:
    """Candidate to declare from a uniform sample of ballots.

    Estimates are scaled by ``n_hat / len(sample)``; when ``n_hat`` is None
    the sample is treated as the whole election.
    """
    s = len(sample)
    if s < required:
        raise UndersizedSample(s, required)
    if s == 0:
        raise UndersizedSample(0, max(1, required))
    name = rule.name
    if n_hat is None:
        tally = Tally.from_ballots(m, rule.ballot_kind, sample)
        return min(winners_from_tally(tally, rule))
    n_hat = float(n_hat)
    scale = n_hat / s
    cands = range(m)
    if name == RUNOFF:
        half = s // 2 if s > 1 else 1
        s1, s2 = sample[:half], sample[half:] or sample[:half]
        plur = np.zeros(m)
        for b in s1:
            plur[b[0]] += 1
        first = _argmax(dict(enumerate(plur)), cands)
        second = _argmax(dict(enumerate(plur)), [c for c in cands if c != first])
        t2 = Tally.from_rankings(m, np.asarray(s2))
        d = t2.pairwise[first, second] - t2.pairwise[second, first]
        if d > 0 or (d == 0 and first < second):
            return first
        return second
    if rule.ballot_kind != ORDINAL:
        scores = np.zeros(m)
        for b in sample:
            for c in b:
                scores[c] += 1
        return _argmax(dict(enumerate(scores * scale)), cands)
    t = Tally.from_rankings(m, np.asarray(sample))
    if name == BORDA:
        return _argmax(dict(enumerate(t.borda_scores * scale)), cands)
    N = t.pairwise * scale
    if name in (COPELAND, CONDORCET):
        score = {c: sum(1 for d in cands if d != c and N[c, d] >= n_hat / 2 - eps * n_hat / 2)
                 for c in cands}
        return _argmax(score, cands)
    if name == CUP:
        return _cup_run(rule.bracket(m), _pair_beats(lambda p: N[p]))
    if name == BUCKLIN:
        top = t.topj * scale
        for j in range(m):
            hits = [c for c in cands if top[c, j] >= n_hat / 2 - eps * n_hat / 2]
            if hits:
                return _argmax(dict(enumerate(top[:, j])), hits)
        return 0
    raise ElectionError(f"no sampling declaration for {rule}")


# -- frequency techniques ---------------------------------------------------

def frequency_precision(rule: Rule, eps, m: int) -> dict[str, Fraction]:
    """Precision of each frequency tracker a rule runs, keyed by tracker tag."""
    eps = _frac(eps)
    name = rule.name
    if name == PLURALITY:
        return {"freq": eps / 2}
    if name == TAPPROVAL:
        return {"freq": eps / (2 * rule.t)}
    if name == APPROVAL_RULE:
        return {"freq": eps / (2 * m)}
    if name == BORDA:
        return {"freq": eps / (4 * m)}
    if name in (COPELAND, CONDORCET, CUP):
        return {"freq": eps / (m * m)}
    if name == RUNOFF:
        return {"plur": eps / 6, "freq": 2 * eps / (3 * m * m)}
    M = padded_size(m)
    L = M.bit_length() - 1
    return {"freq": eps / (2 * M * L * L)}


def _universe(rule: Rule, m: int) -> int:
    if rule.name == BUCKLIN:
        M = padded_size(m)
        return M * 2 * M
    if rule.name in (COPELAND, CONDORCET, CUP, RUNOFF):
        return m * m
    return m


def items_per_voter(rule: Rule, m: int) -> float | None:
    name = rule.name
    if name == PLURALITY:
        return 1
    if name == TAPPROVAL:
        return rule.t
    if name == BORDA:
        return m * (m - 1) / 2
    if name in (COPELAND, CONDORCET, CUP, RUNOFF):
        return m * (m - 1) / 2
    if name == BUCKLIN:
        M = padded_size(m)
        return M * (M.bit_length() - 1)
    return None


class _FreqSite(SiteEndpoint):
    def __init__(self, rule: Rule, m: int, parts: dict, voter_counter: CountSite | None):
        super().__init__()
        self.rule = rule
        self.m = m
        self.parts = parts
        self.voters = voter_counter

    def on_ballot(self, ballot) -> None:
        if self.rule.name == RUNOFF:
            self.parts["plur"].observe(ballot[0], 1)
        for item, w in _weighted_items(self.rule, ballot, self.m):
            self.parts["freq"].observe(item, w)
        if self.voters is not None:
            self.voters.observe(1)

    def on_message(self, msg: Message) -> None:
        head, _, tail = msg.tag.partition("/")
        if tail == "scale":
            self.parts[head].on_scale(msg.payload)


class _FreqCenter(CenterEndpoint):
    def __init__(self, rule: Rule, m: int, parts: dict, voter_counter: CountCenter | None):
        super().__init__()
        self.rule = rule
        self.m = m
        self.parts = parts
        self.voters = voter_counter
        self.seen = False

    def on_message(self, msg: Message) -> None:
        self.seen = True
        head = msg.tag.partition("/")[0]
        if head == "voters":
            self.voters.on_report(msg.src, msg.payload)
        else:
            self.parts[head].on_message(msg.src, msg.tag, msg.payload)

    def on_query(self) -> int:
        if not self.seen:
            return SENTINEL
        freq = self.parts["freq"]
        estimates = dict(freq.estimates)
        if self.rule.name == RUNOFF:
            estimates.update(self.parts["plur"].estimates)
        n_hat = None if self.voters is None else self.voters.estimate
        z = items_per_voter(self.rule, self.m)
        n_items = None if (n_hat is None or z is None) else n_hat * z
        err = freq.error_bound(n_items)
        return declare_from_frequencies(self.rule, estimates, self.m, err, n_hat)

    def stats(self) -> dict:
        return {}


def frequency_protocol(cfg: TrackerConfig, k: int, m: int) -> Protocol:
    deterministic = cfg.technique == "det-frequency"
    precision = frequency_precision(cfg.rule, cfg.eps, m)
    universe = {"freq": _universe(cfg.rule, m), "plur": m}
    center_parts = {}
    sites = []
    for tag, eps_t in precision.items():
        if deterministic:
            center_parts[tag] = FreqCenterDet(k, eps_t, universe[tag], None, tag)
        else:
            center_parts[tag] = FreqCenterRand(k, eps_t, universe[tag], None, tag, cfg.c_p)
    voters_center = CountCenter(k) if cfg.rule.name == BUCKLIN else None
    center = _FreqCenter(cfg.rule, m, center_parts, voters_center)
    for part in center_parts.values():
        part._send = lambda j, bits, tag, payload, c=center: c.send(j, bits, tag, payload)
    lam_v = _frac(cfg.eps) / 8
    for j in range(k):
        site = _FreqSite(cfg.rule, m, {}, None)
        up = site.up
        for tag, eps_t in precision.items():
            if deterministic:
                site.parts[tag] = FreqSiteDet(k, eps_t, universe[tag], up, tag)
            else:
                site.parts[tag] = FreqSiteRand(k, eps_t, universe[tag], up, tag, c_p=cfg.c_p,
                                               rng=_LazyRng(site))
        if voters_center is not None:
            site.voters = CountSite(lam_v, up, "voters")
        sites.append(site)
    return Protocol(center, sites, f"{cfg.rule}/{cfg.technique}")


class _LazyRng:
    """Defers to the endpoint's rng, which the harness seeds at attach time."""

    def __init__(self, owner):
        self.owner = owner

    def random(self) -> float:
        return self.owner.rng.random()

    def getrandbits(self, k: int) -> int:
        return self.owner.rng.getrandbits(k)


# -- static subprotocols ----------------------------------------------------

def round_half_up(value: int, g: Fraction) -> int:
    """Multiplier of the multiple of ``g`` closest to ``value`` (ties upward)."""
    p, q = g.numerator, g.denominator
    return (2 * value * q + p) // (2 * p)


def static_granularity(rule: Rule, n: int, eps, k: int, m: int) -> Fraction:
    """Rounding step for the static exchange computing an ``eps``-winner at size n.

    Each step is chosen so the summed rounding error of ``k`` sites stays
    inside what ``floor(eps*n)`` added ballots can repair; steps below one are
    raised to one, which is lossless on integer counts.
    """
    B = math.floor(_frac(eps) * n)
    name = rule.name
    if name in (PLURALITY, APPROVAL_RULE, CUP):
        g = Fraction(B, k)
    elif name == TAPPROVAL:
        g = Fraction(B, 2 * k)
    elif name == BORDA:
        g = Fraction(m * (B // 2), k)
    elif name in (COPELAND, CONDORCET, BUCKLIN):
        g = Fraction(2 * (B // 2), 2 * k)
    else:
        g = Fraction(1)
    return max(g, Fraction(1))


def rounding_error(g: Fraction, k: int) -> Fraction:
    """Worst summed error of ``k`` half-up roundings to multiples of ``g``."""
    return Fraction(0) if g == 1 else g * k / 2


def _round_all(values, g: Fraction) -> list[int]:
    p, q = g.numerator, g.denominator
    return [(2 * int(v) * q + p) // (2 * p) for v in values]


class _LocalView:
    """A site's own ballots, folded lazily into a tally."""

    def __init__(self, m: int, kind: str):
        self.m = m
        self.kind = kind
        self.tally = Tally.empty(m, kind)
        self.pending: list = []

    def add(self, ballot) -> None:
        self.pending.append(ballot)

    def current(self) -> Tally:
        if self.pending:
            self.tally = self.tally + Tally.from_ballots(self.m, self.kind, self.pending)
            self.pending = []
        return self.tally


class _CheckpointSite(SiteEndpoint):
    def __init__(self, cfg: TrackerConfig, m: int, k: int):
        super().__init__()
        self.cfg = cfg
        self.m = m
        self.view = _LocalView(m, cfg.rule.ballot_kind)
        self.counter = CountSite(checkpoint_lambda(cfg.eps), self.up, "count")
        self.plur = None
        if cfg.rule.name == RUNOFF:
            eps_p = frequency_precision(cfg.rule, cfg.eps, m)["plur"]
            self.plur = FreqSiteDet(k, eps_p, m, self.up, "plur")

    def on_ballot(self, ballot) -> None:
        self.view.add(ballot)
        if self.plur is not None:
            self.plur.observe(ballot[0], 1)
        self.counter.observe(1)

    def on_message(self, msg: Message) -> None:
        if msg.tag == "plur/scale":
            self.plur.on_scale(msg.payload)
        elif msg.tag == "poll":
            self.up(int_bits(self.view.tally.n + len(self.view.pending)), "local-n",
                    self.view.tally.n + len(self.view.pending))
        elif msg.tag == "request":
            values = self._answer(msg.payload)
            bits = sum(int_bits(v) for v in values)
            self.up(bits, "answer", values)

    def _answer(self, req) -> list[int]:
        kind = req[0]
        t = self.view.current()
        if kind == "scores":
            g = req[1]
            src = t.borda_scores if self.cfg.rule.name == BORDA else t.scores
            return _round_all(src, g)
        if kind == "pairs":
            g, pairs = req[1], req[2]
            return _round_all([t.pairwise[a, b] for a, b in pairs], g)
        if kind == "topj":
            g, j = req[1], req[2]
            return _round_all(t.topj[:, j - 1], g)
        if kind == "exact-pair":
            a, b = req[1], req[2]
            return [int(t.pairwise[a, b])]
        raise ValueError(f"unknown request {kind!r}")


class _CheckpointCenter(CenterEndpoint):
    """Runs the count tracker and the static exchange at each checkpoint."""

    def __init__(self, cfg: TrackerConfig, m: int, k: int):
        super().__init__()
        self.cfg = cfg
        self.rule = cfg.rule
        self.m = m
        self.k = k
        self.eps_static = _frac(cfg.eps) / 4
        self.counter = CountCenter(k)
        self.last_index: int | None = None
        self.declared = SENTINEL
        self.checkpoints = 0
        self.rounds = 0
        self.static_bits = 0
        self.budget_violations = 0
        self.plur = None
        if cfg.rule.name == RUNOFF:
            eps_p = frequency_precision(cfg.rule, cfg.eps, m)["plur"]
            self.plur = FreqCenterDet(k, eps_p, m, self._fwd, "plur")
        self._busy = False
        self._again = False
        self._replies: dict[int, Any] = {}
        self._step = None

    def _fwd(self, j, bits, tag, payload):
        self.send(j, bits, tag, payload)

    def stats(self) -> dict:
        return {"checkpoints": self.checkpoints, "static_rounds": self.rounds,
                "static_bits": self.static_bits, "budget_violations": self.budget_violations}

    def on_query(self) -> int:
        return self.declared

    def on_message(self, msg: Message) -> None:
        tag = msg.tag
        if tag.startswith("plur"):
            self.plur.on_message(msg.src, tag, msg.payload)
        elif tag == "count":
            self.counter.on_report(msg.src, msg.payload)
            fired = should_fire(self.counter.estimate, self.last_index,
                                checkpoint_lambda(self.cfg.eps))
            if fired is not None:
                self.last_index = fired
                if self._busy:
                    self._again = True
                else:
                    self._start()
        elif tag in ("local-n", "answer"):
            self.static_bits += msg.bits
            self._replies[msg.src] = msg.payload
            if len(self._replies) == self.k:
                replies, self._replies = self._replies, {}
                self._step(replies)

    def _gather(self, tag: str, payload, bits: int, then) -> None:
        self._step = then
        self.rounds += 1
        for j in range(self.k):
            self.static_bits += bits
            self.send(j, bits, tag, payload)

    def _start(self) -> None:
        self._busy = True
        self.checkpoints += 1
        self._gather("poll", None, 1, self._got_n)

    def _finish(self, winner: int) -> None:
        self.declared = winner
        self._busy = False
        if self._again:
            self._again = False
            self._start()

    def _got_n(self, replies: dict) -> None:
        n = sum(replies.values())
        self.n = n
        rule, m, k = self.rule, self.m, self.k
        g = static_granularity(rule, n, self.eps_static, k, m)
        self.g = g
        self.err = rounding_error(g, k)
        nb = int_bits(n)
        top = n * (m - 1) if rule.name == BORDA else n
        self.value_bits = int_bits(math.ceil(top / g) + 1)
        if rule.name in (PLURALITY, TAPPROVAL, APPROVAL_RULE, BORDA):
            self._gather("request", ("scores", g), nb + 2, self._got_scores)
        elif rule.name in (COPELAND, CONDORCET):
            pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
            self._gather("request", ("pairs", g, pairs), nb + 2, self._got_all_pairs)
        elif rule.name == CUP:
            self._cup_level = {leaf: leaf for leaf in range(m)}
            self._cup_tree = rule.bracket(m)
            self._cup_round()
        elif rule.name == BUCKLIN:
            self._lo, self._hi, self._hi_vals = 1, m, None
            self._bucklin_round()
        elif rule.name == RUNOFF:
            est = self.plur.estimates
            order = sorted(range(m), key=lambda c: (-est.get(c, 0), c))
            c1, c2 = order[0], order[1]
            self._pair = (c1, c2)
            bits = nb + 2 * symbol_bits(m)
            self._gather("request", ("exact-pair", c1, c2), bits, self._got_exact_pair)

    def _check_budget(self, replies: dict, count: int) -> None:
        limit = count * self.value_bits
        for vals in replies.values():
            if sum(int_bits(v) for v in vals) > limit:
                self.budget_violations += 1

    def _sums(self, replies: dict) -> list[Fraction]:
        width = len(next(iter(replies.values())))
        return [sum(replies[j][i] for j in replies) * self.g for i in range(width)]

    def _got_scores(self, replies: dict) -> None:
        self._check_budget(replies, self.m)
        est = dict(enumerate(self._sums(replies)))
        self._finish(_argmax(est, range(self.m)))

    def _got_all_pairs(self, replies: dict) -> None:
        m, n = self.m, self.n
        self._check_budget(replies, m * (m - 1) // 2)
        sums = self._sums(replies)
        pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
        est = {}
        for (a, b), v in zip(pairs, sums):
            est[(a, b)] = v
            est[(b, a)] = n - v
        thresh = Fraction(n, 2) - self.err
        score = {c: sum(1 for d in range(m) if d != c and est[(c, d)] > thresh)
                 for c in range(m)}
        self._finish(_argmax(score, range(m)))

    def _cup_round(self) -> None:
        tree = self._cup_tree
        if isinstance(tree, int):
            self._finish(tree)
            return
        matches = []
        self._collect_ready(tree, matches)
        self._cup_matches = matches
        pairs = [(min(a, b), max(a, b)) for _, a, b in matches]
        bits = int_bits(self.n) + len(pairs) * 2 * symbol_bits(self.m)
        self._gather("request", ("pairs", self.g, pairs), bits, self._got_cup)

    def _collect_ready(self, node, out) -> Any:
        """Winner of ``node`` if decided; records matches whose children are decided."""
        if isinstance(node, int):
            return node
        key = id(node)
        if key in self._cup_level:
            return self._cup_level[key]
        a = self._collect_ready(node[0], out)
        b = self._collect_ready(node[1], out)
        if a is not None and b is not None:
            out.append((key, a, b))
        return None

    def _got_cup(self, replies: dict) -> None:
        self._check_budget(replies, len(self._cup_matches))
        sums = self._sums(replies)
        for (key, a, b), v in zip(self._cup_matches, sums):
            lo, hi = min(a, b), max(a, b)
            self._cup_level[key] = lo if 2 * v >= self.n else hi
        root = self._cup_level.get(id(self._cup_tree))
        if root is not None:
            self._finish(root)
        else:
            self._cup_round()

    def _bucklin_round(self) -> None:
        if self._lo == self._hi and self._hi_vals is not None:
            self._finish(self._hi_vals)
            return
        j = (self._lo + self._hi) // 2 if self._lo < self._hi else self._hi
        self._probe = j
        bits = int_bits(self.n) + symbol_bits(self.m)
        self._gather("request", ("topj", self.g, j), bits, self._got_topj)

    def _got_topj(self, replies: dict) -> None:
        self._check_budget(replies, self.m)
        est = dict(enumerate(self._sums(replies)))
        thresh = Fraction(self.n, 2) - self.err
        hits = [c for c in range(self.m) if est[c] > thresh]
        j = self._probe
        if hits:
            self._hi = j
            self._hi_vals = _argmax(est, hits)
        else:
            self._lo = j + 1
        self._bucklin_round()

    def _got_exact_pair(self, replies: dict) -> None:
        c1, c2 = self._pair
        wins = sum(v[0] for v in replies.values())
        if 2 * wins > self.n or (2 * wins == self.n and c1 < c2):
            self._finish(c1)
        else:
            self._finish(c2)


def checkpoint_protocol(cfg: TrackerConfig, k: int, m: int) -> Protocol:
    center = _CheckpointCenter(cfg, m, k)
    sites = [_CheckpointSite(cfg, m, k) for _ in range(k)]
    name = "hybrid" if cfg.rule.name == RUNOFF else "checkpoint"
    return Protocol(center, sites, f"{cfg.rule}/{name}")


def static_subprotocol(rule: Rule, site_tallies: Sequence[Tally], eps) -> int:
    """One-shot static exchange over fixed site tallies (no network).

    Computes the same declaration a checkpoint would for a target precision
    ``eps`` (a checkpoint passes ``eps/4``).  Run-off is not static; use the
    hybrid tracker.
    """
    if rule.name == RUNOFF:
        raise ValueError("run-off has no static exchange; it uses the hybrid tracker")
    k = len(site_tallies)
    m = site_tallies[0].m
    cfg = TrackerConfig(rule, "checkpoint", 0.5)
    center = _CheckpointCenter(cfg, m, k)
    center.eps_static = _frac(eps)
    log: list[Message] = []
    sites = []
    for j, t in enumerate(site_tallies):
        s = _CheckpointSite(cfg, m, k)
        s.view.tally = t.copy()
        s.ident = j
        sites.append(s)
    queue: list[Message] = []
    for ep in [center, *sites]:
        ep._send = queue.append
    center._start()
    while queue:
        msg = queue.pop(0)
        log.append(msg)
        if msg.up:
            center.on_message(msg)
        else:
            sites[msg.dst].on_message(msg)
    center.log = log
    return center.declared


# -- sampling ---------------------------------------------------------------

class _SamplingSite(SiteEndpoint):
    def __init__(self, bits: int):
        super().__init__()
        self.sampler = SamplerSite(bits, self.up, rng=_LazyRng(self))

    def on_ballot(self, ballot) -> None:
        self.sampler.observe(ballot)

    def on_message(self, msg: Message) -> None:
        if msg.tag == "sample/round":
            self.sampler.on_round(msg.payload)


class _SamplingCenter(CenterEndpoint):
    def __init__(self, cfg: TrackerConfig, m: int, k: int):
        super().__init__()
        self.cfg = cfg
        self.m = m
        self.required = required_sample_size(cfg.rule, cfg.eps, cfg.delta, m)
        self.draw = self.required * (2 if cfg.rule.name == RUNOFF else 1)
        self.sampler = SamplerCenter(k, self.draw, self._fwd)
        self.short_draws = 0

    def _fwd(self, j, bits, tag, payload):
        self.send(j, bits, tag, payload)

    def on_message(self, msg: Message) -> None:
        item, level = msg.payload
        self.sampler.on_item(item, level)

    def on_query(self) -> int:
        if not self.sampler.pool:
            return SENTINEL
        if self.sampler.round == 0:
            # nothing has been discarded yet: the pool is the whole stream
            pool = [item for item, _ in self.sampler.pool]
            return declare_from_sample(self.cfg.rule, pool, self.m, self.cfg.eps)
        sample, short = self.sampler.draw_sample(self.draw, self.rng)
        if short:
            self.short_draws += 1
        return declare_from_sample(self.cfg.rule, sample, self.m, self.cfg.eps,
                                   self.sampler.n_hat, self.draw)

    def stats(self) -> dict:
        return {"sample_round": self.sampler.round, "pool": len(self.sampler.pool),
                "sample_size": self.draw, "short_draws": self.short_draws}


def sampling_protocol(cfg: TrackerConfig, k: int, m: int) -> Protocol:
    center = _SamplingCenter(cfg, m, k)
    bits = ballot_bits(m, cfg.rule.ballot_kind)
    if cfg.rule.name == TAPPROVAL:
        bits = symbol_bits(math.comb(m, cfg.rule.t))
    elif cfg.rule.name == PLURALITY:
        bits = symbol_bits(m)
    return Protocol(center, [_SamplingSite(bits) for _ in range(k)], f"{cfg.rule}/sampling")


def make_protocol(cfg: TrackerConfig, k: int, m: int) -> Protocol:
    """Build the center and ``k`` site endpoints for ``cfg``."""
    cfg.validate(m)
    if cfg.technique in ("frequency", "det-frequency"):
        return frequency_protocol(cfg, k, m)
    if cfg.technique in ("checkpoint", "hybrid"):
        return checkpoint_protocol(cfg, k, m)
    return sampling_protocol(cfg, k, m)
