"""Distributed tracking primitives: counting, frequencies and sampling.

Each primitive is split into a site half and a center half.  The halves do
not own a network; they are given ``send`` callbacks by the endpoint that
embeds them, and they tag their messages with a prefix so one endpoint can
host several primitives.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from fractions import Fraction
from typing import Any, Callable, Hashable

from .election import (
    APPROVAL_RULE, BORDA, BUCKLIN, CONDORCET, COPELAND, CUP, PLURALITY, RUNOFF,
    TAPPROVAL, Rule,
)
from .harness import int_bits, symbol_bits

Up = Callable[[int, str, Any], None]
Down = Callable[[int, int, str, Any], None]


def _frac(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def next_report_threshold(last: int, lam) -> int:
    """Local count at which a site reports again after reporting ``last``."""
    if last == 0:
        return 1
    return max(last + 1, math.ceil((1 + _frac(lam)) * last))


# -- count tracking ---------------------------------------------------------

class CountSite:
    """Reports its exact local count each time it grows by a (1+lam) factor."""

    def __init__(self, lam, up: Up, tag: str = "count"):
        if not 0 < lam < 1:
            raise ValueError("lam must lie in (0, 1)")
        self.lam = lam
        self.count = 0
        self.reported = 0
        self._next = 1
        self._up = up
        self.tag = tag

    def observe(self, weight: int = 1) -> None:
        self.count += weight
        if self.count >= self._next:
            self.reported = self.count
            self._next = next_report_threshold(self.count, self.lam)
            self._up(int_bits(self.count), self.tag, self.count)


class CountCenter:
    """Keeps ``estimate`` = sum of the latest per-site reports."""

    def __init__(self, k: int):
        self.reports = [0] * k
        self.estimate = 0

    def on_report(self, site: int, value: int) -> None:
        self.estimate += value - self.reports[site]
        self.reports[site] = value


# -- frequency tracking -----------------------------------------------------

class _ScaledSite:
    """Shared site logic: a local item counter plus a broadcast scale n_hat."""

    def __init__(self, k: int, eps, universe: int, up: Up, tag: str):
        self.k = k
        self.eps = _frac(eps)
        self.universe = universe
        self.tag = tag
        self._up = up
        self.counter = CountSite(Fraction(1, 2), up, tag + "/n")
        self.counts: dict[Hashable, int] = defaultdict(int)
        self.scale = 0
        self.item_bits = symbol_bits(universe)

    def on_scale(self, n_hat: int) -> None:
        self.scale = n_hat


class _ScaledCenter:
    """Embedded count tracker on items; re-broadcasts n_hat whenever it doubles."""

    def __init__(self, k: int, eps, universe: int, send: Down, tag: str):
        self.k = k
        self.eps = _frac(eps)
        self.universe = universe
        self.tag = tag
        self._send = send
        self.counter = CountCenter(k)
        self.scale = 0
        self.estimates: dict[Hashable, float] = defaultdict(int)

    @property
    def n_items(self) -> int:
        return self.counter.estimate

    def on_message(self, site: int, tag: str, payload) -> None:
        if tag == self.tag + "/n":
            self.counter.on_report(site, payload)
            n_hat = self.counter.estimate
            if n_hat >= 2 * self.scale and n_hat > self.scale:
                self.scale = n_hat
                for j in range(self.k):
                    self._send(j, int_bits(n_hat), self.tag + "/scale", n_hat)
        else:
            self.on_report(site, payload)

    def on_report(self, site: int, payload) -> None:
        raise NotImplementedError

    def estimate(self, item) -> float:
        return self.estimates.get(item, 0)


def det_delta(eps, scale: int, k: int) -> int:
    return max(1, math.floor(_frac(eps) * scale / (4 * k)))


class FreqSiteDet(_ScaledSite):
    """Reports an item's exact local count once ``delta`` increments go unreported."""

    def __init__(self, k, eps, universe, up, tag="freq"):
        super().__init__(k, eps, universe, up, tag)
        self.reported: dict[Hashable, int] = defaultdict(int)
        self.delta = 1

    def on_scale(self, n_hat: int) -> None:
        self.scale = n_hat
        self.delta = det_delta(self.eps, n_hat, self.k)

    def observe(self, item, weight: int = 1) -> None:
        c = self.counts[item] + weight
        self.counts[item] = c
        if c - self.reported[item] >= self.delta:
            self.reported[item] = c
            self._up(self.item_bits + int_bits(c), self.tag, (item, c))
        self.counter.observe(weight)


class FreqCenterDet(_ScaledCenter):
    def __init__(self, k, eps, universe, send, tag="freq"):
        super().__init__(k, eps, universe, send, tag)
        self.last: dict[tuple[int, Hashable], int] = {}

    def on_report(self, site: int, payload) -> None:
        item, count = payload
        old = self.last.get((site, item), 0)
        self.last[(site, item)] = count
        self.estimates[item] += count - old

    @property
    def delta(self) -> int:
        return det_delta(self.eps, self.scale, self.k)

    def error_bound(self, n_items: float | None = None) -> float:
        """Largest possible |estimate - true count| for any item right now."""
        return self.k * (self.delta - 1)


class FreqSiteRand(_ScaledSite):
    """Sends an item's local count with probability ``min(1, c_p*sqrt(k)/(eps*n_hat))``."""

    def __init__(self, k, eps, universe, up, tag="freq", c_p: float = 4.0, rng=None):
        super().__init__(k, eps, universe, up, tag)
        self.c_p = c_p
        self.rng = rng or random.Random(0)
        self.p = 1.0

    def on_scale(self, n_hat: int) -> None:
        self.scale = n_hat
        self.p = send_probability(self.eps, n_hat, self.k, self.c_p)

    def observe(self, item, weight: int = 1) -> None:
        c = self.counts[item] + weight
        self.counts[item] = c
        p = self.p
        if p >= 1.0 or self.rng.random() < (p if weight == 1 else 1 - (1 - p) ** weight):
            self._up(self.item_bits + int_bits(c) + 8, self.tag, (item, c, p))
        self.counter.observe(weight)


def send_probability(eps, n_hat: int, k: int, c_p: float = 4.0) -> float:
    if n_hat <= 0:
        return 1.0
    return min(1.0, c_p * math.sqrt(k) / (float(eps) * n_hat))


class FreqCenterRand(_ScaledCenter):
    """Sum of per-site last counts, each corrected by ``1/p - 1`` for the unseen tail."""

    def __init__(self, k, eps, universe, send, tag="freq", c_p: float = 4.0):
        super().__init__(k, eps, universe, send, tag)
        self.c_p = c_p
        self.last: dict[tuple[int, Hashable], float] = {}

    def on_report(self, site: int, payload) -> None:
        item, count, p = payload
        value = count + 1.0 / p - 1.0
        old = self.last.get((site, item), 0.0)
        self.last[(site, item)] = value
        self.estimates[item] += value - old

    def error_bound(self, n_items: float | None = None) -> float:
        # while sites still send with probability one, every count is exact
        if send_probability(self.eps, self.scale, self.k, self.c_p) >= 1.0:
            return 0.0
        n_items = self.n_items if n_items is None else n_items
        return float(self.eps) * n_items


# -- sampling ---------------------------------------------------------------

def coin_level(rng: random.Random) -> int:
    """Number of leading heads in a run of fair coin flips."""
    x = rng.getrandbits(64)
    if x == 0:
        return 64
    return (x & -x).bit_length() - 1


class SamplerSite:
    def __init__(self, item_bits: int, up: Up, rng=None, tag="sample"):
        self.round = 0
        self.item_bits = item_bits
        self.rng = rng or random.Random(0)
        self._up = up
        self.tag = tag

    def observe(self, item) -> None:
        level = coin_level(self.rng)
        if level >= self.round:
            self._up(self.item_bits + int_bits(level), self.tag, (item, level))

    def on_round(self, r: int) -> None:
        self.round = max(self.round, r)


class SamplerCenter:
    """Pool of every forwarded item whose level is at least the current round."""

    def __init__(self, k: int, s: int, send: Down, tag="sample", factor: int = 4):
        if s < 1:
            raise ValueError("sample size must be positive")
        self.k = k
        self.s = s
        self.cap = factor * s
        self.round = 0
        self.pool: list[tuple[Any, int]] = []
        self._send = send
        self.tag = tag

    def on_item(self, item, level: int) -> None:
        if level < self.round:
            return
        self.pool.append((item, level))
        raised = False
        while len(self.pool) > self.cap:
            keep = [e for e in self.pool if e[1] >= self.round + 1]
            if len(keep) < self.s:
                break
            self.round += 1
            self.pool = keep
            raised = True
        if raised:
            for j in range(self.k):
                self._send(j, int_bits(self.round), self.tag + "/round", self.round)

    @property
    def n_hat(self) -> float:
        return len(self.pool) * 2.0 ** self.round

    def draw_sample(self, s: int, rng: random.Random) -> tuple[list, bool]:
        """Up to ``s`` distinct pool entries, uniformly; flag is True when short."""
        items = [e[0] for e in self.pool]
        if len(items) <= s:
            return items, len(items) < s
        return rng.sample(items, s), False


# -- sample sizes -----------------------------------------------------------

def sample_floor(eps: float, delta: float) -> int:
    return math.ceil(3.0 / eps ** 2 * math.log(2.0 / delta))


def required_sample_size(rule: Rule, eps: float, delta: float, m: int) -> int:
    """Sampled voters needed for an eps-winner w.p. 1-delta (per set for run-off)."""
    if not 0 < eps < 1 or not 0 < delta < 1:
        raise ValueError("eps and delta must lie in (0, 1)")
    name = rule.name
    if name in (PLURALITY, TAPPROVAL):
        t = rule.t if name == TAPPROVAL else 1
        s = math.ceil(24.0 / eps ** 2 * math.log(2.0 * t / delta))
    elif name == RUNOFF:
        s = math.ceil(48.0 / eps ** 2 * math.log(4.0 / delta))
    elif name in (COPELAND, CONDORCET, CUP, BUCKLIN):
        s = math.ceil(12.0 / eps ** 2 * math.log(2.0 * m * m / delta))
    elif name in (BORDA, APPROVAL_RULE):
        s = math.ceil(12.0 / eps ** 2 * math.log(2.0 * m / delta))
    else:
        raise ValueError(f"no sample size for {rule}")
    return max(s, sample_floor(eps, delta))
