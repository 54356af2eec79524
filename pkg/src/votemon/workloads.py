"""Seedable vote-stream generators and site-assignment policies."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from fractions import Fraction
from typing import Sequence

import numpy as np

from .election import APPROVAL, ORDINAL, Election, ElectionError, dumps_election, loads_election
from .harness import StreamEvent

GENERATORS = ("uniform_impartial", "skewed", "planted_winner", "adversarial_flip")
POLICIES = ("round_robin", "uniform_random", "single_site", "per_generator")


class SpecError(ValueError):
    """Invalid generator or assignment specification."""


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n: int = 0
    m: int = 2
    ballot_kind: str = ORDINAL
    seed: int = 0
    weights: tuple[float, ...] | None = None
    margin: float = 0.0
    planted: int = 0
    t: int | None = None
    eps: float = 0.1
    k: int = 2
    phases: int = 6

    def validate(self) -> None:
        if self.kind not in GENERATORS:
            raise SpecError(f"unknown generator {self.kind!r}")
        if self.ballot_kind not in (APPROVAL, ORDINAL):
            raise SpecError(f"unknown ballot kind {self.ballot_kind!r}")
        if self.kind == "adversarial_flip":
            if self.m != 2:
                raise SpecError("adversarial_flip needs m = 2")
            if not 0 < self.eps < Fraction(1, 3):
                raise SpecError("adversarial_flip needs 0 < eps < 1/3")
            if self.k < 1 or self.phases < 1:
                raise SpecError("adversarial_flip needs k >= 1 and phases >= 1")
            return
        if self.n < 0:
            raise SpecError("n must be non-negative")
        if self.m < 2:
            raise SpecError("need at least two candidates")
        if self.t is not None and not 1 <= self.t <= self.m:
            raise SpecError("t must lie in [1, m]")
        if self.kind == "skewed":
            if self.weights is None or len(self.weights) != self.m:
                raise SpecError("skewed needs one weight per candidate")
            if min(self.weights) < 0 or sum(self.weights) <= 0:
                raise SpecError("weights must be non-negative and not all zero")
        if self.kind == "planted_winner":
            if not 0 <= self.margin <= 1:
                raise SpecError("margin must lie in [0, 1]")
            if not 0 <= self.planted < self.m:
                raise SpecError("planted candidate outside roster")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = dict(d)
        if d.get("weights") is not None:
            d["weights"] = tuple(d["weights"])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise SpecError(f"unknown generator fields {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class AssignmentPolicy:
    kind: str = "round_robin"
    k: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in POLICIES:
            raise SpecError(f"unknown assignment policy {self.kind!r}")
        if self.k < 1:
            raise SpecError("k must be at least 1")


def _site_stream(policy: AssignmentPolicy, n: int) -> np.ndarray:
    if policy.kind == "round_robin":
        return np.arange(n) % policy.k
    if policy.kind == "single_site":
        return np.zeros(n, dtype=np.int64)
    if policy.kind == "uniform_random":
        rng = np.random.default_rng(np.random.SeedSequence([policy.seed, 0x5173]))
        return rng.integers(0, policy.k, size=n)
    raise SpecError("per_generator assignment needs a generator that carries sites")


def assign(policy: AssignmentPolicy, index: int) -> int:
    """Site of the event at 0-based ``index``."""
    policy.validate()
    if policy.kind == "round_robin":
        return index % policy.k
    if policy.kind == "single_site":
        return 0
    return int(_site_stream(policy, index + 1)[index])


def flip_phases(eps, k: int, phases: int) -> list[tuple[int, int]]:
    """``(x_i, y_i)`` per phase: x_i votes to each site, y_i total per site so far."""
    eps = Fraction(str(eps)) if isinstance(eps, float) else Fraction(eps)
    out = [(1, 1)]
    for _ in range(phases - 1):
        y = out[-1][1]
        x = math.ceil((1 + 3 * eps) * k * y)
        out.append((x, y + x))
    return out


def flip_phase_ends(spec: GeneratorSpec) -> list[int]:
    ends, t = [], 0
    for x, _ in flip_phases(spec.eps, spec.k, spec.phases):
        t += x * spec.k
        ends.append(t)
    return ends


def _ballot_from_first(first: int, rest: np.ndarray, kind: str, t: int | None):
    if kind == ORDINAL:
        return (first, *[int(c) for c in rest if c != first])
    if t is None:
        return frozenset({first})
    return frozenset({first, *[int(c) for c in rest if c != first][: t - 1]})


def _random_approval(rng, m: int, t: int | None) -> frozenset:
    if t is None:
        chosen = frozenset(int(c) for c in np.flatnonzero(rng.random(m) < 0.5))
        return chosen or frozenset({int(rng.integers(m))})
    return frozenset(int(c) for c in rng.permutation(m)[:t])


def generate_ballots(spec: GeneratorSpec) -> list:
    """Ballots only, in stream order."""
    spec.validate()
    if spec.kind == "adversarial_flip":
        return [e.ballot for e in generate(spec)]
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, GENERATORS.index(spec.kind)]))
    m, n = spec.m, spec.n
    if spec.kind == "uniform_impartial":
        if spec.ballot_kind == ORDINAL:
            return [tuple(int(c) for c in rng.permutation(m)) for _ in range(n)]
        return [_random_approval(rng, m, spec.t) for _ in range(n)]
    if spec.kind == "skewed":
        w = np.asarray(spec.weights, dtype=float)
        p = w / w.sum()
    else:
        p = np.full(m, (1 - spec.margin) / m)
        p[spec.planted] += spec.margin
    out = []
    for _ in range(n):
        first = int(rng.choice(m, p=p))
        rest = rng.permutation(m)
        if spec.ballot_kind == APPROVAL and spec.t is None:
            extra = _random_approval(rng, m, None)
            out.append(frozenset({first}) | extra if rng.random() < 0.5 else frozenset({first}))
        else:
            out.append(_ballot_from_first(first, rest, spec.ballot_kind, spec.t))
    return out


def generate(spec: GeneratorSpec, policy: AssignmentPolicy | None = None) -> list[StreamEvent]:
    """Stream events for ``spec``; ``policy`` is ignored by adversarial streams."""
    spec.validate()
    if spec.kind == "adversarial_flip":
        events, t = [], 0
        for i, (x, _) in enumerate(flip_phases(spec.eps, spec.k, spec.phases), start=1):
            c = i % 2
            ballot = frozenset({c}) if spec.ballot_kind == APPROVAL else (c, 1 - c)
            for site in range(spec.k):
                for _ in range(x):
                    t += 1
                    events.append(StreamEvent(t, site, ballot))
        return events
    policy = policy or AssignmentPolicy("round_robin", 1)
    policy.validate()
    ballots = generate_ballots(spec)
    sites = _site_stream(policy, len(ballots))
    return [StreamEvent(i + 1, int(s), b) for i, (s, b) in enumerate(zip(sites, ballots))]


def dumps_stream(m: int, kind: str, events: Sequence[StreamEvent]) -> str:
    election = Election(m, kind, tuple(e.ballot for e in events))
    return dumps_election(election, [e.site for e in events])


def loads_stream(text: str) -> tuple[Election, list[StreamEvent]]:
    election, sites = loads_election(text)
    if sites is None:
        raise ElectionError("stream file lacks site= columns")
    return election, [StreamEvent(i + 1, s, b)
                      for i, (s, b) in enumerate(zip(sites, election.ballots))]


def load_generator_spec(path) -> tuple[GeneratorSpec, AssignmentPolicy]:
    with open(path) as fh:
        raw = json.load(fh)
    policy = AssignmentPolicy(**raw.pop("assignment", {})) if "assignment" in raw else None
    spec = GeneratorSpec.from_dict(raw)
    if policy is None:
        policy = AssignmentPolicy("per_generator" if spec.kind == "adversarial_flip"
                                  else "round_robin", spec.k)
    return spec, policy
