"""Deterministic simulation of the star network.

One center and ``k`` sites.  Stream events are delivered in time order; every
message an endpoint sends is charged to the ledger and delivered at once, and
the resulting cascade drains completely before the next event.  Queries are
answered from center state alone and may not send anything.
"""

from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .election import APPROVAL, Rule, Tally, winners_from_tally

CENTER = -1
TAG_BITS = 8
SENTINEL = -1


class ProtocolViolation(RuntimeError):
    """An endpoint broke the communication model."""


@dataclass(frozen=True)
class StreamEvent:
    time: int
    site: int
    ballot: Any


@dataclass(frozen=True)
class Message:
    src: int
    dst: int
    bits: int
    tag: str
    payload: Any = None

    @property
    def site(self) -> int:
        return self.dst if self.src == CENTER else self.src

    @property
    def up(self) -> bool:
        return self.dst == CENTER


def int_bits(value: int) -> int:
    """Bits for a non-negative integer in plain binary (at least one)."""
    return max(1, int(value).bit_length())


def symbol_bits(universe: int) -> int:
    """Bits to name one of ``universe`` symbols."""
    return max(1, math.ceil(math.log2(universe))) if universe > 1 else 1


def ballot_bits(m: int, kind: str) -> int:
    if kind == APPROVAL:
        return m
    return symbol_bits(math.factorial(m))


@dataclass
class CommLedger:
    k: int
    bits_up: list[int] = field(default_factory=list)
    bits_down: list[int] = field(default_factory=list)
    messages: int = 0
    tag_bits: int = 0

    def __post_init__(self):
        if not self.bits_up:
            self.bits_up = [0] * self.k
        if not self.bits_down:
            self.bits_down = [0] * self.k

    @property
    def total_bits(self) -> int:
        return sum(self.bits_up) + sum(self.bits_down)

    @property
    def total_bits_with_tags(self) -> int:
        return self.total_bits + self.tag_bits

    def words(self, n_ref: int) -> int:
        return words(self.total_bits, n_ref)


def words(total_bits: int, n_ref: int) -> int:
    """Convert bits to words of ``ceil(log2 n_ref)`` bits, rounding up."""
    width = max(1, math.ceil(math.log2(n_ref))) if n_ref > 1 else 1
    return -(-total_bits // width)


def charge(ledger: CommLedger, msg: Message) -> CommLedger:
    if msg.bits <= 0:
        raise ProtocolViolation(f"message {msg.tag!r} has non-positive size {msg.bits}")
    if msg.src != CENTER and msg.dst != CENTER:
        raise ProtocolViolation(f"site {msg.src} tried to message site {msg.dst} directly")
    if msg.src == msg.dst:
        raise ProtocolViolation("endpoint messaging itself")
    site = msg.site
    if not 0 <= site < ledger.k:
        raise ProtocolViolation(f"no such site {site}")
    if msg.up:
        ledger.bits_up[site] += msg.bits
    else:
        ledger.bits_down[site] += msg.bits
    ledger.messages += 1
    ledger.tag_bits += TAG_BITS
    return ledger


class Endpoint:
    """Base for protocol roles.  ``send`` is wired up by the harness."""

    def __init__(self):
        self.rng: random.Random = random.Random(0)
        self._send: Callable[[Message], None] | None = None
        self.ident = CENTER

    def send(self, dst: int, bits: int, tag: str, payload: Any = None) -> None:
        if self._send is None:
            raise ProtocolViolation("endpoint is not attached to a network")
        self._send(Message(self.ident, dst, bits, tag, payload))

    def on_message(self, msg: Message) -> None:
        pass


class SiteEndpoint(Endpoint):
    def on_ballot(self, ballot) -> None:
        pass

    def up(self, bits: int, tag: str, payload: Any = None) -> None:
        self.send(CENTER, bits, tag, payload)


class CenterEndpoint(Endpoint):
    def on_query(self) -> int:
        return SENTINEL

    def stats(self) -> dict:
        return {}

    def broadcast(self, k: int, bits: int, tag: str, payload: Any = None) -> None:
        for j in range(k):
            self.send(j, bits, tag, payload)


@dataclass
class Protocol:
    center: CenterEndpoint
    sites: list[SiteEndpoint]
    name: str = "protocol"


@dataclass
class Transcript:
    k: int
    ledger: CommLedger
    events: list[StreamEvent]
    messages: list[tuple[int, Message]] = field(default_factory=list)
    declarations: dict[int, int] = field(default_factory=dict)
    audits: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def to_records(self) -> list[dict]:
        recs = [{"type": "meta", "k": self.k, **self.meta}]
        for ev in self.events:
            recs.append({"type": "event", "time": ev.time, "site": ev.site,
                         "ballot": sorted(ev.ballot) if isinstance(ev.ballot, frozenset)
                         else list(ev.ballot)})
        for t, msg in self.messages:
            recs.append({"type": "message", "time": t, "src": msg.src, "dst": msg.dst,
                         "bits": msg.bits, "tag": msg.tag})
        for t in sorted(self.declarations):
            recs.append({"type": "declaration", "time": t, "candidate": self.declarations[t]})
        for a in self.audits:
            recs.append({"type": "audit", **a})
        recs.append({"type": "ledger", "total_bits": self.ledger.total_bits,
                     "tag_bits": self.ledger.tag_bits, "messages": self.ledger.messages,
                     "bits_up": self.ledger.bits_up, "bits_down": self.ledger.bits_down,
                     **self.stats})
        return recs

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.to_records())


def load_transcript(text: str) -> Transcript:
    """Rebuild a transcript (events, declarations, ledger totals) from JSON lines."""
    recs = [json.loads(ln) for ln in text.splitlines() if ln.strip()]
    meta = next(r for r in recs if r["type"] == "meta")
    kind = meta.get("kind")
    k = meta["k"]
    events = []
    for r in recs:
        if r["type"] == "event":
            ballot = frozenset(r["ballot"]) if kind == APPROVAL else tuple(r["ballot"])
            events.append(StreamEvent(r["time"], r["site"], ballot))
    ledger = CommLedger(k)
    tr = Transcript(k, ledger, events, meta={x: y for x, y in meta.items() if x not in ("type", "k")})
    for r in recs:
        if r["type"] == "declaration":
            tr.declarations[r["time"]] = r["candidate"]
        elif r["type"] == "message":
            msg = Message(r["src"], r["dst"], r["bits"], r["tag"])
            tr.messages.append((r["time"], msg))
            charge(ledger, msg)
        elif r["type"] == "ledger":
            extra = {x: y for x, y in r.items() if x not in (
                "type", "total_bits", "tag_bits", "messages", "bits_up", "bits_down")}
            tr.stats.update(extra)
            if not tr.messages:
                ledger.bits_up = list(r["bits_up"])
                ledger.bits_down = list(r["bits_down"])
                ledger.messages = r["messages"]
                ledger.tag_bits = r["tag_bits"]
    return tr


def endpoint_seed(root: int, index: int) -> int:
    return int(np.random.SeedSequence([root, index + 1]).generate_state(1, np.uint64)[0])


def run_stream(events: Sequence[StreamEvent], protocol: Protocol, queries: Iterable[int],
               rng_seed: int = 0, record_messages: bool = True,
               meta: dict | None = None) -> Transcript:
    """Run ``protocol`` over ``events``; answer a query after each time in ``queries``."""
    k = len(protocol.sites)
    queries = set(queries)
    ledger = CommLedger(k)
    transcript = Transcript(k, ledger, list(events), meta=dict(meta or {}))
    pending: deque[Message] = deque()
    clock = [0]
    querying = [False]

    def send(msg: Message) -> None:
        if querying[0]:
            raise ProtocolViolation("center sent a message while answering a query")
        charge(ledger, msg)
        if record_messages:
            transcript.messages.append((clock[0], msg))
        pending.append(msg)

    center = protocol.center
    center.ident, center._send = CENTER, send
    center.rng = random.Random(endpoint_seed(rng_seed, k))
    for j, site in enumerate(protocol.sites):
        site.ident, site._send = j, send
        site.rng = random.Random(endpoint_seed(rng_seed, j))

    def answer(t: int) -> None:
        querying[0] = True
        try:
            transcript.declarations[t] = center.on_query()
        finally:
            querying[0] = False

    if 0 in queries:
        answer(0)
    last = 0
    for ev in events:
        if ev.time != last + 1:
            raise ValueError(f"event times must increase by one (got {ev.time} after {last})")
        if not 0 <= ev.site < k:
            raise ValueError(f"event {ev.time} assigned to missing site {ev.site}")
        last = clock[0] = ev.time
        protocol.sites[ev.site].on_ballot(ev.ballot)
        while pending:
            msg = pending.popleft()
            if msg.up:
                center.on_message(msg)
            else:
                protocol.sites[msg.dst].on_message(msg)
        if ev.time in queries:
            answer(ev.time)
    transcript.stats = dict(center.stats())
    return transcript


def query_center(center: CenterEndpoint) -> int:
    return center.on_query()


# -- reference protocols ----------------------------------------------------

class _NullSite(SiteEndpoint):
    pass


class _NullCenter(CenterEndpoint):
    pass


def null_protocol(k: int) -> Protocol:
    return Protocol(_NullCenter(), [_NullSite() for _ in range(k)], "null")


class _NaiveSite(SiteEndpoint):
    def __init__(self, bits: int):
        super().__init__()
        self.bits = bits

    def on_ballot(self, ballot) -> None:
        self.up(self.bits, "ballot", ballot)


class _NaiveCenter(CenterEndpoint):
    def __init__(self, m: int, rule: Rule):
        super().__init__()
        self.rule = rule
        self.tally = Tally.empty(m, rule.ballot_kind)

    def on_message(self, msg: Message) -> None:
        self.tally.add_ballot(msg.payload)

    def on_query(self) -> int:
        if self.tally.n == 0:
            return SENTINEL
        return min(winners_from_tally(self.tally, self.rule))


def naive_protocol(k: int, m: int, rule: Rule) -> Protocol:
    """Every site forwards every ballot; the center evaluates the rule exactly."""
    bits = ballot_bits(m, rule.ballot_kind)
    return Protocol(_NaiveCenter(m, rule), [_NaiveSite(bits) for _ in range(k)], "naive")
