"""Check declared candidates against the election prefix at each query time."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .election import Election, Rule, Tally
from .harness import SENTINEL, StreamEvent, Transcript
from .oracle import (
    NO, UNKNOWN, YES, budget, eps_winner_verdict, exact_in_bounds, is_eps_winner_exact,
)

ORACLE_MODES = ("exact", "witness", "both")
PASS, FAIL = "pass", "fail"


class OracleDisagreement(AssertionError):
    """The witness search and the exhaustive oracle contradicted each other."""


@dataclass
class AuditSummary:
    queries: int = 0
    failures: int = 0
    unknowns: int = 0
    records: list[dict] = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        return self.failures / self.queries if self.queries else 0.0

    @property
    def unknown_rate(self) -> float:
        return self.unknowns / self.queries if self.queries else 0.0

    def as_dict(self) -> dict:
        return {"queries": self.queries, "failures": self.failures, "unknowns": self.unknowns,
                "failure_rate": self.failure_rate, "witness_unknown_rate": self.unknown_rate}


def judge(tally: Tally, election: Election | None, c: int, eps, rule: Rule,
          mode: str = "witness") -> tuple[str, str]:
    """``(outcome, method)`` for one declaration; outcome is pass, fail or unknown."""
    if mode not in ORACLE_MODES:
        raise ValueError(f"oracle mode must be one of {ORACLE_MODES}")
    if c == SENTINEL or not 0 <= c < tally.m:
        return FAIL, "invalid"
    q = budget(eps, tally.n)
    exact_ok = election is not None and exact_in_bounds(tally.m, rule, q)
    if mode in ("exact", "both") and exact_ok:
        truth = is_eps_winner_exact(election, c, eps, rule)
        if mode == "both":
            status, _ = eps_winner_verdict(tally, c, q, rule)
            if (status == YES and not truth) or (status == NO and truth):
                raise OracleDisagreement(
                    f"{rule}: witness said {status}, exhaustive said {truth} for {c}")
        return (PASS if truth else FAIL), "exact"
    status, _ = eps_winner_verdict(tally, c, q, rule)
    if status == YES:
        return PASS, "witness"
    if status == NO:
        return FAIL, "refuted"
    return UNKNOWN, "witness"


def audit_declarations(events: Sequence[StreamEvent], declarations: dict[int, int],
                       rule: Rule, m: int, eps, mode: str = "witness") -> AuditSummary:
    """Audit every declaration made after at least one ballot arrived."""
    kind = rule.ballot_kind
    times = sorted(t for t in declarations if t > 0)
    summary = AuditSummary()
    tally = Tally.empty(m, kind)
    done = 0
    need_election = mode != "witness"
    for t in times:
        if t > len(events):
            raise ValueError(f"declaration at time {t} but the stream has {len(events)} events")
        if t > done:
            tally = tally + Tally.from_ballots(m, kind, [e.ballot for e in events[done:t]])
            done = t
        election = None
        if need_election and exact_in_bounds(m, rule, budget(eps, t)):
            election = Election(m, kind, tuple(e.ballot for e in events[:t]))
        c = declarations[t]
        outcome, method = judge(tally, election, c, eps, rule, mode)
        summary.queries += 1
        summary.failures += outcome == FAIL
        summary.unknowns += outcome == UNKNOWN
        summary.records.append({"time": t, "candidate": c, "outcome": outcome, "method": method})
    return summary


def _tuplify(tree):
    return tree if isinstance(tree, int) else tuple(_tuplify(x) for x in tree)


def audit_transcript(transcript: Transcript, mode: str = "witness") -> AuditSummary:
    """Re-audit a transcript using the rule, roster size and eps stored in its metadata."""
    meta = transcript.meta
    try:
        rule = Rule.parse(meta["rule"])
        if meta.get("tree") is not None:
            rule = Rule(rule.name, t=rule.t, tree=_tuplify(meta["tree"]))
        m, eps = int(meta["m"]), meta["eps"]
    except KeyError as exc:
        raise ValueError(f"transcript metadata lacks {exc.args[0]!r}") from exc
    return audit_declarations(transcript.events, transcript.declarations, rule, m, eps, mode)
