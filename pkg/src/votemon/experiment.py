"""Grid experiments: seeded trials, audits, CSV reports and JSONL transcripts.

Config files are JSON objects::

    {
      "seed": 7, "trials": 3, "oracle": "witness",
      "cells": [
        {"rule": ["plurality", "borda"], "technique": "checkpoint",
         "eps": 0.1, "k": [4, 16], "m": 4, "n": 10000,
         "generator": {"kind": "uniform_impartial"},
         "assignment": {"kind": "uniform_random"},
         "queries": "default"}
      ]
    }

List-valued grid keys expand into their cartesian product, in key order.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import Any

import numpy as np

from .audit import ORACLE_MODES, audit_declarations
from .election import ElectionError, Rule
from .harness import run_stream, words
from .trackers import TrackerConfig, make_protocol
from .workloads import AssignmentPolicy, GeneratorSpec, flip_phase_ends, generate

GRID_KEYS = ("rule", "technique", "eps", "delta", "k", "m", "n")
CELL_DEFAULTS = {"technique": "checkpoint", "eps": 0.1, "delta": 0.1, "k": 4, "m": 4,
                 "n": 1000, "queries": "default", "c_p": 4.0}


def _tuplify(tree):
    return tree if isinstance(tree, int) else tuple(_tuplify(x) for x in tree)


@dataclass
class ReportRow:
    cell: int
    trial: int
    rule: str
    technique: str
    eps: float
    delta: float
    k: int
    m: int
    n: int
    generator: str
    assignment: str
    seed: int
    comm_bits: int = 0
    comm_bits_tagged: int = 0
    comm_words: int = 0
    n_ref: int = 0
    message_count: int = 0
    checkpoint_count: int = 0
    budget_violations: int = 0
    queries: int = 0
    failures: int = 0
    failure_rate: float = 0.0
    unknowns: int = 0
    witness_unknown_rate: float = 0.0
    error: str = ""
    runtime_ms: float = field(default=0.0, compare=False)


# wall time varies run to run, so it lives in timing.csv to keep report.csv reproducible
REPORT_HEADER = [f.name for f in fields(ReportRow) if f.name != "runtime_ms"]


def expand_cells(config: dict) -> list[dict]:
    cells = []
    for raw in config.get("cells", []):
        base = {**CELL_DEFAULTS, **raw}
        grid = [(key, base[key]) for key in GRID_KEYS if isinstance(base.get(key), list)]
        keys = [k for k, _ in grid]
        for combo in itertools.product(*[v for _, v in grid]):
            cells.append({**base, **dict(zip(keys, combo))})
    return cells


def query_schedule(spec: str | list, n: int, phase_ends: list[int] | None = None) -> list[int]:
    """Powers of two up to n, plus n and any phase ends; or an explicit list, or none."""
    if spec in (None, "none"):
        return []
    if isinstance(spec, list):
        return sorted({int(t) for t in spec if 0 < int(t) <= n})
    if spec != "default":
        raise ValueError(f"unknown query schedule {spec!r}")
    times = {1 << i for i in range(max(1, n.bit_length())) if 1 << i <= n}
    if n:
        times.add(n)
    times.update(phase_ends or [])
    return sorted(times)


def trial_seeds(root: int, cell: int, trial: int) -> tuple[int, int]:
    state = np.random.SeedSequence([root, cell, trial]).generate_state(2, np.uint32)
    return int(state[0]), int(state[1])


def _rule_of(cell: dict) -> Rule:
    rule = Rule.parse(str(cell["rule"]))
    if "t" in cell and cell["t"] is not None:
        rule = Rule(rule.name, t=int(cell["t"]))
    if cell.get("tree") is not None:
        rule = Rule(rule.name, t=rule.t, tree=_tuplify(cell["tree"]))
    return rule


def run_trial(cell_index: int, cell: dict, trial: int, root: int, oracle: str,
              record_messages: bool = True):
    """One seeded trial; returns ``(ReportRow, transcript or None)``."""
    started = time.perf_counter()
    row, transcript = _trial(cell_index, cell, trial, root, oracle, record_messages)
    row.runtime_ms = round((time.perf_counter() - started) * 1000, 1)
    return row, transcript


def _trial(cell_index, cell, trial, root, oracle, record_messages):
    gen_seed, proto_seed = trial_seeds(root, cell_index, trial)
    gen_raw = dict(cell.get("generator") or {"kind": "uniform_impartial"})
    row = ReportRow(cell_index, trial, str(cell["rule"]), cell["technique"], float(cell["eps"]),
                    float(cell["delta"]), int(cell["k"]), int(cell["m"]), int(cell["n"]),
                    gen_raw.get("kind", "?"), (cell.get("assignment") or {}).get("kind", "round_robin"),
                    gen_seed)
    try:
        rule = _rule_of(cell)
        row.rule = str(rule)
        technique = cell["technique"]
        if technique == "checkpoint" and rule.name == "runoff":
            technique = "hybrid"
        cfg = TrackerConfig(rule, technique, float(cell["eps"]), float(cell["delta"]),
                            float(cell.get("c_p", 4.0)))
        m, k = int(cell["m"]), int(cell["k"])
        cfg.validate(m)
        gen_raw.setdefault("seed", gen_seed)
        gen_raw.setdefault("m", m)
        gen_raw.setdefault("n", int(cell["n"]))
        gen_raw.setdefault("ballot_kind", rule.ballot_kind)
        if rule.name == "t-approval":
            gen_raw.setdefault("t", rule.t)
        if gen_raw.get("kind") == "adversarial_flip":
            gen_raw.setdefault("k", k)
            gen_raw.setdefault("eps", float(cell["eps"]))
        spec = GeneratorSpec.from_dict(gen_raw)
        if spec.ballot_kind != rule.ballot_kind:
            raise ElectionError(f"{rule} needs {rule.ballot_kind} ballots")
        if spec.kind == "adversarial_flip":
            if spec.k != k:
                raise ValueError("adversarial_flip k must equal the cell's k")
            events, phase_ends = generate(spec), flip_phase_ends(spec)
            row.assignment = "per_generator"
        else:
            pol_raw = {"kind": "round_robin", **(cell.get("assignment") or {})}
            pol_raw.setdefault("seed", gen_seed + 1)
            events = generate(spec, AssignmentPolicy(pol_raw["kind"], k, int(pol_raw["seed"])))
            phase_ends = None
        n = len(events)
        row.n = n
        queries = query_schedule(cell.get("queries", "default"), n, phase_ends)
        meta = {"rule": str(rule), "m": m, "kind": rule.ballot_kind, "eps": float(cell["eps"]),
                "technique": technique, "cell": cell_index, "trial": trial, "seed": proto_seed}
        if rule.tree is not None:
            meta["tree"] = rule.tree
        protocol = make_protocol(cfg, k, m)
        transcript = run_stream(events, protocol, queries, rng_seed=proto_seed,
                                record_messages=record_messages, meta=meta)
        summary = audit_declarations(events, transcript.declarations, rule, m,
                                     float(cell["eps"]), oracle)
        transcript.audits = summary.records
        ledger = transcript.ledger
        row.comm_bits = ledger.total_bits
        row.comm_bits_tagged = ledger.total_bits_with_tags
        row.n_ref = max(n, 2)
        row.comm_words = words(ledger.total_bits, row.n_ref)
        row.message_count = ledger.messages
        row.checkpoint_count = int(transcript.stats.get("checkpoints", 0))
        row.budget_violations = int(transcript.stats.get("budget_violations", 0))
        row.queries = summary.queries
        row.failures = summary.failures
        row.failure_rate = round(summary.failure_rate, 6)
        row.unknowns = summary.unknowns
        row.witness_unknown_rate = round(summary.unknown_rate, 6)
        return row, transcript
    except (ElectionError, ValueError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
        return row, None


def _job(args):
    return run_trial(*args)


def run_experiment(config: dict, trials: int | None = None, seed: int | None = None,
                   oracle: str | None = None, workers: int = 1,
                   keep_transcripts: bool = True) -> tuple[list[ReportRow], list]:
    """Run every (cell, trial); rows come back ordered by (cell, trial)."""
    trials = int(trials if trials is not None else config.get("trials", 1))
    seed = int(seed if seed is not None else config.get("seed", 0))
    oracle = oracle or config.get("oracle", "witness")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if oracle not in ORACLE_MODES:
        raise ValueError(f"oracle must be one of {ORACLE_MODES}")
    record = bool(config.get("record_messages", True))
    jobs = [(ci, cell, t, seed, oracle, record)
            for ci, cell in enumerate(expand_cells(config)) for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    rows = [r for r, _ in results]
    transcripts = [tr for _, tr in results] if keep_transcripts else []
    return rows, transcripts


def format_report(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_HEADER, lineterminator="\n",
                            extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(asdict(row))
    return buf.getvalue()


def write_outputs(out: Path, rows: list[ReportRow], transcripts: list) -> None:
    out = Path(out)
    (out / "transcripts").mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(format_report(rows))
    timing = ["cell,trial,runtime_ms"] + [f"{r.cell},{r.trial},{r.runtime_ms}" for r in rows]
    (out / "timing.csv").write_text("\n".join(timing) + "\n")
    for row, tr in zip(rows, transcripts):
        if tr is not None:
            name = f"cell{row.cell:03d}_trial{row.trial:04d}.jsonl"
            (out / "transcripts" / name).write_text(tr.dumps())


def load_config(path) -> dict[str, Any]:
    with open(path) as fh:
        config = json.load(fh)
    if not isinstance(config, dict) or "cells" not in config:
        raise ValueError("config must be a JSON object with a 'cells' list")
    return config
