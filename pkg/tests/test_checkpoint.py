import math
from fractions import Fraction

from votemon.audit import audit_declarations
from votemon.checkpoint import checkpoint_bound, checkpoint_lambda, largest_index, should_fire
from votemon.election import Rule
from votemon.harness import StreamEvent, run_stream
from votemon.trackers import TrackerConfig, make_protocol
from votemon.workloads import AssignmentPolicy, GeneratorSpec, generate


def test_first_arrival_fires_index_zero():
    assert should_fire(0, None, 0.1) is None
    assert should_fire(1, None, 0.1) == 0


def test_jump_skips_to_largest_index():
    assert should_fire(Fraction(121, 100), 0, Fraction(1, 10)) == 2
    assert should_fire(1.21, 0, 0.1) == 2
    assert should_fire(1.2, 0, 0.1) == 1


def test_static_estimate_never_refires():
    assert should_fire(5, largest_index(5, 0.1), 0.1) is None


def test_largest_index_matches_exact_powers():
    lam = Fraction(1, 120)
    for n in (1, 2, 7, 100, 9999, 10**4):
        i = largest_index(n, lam)
        assert (1 + lam) ** i <= n < (1 + lam) ** (i + 1)


def test_lambda_is_a_twelfth_of_eps():
    assert checkpoint_lambda(0.12) == Fraction(1, 100)


def _run(rule, eps, n, k=4, m=3, seed=0):
    spec = GeneratorSpec("uniform_impartial", n=n, m=m, ballot_kind=rule.ballot_kind, seed=seed,
                         t=rule.t)
    events = generate(spec, AssignmentPolicy("uniform_random", k, seed))
    proto = make_protocol(TrackerConfig(rule, "checkpoint", eps), k, m)
    return events, run_stream(events, proto, range(1, n + 1), record_messages=False)


def test_checkpoint_count_within_closed_form():
    for eps in (0.1, 0.25):
        _, tr = _run(Rule("plurality"), eps, 3000)
        assert tr.stats["checkpoints"] <= 1 + math.log(3000) / math.log1p(eps / 12)
        assert tr.stats["checkpoints"] <= checkpoint_bound(3000, eps, 1 + eps / 12)


def test_declarations_change_only_at_checkpoints():
    events, tr = _run(Rule("borda"), 0.25, 600)
    changes = sum(1 for t in range(2, 601) if tr.declarations[t] != tr.declarations[t - 1])
    assert changes <= tr.stats["checkpoints"]


def test_stale_declaration_still_passes():
    a, b = frozenset({0}), frozenset({1})
    events = [StreamEvent(i + 1, 0, x) for i, x in enumerate([a, a, b, a, b])]
    proto = make_protocol(TrackerConfig(Rule("plurality"), "checkpoint", 0.5), 1, 2)
    tr = run_stream(events, proto, [4, 5])
    assert tr.declarations == {4: 0, 5: 0}
    summary = audit_declarations(events, tr.declarations, Rule("plurality"), 2, 0.5, "exact")
    assert summary.failures == 0 and summary.queries == 2


def test_every_query_passes_on_small_streams():
    for name in ("plurality", "borda", "copeland", "cup", "bucklin", "runoff"):
        rule = Rule(name)
        events, tr = _run(rule, 0.25, 40, k=3, m=3, seed=len(name))
        summary = audit_declarations(events, tr.declarations, rule, 3, 0.25, "both")
        assert summary.failures == 0 and summary.unknowns == 0, name
