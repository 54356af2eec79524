import random

import pytest

from votemon.election import Election, Rule, ballot_space, evaluate_rule
from votemon.oracle import (
    NO, UNKNOWN, YES, InstanceTooLarge, budget, eps_winner_verdict, is_eps_winner_exact,
    is_eps_winner_witness,
)

import reference

A, B, C = 0, 1, 2
ALL_RULES = [Rule("plurality"), Rule("t-approval", t=2), Rule("approval"), Rule("borda"),
             Rule("cup"), Rule("copeland"), Rule("condorcet"), Rule("runoff"), Rule("bucklin")]


def table_prefix():
    return Election(2, "approval", tuple(frozenset({x}) for x in (A, A, B, A)))


def test_budget_is_exact_floor():
    assert budget(0.1, 30) == 3  # float 0.1*30 is 3.0000000000000004
    assert budget(0.3, 10) == 3
    assert budget(0.5, 4) == 2
    assert budget(0, 9) == 0


def test_table_example_under_both_tie_conventions():
    e, plur = table_prefix(), Rule("plurality")
    # the text's unique-winner reading: two extra b votes only tie
    assert not is_eps_winner_exact(e, B, 0.5, plur, strict=True)
    # with favourable ties a 3-3 tie already makes b a co-winner
    assert is_eps_winner_exact(e, B, 0.5, plur)
    assert not is_eps_winner_exact(e, B, 0.4, plur)


def test_witness_on_table_prefix():
    e, plur = table_prefix(), Rule("plurality")
    w = is_eps_winner_witness(e, A, 0.1, plur)
    assert w.status == YES and w.ballots == []
    assert not is_eps_winner_witness(e, B, 0.25, plur)


def test_winner_is_eps_winner_at_zero():
    e = Election(3, "ordinal", ((A, B, C), (A, C, B), (B, C, A)))
    for name in ("borda", "copeland", "cup", "runoff", "bucklin", "condorcet"):
        for c in evaluate_rule(e, Rule(name)):
            assert is_eps_winner_exact(e, c, 0, Rule(name))


def test_borda_single_addition():
    e = Election(3, "ordinal", ((B, A, C), (B, A, C)))
    assert is_eps_winner_exact(e, A, 0.5, Rule("borda"))
    assert eps_winner_verdict(e.tally(), A, 1, Rule("borda"))[0] == YES


def test_exact_refuses_large_instances():
    e = Election(5, "ordinal", ((0, 1, 2, 3, 4),) * 3)
    with pytest.raises(InstanceTooLarge):
        is_eps_winner_exact(e, 1, 0.5, Rule("borda"))
    big_q = Election(3, "ordinal", ((0, 1, 2),) * 50)
    with pytest.raises(InstanceTooLarge):
        is_eps_winner_exact(big_q, 1, 0.1, Rule("borda"))


def test_exact_is_monotone_in_eps():
    rng = random.Random(11)
    for _ in range(60):
        rule = rng.choice(ALL_RULES)
        m = 4
        space = ballot_space(m, rule)
        e = Election(m, rule.ballot_kind, tuple(rng.choice(space) for _ in range(rng.randint(1, 8))))
        c = rng.randrange(m)
        hits = [is_eps_winner_exact(e, c, eps, rule) for eps in (0, 0.2, 0.4)]
        assert hits == sorted(hits)


@pytest.mark.parametrize("rule", ALL_RULES, ids=str)
def test_verdicts_are_sound_against_exhaustion(rule):
    rng = random.Random(str(rule))
    for _ in range(40):
        m = rng.choice([3, 4]) if rule.name != "t-approval" else 4
        space = ballot_space(m, rule)
        n = rng.randint(1, 10)
        e = Election(m, rule.ballot_kind, tuple(rng.choice(space) for _ in range(n)))
        c = rng.randrange(m)
        eps = rng.choice([0.1, 0.25, 0.3])
        truth = is_eps_winner_exact(e, c, eps, rule)
        status, ballots = eps_winner_verdict(e.tally(), c, budget(eps, n), rule)
        if status == YES:
            assert truth and len(ballots) <= budget(eps, n)
            assert c in evaluate_rule(e.extended(ballots), rule)
        elif status == NO:
            assert not truth


@pytest.mark.parametrize("rule", ALL_RULES, ids=str)
def test_exact_matches_count_vector_enumeration(rule):
    rng = random.Random(7 + len(str(rule)))
    for _ in range(15):
        m = 4 if rule.name == "t-approval" else rng.choice([2, 3])
        space = ballot_space(m, rule)
        n = rng.randint(1, 8)
        ballots = [rng.choice(space) for _ in range(n)]
        e = Election(m, rule.ballot_kind, tuple(ballots))
        c = rng.randrange(m)
        q = budget(0.3, n)
        assert is_eps_winner_exact(e, c, 0.3, rule) == reference.can_win(
            rule.name, ballots, m, c, q, rule.t)


def test_decided_rules_never_unknown():
    rng = random.Random(3)
    for rule in (Rule("plurality"), Rule("approval"), Rule("t-approval", t=2), Rule("cup"),
                 Rule("runoff")):
        for _ in range(40):
            m = 4
            space = ballot_space(m, rule)
            e = Election(m, rule.ballot_kind, tuple(rng.choice(space) for _ in range(9)))
            status, _ = eps_winner_verdict(e.tally(), rng.randrange(m), rng.randint(0, 3), rule)
            assert status in (YES, NO)


def test_verdict_scales_to_large_elections():
    rng = random.Random(4)
    space = ballot_space(8, Rule("borda"))
    e = Election(8, "ordinal", tuple(rng.choice(space) for _ in range(3000)))
    for name in ("borda", "copeland", "bucklin", "cup", "runoff", "condorcet"):
        status, ballots = eps_winner_verdict(e.tally(), 0, 300, Rule(name))
        assert status in (YES, NO, UNKNOWN)
        if status == YES:
            assert 0 in evaluate_rule(e.extended(ballots), Rule(name))
