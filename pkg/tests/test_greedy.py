import math
import random

import pytest

from owpdb.database import Database, Schema
from owpdb.engine import prob_ground
from owpdb.greedy import greedy_trace, greedy_upper, normalized_set_query_prob, set_query_prob
from owpdb.openworld import MTPConstraint, OpenPDB, interval_unconstrained, open_tuples
from owpdb.oracle import mtp_upper_bruteforce
from owpdb.query import Constant, parse_ucq
from owpdb.randgen import rand_mtp_instance


def empty_unary(n=2, lam=0.5):
    schema = Schema({"R": 1}, tuple(Constant(c) for c in "ABCDEF"[:n]))
    return OpenPDB(Database(schema), lam)


class TestSetFunction:
    def test_empty_set_is_closed_world(self, coauthor_db, scientist_coauthor_query):
        from owpdb.engine import prob_lifted

        g = OpenPDB(coauthor_db, 0.3)
        assert set_query_prob(g, scientist_coauthor_query, set()) == prob_lifted(
            scientist_coauthor_query, coauthor_db
        )

    def test_all_open_tuples_is_relation_completion(
        self, coauthor_db, scientist_coauthor_query
    ):
        g = OpenPDB(coauthor_db, 0.3)
        full = set_query_prob(g, scientist_coauthor_query, open_tuples(g, "CoA"))
        # S is fully stored, so this is the open-world upper bound
        assert full == pytest.approx(
            interval_unconstrained(g, scientist_coauthor_query).interval[1], abs=1e-12
        )

    def test_zero_lambda_makes_it_constant(self, coauthor_db, scientist_coauthor_query):
        g = OpenPDB(coauthor_db, 0.0)
        opens = open_tuples(g, "CoA")
        values = {set_query_prob(g, scientist_coauthor_query, opens[:k]) for k in range(4)}
        assert len(values) == 1

    def test_normalized_zero_at_empty(self, coauthor_db, scientist_coauthor_query):
        g = OpenPDB(coauthor_db, 0.3)
        assert normalized_set_query_prob(g, scientist_coauthor_query, set()) == 0.0

    def test_normalized_nonnegative(self):
        rng = random.Random(55)
        for _ in range(40):
            g, c, q, _ = rand_mtp_instance(rng, self_join_free=True)
            opens = open_tuples(g, c.relation)
            picked = rng.sample(opens, rng.randint(0, len(opens)))
            assert normalized_set_query_prob(g, q, picked) >= -1e-12

    def test_singleton_gain_matches_ground_difference(self, coauthor_db, scientist_coauthor_query):
        g = OpenPDB(coauthor_db, 0.3)
        t = open_tuples(g, "CoA")[0]
        gain = normalized_set_query_prob(g, scientist_coauthor_query, {t})
        oracle = prob_ground(
            scientist_coauthor_query, coauthor_db.with_added([t], 0.3)
        ) - prob_ground(scientist_coauthor_query, coauthor_db)
        assert gain == pytest.approx(oracle, abs=1e-9)


class TestGreedy:
    def test_zero_budget_collapses_interval(self, coauthor_db, scientist_coauthor_query):
        g = OpenPDB(coauthor_db, 0.3)
        res = greedy_upper(g, MTPConstraint("CoA", 0.4), scientist_coauthor_query, budget=0)
        lo, hi = res.interval
        assert res.value == lo
        assert hi == pytest.approx(lo, abs=1e-12)

    def test_single_pick_bound_arithmetic(self):
        g = empty_unary(2, lam=0.5)
        q = parse_ucq("R(x)", g.schema)
        res = greedy_upper(g, MTPConstraint("R", 0.4), q, budget=1)
        assert res.value == pytest.approx(0.5)
        e = math.e
        assert res.interval[1] == pytest.approx((e * 0.5 - 0.0) / (e - 1), abs=1e-12)
        # the true optimum (0.5) lies inside the reported interval
        assert res.interval[0] <= 0.5 <= res.interval[1]

    def test_trace_gains_match_full_reevaluation(self):
        rng = random.Random(60)
        checked = 0
        while checked < 25:
            g, c, q, _ = rand_mtp_instance(rng, self_join_free=True)
            trace = greedy_trace(g, c, q)
            if not trace.picks:
                continue
            prefix = []
            for atom, gain in trace.picks:
                before = set_query_prob(g, q, prefix)
                prefix.append(atom)
                after = set_query_prob(g, q, prefix)
                assert gain == pytest.approx(after - before, abs=1e-9)
            checked += 1

    def test_gains_non_increasing(self):
        rng = random.Random(61)
        for _ in range(40):
            g, c, q, _ = rand_mtp_instance(rng, self_join_free=True)
            gains = [gain for _, gain in greedy_trace(g, c, q).picks]
            assert all(gains[i] >= gains[i + 1] - 1e-12 for i in range(len(gains) - 1))

    def test_oracle_inside_interval_and_guarantee(self):
        rng = random.Random(62)
        for _ in range(60):
            g, c, q, _ = rand_mtp_instance(rng, self_join_free=True)
            trace = greedy_trace(g, c, q)
            opt = mtp_upper_bruteforce(g, c, q).value
            assert trace.lower - 1e-9 <= opt <= trace.upper + 1e-9
            assert (trace.p_greedy - trace.p_closed) >= (1 - 1 / math.e) * (
                opt - trace.p_closed
            ) - 1e-9

    def test_self_join_runs_with_warning_and_no_interval(self):
        schema = Schema({"R": 2}, (Constant("A"), Constant("B")))
        db = Database(schema, {"R": {("A", "B"): 0.5}})
        g = OpenPDB(db, 0.5)
        q = parse_ucq("R(x, y) | R(u, v)", schema)  # repeated predicate, still safe
        res = greedy_upper(g, MTPConstraint("R", 0.9), q)
        assert "self-join-no-guarantee" in res.warnings
        assert res.interval is None
        assert 0.0 <= res.value <= 1.0

    def test_upper_can_exceed_one_and_is_reported_clamped(self):
        g = empty_unary(4, lam=0.9)
        q = parse_ucq("R(x)", g.schema)
        trace = greedy_trace(g, MTPConstraint("R", 0.9), q)
        assert trace.upper > 1.0
        assert trace.upper_clamped == 1.0


class TestSubmodularity:
    def test_diminishing_gains(self):
        rng = random.Random(63)
        checked = 0
        while checked < 150:
            g, c, q, _ = rand_mtp_instance(rng, self_join_free=True)
            opens = open_tuples(g, c.relation)
            if len(opens) < 2:
                continue
            free = rng.choice(opens)
            rest = [a for a in opens if a != free]
            y = rng.sample(rest, rng.randint(0, len(rest)))
            x = [a for a in y if rng.random() < 0.5]
            gain_small = set_query_prob(g, q, x + [free]) - set_query_prob(g, q, x)
            gain_large = set_query_prob(g, q, y + [free]) - set_query_prob(g, q, y)
            assert gain_small >= gain_large - 1e-12
            checked += 1

    def test_monotone_in_the_choice_set(self):
        rng = random.Random(64)
        checked = 0
        while checked < 60:
            g, c, q, _ = rand_mtp_instance(rng, self_join_free=True)
            opens = open_tuples(g, c.relation)
            if not opens:
                continue
            y = rng.sample(opens, rng.randint(1, len(opens)))
            x = [a for a in y if rng.random() < 0.5]
            assert set_query_prob(g, q, x) <= set_query_prob(g, q, y) + 1e-12
            checked += 1
