import random

import pytest

from owpdb.database import Database, Schema
from owpdb.engine import prob_ground
from owpdb.errors import CapExceeded
from owpdb.openworld import MTPConstraint, OpenPDB, apply_completion, budget_from_mtp
from owpdb.oracle import (
    ThreeDMInstance,
    build_matching_reduction,
    matching_reduction_query,
    max_matching_size,
    mtp_upper_bruteforce,
    property_suites,
    verify_maxmatch,
)
from owpdb.query import Constant, parse_ucq
from owpdb.randgen import rand_3dm

# Frozen by hand: with one edge and weight 0.8 the query is "at least two of
# four independent 0.8 events": 1 - 0.2**4 - 4 * 0.8 * 0.2**3.
SINGLE_EDGE_VALUE = 0.9728


def single_edge_instance():
    return ThreeDMInstance(
        (Constant("X1"),),
        (Constant("Y1"),),
        (Constant("Z1"),),
        frozenset({(Constant("X1"), Constant("Y1"), Constant("Z1"))}),
        1,
    )


class TestBruteforce:
    def test_zero_budget_closed_world(self, coauthor_db, scientist_coauthor_query):
        g = OpenPDB(coauthor_db, 0.3)
        res = mtp_upper_bruteforce(g, MTPConstraint("CoA", 0.4), scientist_coauthor_query, budget=0)
        assert res.value == pytest.approx(0.94456, abs=1e-9)
        assert res.witness.added == frozenset()

    def test_two_tuples_symmetric(self):
        schema = Schema({"R": 1}, (Constant("A"), Constant("B")))
        g = OpenPDB(Database(schema), 0.5)
        res = mtp_upper_bruteforce(g, MTPConstraint("R", 0.9), parse_ucq("R(x)", schema), budget=2)
        assert res.value == pytest.approx(0.75)
        assert sorted(str(a) for a in res.witness.added) == ["R(A)", "R(B)"]

    def test_subset_cap_guard(self):
        schema = Schema({"R": 1}, tuple(Constant(f"C{i}") for i in range(20)))
        g = OpenPDB(Database(schema), 0.5)
        with pytest.raises(CapExceeded):
            mtp_upper_bruteforce(
                g, MTPConstraint("R", 0.9), parse_ucq("R(x)", schema), budget=10, cap_subsets=100
            )

    def test_witness_replay_reproduces_value(self):
        rng = random.Random(906)
        for _ in range(30):
            from owpdb.randgen import rand_mtp_instance
            from owpdb.greedy import set_query_prob

            g, c, q, _ = rand_mtp_instance(rng)
            res = mtp_upper_bruteforce(g, c, q)
            replay = set_query_prob(g, q, res.witness.added)
            assert replay == pytest.approx(res.value, abs=1e-12)

    def test_unsafe_query_falls_back_to_ground(self):
        arities = {"R": 1, "S": 2, "T": 1}
        schema = Schema(arities, (Constant("A"), Constant("B")))
        db = Database(schema, {"R": {("A",): 0.5}, "T": {("B",): 0.5}})
        g = OpenPDB(db, 0.5)
        q = parse_ucq("R(x), S(x, y), T(y)", arities)
        res = mtp_upper_bruteforce(g, MTPConstraint("S", 0.4), q)
        assert "unsafe-query-ground-evaluation" in res.warnings
        # replaying the witness against the ground oracle reproduces the value
        replay = prob_ground(q, apply_completion(g, res.witness))
        assert replay == pytest.approx(res.value, abs=1e-12)


class TestMatchingReduction:
    def test_gadget_query_is_safe_but_inverted(self):
        from owpdb.engine import is_safe
        from owpdb.query import is_inversion_free

        q = matching_reduction_query()
        assert is_safe(q)
        assert not is_inversion_free(q)

    def test_single_edge_value(self):
        g, c, q = build_matching_reduction(single_edge_instance(), 0.8)
        assert budget_from_mtp(g, c).max_added == 1
        res = mtp_upper_bruteforce(g, c, q)
        assert res.value == pytest.approx(SINGLE_EDGE_VALUE, abs=1e-9)
        assert [str(a) for a in res.witness.sorted_atoms(g.schema)] == ["R(X1, Y1, Z1)"]

    def test_zero_budget_has_no_edge_contribution(self):
        inst = ThreeDMInstance(
            single_edge_instance().x_nodes,
            single_edge_instance().y_nodes,
            single_edge_instance().z_nodes,
            single_edge_instance().hyperedges,
            0,
        )
        g, c, q = build_matching_reduction(inst, 0.8)
        res = mtp_upper_bruteforce(g, c, q)
        # only the pairwise marked-node disjuncts can fire: at least 2 of 3
        p = 0.8
        expected = 3 * p * p * (1 - p) + p**3
        assert res.value == pytest.approx(expected, abs=1e-9)

    def test_two_disjoint_edges_both_picked(self):
        xs = (Constant("X1"), Constant("X2"))
        ys = (Constant("Y1"), Constant("Y2"))
        zs = (Constant("Z1"), Constant("Z2"))
        edges = frozenset(
            {(xs[0], ys[0], zs[0]), (xs[1], ys[1], zs[1])}
        )
        inst = ThreeDMInstance(xs, ys, zs, edges, 2)
        g, c, q = build_matching_reduction(inst, 0.8)
        res = mtp_upper_bruteforce(g, c, q)
        assert len(res.witness.added) == 2
        single = mtp_upper_bruteforce(g, c, q, budget=1).value
        assert res.value > single + 1e-9

    def test_max_matching_size(self):
        xs = (Constant("X1"), Constant("X2"))
        ys = (Constant("Y1"), Constant("Y2"))
        zs = (Constant("Z1"), Constant("Z2"))
        edges = frozenset(
            {
                (xs[0], ys[0], zs[0]),
                (xs[0], ys[1], zs[1]),
                (xs[1], ys[1], zs[1]),
            }
        )
        assert max_matching_size(ThreeDMInstance(xs, ys, zs, edges, 1)) == 2


class TestVerifyMaxmatch:
    def test_perfect_matching_instance(self):
        xs = tuple(Constant(f"X{i}") for i in "123")
        ys = tuple(Constant(f"Y{i}") for i in "123")
        zs = tuple(Constant(f"Z{i}") for i in "123")
        edges = frozenset({(xs[i], ys[i], zs[i]) for i in range(3)})
        report = verify_maxmatch(ThreeDMInstance(xs, ys, zs, edges, 3))
        assert report.has_matching
        assert report.optimal_choices_are_matchings
        assert report.swap_comparison_ok
        assert report.ok

    def test_no_matching_of_requested_size(self):
        xs = tuple(Constant(f"X{i}") for i in "12")
        ys = tuple(Constant(f"Y{i}") for i in "12")
        zs = tuple(Constant(f"Z{i}") for i in "12")
        # both edges share the same x node: max matching is 1, ask for 2
        edges = frozenset({(xs[0], ys[0], zs[0]), (xs[0], ys[1], zs[1])})
        report = verify_maxmatch(ThreeDMInstance(xs, ys, zs, edges, 2))
        assert not report.has_matching
        assert report.optimum_drops_without_matching
        assert report.ok

    def test_random_instances(self):
        rng = random.Random(404)
        for _ in range(6):
            report = verify_maxmatch(rand_3dm(rng))
            assert report.ok, report.render()


class TestPropertySuites:
    def test_fixed_seed_reproduces_report(self):
        a = property_suites(17, 4)
        b = property_suites(17, 4)
        assert a.render() == b.render()

    def test_zero_trials_empty_report(self):
        report = property_suites(17, 0)
        assert report.suites == ()
        assert report.render() == ""

    def test_default_run_passes(self):
        report = property_suites(5, 6)
        assert report.passed, report.render()
