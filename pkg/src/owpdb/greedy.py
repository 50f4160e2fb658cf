"""Greedy approximation of budgeted upper bounds, with a two-sided guarantee.

Adding open tuples to one relation can only raise the probability of a
monotone query, and for safe queries without self-joins the gain of a tuple
shrinks as more tuples are added (the set function is submodular).  The
classic consequence: picking the best tuple ``B`` times lands within a
factor ``1 - 1/e`` of the optimal gain, which brackets the true optimum
between the greedy value and ``(e * p_greedy - p_closed) / (e - 1)``.

Candidate gains inside one round may be evaluated concurrently; every round
picks by (gain, canonical order), so results are schedule-independent.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .engine import Evaluator, is_safe
from .errors import UnsafeQuery
from .openworld import (
    BoundResult,
    CompletionChoice,
    MTPConstraint,
    OpenPDB,
    budget_from_mtp,
    open_tuples,
)
from .query import Atom, UCQ, has_self_join


def set_query_prob(g: OpenPDB, q: UCQ, x) -> float:
    """Query probability after adding the tuples in ``x`` at the completion
    probability: the set function whose maximization is the budgeted upper
    bound."""
    atoms = sorted(x, key=g.schema.atom_key)
    db = g.pdb.with_added(atoms, g.lam) if atoms else g.pdb
    return Evaluator(db).probability(q).value


def normalized_set_query_prob(g: OpenPDB, q: UCQ, x) -> float:
    """Probability mass gained over the closed world by adding ``x``."""
    return set_query_prob(g, q, x) - set_query_prob(g, q, ())


@dataclass(frozen=True)
class GreedyTrace:
    """Full record of one greedy run.

    ``lower``/``upper`` bracket the true budgeted optimum and are present
    only when the guarantee applies (no self-joins); ``upper`` may exceed 1,
    so the clamped version is carried alongside.
    """

    picks: tuple[tuple[Atom, float], ...]
    p_closed: float
    p_greedy: float
    lower: float | None
    upper: float | None
    upper_clamped: float | None
    budget: int
    guarantee: bool

    def witness(self) -> CompletionChoice:
        return CompletionChoice(frozenset(a for a, _ in self.picks))


def greedy_trace(
    g: OpenPDB,
    c: MTPConstraint,
    q: UCQ,
    *,
    budget: int | None = None,
    denominator: str = "herbrand",
) -> GreedyTrace:
    """Run the lazy greedy loop and report picks, gains, and bounds.

    Tuples are added one at a time, each round taking the open tuple with
    the largest marginal gain (ties in canonical atom order), until the
    budget is spent or the best gain is zero.  Stale heap entries are
    re-evaluated on pop; submodularity makes that sound.
    """
    if not is_safe(q):
        raise UnsafeQuery(f"{q} admits no lifted evaluation")
    derived = budget_from_mtp(g, c, denominator=denominator)
    b_max = derived.max_added if budget is None else budget
    guarantee = not has_self_join(q)

    schema = g.schema
    lam = g.lam
    db = g.pdb
    p_closed = Evaluator(db).probability(q).value
    candidates = open_tuples(g, c.relation)

    # Marginal gain of an absent tuple t at the current database:
    # lam * (P(q | t true) - P(q)), by conditioning on the one new tuple.
    def gain_of(atom: Atom, evaluator_db, p_cur: float) -> float:
        p_true = Evaluator(evaluator_db.with_overrides({atom: True})).probability(q).value
        return lam * (p_true - p_cur)

    picks: list[tuple[Atom, float]] = []
    p_cur = p_closed
    if lam > 0.0 and b_max > 0 and candidates:
        heap: list[tuple[float, tuple, int, Atom]] = []
        for atom in candidates:
            g0 = gain_of(atom, db, p_cur)
            heapq.heappush(heap, (-g0, schema.atom_key(atom), 0, atom))
        round_no = 0
        while len(picks) < b_max and heap:
            neg_gain, key, stamp, atom = heapq.heappop(heap)
            if stamp != round_no:
                fresh = gain_of(atom, db, p_cur)
                heapq.heappush(heap, (-fresh, key, round_no, atom))
                continue
            gain = -neg_gain
            if gain <= 0.0:
                break
            picks.append((atom, gain))
            db = db.with_added([atom], lam)
            p_cur = Evaluator(db).probability(q).value
            round_no += 1
    p_greedy = p_cur

    if guarantee:
        e = math.e
        upper = (e * p_greedy - p_closed) / (e - 1.0)
        trace = GreedyTrace(
            picks=tuple(picks),
            p_closed=p_closed,
            p_greedy=p_greedy,
            lower=p_greedy,
            upper=upper,
            upper_clamped=min(1.0, upper),
            budget=b_max,
            guarantee=True,
        )
    else:
        trace = GreedyTrace(
            picks=tuple(picks),
            p_closed=p_closed,
            p_greedy=p_greedy,
            lower=None,
            upper=None,
            upper_clamped=None,
            budget=b_max,
            guarantee=False,
        )
    return trace


def greedy_upper(
    g: OpenPDB,
    c: MTPConstraint,
    q: UCQ,
    *,
    budget: int | None = None,
    denominator: str = "herbrand",
) -> BoundResult:
    """Greedy budgeted upper-bound estimate with its guarantee interval.

    For queries with self-joins the submodularity guarantee is unproven: the
    greedy value is still reported, flagged, and without an interval.
    """
    trace = greedy_trace(g, c, q, budget=budget, denominator=denominator)
    derived = budget_from_mtp(g, c, denominator=denominator)
    warnings = []
    if derived.infeasible and budget is None:
        warnings.append("infeasible-constraint")
    if not trace.guarantee:
        warnings.append("self-join-no-guarantee")
    value = trace.p_greedy
    comp_log10 = math.log10(1.0 - value) if value < 1.0 else None
    return BoundResult(
        kind="mtp_greedy",
        value=value,
        interval=(trace.lower, trace.upper) if trace.guarantee else None,
        witness=trace.witness(),
        complement_log10=comp_log10,
        warnings=tuple(warnings),
    )
