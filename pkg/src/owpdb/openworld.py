"""Open-world completions, probability intervals, and mean-probability budgets.

An open database pairs a probabilistic database with a completion probability
``lam``: every absent atom may be assigned any probability up to ``lam``.
For monotone queries the unconstrained probability interval runs from the
closed-world value to the value of the full completion.  A mean-tuple-
probability bound on one relation converts into a discrete budget: the
number of tuples that can be added at ``lam`` without pushing the relation's
mean probability past the bound.

Everything here is pure and immutable; concurrent use is safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

from .database import Database, LambdaCompletionView, Schema
from .engine import prob_lifted_detail
from .errors import CompletionOverlap, SchemaError, UnknownPredicate
from .query import Atom, UCQ

# Slack absorbing float noise when a mean bound lands exactly on a budget
# boundary; exact multiples of ``lam`` resolve to the intended whole budget.
BUDGET_EPSILON = 1e-9


@dataclass(frozen=True)
class OpenPDB:
    """A probabilistic database together with its completion probability."""

    pdb: Database
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise SchemaError(f"completion probability {self.lam} outside [0, 1]")

    @property
    def schema(self) -> Schema:
        return self.pdb.schema


@dataclass(frozen=True, slots=True)
class MTPConstraint:
    """Strict upper bound on the mean tuple probability of one relation."""

    relation: str
    mean_bound: float

    def __post_init__(self):
        if not 0.0 < self.mean_bound <= 1.0:
            raise SchemaError(f"mean bound {self.mean_bound} outside (0, 1]")


@dataclass(frozen=True, slots=True)
class Budget:
    """Discrete completion budget derived from a mean constraint.

    ``infeasible`` flags the case where the existing tuple mass already
    violates the bound; the budget is then zero."""

    relation: str
    max_added: int
    infeasible: bool = False

    def __post_init__(self):
        if self.max_added < 0:
            raise SchemaError("budget must be non-negative")


@dataclass(frozen=True, slots=True)
class CompletionChoice:
    """The set of open tuples chosen to receive the completion probability."""

    added: frozenset[Atom]

    def sorted_atoms(self, schema: Schema) -> tuple[Atom, ...]:
        return tuple(sorted(self.added, key=schema.atom_key))


@dataclass(frozen=True)
class BoundResult:
    """A probability bound with its provenance.

    ``kind`` is one of ``closed``, ``open_upper``, ``mtp_exact``,
    ``mtp_greedy``, ``mtp_oracle``.  ``interval`` brackets the true value
    when the method only bounds it.  ``complement_log10`` reports values too
    close to 1 for their complement to survive in the value itself.
    """

    kind: str
    value: float
    interval: tuple[float, float] | None = None
    witness: CompletionChoice | None = None
    complement_log10: float | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.interval is not None:
            lo, hi = self.interval
            if not (lo <= self.value + 1e-12 and self.value <= hi + 1e-12):
                raise ValueError(
                    f"value {self.value} outside its interval [{lo}, {hi}]"
                )


def open_tuples(g: OpenPDB, rel: str) -> list[Atom]:
    """All ground atoms of ``rel`` absent from the database, in canonical
    (domain-order lexicographic) order."""
    schema = g.schema
    arity = schema.arity(rel)
    out: list[Atom] = []
    for combo in product(schema.domain, repeat=arity):
        args = tuple(c.name for c in combo)
        if not g.pdb.is_explicit(rel, args):
            out.append(Atom(rel, combo))
    return out


def apply_completion(g: OpenPDB, choice: CompletionChoice) -> Database:
    """The database extended with the chosen atoms at the completion
    probability.  Rejects overlaps with existing tuples."""
    for atom in choice.added:
        if not atom.is_ground():
            raise SchemaError(f"completion atom must be ground: {atom}")
        if g.pdb.is_explicit(atom.predicate, tuple(t.name for t in atom.args)):
            raise CompletionOverlap(f"{atom} is already present")
    return g.pdb.with_added(sorted(choice.added, key=g.schema.atom_key), g.lam)


def interval_unconstrained(g: OpenPDB, q: UCQ) -> BoundResult:
    """Probability interval without mean constraints: closed world below,
    full completion above.

    The full completion stays symbolic (a view); completed relation blocks
    are never materialized atom by atom."""
    lower = prob_lifted_detail(q, g.pdb)
    upper = prob_lifted_detail(q, LambdaCompletionView(g.pdb, g.lam))
    return BoundResult(
        kind="open_upper",
        value=upper.value,
        interval=(lower.value, upper.value),
        complement_log10=upper.complement_log10,
    )


def budget_from_mtp(g: OpenPDB, c: MTPConstraint, *, denominator: str = "herbrand") -> Budget:
    """Largest number of completion-probability tuples addable to the
    constrained relation while keeping its mean below the bound.

    ``denominator`` selects what counts as the relation's tuple space:
    ``herbrand`` (default) uses all ground atoms of the relation over the
    domain; ``support`` counts only nonzero-probability tuples of the
    completed relation.
    """
    schema = g.schema
    arity = schema.arity(c.relation)
    if c.relation not in schema.predicates:
        raise UnknownPredicate(c.relation)
    mass = g.pdb.relation_mass(c.relation)
    n_open = len(schema.domain) ** arity - g.pdb.relation_size(c.relation)
    lam = g.lam

    if denominator == "herbrand":
        n_total = len(schema.domain) ** arity
        room = c.mean_bound * n_total - mass
        if room <= 0.0:
            return Budget(c.relation, 0, infeasible=True)
        if lam <= 0.0:
            return Budget(c.relation, 0)
        b = math.floor(room / lam + BUDGET_EPSILON)
        return Budget(c.relation, max(0, min(b, n_open)))

    if denominator == "support":
        n0 = g.pdb.support_size(c.relation)

        def ok(b: int) -> bool:
            return mass + b * lam <= c.mean_bound * (n0 + b) + BUDGET_EPSILON

        if not ok(0):
            return Budget(c.relation, 0, infeasible=True)
        if lam <= 0.0:
            return Budget(c.relation, 0)
        if lam <= c.mean_bound:
            # feasibility only improves with b
            return Budget(c.relation, n_open if ok(n_open) else 0)
        b = math.floor((c.mean_bound * n0 - mass + BUDGET_EPSILON) / (lam - c.mean_bound))
        return Budget(c.relation, max(0, min(b, n_open)))

    raise ValueError(f"unknown denominator mode {denominator!r}")
