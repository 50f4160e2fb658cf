"""Exact budgeted upper bounds for inversion-free queries.

The optimizer mirrors the lifted evaluator's decomposition, but every node
returns an array over residual budgets 0..B of the best reachable
probability together with a witness completion:

* decompositions into independent factors split the budget by max-convolution
  (their open-tuple slices are disjoint, so allocations are independent);
* a separator variable turns the union into a constant-elimination dynamic
  program: the budget is divided among the domain constants, whose slices
  are again disjoint;
* inclusion-exclusion terms share one slice, so they are optimized jointly:
  the state carries the vector of per-term values and keeps every
  non-dominated vector (a Pareto front ordered by each term's sign), which
  preserves exact optimality even when budget allocations that look worse
  for the running prefix win later.

Queries whose structure defeats all three rules fall back to exhaustive
enumeration of the remaining slice when it is small, and are otherwise
refused with :class:`NotInversionFree` so callers can route to the greedy
bound or the brute-force oracle.

Table construction for distinct substitutions is independent; the solver
itself keeps no shared mutable state beyond per-run memo tables.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

from .engine import Evaluator, conjunction_parts, is_safe
from .errors import NotInversionFree, UnsafeQuery
from .openworld import (
    BoundResult,
    CompletionChoice,
    MTPConstraint,
    OpenPDB,
    budget_from_mtp,
    open_tuples,
)
from .query import (
    Atom,
    ConjunctiveQuery,
    Constant,
    UCQ,
    Variable,
    find_separator,
    independence_groups,
    is_inversion_free,
    minimize,
    substitute_separator,
)

ENUMERATION_FALLBACK_CAP = 10  # max open tuples enumerated when no rule applies

# A budget vector: entry b holds (best probability, witness) using at most b added tuples.
_BVec = tuple[tuple[float, tuple[Atom, ...]], ...]


def _match_args(atom: Atom, args: tuple[str, ...]) -> bool:
    """Does the ground argument tuple instantiate the atom's pattern?"""
    seen: dict[str, str] = {}
    for t, a in zip(atom.args, args):
        if isinstance(t, Constant):
            if t.name != a:
                return False
        else:
            prev = seen.setdefault(t.name, a)
            if prev != a:
                return False
    return True


class _BudgetSolver:
    """Budgeted optimization context for one run: base database, constrained
    relation, completion probability, and maximum budget."""

    def __init__(self, g: OpenPDB, relation: str, b_max: int):
        self.g = g
        self.db = g.pdb
        self.schema = g.schema
        self.rel = relation
        self.lam = g.lam
        self.b_max = b_max
        self.open_set = frozenset(
            tuple(t.name for t in a.args) for a in open_tuples(g, relation)
        )
        self._eval = Evaluator(self.db)
        self._memo: dict[UCQ, _BVec] = {}
        self._slice_memo: dict[UCQ, frozenset[tuple[str, ...]]] = {}

    # -- helpers -----------------------------------------------------------

    def _atom(self, args: tuple[str, ...]) -> Atom:
        return Atom(self.rel, tuple(Constant(a) for a in args))

    def _wkey(self, witness: tuple[Atom, ...]):
        return tuple(self.schema.atom_key(a) for a in witness)

    def _merge_witness(self, w1: tuple[Atom, ...], w2: tuple[Atom, ...]) -> tuple[Atom, ...]:
        return tuple(sorted(set(w1) | set(w2), key=self.schema.atom_key))

    def slice_of(self, q: UCQ) -> frozenset[tuple[str, ...]]:
        """Open tuples of the constrained relation that can affect ``q``."""
        cached = self._slice_memo.get(q)
        if cached is not None:
            return cached
        out: set[tuple[str, ...]] = set()
        patterns = [a for d in q.disjuncts for a in d.atoms if a.predicate == self.rel]
        if patterns:
            for args in self.open_set:
                if any(_match_args(a, args) for a in patterns):
                    out.add(args)
        result = frozenset(out)
        self._slice_memo[q] = result
        return result

    def _const_vec(self, q: UCQ) -> _BVec:
        v = self._eval.probability(q).value
        return tuple((v, ()) for _ in range(self.b_max + 1))

    def _closed_value(self, q: UCQ) -> float:
        return self._eval.probability(q).value

    def added_value(self, q: UCQ, added: Sequence[Atom]) -> float:
        db = self.db.with_added(added, self.lam) if added else self.db
        return Evaluator(db).probability(q).value

    # -- budget vector combiners --------------------------------------------

    def _combine(self, v1: _BVec, v2: _BVec, mode: str) -> _BVec:
        """Max-convolution of two independent-slice budget vectors."""
        out = []
        for b in range(self.b_max + 1):
            best_v, best_w = -1.0, ()
            best_key = None
            for k in range(b + 1):
                p1, w1 = v1[k]
                p2, w2 = v2[b - k]
                val = p1 * p2 if mode == "conj" else 1.0 - (1.0 - p1) * (1.0 - p2)
                if val > best_v:
                    best_v, best_w = val, self._merge_witness(w1, w2)
                    best_key = self._wkey(best_w)
                elif val == best_v:
                    w = self._merge_witness(w1, w2)
                    key = self._wkey(w)
                    if key < best_key:
                        best_w, best_key = w, key
            out.append((best_v, best_w))
        return tuple(out)

    def _fold_vecs(self, vecs: list[_BVec], mode: str) -> _BVec:
        acc = vecs[0]
        for v in vecs[1:]:
            acc = self._combine(acc, v, mode)
        return acc

    # -- main recursion ------------------------------------------------------

    def bopt(self, q: UCQ) -> _BVec:
        q = minimize(q)
        cached = self._memo.get(q)
        if cached is None:
            cached = self._bopt(q)
            self._memo[q] = cached
        return cached

    def _bopt(self, q: UCQ) -> _BVec:
        sl = self.slice_of(q)
        if not sl:
            return self._const_vec(q)
        ds = q.disjuncts

        # single atom of the constrained relation
        if len(ds) == 1 and len(ds[0].atoms) == 1:
            atom = ds[0].atoms[0]
            base = self._eval.probability(q)
            slice_sorted = sorted(sl, key=lambda a: self.schema.atom_key(self._atom(a)))
            out = [(base.value, ())]
            comp = 1.0 - base.value
            witness: tuple[Atom, ...] = ()
            for b in range(1, self.b_max + 1):
                if b <= len(slice_sorted) and self.lam > 0.0 and comp > 0.0:
                    comp *= 1.0 - self.lam
                    witness = witness + (self._atom(slice_sorted[b - 1]),)
                    out.append((1.0 - comp, witness))
                else:
                    out.append(out[-1])
            return tuple(out)

        parts = conjunction_parts(q)
        if parts is not None:
            if len(parts) == 1:
                return self.bopt(parts[0])
            groups = independence_groups(parts)
            vecs = []
            for grp in groups:
                vecs.append(self.bopt(grp[0]) if len(grp) == 1 else self._ie_family(grp))
            return vecs[0] if len(vecs) == 1 else self._fold_vecs(vecs, "conj")

        if len(ds) > 1:
            groups = independence_groups([UCQ([d]) for d in ds])
            if len(groups) > 1:
                vecs = [self.bopt(UCQ([d for u in g for d in u.disjuncts])) for g in groups]
                return self._fold_vecs(vecs, "disj")

        sep = find_separator([d.atoms for d in ds])
        if sep is not None:
            vecs = [
                self.bopt(substitute_separator(q, sep, const))
                for const in self.schema.domain
            ]
            zero = tuple((0.0, ()) for _ in range(self.b_max + 1))
            acc = zero
            for v in vecs:
                acc = self._combine(acc, v, "disj")
            return acc

        return self._enumerate_scalar(q, sl)

    # -- inclusion-exclusion families ---------------------------------------

    def _ie_family(self, parts: list[UCQ]) -> _BVec:
        """Optimize sum over nonempty subsets s of (-1)^{|s|+1} P(union of s)
        under one shared budget."""
        m = len(parts)
        weighted: dict[UCQ, float] = {}
        for size in range(1, m + 1):
            sign = 1.0 if size % 2 == 1 else -1.0
            for subset in itertools.combinations(parts, size):
                union = minimize(UCQ([d for u in subset for d in u.disjuncts]))
                weighted[union] = weighted.get(union, 0.0) + sign
        return self._family([(w, t) for t, w in weighted.items() if w != 0.0])

    def _fold_term(self, t: UCQ) -> tuple[float, float, UCQ | None]:
        """Express P(t) as alpha + beta * P(core) with beta >= 0 by peeling
        off budget-independent independent factors; core None when constant."""
        alpha, beta = 0.0, 1.0
        q = minimize(t)
        while True:
            if not self.slice_of(q):
                return alpha + beta * self._closed_value(q), 0.0, None
            ds = q.disjuncts
            if len(ds) > 1:
                groups = independence_groups([UCQ([d]) for d in ds])
                if len(groups) > 1:
                    sliced = [g for g in groups if any(self.slice_of(u) for u in g)]
                    if len(sliced) == 1:
                        free = [g for g in groups if g is not sliced[0]]
                        comp_free = 1.0
                        for g in free:
                            fv = self._closed_value(UCQ([d for u in g for d in u.disjuncts]))
                            comp_free *= 1.0 - fv
                        # P = 1 - comp_free * (1 - P(core))
                        alpha += beta * (1.0 - comp_free)
                        beta *= comp_free
                        q = minimize(UCQ([d for u in sliced[0] for d in u.disjuncts]))
                        continue
                return alpha, beta, q
            parts = conjunction_parts(q)
            if parts is not None and len(parts) > 1:
                groups = independence_groups(parts)
                if len(groups) > 1:
                    sliced = [g for g in groups if any(self.slice_of(u) for u in g)]
                    if len(sliced) == 1 and all(len(u.disjuncts) == 1 for u in sliced[0]):
                        for g in groups:
                            if g is sliced[0]:
                                continue
                            if len(g) == 1:
                                beta *= self._closed_value(g[0])
                            else:
                                beta *= Evaluator(self.db)._conj_group(g).value
                        merged = [a for u in sliced[0] for a in u.disjuncts[0].atoms]
                        q = minimize(UCQ([ConjunctiveQuery(merged)]))
                        continue
            return alpha, beta, q

    def _family(self, terms: list[tuple[float, UCQ]]) -> _BVec:
        """Per budget, the maximum of const + sum(weight * P(term)) over one
        shared completion choice."""
        const = 0.0
        weights: dict[UCQ, float] = {}
        order: list[UCQ] = []
        for w, t in terms:
            a, b, core = self._fold_term(t)
            const += w * a
            if core is not None and w * b != 0.0:
                if core not in weights:
                    weights[core] = 0.0
                    order.append(core)
                weights[core] += w * b
        cores = [c for c in order if weights[c] != 0.0]

        if not cores:
            return tuple((const, ()) for _ in range(self.b_max + 1))

        if len(cores) == 1:
            core, w = cores[0], weights[cores[0]]
            if w > 0.0:
                vec = self.bopt(core)
                return tuple((const + w * v, wit) for v, wit in vec)
            low = self._closed_value(core)
            return tuple((const + w * low, ()) for _ in range(self.b_max + 1))

        signs = [1 if weights[c] > 0.0 else -1 for c in cores]
        frontier = self._pareto(tuple(cores), tuple(signs))
        out = []
        for b in range(self.b_max + 1):
            best_v, best_w, best_key = None, (), None
            for values, wit in frontier[b]:
                total = const + sum(weights[c] * v for c, v in zip(cores, values))
                key = self._wkey(wit)
                if best_v is None or total > best_v or (total == best_v and key < best_key):
                    best_v, best_w, best_key = total, wit, key
            out.append((best_v, best_w))
        return tuple(out)

    def _prune(
        self,
        states: list[tuple[tuple[float, ...], tuple[Atom, ...]]],
        signs: tuple[int, ...],
    ) -> list[tuple[tuple[float, ...], tuple[Atom, ...]]]:
        """Keep states not dominated componentwise in each sign's preferred
        direction; equal vectors keep the lexicographically smallest witness."""
        best_by_vec: dict[tuple[float, ...], tuple[Atom, ...]] = {}
        for values, wit in states:
            old = best_by_vec.get(values)
            if old is None or self._wkey(wit) < self._wkey(old):
                best_by_vec[values] = wit
        unique = sorted(best_by_vec.items())

        def dominates(u: tuple[float, ...], v: tuple[float, ...]) -> bool:
            for s, a, b in zip(signs, u, v):
                if s > 0 and a < b:
                    return False
                if s < 0 and a > b:
                    return False
                if s == 0 and a != b:
                    # conflicting directions: only an equal value dominates
                    return False
            return True

        kept: list[tuple[tuple[float, ...], tuple[Atom, ...]]] = []
        for values, wit in unique:
            if any(dominates(kv, values) for kv, _ in kept if kv != values):
                continue
            kept = [(kv, kw) for kv, kw in kept if not dominates(values, kv) or kv == values]
            kept.append((values, wit))
        return kept

    def _pareto(
        self, cores: tuple[UCQ, ...], signs: tuple[int, ...]
    ) -> list[list[tuple[tuple[float, ...], tuple[Atom, ...]]]]:
        """Per budget: every non-dominated vector of per-core values reachable
        with one shared completion choice."""
        combined_slice: set[tuple[str, ...]] = set()
        for c in cores:
            combined_slice |= self.slice_of(c)

        if not combined_slice:
            vec = tuple(self._closed_value(c) for c in cores)
            return [[(vec, ())] for _ in range(self.b_max + 1)]

        all_disjuncts = [d.atoms for c in cores for d in c.disjuncts]
        sep = find_separator(all_disjuncts)
        if sep is not None:
            return self._pareto_separator(cores, signs, sep)
        return self._pareto_enumerate(cores, signs, combined_slice)

    def _pareto_separator(self, cores, signs, sep):
        offsets = []
        i = 0
        for c in cores:
            offsets.append(i)
            i += len(c.disjuncts)
        frontier = [[(tuple(0.0 for _ in cores), ())] for _ in range(self.b_max + 1)]
        for const in self.schema.domain:
            alphas, betas, reduced = [], [], []
            reduced_index: dict[UCQ, int] = {}
            core_map = []
            for ci, core in enumerate(cores):
                local_sep = tuple(sep[offsets[ci] + j] for j in range(len(core.disjuncts)))
                sub = substitute_separator(core, local_sep, const)
                a, b, red = self._fold_term(sub)
                alphas.append(a)
                betas.append(b)
                if red is None:
                    core_map.append(None)
                else:
                    if red not in reduced_index:
                        reduced_index[red] = len(reduced)
                        reduced.append(red)
                    core_map.append(reduced_index[red])
            if reduced:
                # beta is a product of probabilities, so a reduced core inherits
                # the signs of the cores that fold onto it; a clash disables
                # dominance pruning on that component
                red_signs = []
                for ri in range(len(reduced)):
                    parents = [signs[ci] for ci in range(len(cores)) if core_map[ci] == ri]
                    pos, neg = any(s > 0 for s in parents), any(s < 0 for s in parents)
                    red_signs.append(0 if (pos and neg) else (1 if pos else -1))
                sub_front = self._pareto(tuple(reduced), tuple(red_signs))
            else:
                sub_front = [[((), ())] for _ in range(self.b_max + 1)]

            new_frontier: list[list] = []
            for b in range(self.b_max + 1):
                cands: list[tuple[tuple[float, ...], tuple[Atom, ...]]] = []
                for k in range(b + 1):
                    for prev_vals, prev_wit in frontier[b - k]:
                        for red_vals, red_wit in sub_front[k]:
                            vals = []
                            for ci in range(len(cores)):
                                ri = core_map[ci]
                                a_val = alphas[ci] if ri is None else alphas[ci] + betas[ci] * red_vals[ri]
                                vals.append(
                                    1.0 - (1.0 - prev_vals[ci]) * (1.0 - a_val)
                                )
                            cands.append(
                                (tuple(vals), self._merge_witness(prev_wit, red_wit))
                            )
                new_frontier.append(self._prune(cands, signs))
            frontier = new_frontier
        return frontier

    def _pareto_enumerate(self, cores, signs, combined_slice):
        if len(combined_slice) > ENUMERATION_FALLBACK_CAP:
            raise NotInversionFree(
                f"no shared separator and the open slice has {len(combined_slice)} tuples"
            )
        atoms = sorted(
            (self._atom(a) for a in combined_slice), key=self.schema.atom_key
        )
        frontier: list[list] = [[] for _ in range(self.b_max + 1)]
        for size in range(0, min(self.b_max, len(atoms)) + 1):
            for chosen in itertools.combinations(atoms, size):
                vals = tuple(self.added_value(c, chosen) for c in cores)
                for b in range(size, self.b_max + 1):
                    frontier[b].append((vals, tuple(chosen)))
        return [self._prune(states, signs) for states in frontier]

    def _enumerate_scalar(self, q: UCQ, sl: frozenset) -> _BVec:
        if len(sl) > ENUMERATION_FALLBACK_CAP:
            raise NotInversionFree(
                f"no decomposition applies and the open slice has {len(sl)} tuples"
            )
        atoms = sorted((self._atom(a) for a in sl), key=self.schema.atom_key)
        out: list[tuple[float, tuple[Atom, ...]]] = []
        for b in range(self.b_max + 1):
            best_v, best_w, best_key = -1.0, (), None
            for size in range(0, min(b, len(atoms)) + 1):
                for chosen in itertools.combinations(atoms, size):
                    v = self.added_value(q, chosen)
                    key = self._wkey(chosen)
                    if v > best_v or (v == best_v and key < best_key):
                        best_v, best_w, best_key = v, tuple(chosen), key
            out.append((best_v, best_w))
        return tuple(out)


# ---------------------------------------------------------------------------
# Assignment and elimination tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssignmentTable:
    """Best probabilities for one-level extensions of a substitution frame.

    ``values[(const, b)]`` is the highest probability of the query with the
    frame applied, the current separator bound to ``const``, and at most
    ``b`` tuples added inside that substitution's slice of the constrained
    relation.
    """

    query: UCQ
    frame: tuple[tuple[str, str], ...]
    constants: tuple[str, ...]
    budget: int
    values: Mapping[tuple[str, int], float]

    def value(self, const: str, b: int) -> float:
        return self.values[(const, min(b, self.budget))]


@dataclass(frozen=True)
class EliminationTable:
    """Best probabilities of the disjunction over a growing prefix of the
    domain, per residual budget.  ``values[(j, b)]`` covers the first ``j``
    constants."""

    frame: tuple[tuple[str, str], ...]
    budget: int
    values: Mapping[tuple[int, int], float]

    def value(self, j: int, b: int) -> float:
        return self.values[(j, min(b, self.budget))]


def initial_elimination_table(frame: Mapping[str, str] | None = None, budget: int = 0) -> EliminationTable:
    """The empty-prefix table: no constants seen yet, probability zero."""
    f = tuple(sorted((frame or {}).items()))
    return EliminationTable(f, budget, {(0, b): 0.0 for b in range(budget + 1)})


def _apply_frame(q: UCQ, frame: Mapping[str, str]) -> UCQ:
    mapping = {Variable(v): Constant(c) for v, c in frame.items()}
    return UCQ([d.substitute(mapping) for d in q.disjuncts])


def build_assignment_table(
    q: UCQ,
    g: OpenPDB,
    c: MTPConstraint,
    frame: Mapping[str, str] | None = None,
    *,
    budget: int | None = None,
) -> AssignmentTable:
    """Tabulate the budgeted optimum of ``q`` for every binding of its
    current separator variable, under an outer substitution ``frame``."""
    b_max = budget if budget is not None else budget_from_mtp(g, c).max_added
    frame = dict(frame or {})
    q_f = minimize(_apply_frame(q, frame))
    sep = find_separator([d.atoms for d in q_f.disjuncts])
    if sep is None:
        raise NotInversionFree(f"no separator variable for {q_f}")
    solver = _BudgetSolver(g, c.relation, b_max)
    values: dict[tuple[str, int], float] = {}
    for const in g.schema.domain:
        vec = solver.bopt(substitute_separator(q_f, sep, const))
        for b in range(b_max + 1):
            values[(const.name, b)] = vec[b][0]
    return AssignmentTable(
        query=q,
        frame=tuple(sorted(frame.items())),
        constants=tuple(c_.name for c_ in g.schema.domain),
        budget=b_max,
        values=values,
    )


def dp_eliminate(d_prev: EliminationTable, a: AssignmentTable, j: int, b_max: int) -> EliminationTable:
    """One elimination step: extend the prefix disjunction with constant
    ``j`` (0-based index into the table's domain order).

    ``D(j+1, b) = max over k in 0..b of
    1 - (1 - D(j, b-k)) * (1 - A(c_{j+1}, k))``: the new constant's slice is
    independent of the prefix's, so only the split of the budget matters.
    """
    const = a.constants[j]
    values = dict(d_prev.values)
    for b in range(b_max + 1):
        best = 0.0
        for k in range(b + 1):
            cand = 1.0 - (1.0 - d_prev.value(j, b - k)) * (1.0 - a.value(const, k))
            if cand > best:
                best = cand
        values[(j + 1, b)] = best
    return EliminationTable(d_prev.frame, max(d_prev.budget, b_max), values)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def mtp_upper_exact(
    g: OpenPDB,
    c: MTPConstraint,
    q: UCQ,
    *,
    budget: int | None = None,
    denominator: str = "herbrand",
) -> BoundResult:
    """Exact upper probability of ``q`` under the mean bound, by dynamic
    programming over the domain; polynomial in domain size and budget for
    inversion-free queries.

    Raises :class:`NotInversionFree` when the query has an inversion and
    :class:`UnsafeQuery` when it cannot be evaluated lifted at all.
    """
    if not is_safe(q):
        raise UnsafeQuery(f"{q} admits no lifted evaluation")
    if not is_inversion_free(q):
        raise NotInversionFree(f"{q} has an inversion")
    derived = budget_from_mtp(g, c, denominator=denominator)
    b_max = derived.max_added if budget is None else budget
    warnings = ("infeasible-constraint",) if derived.infeasible and budget is None else ()
    solver = _BudgetSolver(g, c.relation, b_max)
    vec = solver.bopt(q)
    value, witness = vec[b_max]
    return BoundResult(
        kind="mtp_exact",
        value=value,
        witness=CompletionChoice(frozenset(witness)),
        complement_log10=None,
        warnings=warnings,
    )
