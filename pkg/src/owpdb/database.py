"""Schemas, tuple-independent probabilistic databases, and read views.

A database maps each predicate to a partial table of ground-argument tuples
with probabilities.  Atoms absent from a table have probability zero under
closed-world reading; an atom stored with probability zero is *pinned* and
is treated as known-false rather than unknown, which matters to the
open-world machinery.

Views (:class:`OverlayView` for conditioning, :class:`LambdaCompletionView`
for symbolic full completions) share the :class:`ProbView` read interface, so
evaluation never has to materialize a completed relation atom by atom.
Databases and views are immutable once built; concurrent reads are safe.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import CompletionOverlap, SchemaError, UnknownPredicate
from .query import Atom, Constant, Term, Variable


@dataclass(frozen=True)
class Schema:
    """Predicate arities plus an ordered constant domain.

    The domain order is fixed and observable: it drives canonical tuple
    ordering, witness tie-breaking, and dynamic-programming elimination
    order.
    """

    predicates: Mapping[str, int]
    domain: tuple[Constant, ...]

    def __post_init__(self):
        if not self.domain:
            raise SchemaError("domain must be non-empty")
        names = [c.name for c in self.domain]
        if len(set(names)) != len(names):
            raise SchemaError("domain contains duplicate constants")
        for pred, arity in self.predicates.items():
            if arity < 1:
                raise SchemaError(f"predicate {pred!r} must have arity >= 1")
        object.__setattr__(self, "predicates", dict(self.predicates))
        object.__setattr__(
            self, "_index", {c.name: i for i, c in enumerate(self.domain)}
        )

    def arity(self, pred: str) -> int:
        try:
            return self.predicates[pred]
        except KeyError:
            raise UnknownPredicate(f"predicate {pred!r} is not declared in the schema") from None

    def domain_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"constant {name!r} is not in the domain") from None

    def has_constant(self, name: str) -> bool:
        return name in self._index

    def atom_key(self, atom: Atom) -> tuple:
        """Canonical order on ground atoms: predicate, then domain positions."""
        return (atom.predicate, tuple(self.domain_index(t.name) for t in atom.args))


@dataclass(frozen=True, slots=True)
class ProbTuple:
    """A ground atom with its marginal probability."""

    atom: Atom
    p: float

    def __post_init__(self):
        if not self.atom.is_ground():
            raise SchemaError(f"tuple atom must be ground: {self.atom}")
        if not 0.0 <= self.p <= 1.0:
            raise SchemaError(f"probability {self.p} outside [0, 1] for {self.atom}")


def _args_names(atom: Atom) -> tuple[str, ...]:
    return tuple(t.name for t in atom.args)


class ProbView:
    """Read interface shared by databases and their derived views."""

    schema: Schema

    def default_prob(self, pred: str) -> float:
        raise NotImplementedError

    def entries(self, pred: str) -> Iterator[tuple[tuple[str, ...], float]]:
        """Explicitly stored rows of ``pred`` (including pinned zeros)."""
        raise NotImplementedError

    def is_explicit(self, pred: str, args: tuple[str, ...]) -> bool:
        raise NotImplementedError

    def prob(self, pred: str, args: tuple[str, ...]) -> float:
        raise NotImplementedError

    def explicit_constants(self, preds: Iterable[str]) -> frozenset[str]:
        """Constants occurring in any explicitly stored row of ``preds``."""
        raise NotImplementedError

    # -- conveniences shared by all views --

    def atom_prob(self, atom: Atom) -> float:
        return self.prob(atom.predicate, _args_names(atom))

    def with_overrides(self, fixed: Mapping[Atom, object]) -> "OverlayView":
        return OverlayView(self, fixed)

    def pattern_entries(
        self, pred: str, pattern: Sequence[Term]
    ) -> Iterator[tuple[tuple[str, ...], float]]:
        """Stored rows matching a pattern of constants and (possibly
        repeated) variables."""
        groups: dict[str, list[int]] = {}
        consts: list[tuple[int, str]] = []
        for i, t in enumerate(pattern):
            if isinstance(t, Variable):
                groups.setdefault(t.name, []).append(i)
            else:
                consts.append((i, t.name))
        for args, p in self.entries(pred):
            if any(args[i] != name for i, name in consts):
                continue
            if any(len({args[i] for i in idxs}) != 1 for idxs in groups.values()):
                continue
            yield args, p

    def pattern_size(self, pred: str, pattern: Sequence[Term]) -> int:
        """Number of ground instances of the pattern over the domain."""
        distinct = {t.name for t in pattern if isinstance(t, Variable)}
        return len(self.schema.domain) ** len(distinct)


class Database(ProbView):
    """A tuple-independent probabilistic database.

    Each ground atom appears at most once; absent atoms carry probability
    zero.  Instances are immutable; derived databases are produced by
    :meth:`with_added` and :meth:`with_overrides`.
    """

    def __init__(self, schema: Schema, relations: Mapping[str, Mapping[tuple[str, ...], float]] | None = None):
        self.schema = schema
        rels: dict[str, dict[tuple[str, ...], float]] = {p: {} for p in schema.predicates}
        if relations:
            for pred, table in relations.items():
                arity = schema.arity(pred)
                for args, p in table.items():
                    if len(args) != arity:
                        raise SchemaError(f"{pred}{args} does not match arity {arity}")
                    for name in args:
                        if not schema.has_constant(name):
                            raise SchemaError(f"constant {name!r} of {pred}{args} is not in the domain")
                    if not 0.0 <= p <= 1.0:
                        raise SchemaError(f"probability {p} outside [0, 1] for {pred}{args}")
                    rels[pred][args] = float(p)
        self._rels = rels
        self._consts: dict[str, frozenset[str]] = {
            pred: frozenset(name for args in table for name in args)
            for pred, table in rels.items()
        }

    @classmethod
    def from_tuples(cls, schema: Schema, tuples: Iterable[ProbTuple]) -> "Database":
        rels: dict[str, dict[tuple[str, ...], float]] = {}
        for t in tuples:
            table = rels.setdefault(t.atom.predicate, {})
            args = _args_names(t.atom)
            if args in table:
                raise SchemaError(f"duplicate tuple {t.atom}")
            table[args] = t.p
        return cls(schema, rels)

    def default_prob(self, pred: str) -> float:
        return 0.0

    def entries(self, pred: str) -> Iterator[tuple[tuple[str, ...], float]]:
        return iter(self._rels.get(pred, {}).items())

    def is_explicit(self, pred: str, args: tuple[str, ...]) -> bool:
        return args in self._rels.get(pred, {})

    def prob(self, pred: str, args: tuple[str, ...]) -> float:
        self.schema.arity(pred)
        return self._rels.get(pred, {}).get(args, 0.0)

    def explicit_constants(self, preds: Iterable[str]) -> frozenset[str]:
        out: set[str] = set()
        for p in preds:
            out.update(self._consts.get(p, frozenset()))
        return frozenset(out)

    def relation_mass(self, pred: str) -> float:
        return sum(self._rels.get(pred, {}).values())

    def relation_size(self, pred: str) -> int:
        return len(self._rels.get(pred, {}))

    def support_size(self, pred: str) -> int:
        """Number of stored rows with nonzero probability."""
        return sum(1 for p in self._rels.get(pred, {}).values() if p > 0.0)

    def uncertain_atoms(self) -> list[Atom]:
        """Stored atoms with probability strictly between 0 and 1."""
        out = []
        for pred in sorted(self._rels):
            for args, p in sorted(self._rels[pred].items()):
                if 0.0 < p < 1.0:
                    out.append(Atom(pred, tuple(Constant(a) for a in args)))
        return out

    def with_added(self, atoms: Iterable[Atom], p: float) -> "Database":
        """A new database with ``atoms`` inserted at probability ``p``."""
        rels = {pred: dict(table) for pred, table in self._rels.items()}
        for atom in atoms:
            args = _args_names(atom)
            table = rels.setdefault(atom.predicate, {})
            if args in table:
                raise CompletionOverlap(f"{atom} is already present")
            table[args] = float(p)
        return Database(self.schema, rels)


class OverlayView(ProbView):
    """A view with specific atoms overridden to fixed truth values or
    probabilities; used for conditioning."""

    def __init__(self, base: ProbView, fixed: Mapping[Atom, object]):
        self.base = base
        self.schema = base.schema
        over: dict[str, dict[tuple[str, ...], float]] = {}
        for atom, val in fixed.items():
            if not atom.is_ground():
                raise SchemaError(f"override atom must be ground: {atom}")
            p = 1.0 if val is True else 0.0 if val is False else float(val)
            if not 0.0 <= p <= 1.0:
                raise SchemaError(f"override probability {p} outside [0, 1]")
            over.setdefault(atom.predicate, {})[_args_names(atom)] = p
        self._over = over

    def default_prob(self, pred: str) -> float:
        return self.base.default_prob(pred)

    def entries(self, pred: str) -> Iterator[tuple[tuple[str, ...], float]]:
        over = self._over.get(pred, {})
        for args, p in self.base.entries(pred):
            if args not in over:
                yield args, p
        yield from over.items()

    def is_explicit(self, pred: str, args: tuple[str, ...]) -> bool:
        return args in self._over.get(pred, {}) or self.base.is_explicit(pred, args)

    def prob(self, pred: str, args: tuple[str, ...]) -> float:
        over = self._over.get(pred)
        if over is not None and args in over:
            return over[args]
        return self.base.prob(pred, args)

    def explicit_constants(self, preds: Iterable[str]) -> frozenset[str]:
        out = set(self.base.explicit_constants(preds))
        for p in preds:
            for args in self._over.get(p, {}):
                out.update(args)
        return frozenset(out)


class LambdaCompletionView(ProbView):
    """The full completion of a database: every absent atom of the completed
    relations carries the completion probability.

    The completed blocks are fully symmetric, so the view stays symbolic:
    lookups fall back to the completion probability and no table of
    domain-size ** arity entries is ever built.
    """

    def __init__(self, base: ProbView, lam: float, relations: Iterable[str] | None = None):
        if not 0.0 <= lam <= 1.0:
            raise SchemaError(f"completion probability {lam} outside [0, 1]")
        self.base = base
        self.schema = base.schema
        self.lam = float(lam)
        self.relations = (
            frozenset(relations) if relations is not None else frozenset(base.schema.predicates)
        )

    def default_prob(self, pred: str) -> float:
        if pred in self.relations:
            return self.lam
        return self.base.default_prob(pred)

    def entries(self, pred: str) -> Iterator[tuple[tuple[str, ...], float]]:
        return self.base.entries(pred)

    def is_explicit(self, pred: str, args: tuple[str, ...]) -> bool:
        return self.base.is_explicit(pred, args)

    def prob(self, pred: str, args: tuple[str, ...]) -> float:
        if self.base.is_explicit(pred, args):
            return self.base.prob(pred, args)
        if pred in self.relations:
            return self.lam
        return self.base.prob(pred, args)

    def explicit_constants(self, preds: Iterable[str]) -> frozenset[str]:
        return self.base.explicit_constants(preds)
