"""On-disk formats: schema, domain, relation CSVs, constraints, and
matching instances.

A database directory holds ``schema.txt`` (lines ``PRED/arity``),
``domain.txt`` (one constant per line, order significant), and one
``<PRED>.csv`` per predicate with rows ``c1,...,ck,p``.  The domain must be
explicit: open-world completion ranges over every constant, not just the
mentioned ones.  ``constraints.txt`` holds exactly one ``lambda=<float>``
line and zero or more ``mtp <PRED> <mean_bound>`` lines.
"""
from __future__ import annotations

import csv
from pathlib import Path

from .database import Database, Schema
from .errors import SchemaError
from .openworld import MTPConstraint
from .oracle import ThreeDMInstance
from .query import Constant


def load_schema(directory: str | Path) -> Schema:
    directory = Path(directory)
    schema_path = directory / "schema.txt"
    domain_path = directory / "domain.txt"
    if not schema_path.is_file():
        raise SchemaError(f"missing {schema_path}")
    if not domain_path.is_file():
        raise SchemaError(f"missing {domain_path}")
    preds: dict[str, int] = {}
    for lineno, raw in enumerate(schema_path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "/" not in line:
            raise SchemaError(f"{schema_path}:{lineno}: expected PRED/arity, got {line!r}")
        name, _, arity_text = line.partition("/")
        name = name.strip()
        try:
            arity = int(arity_text.strip())
        except ValueError:
            raise SchemaError(f"{schema_path}:{lineno}: bad arity {arity_text!r}") from None
        if name in preds:
            raise SchemaError(f"{schema_path}:{lineno}: duplicate predicate {name!r}")
        preds[name] = arity
    domain = []
    for raw in domain_path.read_text().splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            domain.append(Constant(line))
    return Schema(preds, tuple(domain))


def load_database(directory: str | Path) -> Database:
    directory = Path(directory)
    schema = load_schema(directory)
    rels: dict[str, dict[tuple[str, ...], float]] = {}
    for pred, arity in schema.predicates.items():
        path = directory / f"{pred}.csv"
        if not path.is_file():
            continue
        table: dict[tuple[str, ...], float] = {}
        with path.open(newline="") as fh:
            for rowno, row in enumerate(csv.reader(fh), 1):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != arity + 1:
                    raise SchemaError(
                        f"{path}:{rowno}: expected {arity} constants and a probability"
                    )
                args = tuple(cell.strip() for cell in row[:-1])
                try:
                    p = float(row[-1])
                except ValueError:
                    raise SchemaError(f"{path}:{rowno}: bad probability {row[-1]!r}") from None
                if args in table:
                    raise SchemaError(f"{path}:{rowno}: duplicate tuple {args}")
                table[args] = p
        rels[pred] = table
    return Database(schema, rels)


def load_constraints(directory: str | Path) -> tuple[float | None, list[MTPConstraint]]:
    """Read ``constraints.txt``; returns (lambda, constraints) or (None, [])
    when the file is absent."""
    path = Path(directory) / "constraints.txt"
    if not path.is_file():
        return None, []
    lam: float | None = None
    constraints: list[MTPConstraint] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("lambda="):
            if lam is not None:
                raise SchemaError(f"{path}:{lineno}: lambda given twice")
            lam = float(line.partition("=")[2])
        elif line.startswith("mtp "):
            parts = line.split()
            if len(parts) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 'mtp PRED mean'")
            constraints.append(MTPConstraint(parts[1], float(parts[2])))
        else:
            raise SchemaError(f"{path}:{lineno}: unrecognized line {line!r}")
    if lam is None:
        raise SchemaError(f"{path}: missing lambda=<float> line")
    return lam, constraints


def save_database(db: Database, directory: str | Path) -> None:
    """Write a database directory in the loadable format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    schema = db.schema
    (directory / "schema.txt").write_text(
        "".join(f"{p}/{a}\n" for p, a in sorted(schema.predicates.items()))
    )
    (directory / "domain.txt").write_text("".join(f"{c.name}\n" for c in schema.domain))
    for pred in sorted(schema.predicates):
        rows = sorted(db.entries(pred))
        if not rows:
            continue
        with (directory / f"{pred}.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            for args, p in rows:
                writer.writerow(list(args) + [repr(p)])


def load_3dm(path: str | Path) -> ThreeDMInstance:
    """Instance file: ``X a b c`` / ``Y ...`` / ``Z ...`` node lines,
    ``E x,y,z`` per hyperedge, and ``k <int>``."""
    path = Path(path)
    xs: list[Constant] = []
    ys: list[Constant] = []
    zs: list[Constant] = []
    edges: list[tuple[Constant, Constant, Constant]] = []
    k: int | None = None
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, _, rest = line.partition(" ")
        rest = rest.strip()
        if tag == "X":
            xs.extend(Constant(t) for t in rest.split())
        elif tag == "Y":
            ys.extend(Constant(t) for t in rest.split())
        elif tag == "Z":
            zs.extend(Constant(t) for t in rest.split())
        elif tag == "E":
            parts = [t.strip() for t in rest.split(",")]
            if len(parts) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 'E x,y,z'")
            edges.append(tuple(Constant(t) for t in parts))
        elif tag == "k":
            k = int(rest)
        else:
            raise SchemaError(f"{path}:{lineno}: unrecognized line {line!r}")
    if k is None:
        raise SchemaError(f"{path}: missing 'k <int>' line")
    return ThreeDMInstance(tuple(xs), tuple(ys), tuple(zs), frozenset(edges), k)
