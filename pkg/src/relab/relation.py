"""Relations as immutable columnar values.

A Relation holds one numpy array per attribute: int64 attributes as 1-D
int64 arrays, fixed-width byte attributes as (n, width) uint8 arrays.
The canonical row serialization (shared by digests and spill files) is:
each int64 attribute as 8 bytes little-endian two's-complement, each
byte attribute as its raw width bytes, fields in schema order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from . import hashing
from .errors import UnknownAttribute


@dataclass(frozen=True)
class Int64:
    """Signed 64-bit integer attribute."""

    @property
    def width(self) -> int:
        return 8


@dataclass(frozen=True)
class Bytes:
    """Opaque fixed-width byte attribute."""

    width: int

    def __post_init__(self) -> None:
        if self.width < 0:
            raise ValueError(f"byte attribute width must be >= 0, got {self.width}")


ColumnType = Union[Int64, Bytes]


@dataclass(frozen=True)
class Schema:
    """Ordered attribute list; names are unique and non-empty."""

    attributes: tuple[tuple[str, ColumnType], ...]

    def __post_init__(self) -> None:
        attrs = tuple((str(n), t) for n, t in self.attributes)
        object.__setattr__(self, "attributes", attrs)
        if not attrs:
            raise ValueError("schema needs at least one attribute")
        names = [n for n, _ in attrs]
        if any(not n for n in names):
            raise ValueError("attribute names must be non-empty")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate attribute names in {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.attributes)

    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.attributes):
            if n == name:
                return i
        raise UnknownAttribute(name)

    def type_of(self, name: str) -> ColumnType:
        return self.attributes[self.index(name)][1]

    @property
    def row_width(self) -> int:
        """Serialized bytes per row."""
        return sum(t.width for _, t in self.attributes)

    @property
    def offsets(self) -> tuple[int, ...]:
        """Serialized byte offset of each attribute within a row."""
        offs = []
        pos = 0
        for _, t in self.attributes:
            offs.append(pos)
            pos += t.width
        return tuple(offs)


def _normalize_column(col, ctype: ColumnType) -> np.ndarray:
    if isinstance(ctype, Int64):
        arr = np.ascontiguousarray(col, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("int64 columns must be 1-D")
    else:
        arr = np.ascontiguousarray(col, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[1] != ctype.width:
            raise ValueError(
                f"byte column must have shape (n, {ctype.width}), got {arr.shape}"
            )
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Relation:
    """Schema plus one immutable column per attribute."""

    schema: Schema
    columns: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.columns) != len(self.schema.attributes):
            raise ValueError("column count does not match schema")
        cols = tuple(
            _normalize_column(col, t)
            for col, (_, t) in zip(self.columns, self.schema.attributes)
        )
        object.__setattr__(self, "columns", cols)
        lengths = {len(c) for c in cols}
        if len(lengths) > 1:
            raise ValueError(f"columns have differing lengths: {sorted(lengths)}")

    @property
    def row_count(self) -> int:
        return len(self.columns[0])

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.schema.index(name)]

    def take(self, indices: np.ndarray) -> "Relation":
        """Gather rows by position into a new relation."""
        idx = np.asarray(indices, dtype=np.int64)
        return Relation(self.schema, tuple(c[idx] for c in self.columns))

    def serialize(self) -> np.ndarray:
        """Canonical (n, row_width) uint8 serialization of all rows."""
        n = self.row_count
        out = np.empty((n, self.schema.row_width), dtype=np.uint8)
        for col, (_, t), off in zip(
            self.columns, self.schema.attributes, self.schema.offsets
        ):
            if isinstance(t, Int64):
                out[:, off : off + 8] = col.astype("<i8", copy=False).view(
                    np.uint8
                ).reshape(n, 8)
            elif t.width:
                out[:, off : off + t.width] = col
        return out

    @classmethod
    def from_matrix(cls, schema: Schema, matrix: np.ndarray) -> "Relation":
        """Rebuild a relation from its canonical serialization."""
        matrix = np.asarray(matrix, dtype=np.uint8)
        if matrix.ndim != 2 or matrix.shape[1] != schema.row_width:
            raise ValueError(
                f"matrix width {matrix.shape} does not match schema row width"
                f" {schema.row_width}"
            )
        cols = []
        for (_, t), off in zip(schema.attributes, schema.offsets):
            chunk = np.ascontiguousarray(matrix[:, off : off + t.width])
            if isinstance(t, Int64):
                cols.append(chunk.view("<i8").ravel())
            else:
                cols.append(chunk)
        return cls(schema, tuple(cols))

    def row_tuples(self) -> list[tuple]:
        """Rows as Python tuples (ints and bytes); for oracles and tests."""
        pulled = []
        for col, (_, t) in zip(self.columns, self.schema.attributes):
            if isinstance(t, Int64):
                pulled.append(col.tolist())
            else:
                raw = col.tobytes()
                w = t.width
                pulled.append(
                    [raw[i * w : (i + 1) * w] for i in range(self.row_count)]
                )
        return list(zip(*pulled)) if pulled else []

    @classmethod
    def from_rows(cls, schema: Schema, rows: Iterable[tuple]) -> "Relation":
        rows = list(rows)
        cols = []
        for i, (_, t) in enumerate(schema.attributes):
            vals = [r[i] for r in rows]
            if isinstance(t, Int64):
                cols.append(np.array(vals, dtype=np.int64))
            else:
                flat = b"".join(vals)
                cols.append(
                    np.frombuffer(flat, dtype=np.uint8).reshape(len(rows), t.width)
                )
        return cls(schema, tuple(cols))

    @classmethod
    def empty(cls, schema: Schema) -> "Relation":
        cols = []
        for _, t in schema.attributes:
            if isinstance(t, Int64):
                cols.append(np.empty(0, dtype=np.int64))
            else:
                cols.append(np.empty((0, t.width), dtype=np.uint8))
        return cls(schema, tuple(cols))


# ---------------------------------------------------------------------------
# Synthetic data generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Uniform:
    """Keys drawn uniformly from [0, key_domain)."""


@dataclass(frozen=True)
class Zipf:
    """Keys drawn Zipf-skewed over [0, key_domain) with exponent s > 0."""

    s: float

    def __post_init__(self) -> None:
        if not self.s > 0:
            raise ValueError(f"zipf exponent must be > 0, got {self.s}")


Distribution = Union[Uniform, Zipf]


@dataclass(frozen=True)
class GenSpec:
    """Deterministic recipe for one synthetic relation.

    Identical specs generate bit-identical relations. Sampling procedure
    (re-runnable by independent code):

      rng = np.random.default_rng(seed)
      uniform:  keys = rng.integers(0, key_domain, n, dtype=int64)
      zipf(s):  u = rng.random(n)
                c = cumsum(r ** -s for rank r in 1..key_domain)  (float64)
                keys = searchsorted(c, u * c[-1], side="right")
      payload = rng.integers(0, 256, (n, payload_width), dtype=uint8)

    clustered=True stores the drawn keys in ascending order (payloads are
    independent of keys, so this is the key-clustered layout of the same
    distribution).
    """

    n: int
    key_domain: int
    distribution: Distribution = Uniform()
    payload_width: int = 8
    seed: int = 0
    clustered: bool = False

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.key_domain < 1:
            raise ValueError("key_domain must be >= 1")
        if self.payload_width < 0:
            raise ValueError("payload_width must be >= 0")

    @property
    def row_width(self) -> int:
        return 8 + self.payload_width


def gen_schema(payload_width: int) -> Schema:
    return Schema((("key", Int64()), ("payload", Bytes(payload_width))))


def zipf_cumweights(key_domain: int, s: float) -> np.ndarray:
    """Unnormalized cumulative Zipf weights over ranks 1..key_domain."""
    ranks = np.arange(1, key_domain + 1, dtype=np.float64)
    return np.cumsum(ranks ** -s)


def generate_relation(spec: GenSpec) -> Relation:
    """Generate the (key, payload) relation described by a GenSpec."""
    rng = np.random.default_rng(spec.seed)
    if isinstance(spec.distribution, Uniform):
        keys = rng.integers(0, spec.key_domain, spec.n, dtype=np.int64)
    else:
        u = rng.random(spec.n)
        c = zipf_cumweights(spec.key_domain, spec.distribution.s)
        keys = np.searchsorted(c, u * c[-1], side="right").astype(np.int64)
    if spec.clustered:
        keys = np.sort(keys)
    payload = rng.integers(0, 256, (spec.n, spec.payload_width), dtype=np.uint8)
    return Relation(gen_schema(spec.payload_width), (keys, payload))


# ---------------------------------------------------------------------------
# Result digests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultDigest:
    """128-bit order-independent multiset digest of a relation's rows."""

    value: int

    @property
    def hex(self) -> str:
        return f"{self.value:032x}"

    def __str__(self) -> str:
        return self.hex


EMPTY_DIGEST = ResultDigest(0)


def multiset_digest(rel: Relation) -> ResultDigest:
    """XOR of per-row 128-bit hashes of the canonical serialization.

    Permuting rows leaves the digest unchanged. XOR accumulation cancels
    rows with even multiplicity, so exact duplicate rows are invisible to
    it; generated payloads of >= 8 random bytes keep duplicates out of the
    workloads this lab measures.
    """
    if rel.row_count == 0:
        return EMPTY_DIGEST
    lanes = hashing.row_digests(rel.serialize())
    return ResultDigest(hashing.combine_digests(lanes))


# ---------------------------------------------------------------------------
# Join output schema
# ---------------------------------------------------------------------------

def join_output_schema(left: Schema, right: Schema, key: str) -> Schema:
    """Left attributes then right non-key attributes.

    A right-side name colliding with an existing output name gets a
    "right_" prefix (repeated until unique).
    """
    if not isinstance(left.type_of(key), Int64):
        raise UnknownAttribute(f"join key {key!r} must be int64 in left schema")
    if not isinstance(right.type_of(key), Int64):
        raise UnknownAttribute(f"join key {key!r} must be int64 in right schema")
    attrs = list(left.attributes)
    taken = {n for n, _ in attrs}
    for name, t in right.attributes:
        if name == key:
            continue
        out_name = name
        while out_name in taken:
            out_name = "right_" + out_name
        taken.add(out_name)
        attrs.append((out_name, t))
    return Schema(tuple(attrs))


# ---------------------------------------------------------------------------
# Relation files (header + columnar sections in canonical serialization)
# ---------------------------------------------------------------------------

_MAGIC = b"RELCOL01"


def _type_to_json(t: ColumnType):
    return "int64" if isinstance(t, Int64) else ["bytes", t.width]


def _type_from_json(obj) -> ColumnType:
    if obj == "int64":
        return Int64()
    if isinstance(obj, list) and len(obj) == 2 and obj[0] == "bytes":
        return Bytes(int(obj[1]))
    raise ValueError(f"unknown column type {obj!r}")


def write_relation(rel: Relation, path: Union[str, Path]) -> None:
    """Write magic, JSON header, then one canonical section per column."""
    header = json.dumps(
        {
            "attrs": [[n, _type_to_json(t)] for n, t in rel.schema.attributes],
            "rows": rel.row_count,
        }
    ).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(len(header).to_bytes(4, "little"))
        f.write(header)
        for col, (_, t) in zip(rel.columns, rel.schema.attributes):
            if isinstance(t, Int64):
                f.write(col.astype("<i8", copy=False).tobytes())
            else:
                f.write(col.tobytes())


def read_relation(path: Union[str, Path]) -> Relation:
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a relation file")
        hlen = int.from_bytes(f.read(4), "little")
        header = json.loads(f.read(hlen))
        n = int(header["rows"])
        schema = Schema(
            tuple((name, _type_from_json(t)) for name, t in header["attrs"])
        )
        cols = []
        for _, t in schema.attributes:
            raw = f.read(n * t.width)
            if len(raw) != n * t.width:
                raise ValueError(f"{path}: truncated column section")
            if isinstance(t, Int64):
                cols.append(np.frombuffer(raw, dtype="<i8").astype(np.int64))
            else:
                cols.append(
                    np.frombuffer(raw, dtype=np.uint8).reshape(n, t.width).copy()
                )
        return Relation(schema, tuple(cols))
