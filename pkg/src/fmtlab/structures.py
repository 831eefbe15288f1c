"""Finite relational structures, ordered sums, and their lift to two-sorted systems.

Elements of a structure are always the dense integers 0..n-1.  When a
vocabulary designates an order symbol, that symbol's interpretation is
forced to be the natural strict order on 0..n-1, which makes equality of
structures plain value equality and makes concatenation sums canonical.

A System is the two-sorted object (M, I, h, d): a model part, an index
part, a surjection h from M-elements onto I-elements, and a metric d on
the index part with values in the naturals plus infinity.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

INF = math.inf

# Element of a system: ("M", i) or ("I", i).
Elem = tuple[str, int]


class StructureError(ValueError):
    """Malformed vocabulary, structure, or system."""


def dist_add(a, b):
    """Metric addition with absorbing infinity."""
    if a is INF or b is INF:
        return INF
    return a + b


@dataclass(frozen=True)
class Vocabulary:
    """Relation symbols with arities, optionally designating a binary order symbol."""

    symbols: tuple[tuple[str, int], ...]
    order_symbol: str | None = None

    def __post_init__(self):
        names = [name for name, _ in self.symbols]
        if len(set(names)) != len(names):
            raise StructureError("duplicate symbol names: %r" % (names,))
        for name, arity in self.symbols:
            if arity < 1:
                raise StructureError("arity of %s must be positive" % name)
        if self.order_symbol is not None:
            if self.arity(self.order_symbol) != 2:
                raise StructureError("order symbol %r must be binary" % self.order_symbol)

    def arity(self, name: str) -> int:
        for sym, ar in self.symbols:
            if sym == name:
                return ar
        raise StructureError("unknown symbol %r" % name)

    def has_symbol(self, name: str) -> bool:
        return any(sym == name for sym, _ in self.symbols)

    @property
    def non_order_symbols(self) -> tuple[tuple[str, int], ...]:
        return tuple((s, a) for s, a in self.symbols if s != self.order_symbol)

    def key(self) -> tuple:
        """Canonical fingerprint used in theory interning."""
        return (tuple(sorted(self.symbols)), self.order_symbol)


def vocab(*symbols: tuple[str, int], order: str | None = None) -> Vocabulary:
    return Vocabulary(tuple(symbols), order)

# The workhorse vocabulary of the random-graph experiments: (n, <, R).
GRAPH_ORDER = vocab(("<", 2), ("R", 2), order="<")


@dataclass(frozen=True)
class Structure:
    """Finite relational structure with universe 0..n-1."""

    vocab: Vocabulary
    n: int
    relations: Mapping[str, frozenset[tuple[int, ...]]] = field(default_factory=dict)

    def __post_init__(self):
        rels = {}
        for name, arity in self.vocab.symbols:
            if name == self.vocab.order_symbol:
                if name in self.relations and frozenset(self.relations[name]) != self._natural_order():
                    raise StructureError("order relation must be the natural strict order")
                rels[name] = self._natural_order()
                continue
            tuples = frozenset(tuple(t) for t in self.relations.get(name, ()))
            for t in tuples:
                if len(t) != arity:
                    raise StructureError("tuple %r has wrong arity for %s" % (t, name))
                if any(not (0 <= x < self.n) for x in t):
                    raise StructureError("tuple %r out of range for n=%d" % (t, self.n))
            rels[name] = tuples
        for name in self.relations:
            if not self.vocab.has_symbol(name):
                raise StructureError("relation %r not in vocabulary" % name)
        object.__setattr__(self, "relations", rels)

    def _natural_order(self) -> frozenset[tuple[int, int]]:
        return frozenset((i, j) for i in range(self.n) for j in range(self.n) if i < j)

    def rel(self, name: str) -> frozenset[tuple[int, ...]]:
        return self.relations[name]

    def holds(self, name: str, args: tuple[int, ...]) -> bool:
        if name == self.vocab.order_symbol:
            return args[0] < args[1]
        return args in self.relations[name]

    def key(self) -> tuple:
        return (self.vocab.key(), self.n,
                tuple(sorted((s, tuple(sorted(ts))) for s, ts in self.relations.items()
                             if s != self.vocab.order_symbol)))

    def __hash__(self):
        return hash(self.key())

    def __eq__(self, other):
        return isinstance(other, Structure) and self.key() == other.key()


def order_structure(n: int) -> Structure:
    """The pure linear order (n, <)."""
    return Structure(vocab(("<", 2), order="<"), n)


def graph_order_structure(n: int, edges: Iterable[tuple[int, int]]) -> Structure:
    """(n, <, R) with R the symmetric closure of the given pairs."""
    rel = set()
    for i, j in edges:
        if i == j:
            raise StructureError("loops not allowed in graph relation")
        rel.add((i, j))
        rel.add((j, i))
    return Structure(GRAPH_ORDER, n, {"R": frozenset(rel)})


def ordered_sum(models: Sequence[Structure]) -> Structure:
    """Concatenate structures: relations are shifted unions, the designated
    order (when present) additionally relates earlier summands below later ones."""
    if not models:
        raise StructureError("ordered_sum of no models")
    vb = models[0].vocab
    for m in models[1:]:
        if m.vocab != vb:
            raise StructureError("vocabulary mismatch in ordered_sum")
    total = sum(m.n for m in models)
    rels: dict[str, set] = {name: set() for name, _ in vb.non_order_symbols}
    offset = 0
    for m in models:
        for name, _ in vb.non_order_symbols:
            for t in m.relations[name]:
                rels[name].add(tuple(x + offset for x in t))
        offset += m.n
    return Structure(vb, total, {k: frozenset(v) for k, v in rels.items()})


def restrict(m: Structure, subset: Iterable[int]) -> Structure:
    """Induced substructure on `subset`, renumbered order-preservingly."""
    keep = sorted(set(subset))
    if any(not (0 <= x < m.n) for x in keep):
        raise StructureError("restrict: element out of range")
    index = {old: new for new, old in enumerate(keep)}
    rels = {}
    for name, _ in m.vocab.non_order_symbols:
        rels[name] = frozenset(tuple(index[x] for x in t)
                               for t in m.relations[name] if all(x in index for x in t))
    return Structure(m.vocab, len(keep), rels)


def empty_structure(vb: Vocabulary) -> Structure:
    return Structure(vb, 0)


@dataclass(frozen=True)
class System:
    """Two-sorted system (M, I, h, d).

    h maps M-part elements onto I-part elements; dist is a symmetric
    matrix over the I-part with entries in the naturals or INF.  By
    stipulation h is the identity on the I-part.
    """

    m_part: Structure
    i_part: Structure
    h: tuple[int, ...]
    dist: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.h) != self.m_part.n:
            raise StructureError("h must be defined on all of the M part")
        if any(not (0 <= v < self.i_part.n) for v in self.h):
            raise StructureError("h maps outside the I part")
        if set(self.h) != set(range(self.i_part.n)):
            raise StructureError("h must be onto the I part")
        k = self.i_part.n
        d = self.dist
        if len(d) != k or any(len(row) != k for row in d):
            raise StructureError("dist matrix has wrong shape")
        for x in range(k):
            if d[x][x] != 0:
                raise StructureError("dist(x,x) must be 0")
            for y in range(k):
                if d[x][y] != d[y][x]:
                    raise StructureError("dist must be symmetric")
                if d[x][y] is not INF and (not isinstance(d[x][y], int) or d[x][y] < 0):
                    raise StructureError("dist entries must be naturals or INF")
                for z in range(k):
                    if d[x][z] > dist_add(d[x][y], d[y][z]):
                        raise StructureError("dist violates the triangle inequality")

    @property
    def sigma(self) -> tuple:
        return (self.m_part.vocab.key(), self.i_part.vocab.key())

    def elements(self) -> list[Elem]:
        return ([("M", i) for i in range(self.m_part.n)]
                + [("I", i) for i in range(self.i_part.n)])

    def h_of(self, x: Elem) -> int:
        sort, i = x
        return self.h[i] if sort == "M" else i

    def d_of(self, x: Elem, y: Elem):
        return self.dist[self.h_of(x)][self.h_of(y)]

    def key(self) -> tuple:
        return (self.m_part.key(), self.i_part.key(), self.h, self.dist)

    def __hash__(self):
        return hash(self.key())

    def __eq__(self, other):
        return isinstance(other, System) and self.key() == other.key()


def gaifman_distances(m: Structure) -> tuple[tuple[float, ...], ...]:
    """All-pairs shortest-path distances in the Gaifman graph of m.

    Two distinct elements are adjacent when they co-occur in some
    relation tuple (the designated order included, per the definition).
    """
    n = m.n
    adj: list[set[int]] = [set() for _ in range(n)]
    for name, _ in m.vocab.symbols:
        for t in m.relations[name]:
            for a in t:
                for b in t:
                    if a != b:
                        adj[a].add(b)
    rows = []
    for src in range(n):
        row: list[float] = [INF] * n
        row[src] = 0
        frontier = [src]
        depth = 0
        while frontier:
            depth += 1
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if row[v] is INF:
                        row[v] = depth
                        nxt.append(v)
            frontier = nxt
        rows.append(tuple(row))
    return tuple(rows)


def lift_to_system(m: Structure, mode: str = "sim") -> System:
    """Lift a plain model to a system: the index part is a copy of m.

    mode "sim": dist(x,y) is 0 on the diagonal and INF elsewhere.
    mode "dis": dist is the Gaifman-graph shortest-path distance.
    """
    if mode == "sim":
        d = tuple(tuple(0 if i == j else INF for j in range(m.n)) for i in range(m.n))
    elif mode == "dis":
        d = gaifman_distances(m)
    else:
        raise StructureError("unknown lift mode %r" % mode)
    return System(m, m, tuple(range(m.n)), d)


def system_from_metric(dist: Sequence[Sequence[float]],
                       i_vocab: Vocabulary | None = None) -> System:
    """A bare system carrying only a metric on its index part (used by the
    decomposition machinery, which never looks at relations)."""
    k = len(dist)
    vb = i_vocab or Vocabulary(())
    part = Structure(vb, k)
    return System(part, part, tuple(range(k)), tuple(tuple(row) for row in dist))


def neighborhood(s: System, x: Elem, r) -> set[Elem]:
    """N+_r(x): all elements of both sorts whose h-image is within r of h(x)."""
    hx = s.h_of(x)
    return {y for y in s.elements() if s.dist[s.h_of(y)][hx] <= r}


@dataclass(frozen=True)
class FGrowth:
    """Growth function f_n(r) driving the bounded-theory radii.

    The default rule is f_n(r) = r + 3**n.  check() verifies the required
    inequalities on a finite grid; iterate() is f composed with itself.
    """

    rule: Callable[[int, int], int] = lambda n, r: r + 3 ** n
    nice_flag: bool = False

    def __call__(self, n: int, r: int) -> int:
        return self.rule(n, r)

    def iterate(self, n: int, r: int, times: int) -> int:
        for _ in range(times):
            r = self.rule(n, r)
        return r

    def check(self, n_max: int = 12, r_max: int = 12) -> None:
        f = self.rule
        for n in range(n_max + 1):
            for r in range(r_max + 1):
                if not r < f(n, r):
                    raise StructureError("f_n(r) must exceed r at n=%d r=%d" % (n, r))
                if f(n + 1, r) < f(n, r) or f(n, r + 1) < f(n, r):
                    raise StructureError("f must be monotone at n=%d r=%d" % (n, r))
                if self.iterate(n, r, 3) > f(n + 1, r):
                    raise StructureError("f^(3)_n(r) <= f_(n+1)(r) fails at n=%d r=%d" % (n, r))
                if self.iterate(n, r, 2) < f(n, r) + f(n, 0):
                    raise StructureError("f^(2)_n(r) >= f_n(r)+f_n(0) fails at n=%d r=%d" % (n, r))
                if self.nice_flag and self.iterate(n, r, 4) > f(n + 1, r):
                    raise StructureError("nice: f^(4)_n(r) <= f_(n+1)(r) fails at n=%d r=%d" % (n, r))


DEFAULT_GROWTH = FGrowth()


def structure_to_json(m: Structure) -> str:
    data = {
        "vocab": [[name, arity] for name, arity in m.vocab.symbols],
        "n": m.n,
        "relations": {name: sorted(list(t) for t in m.relations[name])
                      for name, _ in m.vocab.non_order_symbols},
    }
    if m.vocab.order_symbol is not None:
        data["order"] = m.vocab.order_symbol
    return json.dumps(data, sort_keys=True)


def structure_from_json(text: str) -> Structure:
    data = json.loads(text)
    vb = Vocabulary(tuple((name, arity) for name, arity in data["vocab"]),
                    data.get("order"))
    relations = data.get("relations", {})
    if vb.order_symbol is not None and vb.order_symbol in relations:
        raise StructureError("the order relation is implied and must not be listed")
    rels = {name: frozenset(tuple(t) for t in tuples) for name, tuples in relations.items()}
    return Structure(vb, data["n"], rels)


def load_structure(path: str) -> Structure:
    with open(path, "r", encoding="utf-8") as fh:
        return structure_from_json(fh.read())


def save_structure(m: Structure, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(structure_to_json(m))
        fh.write("\n")
