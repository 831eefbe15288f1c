"""Depth-n theories of tuples in two-sorted systems.

A depth-0 theory is the full truth table of the basic atoms over the
tuple: relation atoms on each sort, equality atoms within a sort, h-map
atoms from the model sort into the index sort, and distance-threshold
atoms d(h(x_i),h(x_j)) <= k for k up to the radius.  A depth-(n+1)
theory is the set of depth-n theories of all one-element extensions of
the tuple, the new element ranging over both sorts.

Theories are hash-consed: every value is interned in a shared table and
carries a small integer id, so equality is O(1) and bodies are stored as
sorted id tuples.  The table supports concurrent insert-or-get.
"""
from __future__ import annotations

import itertools
import threading
from typing import Iterable, Mapping, Sequence

from . import logic
from .structures import Elem, Structure, System, Vocabulary

MAX_ENUM_ATOMS = 16


class TheoryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Interning

class _Interner:
    """Insert-or-get table assigning stable ids; safe for concurrent use."""

    def __init__(self):
        self._table: dict[tuple, object] = {}
        self._lock = threading.Lock()
        self._next_id = 0

    def intern(self, key: tuple, factory):
        value = self._table.get(key)
        if value is not None:
            return value
        with self._lock:
            value = self._table.get(key)
            if value is None:
                value = factory()
                object.__setattr__(value, "_id", self._next_id)
                self._next_id += 1
                self._table[key] = value
        return value

    def __len__(self):
        return len(self._table)


INTERN = _Interner()


class Theory:
    """Canonical th^n_r value.  Use th() / make_th0() / make_th(), never
    the constructor directly."""

    __slots__ = ("vocabs", "depth", "radius", "arity", "sorts", "atoms", "body", "_id")

    def __init__(self, vocabs, depth, radius, sorts, atoms, body):
        object.__setattr__(self, "vocabs", vocabs)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "radius", radius)
        object.__setattr__(self, "arity", len(sorts))
        object.__setattr__(self, "sorts", sorts)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "body", body)

    def __setattr__(self, name, value):
        raise AttributeError("Theory values are immutable")

    def __hash__(self):
        return self._id

    def __eq__(self, other):
        return self is other

    def __repr__(self):
        if self.depth == 0:
            return "<th0 r=%d m=%d #atoms=%d>" % (self.radius, self.arity, len(self.atoms))
        return "<th d=%d r=%d m=%d |body|=%d>" % (self.depth, self.radius, self.arity,
                                                  len(self.body))


def _vocab_pair_key(vocabs: tuple[Vocabulary, Vocabulary]) -> tuple:
    return (vocabs[0].key(), vocabs[1].key())


def make_th0(vocabs, radius: int, sorts: tuple[str, ...],
             atoms: frozenset[tuple]) -> Theory:
    key = ("th0", _vocab_pair_key(vocabs), radius, sorts, tuple(sorted(map(repr, atoms))))
    return INTERN.intern(key, lambda: Theory(vocabs, 0, radius, sorts, atoms, None))


def make_th(vocabs, depth: int, radius: int, sorts: tuple[str, ...],
            children: Iterable[Theory]) -> Theory:
    body = tuple(sorted(set(children), key=lambda t: t._id))
    key = ("th", _vocab_pair_key(vocabs), depth, radius, sorts, tuple(t._id for t in body))
    return INTERN.intern(key, lambda: Theory(vocabs, depth, radius, sorts, None, body))


# ---------------------------------------------------------------------------
# The basic-atom table

def atom_universe(m_vocab: Vocabulary, i_vocab: Vocabulary,
                  sorts: tuple[str, ...], radius: int) -> list[tuple]:
    """All basic atoms over a tuple with the given sorts, dist thresholds <= radius."""
    m_pos = [p for p, s in enumerate(sorts) if s == "M"]
    i_pos = [p for p, s in enumerate(sorts) if s == "I"]
    atoms: list[tuple] = []
    for layer, vb, pos in ((1, m_vocab, m_pos), (2, i_vocab, i_pos)):
        for name, arity in vb.symbols:
            for args in itertools.product(pos, repeat=arity):
                atoms.append(("rel", layer, name, args))
    for i in range(len(sorts)):
        for j in range(i + 1, len(sorts)):
            if sorts[i] == sorts[j]:
                atoms.append(("eq", i, j))
    for i in m_pos:
        for j in i_pos:
            atoms.append(("h", i, j))
    for i in range(len(sorts)):
        for j in range(i + 1, len(sorts)):
            for k in range(radius + 1):
                atoms.append(("dist", i, j, k))
    return atoms


def _eval_atom(s: System, elems: Sequence[Elem], atom: tuple) -> bool:
    kind = atom[0]
    if kind == "rel":
        _, layer, name, args = atom
        part = s.m_part if layer == 1 else s.i_part
        return part.holds(name, tuple(elems[a][1] for a in args))
    if kind == "eq":
        return elems[atom[1]] == elems[atom[2]]
    if kind == "h":
        return s.h[elems[atom[1]][1]] == elems[atom[2]][1]
    if kind == "dist":
        return s.d_of(elems[atom[1]], elems[atom[2]]) <= atom[3]
    raise TheoryError("unknown atom %r" % (atom,))


def depth0_theory(s: System, elems: Sequence[Elem], radius: int) -> Theory:
    sorts = tuple(sort for sort, _ in elems)
    vocabs = (s.m_part.vocab, s.i_part.vocab)
    true_atoms = frozenset(a for a in atom_universe(*vocabs, sorts, radius)
                           if _eval_atom(s, elems, a))
    return make_th0(vocabs, radius, sorts, true_atoms)


# ---------------------------------------------------------------------------
# th and its reductions

def th(s: System, elems: Sequence[Elem], n: int, r: int = 0,
       _memo: dict | None = None) -> Theory:
    """th^n_r of the tuple in the system; quantified elements range over both sorts."""
    elems = tuple(elems)
    universe = set(s.elements())
    for e in elems:
        if e not in universe:
            raise TheoryError("element %r not in system" % (e,))
    memo: dict = {} if _memo is None else _memo
    order = sorted(universe)

    def rec(tup: tuple[Elem, ...], depth: int) -> Theory:
        key = (tup, depth, r)
        got = memo.get(key)
        if got is not None:
            return got
        if depth == 0:
            result = depth0_theory(s, tup, r)
        else:
            result = make_th((s.m_part.vocab, s.i_part.vocab), depth, r,
                             tuple(sort for sort, _ in tup),
                             (rec(tup + (c,), depth - 1) for c in order))
        memo[key] = result
        return result

    return rec(elems, n)


def th_of_model(m: Structure, n: int, elems: Sequence[int] = (), r: int = 0) -> Theory:
    """th of a plain model, viewed as a system via the sim lift."""
    from .structures import lift_to_system
    return th(lift_to_system(m, "sim"), tuple(("M", e) for e in elems), n, r)


def _atom_truth(t: Theory, atom: tuple) -> bool:
    """Truth of a (possibly unnormalized) atom key in a depth-0 table."""
    kind = atom[0]
    if kind == "eq":
        _, i, j = atom
        if i == j:
            return True
        return ("eq", min(i, j), max(i, j)) in t.atoms
    if kind == "dist":
        _, i, j, k = atom
        if i == j:
            return True
        return ("dist", min(i, j), max(i, j), k) in t.atoms
    return atom in t.atoms


def _map_atom(atom: tuple, mapping: Sequence[int]) -> tuple:
    kind = atom[0]
    if kind == "rel":
        return ("rel", atom[1], atom[2], tuple(mapping[a] for a in atom[3]))
    if kind == "eq":
        return ("eq", mapping[atom[1]], mapping[atom[2]])
    if kind == "h":
        return ("h", mapping[atom[1]], mapping[atom[2]])
    if kind == "dist":
        return ("dist", mapping[atom[1]], mapping[atom[2]], atom[3])
    raise TheoryError("unknown atom %r" % (atom,))


def _project_th0(t: Theory, proj: tuple[int, ...]) -> Theory:
    sorts = tuple(t.sorts[p] for p in proj)
    atoms = frozenset(a for a in atom_universe(*t.vocabs, sorts, t.radius)
                      if _atom_truth(t, _map_atom(a, proj)))
    return make_th0(t.vocabs, t.radius, sorts, atoms)


def _reduce_depth(t: Theory, new_depth: int, memo: dict) -> Theory:
    if t.depth == new_depth:
        return t
    key = (t, new_depth)
    got = memo.get(key)
    if got is not None:
        return got
    if new_depth == 0:
        if not t.body:
            result = make_th0(t.vocabs, t.radius, t.sorts, frozenset())
        else:
            child0 = _reduce_depth(t.body[0], 0, memo)
            result = _project_th0(child0, tuple(range(t.arity)))
    else:
        result = make_th(t.vocabs, new_depth, t.radius, t.sorts,
                         (_reduce_depth(c, new_depth - 1, memo) for c in t.body))
    memo[key] = result
    return result


def _reduce_radius(t: Theory, new_radius: int, memo: dict) -> Theory:
    if t.radius == new_radius:
        return t
    key = (t, new_radius, "r")
    got = memo.get(key)
    if got is not None:
        return got
    if t.depth == 0:
        atoms = frozenset(a for a in t.atoms
                          if a[0] != "dist" or a[3] <= new_radius)
        result = make_th0(t.vocabs, new_radius, t.sorts, atoms)
    else:
        result = make_th(t.vocabs, t.depth, new_radius, t.sorts,
                         (_reduce_radius(c, new_radius, memo) for c in t.body))
    memo[key] = result
    return result


def _project(t: Theory, proj: tuple[int, ...], memo: dict) -> Theory:
    key = (t, proj, "p")
    got = memo.get(key)
    if got is not None:
        return got
    if t.depth == 0:
        result = _project_th0(t, proj)
    else:
        sorts = tuple(t.sorts[p] for p in proj)
        result = make_th(t.vocabs, t.depth, t.radius, sorts,
                         (_project(c, proj + (t.arity,), memo) for c in t.body))
    memo[key] = result
    return result


def reduce_theory(t: Theory, new_depth: int, new_radius: int,
                  projection: Sequence[int]) -> Theory:
    """th at smaller depth, smaller radius, and a reordered/duplicated/dropped
    tuple; agrees with direct computation on any realizing pair."""
    if new_depth > t.depth:
        raise TheoryError("cannot increase depth %d -> %d" % (t.depth, new_depth))
    if new_radius > t.radius:
        raise TheoryError("cannot increase radius %d -> %d" % (t.radius, new_radius))
    proj = tuple(projection)
    if any(not (0 <= p < t.arity) for p in proj):
        raise TheoryError("projection index out of range")
    memo: dict = {}
    out = _reduce_depth(t, new_depth, memo)
    out = _reduce_radius(out, new_radius, memo)
    if proj != tuple(range(t.arity)):
        out = _project(out, proj, memo)
    return out


# ---------------------------------------------------------------------------
# Truth from a theory (no model needed)

def truth_from_theory(t: Theory, f: logic.Formula,
                      env: Mapping[int, int] | None = None) -> bool:
    """Truth value of a plain formula at any pair realizing t.

    Variables denote model-sort positions; quantifiers range over the
    model sort, which is where the set of one-element extensions in the
    body is consulted.
    """
    if logic.depth(f) > t.depth:
        raise TheoryError("formula depth %d exceeds theory depth %d"
                          % (logic.depth(f), t.depth))
    environment = dict(env or {i: i for i in range(t.arity)})
    missing = logic.free_vars(f) - environment.keys()
    if missing:
        raise TheoryError("free variables %s not covered by the tuple"
                          % sorted(missing))
    memo: dict = {}
    return _truth(t, f, environment, memo)


def _truth(t: Theory, f: logic.Formula, env: dict[int, int], memo: dict) -> bool:
    if isinstance(f, (logic.Rel, logic.Eq, logic.Less)):
        table = _reduce_depth(t, 0, memo)
        order_symbol = t.vocabs[0].order_symbol
        if isinstance(f, logic.Rel):
            atom = ("rel", 1, f.name, tuple(env[a] for a in f.args))
            positions = atom[3]
        elif isinstance(f, logic.Eq):
            atom = ("eq", env[f.left], env[f.right])
            positions = atom[1:]
        else:
            if isinstance(f.left, logic.Const) or isinstance(f.right, logic.Const):
                raise TheoryError("position literals are not representable in theories")
            if order_symbol is None:
                raise TheoryError("order atom without a designated order symbol")
            atom = ("rel", 1, order_symbol, (env[f.left], env[f.right]))
            positions = atom[3]
        if any(t.sorts[p] != "M" for p in positions):
            raise TheoryError("plain formulas address model-sort positions only")
        return _atom_truth(table, atom)
    if isinstance(f, logic.Not):
        return not _truth(t, f.sub, env, memo)
    if isinstance(f, logic.And):
        return all(_truth(t, s, env, memo) for s in f.subs)
    if isinstance(f, logic.Or):
        return any(_truth(t, s, env, memo) for s in f.subs)
    if isinstance(f, logic.Implies):
        return (not _truth(t, f.left, env, memo)) or _truth(t, f.right, env, memo)
    if isinstance(f, (logic.Exists, logic.Forall)):
        want = isinstance(f, logic.Exists)
        sub_env = dict(env)
        sub_env[f.var] = t.arity
        for child in t.body:
            if child.sorts[-1] != "M":
                continue
            if _truth(child, f.sub, sub_env, memo) == want:
                return want
        return not want
    raise TheoryError("not a formula: %r" % (f,))


# ---------------------------------------------------------------------------
# Characteristic (Hintikka) formulas for plain-model theories

def characteristic_formula(t: Theory) -> logic.Formula:
    """A formula of quantifier depth t.depth satisfied by exactly the pairs
    whose theory at t's parameters equals t.

    Supported for plain-model theories: radius 0, all positions on the
    model sort.  The unique empty table of arity 0 has no quantifier-free
    sentence in the grammar, so that corner returns a depth-1 tautology.
    """
    if t.radius != 0 or any(s != "M" for s in t.sorts):
        raise TheoryError("characteristic formulas are for plain-model theories")
    return _char(t, {})


def _literal(atom: tuple, order_symbol: str | None) -> logic.Formula:
    kind = atom[0]
    if kind == "rel":
        _, _, name, args = atom
        if name == order_symbol:
            return logic.Less(args[0], args[1])
        return logic.Rel(name, args)
    if kind == "eq":
        return logic.Eq(atom[1], atom[2])
    raise TheoryError("unexpected atom in plain table: %r" % (atom,))


def _char(t: Theory, memo: dict) -> logic.Formula:
    got = memo.get(t)
    if got is not None:
        return got
    order_symbol = t.vocabs[0].order_symbol
    if t.depth == 0:
        literals = []
        for atom in atom_universe(*t.vocabs, t.sorts, 0):
            if atom[0] == "rel" and atom[1] == 1:
                lit = _literal(atom, order_symbol)
            elif atom[0] == "eq":
                lit = _literal(atom, order_symbol)
            else:
                continue  # h/dist/index-layer atoms are determined by the plain part
            literals.append(lit if atom in t.atoms else logic.Not(lit))
        if not literals:
            result = (logic.Forall(0, logic.Eq(0, 0)) if t.arity == 0
                      else logic.Eq(0, 0))
        elif len(literals) == 1:
            result = literals[0]
        else:
            result = logic.And(tuple(literals))
    else:
        v = t.arity
        subs = [_char(c, memo) for c in t.body if c.sorts[-1] == "M"]
        if not subs:
            result = logic.Forall(v, logic.Not(logic.Eq(v, v)))
        else:
            parts: list[logic.Formula] = [logic.Exists(v, s) for s in subs]
            cover = subs[0] if len(subs) == 1 else logic.Or(tuple(subs))
            parts.append(logic.Forall(v, cover))
            result = logic.And(tuple(parts))
    memo[t] = result
    return result


# ---------------------------------------------------------------------------
# Enumeration of formally possible depth-0 tables

def _consistent(sorts, truth: dict[tuple, bool], radius: int) -> bool:
    m = len(sorts)
    # union-find over equality atoms
    parent = list(range(m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (kind, *rest), v in truth.items():
        if kind == "eq" and v:
            i, j = rest
            parent[find(i)] = find(j)
    # transitivity: equal classes must have their eq atom true
    for i in range(m):
        for j in range(i + 1, m):
            if sorts[i] == sorts[j] and find(i) == find(j) and not truth[("eq", i, j)]:
                return False
    rep = [min(k for k in range(m) if find(k) == find(i)) for i in range(m)]
    # congruence: truth depends only on representatives
    for atom, v in truth.items():
        canon = _map_atom(atom, rep)
        if canon[0] == "eq" and canon[1] == canon[2]:
            continue
        if canon[0] == "dist" and canon[1] == canon[2]:
            if not v:
                return False
            continue
        if canon[0] in ("eq", "dist"):
            i, j = canon[1], canon[2]
            if i > j:
                canon = (canon[0], j, i) + tuple(canon[3:])
        if truth.get(canon, v) != v:
            return False
    # dist monotone in the threshold, and forced by equality
    for i in range(m):
        for j in range(i + 1, m):
            for k in range(radius):
                if truth.get(("dist", i, j, k)) and not truth.get(("dist", i, j, k + 1)):
                    return False
            if sorts[i] == sorts[j] and truth[("eq", i, j)]:
                for k in range(radius + 1):
                    if not truth[("dist", i, j, k)]:
                        return False
    return True


def enumerate_th0(m_vocab: Vocabulary, i_vocab: Vocabulary, m: int, r: int,
                  sorts: tuple[str, ...] | None = None,
                  max_atoms: int = MAX_ENUM_ATOMS) -> set[Theory]:
    """All syntactically consistent depth-0 tables of arity m at radius r.

    With sorts=None every sort assignment is enumerated; pass an explicit
    assignment (for instance all "M" for plain models) to fix it.
    """
    sort_choices = [sorts] if sorts is not None else \
        [tuple(c) for c in itertools.product("MI", repeat=m)]
    out: set[Theory] = set()
    for ss in sort_choices:
        atoms = atom_universe(m_vocab, i_vocab, ss, r)
        if len(atoms) > max_atoms:
            raise TheoryError("atom table too large to enumerate: %d > %d"
                              % (len(atoms), max_atoms))
        for bits in itertools.product((False, True), repeat=len(atoms)):
            truth = dict(zip(atoms, bits))
            if _consistent(ss, truth, r):
                out.add(make_th0((m_vocab, i_vocab), r, ss,
                                 frozenset(a for a, v in truth.items() if v)))
    return out


# ---------------------------------------------------------------------------
# Stable text serialization

def serialize(t) -> str:
    """Deterministic nested-list text encoding, stable across runs."""
    memo: dict = {}

    def rec(x) -> str:
        got = memo.get(x)
        if got is not None:
            return got
        if isinstance(x, Theory):
            if x.depth == 0:
                body = ",".join(sorted(repr(a) for a in x.atoms))
                s = "(th0 r=%d sorts=%s {%s})" % (x.radius, "".join(x.sorts), body)
            else:
                s = "(th d=%d r=%d m=%d [%s])" % (
                    x.depth, x.radius, x.arity,
                    " ".join(sorted(rec(c) for c in x.body)))
        else:
            s = x.encode(rec)
        memo[x] = s
        return s

    return rec(t)
