"""Local/bounded theories around anchors, sparse-tuple theories over the
index sort, greedy ball decompositions, index expansions, and the
behavioral checks that a structure's theory is determined by its local
data.

bth localizes the theory of a tuple to expanding neighborhoods of its
first element, with radii driven by a growth function f.  uth is the
theory of a tuple of far-apart index points where quantification ranges
over new far-apart index points only.  Both are interned alongside plain
theories.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import logic
from .structures import (DEFAULT_GROWTH, Elem, FGrowth, Structure, System,
                         Vocabulary, lift_to_system, restrict)
from .theory import INTERN, Theory, depth0_theory, serialize, th


class DistortionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Bounded theories

class BTheory:
    """Canonical bth^n_r value; build with bth()."""

    __slots__ = ("depth", "radius", "arity", "t0", "t1", "t2", "base", "_id")

    def __init__(self, depth, radius, arity, base, t0, t1, t2):
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "radius", radius)
        object.__setattr__(self, "arity", arity)
        object.__setattr__(self, "base", base)   # depth 0: plain Theory
        object.__setattr__(self, "t0", t0)
        object.__setattr__(self, "t1", t1)
        object.__setattr__(self, "t2", t2)

    def __setattr__(self, name, value):
        raise AttributeError("BTheory values are immutable")

    def __hash__(self):
        return self._id

    def __eq__(self, other):
        return self is other

    def encode(self, rec) -> str:
        if self.depth == 0:
            return "(bth0 r=%d %s)" % (self.radius, rec(self.base))
        return "(bth d=%d r=%d m=%d %s [%s] [%s])" % (
            self.depth, self.radius, self.arity, rec(self.t0),
            " ".join(sorted(rec(x) for x in self.t1)),
            " ".join(sorted(rec(x) for x in self.t2)))

    def __repr__(self):
        return "<bth d=%d r=%d m=%d>" % (self.depth, self.radius, self.arity)


def _make_bth0(radius: int, base: Theory) -> BTheory:
    key = ("bth0", radius, base._id)
    return INTERN.intern(key, lambda: BTheory(0, radius, base.arity, base, None, None, None))


def _make_bth(depth, radius, arity, t0, t1, t2) -> BTheory:
    t1 = tuple(sorted(set(t1), key=lambda x: x._id))
    t2 = tuple(sorted(set(t2), key=lambda x: x._id))
    key = ("bth", depth, radius, arity, t0._id,
           tuple(x._id for x in t1), tuple(x._id for x in t2))
    return INTERN.intern(key, lambda: BTheory(depth, radius, arity, None, t0, t1, t2))


def component_check(s: System, elems: Sequence[Elem], r: int) -> bool:
    """True iff every tuple element lies within h-distance r of the first."""
    if not elems:
        raise DistortionError("component check needs a nonempty tuple")
    anchor = s.h_of(elems[0])
    return all(s.dist[s.h_of(e)][anchor] <= r for e in elems)


def bth(s: System, elems: Sequence[Elem], n: int, r: int,
        f: FGrowth = DEFAULT_GROWTH, _memo: dict | None = None) -> BTheory:
    """Bounded theory of a component: the flat theory of the tuple at the
    current radius, the depth-n theories of points in the annulus between
    f_n(r) and f_n^(2)(r) around the anchor, and the extensions inside the
    inner ball carried at the pushed-out radius f_n^(2)(r)."""
    elems = tuple(elems)
    if not component_check(s, elems, r):
        raise DistortionError("tuple is not an r=%d component" % r)
    memo: dict = {} if _memo is None else _memo

    def rec(tup: tuple[Elem, ...], depth: int, radius: int) -> BTheory:
        key = (tup, depth, radius)
        got = memo.get(key)
        if got is not None:
            return got
        if depth == 0:
            result = _make_bth0(radius, depth0_theory(s, tup, radius))
        else:
            anchor = s.h_of(tup[0])
            inner = f(depth - 1, radius)
            outer = f.iterate(depth - 1, radius, 2)
            t0 = rec(tup, depth - 1, radius)
            t1 = [rec((c,), depth - 1, radius) for c in s.elements()
                  if inner < s.dist[s.h_of(c)][anchor] <= outer]
            t2 = [rec(tup + (c,), depth - 1, outer) for c in s.elements()
                  if s.dist[s.h_of(c)][anchor] <= inner]
            result = _make_bth(depth, radius, len(tup), t0, t1, t2)
        memo[key] = result
        return result

    return rec(elems, n, r)


# ---------------------------------------------------------------------------
# Sparse tuples over the index sort

def sparse_check(s: System, i_elems: Sequence[int], n: int, radii: Sequence[int],
                 f: FGrowth = DEFAULT_GROWTH) -> bool:
    """True iff index points are pairwise at distance >= f_n(r_l)+f_n(r_k)+1."""
    if len(i_elems) != len(radii):
        raise DistortionError("radius vector length must match the tuple")
    for a in i_elems:
        if not (0 <= a < s.i_part.n):
            raise DistortionError("index element out of range: %r" % (a,))
    for l in range(len(i_elems)):
        for k in range(l + 1, len(i_elems)):
            if s.dist[i_elems[l]][i_elems[k]] < f(n, radii[l]) + f(n, radii[k]) + 1:
                return False
    return True


def sparse_check_qf(s: System, i_elems: Sequence[int], n: int,
                    radii: Sequence[int], f: FGrowth = DEFAULT_GROWTH) -> bool:
    """Quantifier-free reading of sparseness: a single pass over the distance
    matrix entries of the tuple (used as an independent cross-check)."""
    pairs = itertools.combinations(range(len(i_elems)), 2)
    bound = {(l, k): f(n, radii[l]) + f(n, radii[k]) + 1 for l, k in pairs}
    return all(s.dist[i_elems[l]][i_elems[k]] >= b for (l, k), b in bound.items())


class UTheory:
    """Canonical uth^n_rbar value; build with uth()."""

    __slots__ = ("depth", "radii", "arity", "base", "t0", "t1", "_id")

    def __init__(self, depth, radii, arity, base, t0, t1):
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "arity", arity)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "t0", t0)   # tuple of (svec, UTheory)
        object.__setattr__(self, "t1", t1)   # tuple of (svec, UTheory)

    def __setattr__(self, name, value):
        raise AttributeError("UTheory values are immutable")

    def __hash__(self):
        return self._id

    def __eq__(self, other):
        return self is other

    def encode(self, rec) -> str:
        if self.depth == 0:
            return "(uth0 %s)" % rec(self.base)
        return "(uth d=%d r=%s m=%d {%s} {%s})" % (
            self.depth, ",".join(map(str, self.radii)), self.arity,
            " ".join("%s:%s" % (sv, rec(u)) for sv, u in self.t0),
            " ".join(sorted("%s:%s" % (sv, rec(u)) for sv, u in self.t1)))

    def __repr__(self):
        return "<uth d=%d r=%s m=%d>" % (self.depth, self.radii, self.arity)


def _make_uth0(base: Theory) -> UTheory:
    key = ("uth0", base._id)
    return INTERN.intern(key, lambda: UTheory(0, None, base.arity, base, None, None))


def _make_uth(depth, radii, arity, t0, t1) -> UTheory:
    t0 = tuple(sorted(t0))
    t1 = tuple(sorted(set(t1), key=lambda p: (p[0], p[1]._id)))
    key = ("uth", depth, radii, arity,
           tuple((sv, u._id) for sv, u in t0), tuple((sv, u._id) for sv, u in t1))
    return INTERN.intern(key, lambda: UTheory(depth, radii, arity, None, t0, t1))


def uth(s: System, i_elems: Sequence[int], n: int, radii: Sequence[int],
        f: FGrowth = DEFAULT_GROWTH, _memo: dict | None = None) -> UTheory:
    """Sparse theory of far-apart index points.  Quantification ranges over
    the index sort only, and only over points keeping the extended tuple
    sparse at the reduced radius vector."""
    i_elems = tuple(i_elems)
    radii = tuple(radii)
    if not sparse_check(s, i_elems, n, radii, f):
        raise DistortionError("tuple is not (%d, %s)-sparse" % (n, (radii,)))
    memo: dict = {} if _memo is None else _memo

    def rec(tup: tuple[int, ...], depth: int, rvec: tuple[int, ...]) -> UTheory:
        key = (tup, depth, rvec)
        got = memo.get(key)
        if got is not None:
            return got
        if depth == 0:
            result = _make_uth0(depth0_theory(s, tuple(("I", a) for a in tup), 0))
        else:
            caps = tuple(f.iterate(depth - 1, r, 2) for r in rvec)
            t0 = []
            for svec in itertools.product(*(range(c + 1) for c in caps)):
                t0.append((svec, rec(tup, depth - 1, svec)))
            t1 = []
            for svec in itertools.product(*(range(r + 1) for r in rvec)):
                for c in range(s.i_part.n):
                    if all(s.dist[c][tup[l]] >= f(depth - 1, svec[l]) + f(depth - 1, 0) + 1
                           for l in range(len(tup))):
                        t1.append((svec, rec(tup + (c,), depth - 1, svec + (0,))))
            result = _make_uth(depth, rvec, len(tup), t0, t1)
        memo[key] = result
        return result

    return rec(i_elems, n, radii)


# ---------------------------------------------------------------------------
# Greedy ball decomposition

@dataclass(frozen=True)
class Decomposition:
    w: frozenset[int]
    n_of: dict[int, int]
    g: dict[int, int]
    radius_of: dict[int, int]   # realized ball radius f_{n_i}(sum of assigned radii)


def decompose_components(s: System, points: Sequence[int], radii: Sequence[int],
                         f: FGrowth = DEFAULT_GROWTH,
                         merge_budget=lambda n1, n2: n1 + n2 + 1) -> Decomposition:
    """Merge intersecting balls around the given index points until the
    remaining balls are pairwise disjoint and still cover every point.

    Each surviving center i gets depth budget n_i = (cluster size - 1) and
    ball radius f_{n_i}(sum of radii assigned to it); the total budget is
    exactly m - |w|.  After each merge the cluster re-picks the center
    covering its members best, which keeps the cover intact in regimes
    where the plain merge bound would not.
    """
    m = len(points)
    if len(radii) != m:
        raise DistortionError("radius vector length must match the points")
    for p in points:
        if not (0 <= p < s.i_part.n):
            raise DistortionError("point out of range: %r" % (p,))

    # (center, members, depth budget); budgets accumulate through merges
    clusters: list[tuple[int, frozenset[int], int]] = \
        [(i, frozenset([i]), 0) for i in range(m)]

    def ball_radius(members: frozenset[int], budget: int) -> int:
        return f(budget, sum(radii[x] for x in members))

    def best_center(members: frozenset[int], budget: int) -> int:
        rad = ball_radius(members, budget)
        ranked = sorted(members, key=lambda c: (
            max(s.dist[points[c]][points[x]] for x in members), c))
        for c in ranked:
            if all(s.dist[points[c]][points[x]] <= rad for x in members):
                return c
        return ranked[0]

    def balls_intersect(cl1, cl2) -> bool:
        c1, mem1, b1 = cl1
        c2, mem2, b2 = cl2
        r1 = ball_radius(mem1, b1)
        r2 = ball_radius(mem2, b2)
        return any(s.dist[u][points[c1]] <= r1 and s.dist[u][points[c2]] <= r2
                   for u in range(s.i_part.n))

    changed = True
    while changed:
        changed = False
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                if balls_intersect(clusters[a], clusters[b]):
                    merged = clusters[a][1] | clusters[b][1]
                    budget = merge_budget(clusters[a][2], clusters[b][2])
                    clusters[a] = (best_center(merged, budget), merged, budget)
                    del clusters[b]
                    changed = True
                    break
            if changed:
                break

    w = frozenset(center for center, _, _ in clusters)
    n_of, g, radius_of = {}, {}, {}
    for center, members, budget in clusters:
        n_of[center] = budget
        radius_of[center] = ball_radius(members, budget)
        for x in members:
            g[x] = center
    deco = Decomposition(w, n_of, g, radius_of)
    _verify_decomposition(s, points, deco)
    return deco


def _verify_decomposition(s: System, points: Sequence[int], deco: Decomposition):
    m = len(points)
    if sum(deco.n_of.values()) > m - len(deco.w):
        raise DistortionError("decomposition exceeds the budget m - |w|")
    for j in range(m):
        i = deco.g[j]
        if s.dist[points[j]][points[i]] > deco.radius_of[i]:
            raise DistortionError(
                "decomposition does not cover point %d; the growth rule is too "
                "slow for these radii (the merge inequality fails)" % j)
    for i1, i2 in itertools.combinations(sorted(deco.w), 2):
        for u in range(s.i_part.n):
            if (s.dist[u][points[i1]] <= deco.radius_of[i1]
                    and s.dist[u][points[i2]] <= deco.radius_of[i2]):
                raise DistortionError("decomposition balls %d and %d intersect" % (i1, i2))


def growth_star_check(f: FGrowth, n_max: int, r_max: int) -> bool:
    """Whether 2 f_{n1}(r1) + f_{n2}(r2) <= f_{n1+n2+1}(r1+r2) holds on a grid."""
    for n1 in range(n_max + 1):
        for n2 in range(n_max + 1):
            for r1 in range(r_max + 1):
                for r2 in range(r_max + 1):
                    if 2 * f(n1, r1) + f(n2, r2) > f(n1 + n2 + 1, r1 + r2):
                        return False
    return True


# ---------------------------------------------------------------------------
# Index expansion by realized bounded theories

def _bth_predicate_name(t: BTheory) -> str:
    digest = hashlib.sha256(serialize(t).encode()).hexdigest()[:12]
    return "bt_%s" % digest


def expand_index(s: System, n: int, r: int, m: int, f: FGrowth = DEFAULT_GROWTH,
                 max_tuples: int = 200_000,
                 _pairs: Iterable[tuple[int, int]] | None = None) -> Structure:
    """The index-sort structure enriched by one relation per realized bounded
    theory: R_t collects the index tuples that form components with bth
    value t, for arities up to m+n and radii up to f_n^(3)(r)."""
    pairs = set(_pairs or ())
    if not pairs:
        for mp in range(1, m + n + 1):
            for rp in range(f.iterate(n, r, 3) + 1):
                pairs.add((mp, rp))
    total = sum(s.i_part.n ** mp for mp, _ in pairs)
    if total > max_tuples:
        raise DistortionError("expansion size guard exceeded: %d tuples" % total)

    memo: dict = {}
    relations: dict[str, set] = {}
    arities: dict[str, int] = {}
    for mp, rp in sorted(pairs):
        for tup in itertools.product(range(s.i_part.n), repeat=mp):
            elems = tuple(("I", a) for a in tup)
            if not component_check(s, elems, rp):
                continue
            t = bth(s, elems, n, rp, f, _memo=memo)
            name = _bth_predicate_name(t)
            relations.setdefault(name, set()).add(tup)
            arities[name] = mp
    base = s.i_part
    symbols = list(base.vocab.symbols) + [(name, arities[name]) for name in sorted(relations)]
    rels = {k: v for k, v in base.relations.items() if k != base.vocab.order_symbol}
    rels.update({name: frozenset(v) for name, v in relations.items()})
    return Structure(Vocabulary(tuple(symbols), base.vocab.order_symbol), base.n, rels)


def expanded_index_system(s: System, n: int, rbar: Sequence[int],
                          mbar: Sequence[int], f: FGrowth = DEFAULT_GROWTH) -> System:
    """System whose index part is the common expansion for the given radius
    and length vectors; the metric and model part are unchanged."""
    pairs = set()
    for r_l, m_l in zip(rbar, mbar):
        for mp in range(1, m_l + n + 1):
            for rp in range(f.iterate(n, r_l, 3) + 1):
                pairs.add((mp, rp))
    expanded = expand_index(s, n, max(rbar, default=0), max(mbar, default=0), f,
                            _pairs=pairs)
    return System(s.m_part, expanded, s.h, s.dist)


# ---------------------------------------------------------------------------
# Determinism checks

@dataclass
class GroupReport:
    label: str
    groups: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    instances: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        head = "%s: %d instances in %d groups -> %s" % (
            self.label, self.instances, len(self.groups),
            "ok" if self.ok else "%d violations" % len(self.violations))
        return "\n".join([head] + ["  %s" % (v,) for v in self.violations])


def _components_of(s: System, length: int, r: int) -> list[tuple[Elem, ...]]:
    return [tup for tup in itertools.product(s.elements(), repeat=length)
            if component_check(s, tup, r)]


def lemma214_check(pool: Sequence[System], n: int, rbar: Sequence[int],
                   mbar: Sequence[int], f: FGrowth = DEFAULT_GROWTH,
                   max_instances_per_system: int = 4000) -> GroupReport:
    """Group every admissible instance by (sparse index theory over the
    expanded index, the component bth values); the flat theory of the
    concatenated tuple must be constant on each group."""
    rbar = tuple(rbar)
    mbar = tuple(mbar)
    k = len(rbar)
    if len(mbar) != k:
        raise DistortionError("rbar and mbar must have equal length")
    report = GroupReport("distorted-sum determinism n=%d rbar=%s mbar=%s"
                         % (n, rbar, mbar))
    for s in pool:
        expanded = expanded_index_system(s, n, rbar, mbar, f)
        bmemo: dict = {}
        umemo: dict = {}
        tmemo: dict = {}
        count = 0
        component_lists = [_components_of(s, mbar[l], rbar[l]) for l in range(k)]
        for combo in itertools.product(*component_lists):
            bases = [s.h_of(comp[0]) for comp in combo]
            if not sparse_check(s, bases, n, rbar, f):
                continue
            count += 1
            if count > max_instances_per_system:
                break
            t_index = uth(expanded, bases, n, rbar, f, _memo=umemo)
            t_parts = tuple(bth(s, comp, n, rbar[l], f, _memo=bmemo)
                            for l, comp in enumerate(combo))
            key = (t_index, t_parts)
            flat = tuple(e for comp in combo for e in comp)
            value = th(s, flat, n, 0, _memo=tmemo)
            report.instances += 1
            prior = report.groups.get(key)
            if prior is None:
                report.groups[key] = value
            elif prior is not value:
                report.violations.append(
                    ("key %r gives both %r and %r" % (key, prior, value)))
    return report


# ---------------------------------------------------------------------------
# Order-window projection of a model onto its marked points

def check_window_hypothesis(m: Structure, p_symbol: str = "P") -> bool:
    """Every non-order relation tuple spans at most one marked point."""
    marked = sorted(x for (x,) in m.relations[p_symbol])
    for name, _ in m.vocab.non_order_symbols:
        if name == p_symbol:
            continue
        for tup in m.relations[name]:
            lo, hi = min(tup), max(tup)
            if sum(1 for x in marked if lo <= x <= hi) > 1:
                return False
    return True


def window_of(m: Structure, a: int, d: int, p_symbol: str = "P") -> list[int]:
    marked = set(x for (x,) in m.relations[p_symbol])
    cap = 3 ** d

    def count_between(lo, hi):
        return sum(1 for x in marked if lo <= x <= hi)

    return [x for x in range(m.n)
            if (x <= a and count_between(x, a) <= cap)
            or (a <= x and count_between(a, x) <= cap)]


def i_of_m(m: Structure, formulas: Sequence[logic.Formula], d: int,
           p_symbol: str = "P") -> Structure:
    """The marked-point structure: universe the P-points in order, one unary
    predicate per formula, membership decided inside the point's order
    window (at most 3**d marked points away on either side)."""
    if not check_window_hypothesis(m, p_symbol):
        raise DistortionError("a relation tuple spans more than one marked point")
    marked = sorted(x for (x,) in m.relations[p_symbol])
    preds: dict[str, set] = {"P%d" % l: set() for l in range(len(formulas))}
    for rank, a in enumerate(marked):
        window = window_of(m, a, d, p_symbol)
        sub = restrict(m, window)
        a_local = window.index(a)
        for l, phi in enumerate(formulas):
            if logic.eval_formula(sub, phi, {0: a_local}):
                preds["P%d" % l].add((rank,))
    vb = Vocabulary((("<", 2),) + tuple(("P%d" % l, 1) for l in range(len(formulas))),
                    order_symbol="<")
    return Structure(vb, len(marked), {k: frozenset(v) for k, v in preds.items()})


def window_type(m: Structure, a: int, d: int, p_symbol: str = "P") -> Theory:
    window = window_of(m, a, d, p_symbol)
    sub = restrict(m, window)
    return th(lift_to_system(sub, "sim"), (("M", window.index(a)),), d, 0)


def i_of_m_by_types(m: Structure, type_index: dict[Theory, int], d: int,
                    p_symbol: str = "P") -> Structure:
    """i_of_m with the formula family taken to be the characteristic formulas
    of the given window types: membership is type equality."""
    if not check_window_hypothesis(m, p_symbol):
        raise DistortionError("a relation tuple spans more than one marked point")
    marked = sorted(x for (x,) in m.relations[p_symbol])
    count = len(type_index)
    preds: dict[str, set] = {"P%d" % l: set() for l in range(count)}
    for rank, a in enumerate(marked):
        t = window_type(m, a, d, p_symbol)
        l = type_index.get(t)
        if l is not None:
            preds["P%d" % l].add((rank,))
    vb = Vocabulary((("<", 2),) + tuple(("P%d" % l, 1) for l in range(count)),
                    order_symbol="<")
    return Structure(vb, len(marked), {k: frozenset(v) for k, v in preds.items()})


def c216_check(pool: Sequence[Structure], phi: logic.Formula,
               p_symbol: str = "P") -> GroupReport:
    """Group pool members by the depth-d theory of their marked-point
    structure (built from pool-wide realized window types); the truth of
    phi must be constant on each group."""
    d = logic.depth(phi)
    report = GroupReport("window determinism d=%d" % d)
    realized: set[Theory] = set()
    for m in pool:
        if not check_window_hypothesis(m, p_symbol):
            raise DistortionError("pool member violates the window hypothesis")
        for (a,) in m.relations[p_symbol]:
            realized.add(window_type(m, a, d, p_symbol))
    type_index = {t: l for l, t in
                  enumerate(sorted(realized, key=serialize))}
    for m in pool:
        im = i_of_m_by_types(m, type_index, d, p_symbol)
        key = th(lift_to_system(im, "sim"), (), d, 0)
        value = logic.eval_formula(m, phi)
        report.instances += 1
        prior = report.groups.get(key)
        if prior is None:
            report.groups[key] = value
        elif prior != value:
            report.violations.append("group %r mixes phi-truth" % (key,))
    return report
