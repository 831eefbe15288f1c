"""Constructive composition of theories over ordered sums.

The depth-d theory of a concatenation sum is computed from the depth-d
theories of the summands: at depth 0 the combined atom table keeps all
within-summand atoms, makes every cross-summand relational, equality,
h-map and distance atom false, and fixes cross-summand order atoms by
summand position; at depth n+1 each one-element extension of the sum is
an extension of exactly one side.  A pattern records which summand each
global tuple position came from.

Also here: the collapse of linear-order theories at size 2**d, and the
randomized matched-configuration check behind it.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Sequence

from .structures import Structure, Vocabulary, empty_structure, lift_to_system, ordered_sum
from .theory import (Theory, TheoryError, _atom_truth, _reduce_depth,
                     atom_universe, make_th, make_th0, th, th_of_model, serialize)

# pattern: tuple of (side, local position), one entry per global tuple position
Pattern = tuple[tuple[int, int], ...]

_OPLUS_MEMO: dict = {}


def _combined_atoms(t1: Theory, t2: Theory, pattern: Pattern) -> frozenset:
    vocabs = t1.vocabs
    order1 = vocabs[0].order_symbol
    order2 = vocabs[1].order_symbol
    parts = (t1, t2)
    sorts = tuple(parts[side].sorts[local] for side, local in pattern)
    out = set()
    for atom in atom_universe(*vocabs, sorts, 0):
        kind = atom[0]
        if kind == "rel":
            _, layer, name, args = atom
            sides = {pattern[a][0] for a in args}
            if len(sides) > 1:
                # only the designated order crosses summands, by summand index
                is_order = (layer == 1 and name == order1) or (layer == 2 and name == order2)
                if is_order and pattern[args[0]][0] < pattern[args[1]][0]:
                    out.add(atom)
                continue
            side = sides.pop() if sides else 0
            local = ("rel", layer, name, tuple(pattern[a][1] for a in args))
            if local in parts[side].atoms:
                out.add(atom)
        else:
            i, j = atom[1], atom[2]
            if pattern[i][0] != pattern[j][0]:
                continue  # equality, h and distance atoms never cross summands
            side = pattern[i][0]
            local = _relabel(atom, (pattern[i][1], pattern[j][1]))
            if _local_truth(parts[side], local):
                out.add(atom)
    return frozenset(out)


def _relabel(atom: tuple, ij: tuple[int, int]) -> tuple:
    if atom[0] == "dist":
        return ("dist", ij[0], ij[1], atom[3])
    return (atom[0], ij[0], ij[1])


def _local_truth(t: Theory, atom: tuple) -> bool:
    return _atom_truth(t, atom)


def oplus(t1: Theory, t2: Theory, pattern: Pattern = ()) -> Theory:
    """Theory of the two-summand sum from positioned summand theories.

    Empty pattern means both are sentence (arity 0) theories.  The result
    equals th of the actual sum with the interleaved tuple.
    """
    if t1.depth != t2.depth:
        raise TheoryError("depth mismatch: %d vs %d" % (t1.depth, t2.depth))
    if t1.vocabs[0].key() != t2.vocabs[0].key() or t1.vocabs[1].key() != t2.vocabs[1].key():
        raise TheoryError("vocabulary mismatch in oplus")
    if t1.radius != 0 or t2.radius != 0:
        raise TheoryError("oplus is defined for radius-0 theories")
    pattern = tuple(pattern)
    counts = [0, 0]
    for side, local in pattern:
        if local != counts[side]:
            raise TheoryError("pattern local positions must be contiguous per summand")
        counts[side] += 1
    if counts != [t1.arity, t2.arity]:
        raise TheoryError("pattern does not match the theories' arities")
    return _oplus(t1, t2, pattern)


def _oplus(t1: Theory, t2: Theory, pattern: Pattern) -> Theory:
    key = (t1, t2, pattern)
    got = _OPLUS_MEMO.get(key)
    if got is not None:
        return got
    if t1.depth == 0:
        sorts = tuple((t1, t2)[side].sorts[local] for side, local in pattern)
        result = make_th0(t1.vocabs, 0, sorts, _combined_atoms(t1, t2, pattern))
    else:
        # an extension of the sum extends exactly one side; the other side
        # contributes its one-level-shallower theory
        memo: dict = {}
        t1_low = _reduce_depth(t1, t1.depth - 1, memo)
        t2_low = _reduce_depth(t2, t2.depth - 1, memo)
        children = []
        for c in t1.body:
            children.append(_oplus(c, t2_low, pattern + ((0, t1.arity),)))
        for c in t2.body:
            children.append(_oplus(t1_low, c, pattern + ((1, t2.arity),)))
        sorts = tuple((t1, t2)[side].sorts[local] for side, local in pattern)
        result = make_th(t1.vocabs, t1.depth, 0, sorts, children)
    _OPLUS_MEMO[key] = result
    return result


def sum_theory(parts: Sequence[Theory], vb: Vocabulary | None = None) -> Theory:
    """Left fold of oplus over sentence theories; the empty fold is the
    theory of the empty structure (the neutral element)."""
    if not parts:
        if vb is None:
            raise TheoryError("empty sum_theory needs a vocabulary")
        return th_of_model(empty_structure(vb), 0)
    acc = parts[0]
    for t in parts[1:]:
        if t.arity != 0 or acc.arity != 0:
            raise TheoryError("sum_theory folds sentence theories only")
        acc = oplus(acc, t)
    return acc


def order_theory(n: int, d: int, check: bool = False) -> Theory:
    """th^d of the pure linear order (n, <), computed on the collapsed size
    min(n, 2**d); with check=True the collapse is verified one step further."""
    from .structures import order_structure
    cap = 2 ** d
    t = th_of_model(order_structure(min(n, cap)), d)
    if check and n > cap:
        assert t is th_of_model(order_structure(min(n, cap + 1)), d), \
            "order collapse failed at n=%d d=%d" % (n, d)
    return t


# ---------------------------------------------------------------------------
# Matched-configuration check: equal positioned theories, gap lengths equal
# or both past the collapse threshold, imply equal theories of the sums.

@dataclass
class StarDReport:
    d: int
    trials: int
    seed: int
    counterexamples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.counterexamples

    def __str__(self):
        lines = ["matched-sum check: d=%d trials=%d seed=%d -> %s"
                 % (self.d, self.trials, self.seed,
                    "ok" if self.ok else "%d counterexamples" % len(self.counterexamples))]
        for side1, side2, ta, tb in self.counterexamples:
            lines.append("  sum1=%s" % [s.key() for s in side1])
            lines.append("  sum2=%s" % [s.key() for s in side2])
            lines.append("  th1=%s" % serialize(ta))
            lines.append("  th2=%s" % serialize(tb))
        return "\n".join(lines)


def _tuples_of(m: Structure, max_len: int):
    out = [()]
    for length in range(1, max_len + 1):
        out.extend(itertools.product(range(m.n), repeat=length))
    return out


def star_d_check(pool: Sequence[Structure], d: int, trials: int, seed: int,
                 max_marks: int = 2, max_gap_len: int = 3) -> StarDReport:
    """Random matched pairs of sums: marked summands carry tuples with equal
    depth-d theories, gap lengths are equal or both >= 2**d - 1, and each
    gap draws all its summands from one theory class.  The theories of the
    two sums on the concatenated tuples must agree."""
    if not pool:
        raise TheoryError("empty summand pool")
    vb = pool[0].vocab
    rng = random.Random(seed)
    report = StarDReport(d, trials, seed)

    # group (structure, tuple) pairs by positioned theory, structures by sentence theory
    marked_classes: dict[Theory, list] = {}
    for m in pool:
        for tup in _tuples_of(m, 2):
            marked_classes.setdefault(th_of_model(m, d, tup), []).append((m, tup))
    sentence_classes: dict[Theory, list] = {}
    for m in pool:
        sentence_classes.setdefault(th_of_model(m, d), []).append(m)
    sent_keys = sorted(sentence_classes, key=lambda t: t._id)
    mark_keys = sorted(marked_classes, key=lambda t: t._id)

    threshold = 2 ** d - 1
    for _ in range(trials):
        n_marks = rng.randint(0, max_marks)
        marks = []
        for _ in range(n_marks):
            cls = marked_classes[rng.choice(mark_keys)]
            marks.append((rng.choice(cls), rng.choice(cls)))
        gaps = []
        for _ in range(n_marks + 1):
            cls = sentence_classes[rng.choice(sent_keys)]
            if rng.random() < 0.5:
                length = rng.randint(0, max_gap_len)
                lengths = (length, length)
            else:
                lengths = (rng.randint(threshold, threshold + max_gap_len),
                           rng.randint(threshold, threshold + max_gap_len))
            gaps.append((cls, lengths))

        sides = []
        tuples = []
        for which in (0, 1):
            summands: list[Structure] = []
            gtuple: list[tuple[str, int]] = []
            for g, (cls, lengths) in enumerate(gaps):
                summands.extend(rng.choice(cls) for _ in range(lengths[which]))
                if g < n_marks:
                    m, tup = marks[g][which]
                    offset = sum(s.n for s in summands)
                    summands.append(m)
                    gtuple.extend(("M", offset + e) for e in tup)
            sides.append(summands)
            tuples.append(tuple(gtuple))

        ths = []
        for summands, gtuple in zip(sides, tuples):
            total = ordered_sum(summands) if summands else empty_structure(vb)
            ths.append(th(lift_to_system(total, "sim"), gtuple, d, 0))
        if ths[0] is not ths[1]:
            report.counterexamples.append((sides[0], sides[1], ths[0], ths[1]))
    return report
