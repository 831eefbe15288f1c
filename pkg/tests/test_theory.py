import itertools
import random

import pytest

from fmtlab import logic
from fmtlab.structures import (GRAPH_ORDER, Structure, Vocabulary,
                               graph_order_structure, lift_to_system,
                               order_structure, vocab)
from fmtlab.theory import (TheoryError, characteristic_formula,
                           depth0_theory, enumerate_th0, reduce_theory,
                           serialize, th, th_of_model, truth_from_theory)


def undirected(n, edges):
    rel = set()
    for i, j in edges:
        rel.add((i, j))
        rel.add((j, i))
    return Structure(vocab(("R", 2)), n, {"R": frozenset(rel)})


def graph_pool(seed, count, n_max, vb=GRAPH_ORDER):
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        n = rng.randint(1, n_max)
        rels = {}
        for name, arity in vb.non_order_symbols:
            rels[name] = frozenset(
                t for t in itertools.product(range(n), repeat=arity)
                if rng.random() < 0.35)
        out.append(Structure(vb, n, rels))
    return out


class TestTh:
    def test_empty_tuple_depth0_is_empty_table(self):
        t = th_of_model(order_structure(3), 0)
        assert t.depth == 0 and t.arity == 0 and not t.atoms

    def test_small_orders_equal_at_depth1(self):
        assert th_of_model(order_structure(1), 1) is th_of_model(order_structure(2), 1)

    def test_orders_separated_at_depth2(self):
        assert th_of_model(order_structure(2), 2) is not th_of_model(order_structure(3), 2)

    def test_element_out_of_range(self):
        s = lift_to_system(order_structure(2), "sim")
        with pytest.raises(TheoryError):
            th(s, (("M", 5),), 1, 0)

    def test_isomorphism_invariance(self):
        # the same graph written with permuted labels, tuples mapped along
        base = undirected(4, [(0, 1), (2, 3)])
        perm = {0: 2, 1: 3, 2: 0, 3: 1}
        image = undirected(4, [(perm[0], perm[1]), (perm[2], perm[3])])
        s1 = lift_to_system(base, "dis")
        s2 = lift_to_system(image, "dis")
        for a, b in [(0, 1), (1, 2), (3, 0)]:
            t1 = th(s1, (("M", a), ("I", b)), 2, 1)
            t2 = th(s2, (("M", perm[a]), ("I", perm[b])), 2, 1)
            assert t1 is t2

    def test_radius_immaterial_on_sim_lifts(self):
        pool = graph_pool(8, 12, 4)
        by_r0 = {}
        for m in pool:
            s = lift_to_system(m, "sim")
            key = th(s, (("M", 0),), 1, 0)
            by_r0.setdefault(key, set()).add(th(s, (("M", 0),), 1, 2))
        for variants in by_r0.values():
            assert len(variants) == 1


class TestTruthFromTheory:
    def test_psi0_matches_eval(self):
        phi = logic.parse(logic.PSI0_TEXT, GRAPH_ORDER)
        for m in [graph_order_structure(5, []), graph_order_structure(4, [(0, 1)]),
                  graph_order_structure(3, [(0, 2), (1, 2)])]:
            t = th_of_model(m, 3)
            assert truth_from_theory(t, phi) == logic.eval_formula(m, phi)

    def test_tautology_any_arity1_theory(self):
        t = th_of_model(order_structure(3), 0, [1])
        assert truth_from_theory(t, logic.parse("x0=x0", GRAPH_ORDER))

    def test_depth_excess_rejected(self):
        t = th_of_model(order_structure(3), 1)
        with pytest.raises(TheoryError):
            truth_from_theory(t, logic.parse("E x0. E x1. x0<x1", GRAPH_ORDER))

    def test_free_variables_use_tuple_positions(self):
        m = graph_order_structure(4, [(1, 3)])
        t = th_of_model(m, 1, [1, 3])
        f = logic.parse("R(x0,x1)", GRAPH_ORDER)
        assert truth_from_theory(t, f) == logic.eval_formula(m, f, {0: 1, 1: 3})

    def test_index_sort_positions_rejected(self):
        s = lift_to_system(graph_order_structure(3, [(0, 1)]), "sim")
        t = th(s, (("I", 0), ("I", 1)), 1, 0)
        with pytest.raises(TheoryError, match="model-sort"):
            truth_from_theory(t, logic.parse("R(x0,x1)", GRAPH_ORDER))

    def test_oracle_equivalence_sample(self):
        # broader randomized agreement beyond the acceptance run
        rng = random.Random(77)
        pool = graph_pool(3, 20, 4, Vocabulary((("<", 2), ("R", 2), ("P", 1)), "<"))
        vb = pool[0].vocab
        sentences = [
            "E x0. P(x0)",
            "A x0. (P(x0) -> (E x1. R(x0,x1)))",
            "E x0. E x1. (x0<x1 & R(x1,x0))",
            "A x0. A x1. (x0=x1 | x0<x1 | x1<x0)",
            "E x0. A x1. ~(x1<x0)",
        ]
        for text in sentences:
            f = logic.parse(text, vb)
            for m in pool:
                t = th_of_model(m, logic.depth(f))
                assert truth_from_theory(t, f) == logic.eval_formula(m, f), (text, m)


class TestReduce:
    def test_identity(self):
        t = th_of_model(order_structure(3), 2, [0, 2], r=1)
        assert reduce_theory(t, 2, 1, [0, 1]) is t

    def test_projection_swap_matches_direct(self):
        s = lift_to_system(undirected(4, [(0, 1), (1, 2)]), "dis")
        t = th(s, (("M", 0), ("M", 2)), 2, 1)
        assert reduce_theory(t, 2, 1, [1, 0]) is th(s, (("M", 2), ("M", 0)), 2, 1)

    def test_depth_drop_matches_direct(self):
        s = lift_to_system(graph_order_structure(4, [(0, 3)]), "sim")
        t = th(s, (("M", 1),), 2, 0)
        assert reduce_theory(t, 1, 0, [0]) is th(s, (("M", 1),), 1, 0)

    def test_monotone_consistency_grid(self):
        pool = [lift_to_system(m, "dis") for m in
                [undirected(3, [(0, 1)]), undirected(4, [(0, 1), (1, 2), (2, 3)]),
                 undirected(2, [])]]
        for s in pool:
            for n, r in [(2, 1), (1, 1), (2, 0)]:
                t = th(s, (("M", 0), ("I", 1)), n, r)
                for n2 in range(n + 1):
                    for r2 in range(r + 1):
                        direct = th(s, (("M", 0), ("I", 1)), n2, r2)
                        assert reduce_theory(t, n2, r2, [0, 1]) is direct

    def test_projection_duplicate_and_drop(self):
        s = lift_to_system(undirected(3, [(0, 2)]), "dis")
        t = th(s, (("M", 0), ("M", 2)), 1, 0)
        assert reduce_theory(t, 1, 0, [0, 0]) is th(s, (("M", 0), ("M", 0)), 1, 0)
        assert reduce_theory(t, 1, 0, [1]) is th(s, (("M", 2),), 1, 0)

    def test_parameter_increase_rejected(self):
        t = th_of_model(order_structure(2), 1)
        with pytest.raises(TheoryError):
            reduce_theory(t, 2, 0, [])
        with pytest.raises(TheoryError):
            reduce_theory(t, 1, 1, [])


class TestSimpleSystemUpgrade:
    def test_depth_for_radius_trade(self):
        # on shortest-path metrics, agreement at depth n+r radius 1 forces
        # agreement at depth n radius 2**r
        pool = [lift_to_system(m, "dis") for m in
                [undirected(n, edges) for n, edges in [
                    (2, []), (2, [(0, 1)]), (3, [(0, 1)]), (3, [(0, 1), (1, 2)]),
                    (4, [(0, 1), (1, 2), (2, 3)]), (4, [(0, 1), (2, 3)]),
                    (5, [(0, 1), (1, 2), (2, 3), (3, 4)])]]]
        for n, r in [(1, 1), (2, 1), (1, 2)]:
            seen = {}
            for s in pool:
                for e in [("M", 0), ("I", s.i_part.n - 1)]:
                    high = th(s, (e,), n + r, 1)
                    low = th(s, (e,), n, 2 ** r)
                    if high in seen:
                        assert seen[high] is low
                    else:
                        seen[high] = low


class TestCharacteristicFormula:
    def test_isolated_vertex_table(self):
        t = th_of_model(graph_order_structure(1, []), 0, [0])
        f = characteristic_formula(t)
        assert logic.Not(logic.Rel("R", (0, 0))) in f.subs

    def test_self_satisfaction(self):
        m = graph_order_structure(4, [(1, 2)])
        t = th_of_model(m, 1)
        assert logic.eval_formula(m, characteristic_formula(t))

    def test_separates_pool_at_depth2(self):
        pool = graph_pool(10, 14, 4)
        target = pool[0]
        t = th_of_model(target, 2)
        f = characteristic_formula(t)
        assert logic.depth(f) == 2
        for m in pool:
            assert logic.eval_formula(m, f) == (th_of_model(m, 2) is t)

    def test_tuple_version(self):
        m = graph_order_structure(3, [(0, 2)])
        t = th_of_model(m, 1, [0, 2])
        f = characteristic_formula(t)
        assert logic.eval_formula(m, f, {0: 0, 1: 2})
        assert not logic.eval_formula(m, f, {0: 0, 1: 1})

    def test_rejects_system_theories(self):
        s = lift_to_system(order_structure(2), "sim")
        t = th(s, (("I", 0),), 1, 0)
        with pytest.raises(TheoryError):
            characteristic_formula(t)


class TestEnumerate:
    def test_arity0_single_theory(self):
        vb = vocab(("R", 2))
        assert len(enumerate_th0(vb, vb, 0, 0)) == 1

    def test_plain_loop_atom_count(self):
        vb = vocab(("R", 2))
        assert len(enumerate_th0(vb, vb, 1, 0, sorts=("M",))) == 2

    def test_dist_monotone_excluded(self):
        vb = vocab(("R", 2))
        theories = enumerate_th0(vb, vb, 2, 1, sorts=("M", "M"))
        for t in theories:
            assert not (("dist", 0, 1, 0) in t.atoms and ("dist", 0, 1, 1) not in t.atoms)

    def test_realized_tables_are_enumerated(self):
        vb = vocab(("R", 2))
        formal = enumerate_th0(vb, vb, 2, 1, sorts=("M", "M"))
        rng = random.Random(4)
        for _ in range(30):
            n = rng.randint(2, 4)
            m = Structure(vb, n, {"R": frozenset(
                t for t in itertools.product(range(n), repeat=2)
                if rng.random() < 0.5)})
            s = lift_to_system(m, "dis")
            a, b = rng.randrange(n), rng.randrange(n)
            assert depth0_theory(s, (("M", a), ("M", b)), 1) in formal

    def test_equality_congruence_enforced(self):
        vb = vocab(("P", 1))
        theories = enumerate_th0(vb, vb, 2, 0, sorts=("M", "M"))
        for t in theories:
            if ("eq", 0, 1) in t.atoms:
                assert (("rel", 1, "P", (0,)) in t.atoms) == \
                       (("rel", 1, "P", (1,)) in t.atoms)

    def test_size_guard(self):
        vb = vocab(("R", 2))
        with pytest.raises(TheoryError):
            enumerate_th0(vb, vb, 4, 3)


class TestSerialization:
    def test_stable_and_distinct(self):
        t1 = th_of_model(order_structure(2), 1)
        t2 = th_of_model(order_structure(3), 2)
        assert serialize(t1) == serialize(th_of_model(order_structure(2), 1))
        assert serialize(t1) != serialize(t2)

    def test_sorted_body(self):
        text = serialize(th_of_model(order_structure(2), 1))
        assert text.startswith("(th d=1")
