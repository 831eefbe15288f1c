import random

import pytest

from fmtlab.structures import (DEFAULT_GROWTH, FGrowth, INF, Structure,
                               StructureError, System, Vocabulary,
                               empty_structure, gaifman_distances,
                               graph_order_structure, lift_to_system,
                               load_structure, neighborhood, order_structure,
                               ordered_sum, restrict, save_structure,
                               structure_from_json, structure_to_json, vocab)


def undirected(n, edges):
    rel = set()
    for i, j in edges:
        rel.add((i, j))
        rel.add((j, i))
    return Structure(vocab(("R", 2)), n, {"R": frozenset(rel)})


class TestVocabulary:
    def test_duplicate_names_rejected(self):
        with pytest.raises(StructureError):
            Vocabulary((("R", 2), ("R", 1)))

    def test_order_symbol_must_be_binary(self):
        with pytest.raises(StructureError):
            Vocabulary((("<", 1),), order_symbol="<")

    def test_zero_arity_rejected(self):
        with pytest.raises(StructureError):
            Vocabulary((("Q", 0),))


class TestStructure:
    def test_tuples_validated(self):
        with pytest.raises(StructureError):
            Structure(vocab(("R", 2)), 2, {"R": {(0, 5)}})
        with pytest.raises(StructureError):
            Structure(vocab(("R", 2)), 2, {"R": {(0,)}})

    def test_order_relation_is_implicit(self):
        m = order_structure(3)
        assert m.rel("<") == frozenset({(0, 1), (0, 2), (1, 2)})

    def test_unknown_relation_rejected(self):
        with pytest.raises(StructureError):
            Structure(vocab(("R", 2)), 2, {"Q": set()})


class TestOrderedSum:
    def test_orders_concatenate(self):
        assert ordered_sum([order_structure(2), order_structure(3)]) == order_structure(5)

    def test_singleton_identity(self):
        m = graph_order_structure(3, [(0, 2)])
        assert ordered_sum([m]) == m

    def test_two_one_edge_graphs(self):
        g = graph_order_structure(2, [(0, 1)])
        total = ordered_sum([g, g])
        edges = {t for t in total.rel("R") if t[0] < t[1]}
        assert total.n == 4
        assert edges == {(0, 1), (2, 3)}

    def test_no_tuple_spans_summands(self):
        rng = random.Random(3)
        for _ in range(20):
            parts = []
            for _ in range(rng.randint(1, 3)):
                n = rng.randint(1, 4)
                parts.append(graph_order_structure(
                    n, [(i, j) for i in range(n) for j in range(i + 1, n)
                        if rng.random() < 0.5]))
            total = ordered_sum(parts)
            bounds = []
            offset = 0
            for p in parts:
                bounds.append((offset, offset + p.n))
                offset += p.n
            for i, j in total.rel("R"):
                assert any(lo <= i < hi and lo <= j < hi for lo, hi in bounds)

    def test_associative(self):
        a = graph_order_structure(2, [(0, 1)])
        b = graph_order_structure(1, [])
        c = graph_order_structure(3, [(1, 2)])
        assert ordered_sum([ordered_sum([a, b]), c]) == ordered_sum([a, ordered_sum([b, c])])

    def test_vocab_mismatch(self):
        with pytest.raises(StructureError):
            ordered_sum([order_structure(1), undirected(1, [])])

    def test_empty_list(self):
        with pytest.raises(StructureError):
            ordered_sum([])


class TestRestrict:
    def test_order_restriction(self):
        assert restrict(order_structure(5), {1, 3, 4}) == order_structure(3)

    def test_full_identity(self):
        m = graph_order_structure(4, [(0, 3)])
        assert restrict(m, range(4)) == m

    def test_edge_kept(self):
        m = graph_order_structure(3, [(0, 2)])
        assert restrict(m, {0, 2}) == graph_order_structure(2, [(0, 1)])

    def test_out_of_range(self):
        with pytest.raises(StructureError):
            restrict(order_structure(2), {0, 5})


class TestLift:
    def test_sim_distances(self):
        s = lift_to_system(order_structure(3), "sim")
        assert s.d_of(("M", 0), ("M", 1)) is INF
        assert s.d_of(("M", 2), ("I", 2)) == 0

    def test_dis_path_distance(self):
        s = lift_to_system(undirected(3, [(0, 1), (1, 2)]), "dis")
        assert s.d_of(("M", 0), ("M", 2)) == 2

    def test_dis_disconnected(self):
        s = lift_to_system(undirected(2, []), "dis")
        assert s.d_of(("M", 0), ("M", 1)) is INF

    def test_dis_equals_bfs_oracle(self):
        rng = random.Random(11)
        for _ in range(25):
            n = rng.randint(1, 7)
            edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                     if rng.random() < 0.3]
            m = undirected(n, edges)
            got = gaifman_distances(m)
            adj = {i: set() for i in range(n)}
            for i, j in edges:
                adj[i].add(j)
                adj[j].add(i)
            for src in range(n):
                seen = {src: 0}
                queue = [src]
                while queue:
                    u = queue.pop(0)
                    for v in adj[u]:
                        if v not in seen:
                            seen[v] = seen[u] + 1
                            queue.append(v)
                for dst in range(n):
                    assert got[src][dst] == seen.get(dst, INF)

    def test_order_makes_gaifman_complete(self):
        s = lift_to_system(graph_order_structure(4, []), "dis")
        assert s.d_of(("M", 0), ("M", 3)) == 1


class TestSystem:
    def test_h_must_be_onto(self):
        part = order_structure(2)
        with pytest.raises(StructureError):
            System(part, part, (0, 0), ((0, INF), (INF, 0)))

    def test_triangle_inequality_enforced(self):
        part = order_structure(3)
        bad = ((0, 1, 9), (1, 0, 1), (9, 1, 0))
        with pytest.raises(StructureError):
            System(part, part, (0, 1, 2), bad)

    def test_neighborhood_monotone(self):
        s = lift_to_system(undirected(5, [(0, 1), (1, 2), (2, 3)]), "dis")
        for x in s.elements():
            for r in range(4):
                assert neighborhood(s, x, r) <= neighborhood(s, x, r + 1)

    def test_neighborhood_r0_sim(self):
        s = lift_to_system(order_structure(3), "sim")
        assert neighborhood(s, ("M", 1), 0) == {("M", 1), ("I", 1)}

    def test_neighborhood_all_infinite(self):
        s = lift_to_system(undirected(3, []), "sim")
        base = neighborhood(s, ("M", 0), 0)
        for r in range(1, 5):
            assert neighborhood(s, ("M", 0), r) == base

    def test_dis_path_neighborhood(self):
        s = lift_to_system(undirected(3, [(0, 1), (1, 2)]), "dis")
        assert neighborhood(s, ("M", 1), 1) == set(s.elements())


class TestGrowth:
    def test_default_satisfies_inequalities(self):
        DEFAULT_GROWTH.check(12, 12)

    def test_default_rule_values(self):
        assert DEFAULT_GROWTH(0, 0) == 1
        assert DEFAULT_GROWTH(2, 1) == 10
        assert DEFAULT_GROWTH.iterate(1, 0, 2) == 6

    def test_default_is_not_nice(self):
        strict = FGrowth(nice_flag=True)
        with pytest.raises(StructureError):
            strict.check(2, 2)

    def test_bad_rule_detected(self):
        with pytest.raises(StructureError):
            FGrowth(rule=lambda n, r: r).check(1, 1)


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        m = Structure(Vocabulary((("<", 2), ("R", 2), ("P", 1)), "<"), 5,
                      {"R": {(0, 3), (3, 0)}, "P": {(2,)}})
        path = tmp_path / "m.json"
        save_structure(m, str(path))
        assert load_structure(str(path)) == m

    def test_order_must_not_be_listed(self):
        text = ('{"vocab": [["<",2]], "order": "<", "n": 2, '
                '"relations": {"<": [[0,1]]}}')
        with pytest.raises(StructureError):
            structure_from_json(text)

    def test_example_document(self):
        text = ('{"vocab": [["<",2],["R",2],["P",1]], "order": "<", "n": 5, '
                '"relations": {"R": [[0,3],[3,0]], "P": [[2]]}}')
        m = structure_from_json(text)
        assert m.n == 5 and (0, 3) in m.rel("R") and (2,) in m.rel("P")
        assert structure_from_json(structure_to_json(m)) == m
