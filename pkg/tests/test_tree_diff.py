import random
from collections import Counter

import pytest

from patchforge.ast_core import AstNode, iter_nodes, parse_source, renumber, structurally_equal
from patchforge.errors import InconsistentMapping
from patchforge.tree_diff import (
    MappingSet, apply_edit_script, edit_script, extract_change_pairs,
    match_trees,
)


def make_tree(spec):
    """spec: (label, value) leaf or (label, [children]) interior."""
    label, rest = spec
    if isinstance(rest, list):
        children = [make_tree(c) for c in rest]
        height = 1 + max(c.height for c in children) if children else 1
        return AstNode(0, label, "", children, (0, 0), height)
    return AstNode(0, label, rest)


def build(spec):
    return renumber(make_tree(spec))


def label_multiset(root):
    return Counter(n.label for n in iter_nodes(root))


def oracle_max_pairs(src, dst):
    """Maximum size of any injective label-respecting mapping.

    The bipartite graph decomposes per label into complete blocks, so the
    enumeration maximum is the sum of per-label minimum counts.
    """
    a = label_multiset(src)
    b = label_multiset(dst)
    return sum(min(c, b[label]) for label, c in a.items())


def random_tree(rng, size, labels=("A", "B", "C"), values=("x", "y", "z")):
    root = AstNode(0, "root", "")
    nodes = [root]
    for _ in range(size - 1):
        parent = rng.choice(nodes)
        if parent.value:
            parent.value = ""  # node grows children, drop leaf value
        child = AstNode(0, rng.choice(labels), rng.choice(values))
        parent.children.append(child)
        nodes.append(child)

    def fix(node):
        node.height = 1 + max((fix(c) for c in node.children), default=0)
        return node.height

    fix(root)
    return renumber(root)


def mutate(rng, root):
    """Structure-preserving copy with a few random value edits."""
    def copy(node):
        out = AstNode(0, node.label, node.value,
                      [copy(c) for c in node.children], node.span, node.height)
        return out

    twin = copy(root)
    leaves_ = [n for n in iter_nodes(twin) if n.is_leaf()]
    for _ in range(rng.randrange(0, 3)):
        rng.choice(leaves_).value = rng.choice(("p", "q", "r"))
    return renumber(twin)


def check_invariants(src, dst, mapping):
    src_nodes = {n.id: n for n in iter_nodes(src)}
    dst_nodes = {n.id: n for n in iter_nodes(dst)}
    seen_src, seen_dst = set(), set()
    for s, d in mapping.pairs:
        assert s not in seen_src and d not in seen_dst
        seen_src.add(s)
        seen_dst.add(d)
        assert src_nodes[s].label == dst_nodes[d].label


def test_identical_trees_fully_mapped():
    text = "class A { int f = 1 ; void m ( ) { f = f + 1 ; } }"
    src = parse_source(text).ast
    dst = parse_source(text).ast
    mapping = match_trees(src, dst)
    assert len(mapping) == sum(1 for _ in iter_nodes(src))


def test_disjoint_labels_empty_mapping():
    src = build(("A", [("B", "x"), ("B", "y")]))
    dst = build(("C", [("D", "x"), ("D", "y")]))
    mapping = match_trees(src, dst)
    assert len(mapping) == 0


def test_leaf_rename_recovered():
    # 9-node fixture: one leaf renamed; everything maps, rename included.
    spec_src = ("root", [("S", [("N", "a"), ("O", "="), ("L", "1")]),
                         ("S", [("N", "b"), ("O", "="), ("L", "2")])])
    spec_dst = ("root", [("S", [("N", "a"), ("O", "="), ("L", "1")]),
                         ("S", [("N", "RENAMED"), ("O", "="), ("L", "2")])])
    src = build(spec_src)
    dst = build(spec_dst)
    assert sum(1 for _ in iter_nodes(src)) == 9
    mapping = match_trees(src, dst)
    assert len(mapping) == 9 == oracle_max_pairs(src, dst)
    check_invariants(src, dst, mapping)


def test_anchor_soundness_values_included():
    # Same shape, all values differ: no anchors may pair unequal values,
    # but recovery still maps every node.
    src = build(("root", [("S", [("N", "a"), ("L", "1")])]))
    dst = build(("root", [("S", [("N", "b"), ("L", "2")])]))
    mapping = match_trees(src, dst, min_height=1)
    assert len(mapping) == oracle_max_pairs(src, dst)


def test_matcher_attains_oracle_on_mutated_pairs():
    rng = random.Random(11)
    for _ in range(150):
        src = random_tree(rng, rng.randrange(2, 12))
        dst = mutate(rng, src)
        mapping = match_trees(src, dst)
        check_invariants(src, dst, mapping)
        assert len(mapping) == oracle_max_pairs(src, dst)


def test_matcher_invariants_on_unrelated_pairs():
    rng = random.Random(13)
    for _ in range(300):
        src = random_tree(rng, rng.randrange(1, 14))
        dst = random_tree(rng, rng.randrange(1, 14))
        mapping = match_trees(src, dst)
        check_invariants(src, dst, mapping)
        # equal-label roots guarantee the brute-force maximum is attained
        assert len(mapping) == oracle_max_pairs(src, dst)


def test_greedy_height_order():
    # The tall identical subtree must anchor as a whole, not piecewise.
    deep = ("A", [("B", [("C", [("N", "x")])])])
    src = build(("root", [deep, ("N", "x")]))
    dst = build(("root", [deep, ("N", "x")]))
    mapping = match_trees(src, dst)
    src_nodes = list(iter_nodes(src))
    dst_nodes = list(iter_nodes(dst))
    # the deep chain maps positionally (anchor), id-by-id
    for i in range(1, 5):
        assert (src_nodes[i].id, dst_nodes[i].id) in mapping.pairs


def test_edit_script_identical_empty():
    text = "class A { void m ( ) { return ; } }"
    src = parse_source(text).ast
    dst = parse_source(text).ast
    mapping = match_trees(src, dst)
    assert edit_script(src, dst, mapping) == []


def test_edit_script_single_update():
    src = parse_source("int x = 1 ;").ast
    dst = parse_source("int x = 2 ;").ast
    mapping = match_trees(src, dst, min_height=1)
    script = edit_script(src, dst, mapping)
    assert [a.kind for a in script] == ["update"]
    assert script[0].payload == "2"
    result = apply_edit_script(src, script)
    assert structurally_equal(result, dst)


def test_edit_script_statement_insert():
    src = parse_source("class A { void m ( int p ) { return ; } }").ast
    dst = parse_source(
        "class A { void m ( int p ) { check ( p ) ; return ; } }").ast
    mapping = match_trees(src, dst)
    script = edit_script(src, dst, mapping)
    inserts = [a for a in script if a.kind == "insert"]
    assert inserts and all(a.kind == "insert" for a in script)
    result = apply_edit_script(src, script)
    assert structurally_equal(result, dst)


def test_edit_script_inconsistent_mapping():
    src = parse_source("int x = 1 ;").ast
    dst = parse_source("int x = 2 ;").ast
    bogus = MappingSet()
    bogus.pairs.add((999, 5))
    with pytest.raises(InconsistentMapping):
        edit_script(src, dst, bogus)


def test_apply_and_compare_random_pairs():
    rng = random.Random(17)
    for _ in range(120):
        src = random_tree(rng, rng.randrange(2, 16))
        if rng.random() < 0.5:
            dst = mutate(rng, src)
        else:
            dst = random_tree(rng, rng.randrange(2, 16))
        mapping = match_trees(src, dst)
        script = edit_script(src, dst, mapping)
        result = apply_edit_script(src, script)
        assert structurally_equal(result, dst)


def test_apply_and_compare_source_pairs():
    before = """
    class A {
        int f = 0 ;
        void m ( int p ) {
            int a = 1 ;
            int b = a + 2 ;
            use ( b ) ;
        }
    }
    """
    after = """
    class A {
        int f = 0 ;
        void m ( int p ) {
            int a = 1 ;
            if ( p == 0 ) { return ; }
            int b = a + 3 ;
            use ( b , f ) ;
        }
    }
    """
    src = parse_source(before).ast
    dst = parse_source(after).ast
    mapping = match_trees(src, dst)
    script = edit_script(src, dst, mapping)
    assert structurally_equal(apply_edit_script(src, script), dst)


def test_extract_identical_units():
    text = "class A { void m ( ) { return ; } }"
    assert extract_change_pairs(parse_source(text), parse_source(text)) == []


def test_extract_whitespace_only_change():
    a = parse_source("class A { void m ( ) { int x = 1 ; } }")
    b = parse_source("class A {\n  void m ( ) {\n    int x   = 1 ;\n  }\n}")
    assert extract_change_pairs(a, b) == []


def test_extract_rhs_change():
    a = parse_source("class A { void m ( ) { int x = 1 ; use ( x ) ; } }")
    b = parse_source("class A { void m ( ) { int x = 2 ; use ( x ) ; } }")
    diffs = extract_change_pairs(a, b)
    assert len(diffs) == 1
    d = diffs[0]
    assert d.st_src == "int x = 1 ;"
    assert d.st_dst == "int x = 2 ;"
    assert a.text[d.src_span[0]:d.src_span[1]] == "int x = 1 ;"


def test_extract_guard_insertion():
    a = parse_source(
        "class A { void m ( String t ) { store ( t ) ; return ; } }")
    b = parse_source(
        "class A { void m ( String t ) { if ( t == null ) { return ; } "
        "store ( t ) ; return ; } }")
    diffs = extract_change_pairs(a, b)
    assert len(diffs) == 1
    d = diffs[0]
    assert d.st_src is None
    assert d.st_dst == "if ( t == null ) { return ; }"
    assert d.dst_span is not None


def test_extract_whole_method_addition_dropped():
    a = parse_source("class A { void m ( ) { return ; } }")
    b = parse_source(
        "class A { void m ( ) { return ; } "
        "void extra ( ) { log ( ) ; } }")
    assert extract_change_pairs(a, b) == []


def test_extract_whole_method_deletion_dropped():
    a = parse_source(
        "class A { void m ( ) { return ; } void extra ( ) { log ( ) ; } }")
    b = parse_source("class A { void m ( ) { return ; } }")
    assert extract_change_pairs(a, b) == []


def test_extract_multiple_diffs_in_source_order():
    a = parse_source(
        "class A { void m ( ) { int x = 1 ; int y = 2 ; use ( x , y ) ; } }")
    b = parse_source(
        "class A { void m ( ) { int x = 9 ; int y = 2 ; use ( y , x ) ; } }")
    diffs = extract_change_pairs(a, b)
    assert [d.st_src for d in diffs] == ["int x = 1 ;", "use ( x , y ) ;"]


def test_extract_signature_change_is_header_diff():
    a = parse_source("class A { void m ( int p ) { use ( p ) ; } }")
    b = parse_source("class A { void m ( int p , int q ) { use ( p ) ; } }")
    diffs = extract_change_pairs(a, b)
    assert len(diffs) == 1
    assert diffs[0].st_src == "void m ( int p )"
    assert diffs[0].st_dst == "void m ( int p , int q )"
