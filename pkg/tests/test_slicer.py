import random

import pytest

from patchforge.ast_core import STATEMENT_LABELS, iter_nodes, node_text, parse_source
from patchforge.errors import SpanNotStatement
from patchforge.lexer import EMPTY_MARKER
from patchforge.slicer import (
    DefUseChain, _method_items, assemble_change_pair, build_defuse_chain,
    context_chain,
)
from patchforge.tree_diff import extract_change_pairs


def stmt_span(unit, text):
    """Span of the statement whose normalized text equals ``text``."""
    for node in iter_nodes(unit.ast):
        if node.label in STATEMENT_LABELS and node_text(node) == text:
            return node.span
    raise AssertionError(f"no statement {text!r}")


def chain_for(source, focal_text, transitive=True):
    unit = parse_source(source)
    return build_defuse_chain(unit, stmt_span(unit, focal_text), transitive)


# --- independent oracle ------------------------------------------------------
# Reaching definitions by naive per-name backward scan: walk statements
# backwards from the focal statement, collect every definition of the name,
# and stop after the first one whose guard context is a prefix of the
# focal statement's (it kills everything earlier).


def naive_chain(unit, span, transitive=True):
    from patchforge.slicer import _class_fields, _enclosers, _find_statement

    focal = _find_statement(unit, span)
    cls, mth = _enclosers(unit, focal)
    defs = _class_fields(cls, exclude=focal)
    if mth is not None:
        items = _method_items(mth)
        header = next((it for it in items if it.is_header), None)
        if header is not None and focal is not header.node:
            defs.append(header.text)
        focal_item = next((it for it in items if it.node is focal), None)
        if focal_item is not None and not focal_item.is_header:
            picked = {}

            def scan(name, pos, guard):
                hits = []
                before = [it for it in items if it.pos < pos]
                for it in reversed(before):
                    if name not in it.defs:
                        continue
                    hits.append(it)
                    if it.guard == tuple(guard[:len(it.guard)]):
                        break
                return hits

            def collect(name, pos, guard):
                for it in scan(name, pos, guard):
                    if id(it) in picked:
                        continue
                    picked[id(it)] = it
                    if transitive:
                        for used in it.uses:
                            collect(used, it.pos, it.guard)

            for name in focal_item.uses:
                collect(name, focal_item.pos, focal_item.guard)
            for it in sorted(picked.values(), key=lambda x: x.pos):
                if not it.is_header:
                    defs.append(it.text)
    return DefUseChain(defs=defs, stmt=node_text(focal))


# --- hand fixtures -----------------------------------------------------------


def test_no_names_chain_is_signature_plus_stmt():
    chain = chain_for(
        "class A { void m ( int p ) { log ( ) ; return ; } }", "return ;")
    assert chain.defs == ["void m ( int p )"]
    assert chain.stmt == "return ;"


def test_two_declarations_reach_through_closure():
    src = ("class A { void m ( ) { int a = 1 ; int b = a + 2 ; "
           "use ( b ) ; } }")
    chain = chain_for(src, "use ( b ) ;")
    assert chain.defs == ["void m ( )", "int a = 1 ;", "int b = a + 2 ;"]


def test_transitive_closure_toggle():
    src = ("class A { void m ( ) { int a = 1 ; int b = a + 2 ; "
           "use ( b ) ; } }")
    chain = chain_for(src, "use ( b ) ;", transitive=False)
    assert chain.defs == ["void m ( )", "int b = a + 2 ;"]


def test_class_fields_always_preserved():
    src = ("class A { int g = 7 ; String other = \"o\" ; "
           "void m ( ) { use ( g ) ; } }")
    chain = chain_for(src, "use ( g ) ;")
    assert chain.defs == ['int g = 7 ;', 'String other = "o" ;', "void m ( )"]


def test_statements_after_focal_excluded():
    src = ("class A { void m ( ) { int a = 1 ; use ( a ) ; a = 2 ; "
           "int z = a ; } }")
    chain = chain_for(src, "use ( a ) ;")
    assert chain.defs == ["void m ( )", "int a = 1 ;"]


def test_most_recent_definition_wins():
    src = ("class A { void m ( ) { int a = 1 ; a = 2 ; use ( a ) ; } }")
    chain = chain_for(src, "use ( a ) ;")
    assert chain.defs == ["void m ( )", "a = 2 ;"]


def test_both_branches_kept():
    src = ("class A { void m ( boolean c ) { int x = 0 ; "
           "if ( c ) { x = 1 ; } else { x = 2 ; } use ( x ) ; } }")
    chain = chain_for(src, "use ( x ) ;")
    assert chain.defs == ["void m ( boolean c )", "int x = 0 ;",
                          "x = 1 ;", "x = 2 ;"]


def test_branch_definition_does_not_kill_for_inside_use():
    src = ("class A { void m ( boolean c ) { int x = 0 ; "
           "if ( c ) { x = 1 ; use ( x ) ; } } }")
    chain = chain_for(src, "use ( x ) ;")
    # x = 1 shares the focal statement's branch, so it kills int x = 0.
    assert chain.defs == ["void m ( boolean c )", "x = 1 ;"]


def test_parameter_use_adds_no_extra_defs():
    chain = chain_for(
        "class A { void m ( int p ) { use ( p ) ; } }", "use ( p ) ;")
    assert chain.defs == ["void m ( int p )"]


def test_compound_assignment_is_def_and_use():
    src = ("class A { void m ( ) { int b = 1 ; b += 2 ; use ( b ) ; } }")
    chain = chain_for(src, "use ( b ) ;")
    assert chain.defs == ["void m ( )", "int b = 1 ;", "b += 2 ;"]


def test_method_name_is_not_a_use():
    src = ("class A { void m ( ) { int use = 1 ; use ( 2 ) ; } }")
    chain = chain_for(src, "use ( 2 ) ;")
    assert chain.defs == ["void m ( )"]


def test_for_loop_definition_uses_header_text():
    src = ("class A { void m ( int n ) { "
           "for ( int i = 0 ; i < n ; i ++ ) { log ( i ) ; } } }")
    chain = chain_for(src, "log ( i ) ;")
    assert chain.defs == ["void m ( int n )",
                          "for ( int i = 0 ; i < n ; i ++ )"]


def test_focal_method_header():
    src = "class A { int g = 1 ; void m ( int p ) { use ( p ) ; } }"
    unit = parse_source(src)
    chain = build_defuse_chain(unit, stmt_span(unit, "void m ( int p )"))
    assert chain.defs == ["int g = 1 ;"]
    assert chain.stmt == "void m ( int p )"


def test_span_not_statement():
    unit = parse_source("class A { void m ( ) { return ; } }")
    with pytest.raises(SpanNotStatement):
        build_defuse_chain(unit, (0, 1))


def test_prefix_stability():
    base = "class A { void m ( ) { int a = 1 ; use ( a ) ; %s } }"
    chain1 = chain_for(base % "", "use ( a ) ;")
    chain2 = chain_for(base % "int t = a ; log ( t ) ;", "use ( a ) ;")
    assert chain1 == chain2


# --- oracle equivalence ------------------------------------------------------


def random_method_body(rng, depth=0):
    names = ["a", "b", "c", "d", "e"]
    stmts = []
    for _ in range(rng.randrange(1, 5 if depth else 7)):
        roll = rng.random()
        n, m = rng.choice(names), rng.choice(names)
        if roll < 0.35:
            stmts.append(f"int {n} = {rng.randrange(9)} ;")
        elif roll < 0.6:
            stmts.append(f"{n} = {m} + {rng.randrange(9)} ;")
        elif roll < 0.7:
            stmts.append(f"{n} += {m} ;")
        elif roll < 0.8 and depth < 2:
            inner = random_method_body(rng, depth + 1)
            stmts.append(f"if ( {n} > 0 ) {{ {inner} }}")
        elif roll < 0.87 and depth < 2:
            inner = random_method_body(rng, depth + 1)
            other = random_method_body(rng, depth + 1)
            stmts.append(f"if ( {n} > {m} ) {{ {inner} }} else {{ {other} }}")
        elif roll < 0.93 and depth < 2:
            inner = random_method_body(rng, depth + 1)
            stmts.append(f"while ( {n} < 9 ) {{ {inner} }}")
        else:
            stmts.append(f"use ( {n} , {m} ) ;")
    return " ".join(stmts)


def test_oracle_equivalence_on_random_programs():
    rng = random.Random(23)
    checked = 0
    for _ in range(80):
        body = random_method_body(rng)
        src = (f"class A {{ int f = 3 ; void m ( int p ) {{ {body} "
               f"use ( p , f ) ; }} }}")
        unit = parse_source(src)
        stmts = [n for n in iter_nodes(unit.ast)
                 if n.label in STATEMENT_LABELS
                 and n.label not in ("field_decl", "method_header")]
        assert len(stmts) <= 40
        for node in stmts:
            for transitive in (True, False):
                got = build_defuse_chain(unit, node.span, transitive)
                want = naive_chain(unit, node.span, transitive)
                assert got == want
                checked += 1
    assert checked > 300


# --- change pair assembly ----------------------------------------------------


def test_assemble_both_sides():
    a = parse_source(
        "class A { void m ( ) { int x = 1 ; use ( x ) ; } }")
    b = parse_source(
        "class A { void m ( ) { int x = 1 ; use ( x , 2 ) ; } }")
    diffs = extract_change_pairs(a, b)
    assert len(diffs) == 1
    meta = {"project": "p", "commit": "c", "vuln_id": "V-1",
            "cwe_tags": ["CWE-20"], "timestamp": "2017-03-01"}
    pair = assemble_change_pair(a, b, diffs[0], meta)
    assert pair.src_chain.stmt == "use ( x ) ;"
    assert pair.dst_chain.stmt == "use ( x , 2 ) ;"
    assert pair.src_chain.defs == ["void m ( )", "int x = 1 ;"]
    assert pair.meta == meta


def test_assemble_pure_deletion():
    a = parse_source(
        "class A { void m ( ) { log ( ) ; return ; } }")
    b = parse_source(
        "class A { void m ( ) { return ; } }")
    diffs = extract_change_pairs(a, b)
    assert len(diffs) == 1 and diffs[0].st_dst is None
    pair = assemble_change_pair(a, b, diffs[0], {})
    assert pair.dst_chain.stmt == EMPTY_MARKER
    assert pair.dst_chain.defs == ["void m ( )"]
    assert pair.src_chain.stmt == "log ( ) ;"


def test_assemble_pure_insertion_context():
    a = parse_source(
        "class A { int g = 0 ; void m ( String t ) { store ( t ) ; } }")
    b = parse_source(
        "class A { int g = 0 ; void m ( String t ) { "
        "if ( t == null ) { return ; } store ( t ) ; } }")
    diffs = extract_change_pairs(a, b)
    assert len(diffs) == 1 and diffs[0].st_src is None
    pair = assemble_change_pair(a, b, diffs[0], {})
    assert pair.src_chain == DefUseChain(
        defs=["int g = 0 ;", "void m ( String t )"], stmt=EMPTY_MARKER)
    assert pair.dst_chain.stmt == "if ( t == null ) { return ; }"


def test_context_chain_without_method():
    unit = parse_source("int x = 1 ;")
    chain = context_chain(unit, None)
    assert chain == DefUseChain(defs=[], stmt=EMPTY_MARKER)
