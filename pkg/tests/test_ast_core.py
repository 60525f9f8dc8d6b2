import random

import pytest

from patchforge import ast_core
from patchforge.ast_core import (
    ast_io, decode_tree, encode_tree, leaf_texts, parse_source,
    structurally_equal,
)
from patchforge.errors import EmptyInput, FormatError, ParseError
from patchforge.lexer import lex, normalize


def test_lex_kinds():
    tokens, comments = lex('int x = 0x1F ; s = "a\\"b" ; // tail')
    kinds = [(t.kind, t.text) for t in tokens]
    assert kinds == [
        ("KW", "int"), ("NAME", "x"), ("OP", "="), ("NUM", "0x1F"),
        ("OP", ";"), ("NAME", "s"), ("OP", "="), ("STR", '"a\\"b"'),
        ("OP", ";"),
    ]
    assert len(comments) == 1


def test_lex_span_fidelity():
    text = 'foo ( 1.5e3 , "x" ) ; /* c */ y ++ ;'
    tokens, _ = lex(text)
    for t in tokens:
        assert text[t.start:t.end] == t.text


def test_lex_errors():
    with pytest.raises(ParseError):
        lex('"unterminated')
    with pytest.raises(ParseError):
        lex("/* open")
    err = None
    try:
        lex("int x = `;")
    except ParseError as e:
        err = e
    assert err is not None and err.line == 1


def test_lex_marker_token():
    tokens, _ = lex("<empty>")
    assert [(t.kind, t.text) for t in tokens] == [("OP", "<empty>")]


def test_parse_empty_input():
    with pytest.raises(EmptyInput):
        parse_source("")
    with pytest.raises(EmptyInput):
        parse_source("   \n\t")


def test_parse_simple_declaration():
    unit = parse_source("int var = 0 ;")
    decl = unit.ast.children[0]
    assert decl.label == "decl_stmt"
    assert leaf_texts(decl) == ["int", "var", "=", "0", ";"]


def test_parse_reference_tree_fixture():
    # Hand-built reference for "int var = 0 ;", compared node by node.
    unit = parse_source("int var = 0 ;")
    expected = decode_tree(
        "(cu 0 13 (decl_stmt 0 13 (type 0 3 (KW 'int' 0 3)) "
        "(NAME 'var' 4 7) (OP '=' 8 9) (NUM '0' 10 11) (OP ';' 12 13)))"
    )
    assert structurally_equal(unit.ast, expected)


def test_comments_stripped_to_same_ast():
    plain = parse_source("int x = 1 ;")
    commented = parse_source("int x = 1 ; // c")
    assert structurally_equal(plain.ast, commented.ast)
    assert len(commented.comments) == 1
    start, end = commented.comments[0]
    assert commented.text[start:end] == "// c"


def test_leaf_spans_match_text():
    text = 'class A { int f = 3 ; void m ( int p ) { if ( p > 0 ) { return ; } } }'
    unit = parse_source(text)
    for leaf in ast_core.leaves(unit.ast):
        assert text[leaf.span[0]:leaf.span[1]] == leaf.value


def test_leaves_reproduce_token_stream():
    text = """
    package com.example ;
    import java.util.List ;
    @Deprecated
    public class Widget {
        private static final String NAME = "w" ;
        int count = 0 ;
        Widget ( int start ) { this . count = start ; }
        @Override
        public int bump ( int by , String tag ) throws BadThing {
            // a comment to strip
            int next = count + by ;
            for ( int i = 0 ; i < by ; i ++ ) { next += i ; }
            for ( String s : names ) { log ( s ) ; }
            while ( next > 100 ) { next = next - 1 ; }
            do { next ++ ; } while ( next < 0 ) ;
            if ( tag == null ) { throw new BadThing ( "no tag" ) ; }
            else { count = next ; }
            try { store ( next , tag ) ; }
            catch ( BadThing e ) { return -1 ; }
            finally { flush ( ) ; }
            List < String > items = new ArrayList ( ) ;
            int [ ] box = new int [ 3 ] ;
            box [ 0 ] = items . size ( ) ;
            boolean ok = next >= 0 && ! ( tag instanceof Object ) ;
            String q = ok ? "y" : "n" ;
            count = 5 ;
            return count ;
        }
    }
    """
    unit = parse_source(text)
    tokens = [t.text for t in lex(text)[0]]
    assert leaf_texts(unit.ast) == tokens


def test_parse_determinism():
    text = "class A { void m ( ) { int a = 1 ; use ( a ) ; } }"
    a = parse_source(text)
    b = parse_source(text)
    assert structurally_equal(a.ast, b.ast)
    assert [n.span for n in ast_core.iter_nodes(a.ast)] == \
           [n.span for n in ast_core.iter_nodes(b.ast)]


def test_parse_error_position():
    with pytest.raises(ParseError) as exc:
        parse_source("int x = ;")
    assert exc.value.line == 1


def test_parse_rejects_unbalanced():
    with pytest.raises(ParseError):
        parse_source("class A { void m ( ) {")


def test_node_invariants():
    text = "class A { int f = 1 ; void m ( int p ) { p = f + 2 ; } }"
    unit = parse_source(text)
    seen = set()
    for node in ast_core.iter_nodes(unit.ast):
        assert node.id not in seen
        seen.add(node.id)
        if node.children:
            assert node.value == ""
            assert node.height == 1 + max(c.height for c in node.children)
            # child spans nested, ordered, non-overlapping
            for c in node.children:
                assert node.span[0] <= c.span[0] <= c.span[1] <= node.span[1]
            for left, right in zip(node.children, node.children[1:]):
                assert left.span[1] <= right.span[0]
        else:
            assert node.height == 1


def test_encode_decode_leaf():
    leaf = ast_core.AstNode(0, "NAME", "x", span=(0, 1))
    text = encode_tree(leaf)
    assert text == "(NAME 'x' 0 1)"
    back = decode_tree(text)
    assert structurally_equal(leaf, back)
    assert back.span == (0, 1)


def test_encode_escaping_round_trip():
    leaf = ast_core.AstNode(0, "STR", "\"it's \\ here\"", span=(3, 16))
    back = decode_tree(encode_tree(leaf))
    assert back.value == leaf.value


def test_round_trip_fixture_tree():
    unit = parse_source("int var = 0 ; use ( var ) ;")
    once = decode_tree(encode_tree(unit.ast))
    assert structurally_equal(unit.ast, once)
    twice = decode_tree(encode_tree(once))
    assert structurally_equal(once, twice)


def test_decode_errors_carry_offset():
    for bad in ["(NAME 'x'", "", "(NAME 'x' 0 1) junk", "(A 'v' 0 1 (B 'w' 0 1))"]:
        with pytest.raises(FormatError) as exc:
            decode_tree(bad)
        assert exc.value.offset is not None


def test_ast_io_dispatch():
    unit = parse_source("return ;")
    text = ast_io(unit.ast, "encode")
    tree = ast_io(text, "decode")
    assert structurally_equal(unit.ast, tree)


def _random_program(rng):
    names = ["a", "b", "c", "d"]
    stmts = []
    for _ in range(rng.randrange(1, 6)):
        kind = rng.randrange(4)
        n = rng.choice(names)
        m = rng.choice(names)
        if kind == 0:
            stmts.append(f"int {n} = {rng.randrange(10)} ;")
        elif kind == 1:
            stmts.append(f"{n} = {m} + {rng.randrange(5)} ;")
        elif kind == 2:
            stmts.append(f"if ( {n} > 0 ) {{ {m} = {n} ; }}")
        else:
            stmts.append(f'log ( {n} , "t{rng.randrange(3)}" ) ;')
    body = " ".join(stmts)
    return f"class A {{ int f = 0 ; void m ( int a ) {{ {body} }} }}"


def test_random_programs_round_trip():
    rng = random.Random(7)
    for _ in range(60):
        text = _random_program(rng)
        unit = parse_source(text)
        assert leaf_texts(unit.ast) == [t.text for t in lex(text)[0]]
        back = decode_tree(encode_tree(unit.ast))
        assert structurally_equal(unit.ast, back)


def test_normalize_round_trip_stability():
    text = "int   x=1;  use(x) ;"
    norm = normalize(text)
    assert norm == "int x = 1 ; use ( x ) ;"
    assert normalize(norm) == norm
